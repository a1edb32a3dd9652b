#pragma once
// Event network: types with an isa DAG, feature links, attribute constraints
// and category statistics. Built once from a NetworkSpec, validated, and then
// read-only.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "evnet/types.hpp"

namespace evnet {

struct TypeDecl {
  TypeName name;
  std::vector<TypeName> parents;  // isa targets
  bool is_culprit = false;

  friend bool operator==(const TypeDecl&, const TypeDecl&) = default;
  friend auto operator<=>(const TypeDecl&, const TypeDecl&) = default;
};

struct FeatureDecl {
  FeatureName label;
  TypeName source;
  TypeName target;

  friend bool operator==(const FeatureDecl&, const FeatureDecl&) = default;
  friend auto operator<=>(const FeatureDecl&, const FeatureDecl&) = default;
};

enum class Relation { AttrEqConst, AttrNeqConst, AttrEqAttr, AttrNeqAttr };

struct LocalConstraint {
  TypeName owner;
  Relation relation = Relation::AttrEqConst;
  AttrName attr;
  // A constant for the *Const relations, a second attribute otherwise.
  std::string other;

  bool against_attr() const {
    return relation == Relation::AttrEqAttr || relation == Relation::AttrNeqAttr;
  }
  bool is_equality() const {
    return relation == Relation::AttrEqConst || relation == Relation::AttrEqAttr;
  }

  friend bool operator==(const LocalConstraint&, const LocalConstraint&) = default;
  friend auto operator<=>(const LocalConstraint&, const LocalConstraint&) = default;
};

inline std::string describe(const LocalConstraint& c) {
  std::string op = c.is_equality() ? " = " : " != ";
  return c.owner + " : " + c.attr + op + c.other;
}

// ∀x,v. parent_type(x) ∧ child_type(f(x)) ∧ child_attr(f(x)) = v → parent_attr(x) = v
struct PercolationConstraint {
  TypeName parent_type;
  FeatureName feature;
  TypeName child_type;  // empty means "the feature's target"
  AttrName child_attr;
  AttrName parent_attr;

  friend bool operator==(const PercolationConstraint&, const PercolationConstraint&) = default;
  friend auto operator<=>(const PercolationConstraint&, const PercolationConstraint&) = default;
};

struct PriorStat {
  EventDescription desc;
  double p = 0.0;

  friend bool operator==(const PriorStat&, const PriorStat&) = default;
  friend auto operator<=>(const PriorStat&, const PriorStat&) = default;
};

struct FeatureCondStat {
  EventDescription parent;
  FeatureName feature;
  EventDescription child;
  double p = 0.0;

  friend bool operator==(const FeatureCondStat&, const FeatureCondStat&) = default;
  friend auto operator<=>(const FeatureCondStat&, const FeatureCondStat&) = default;
};

struct SpecCondStat {
  TypeName general;
  TypeName specific;
  double p = 0.0;

  friend bool operator==(const SpecCondStat&, const SpecCondStat&) = default;
  friend auto operator<=>(const SpecCondStat&, const SpecCondStat&) = default;
};

using CategoryStatistic = std::variant<PriorStat, FeatureCondStat, SpecCondStat>;

// Which reading of the specialization-preemption side condition to apply.
// `primed` compares the preempting path's feature target with the preempted
// path's target; `literal` compares the preempting path's feature source.
enum class SpecPreemption { Primed, Literal };

// Candidate network as assembled by a parser or by hand. Nothing here is
// checked until validate_network / EventNetwork::build.
struct NetworkSpec {
  std::vector<TypeDecl> types;
  std::vector<FeatureDecl> features;
  std::vector<LocalConstraint> local_constraints;
  std::vector<PercolationConstraint> percolation_constraints;
  std::vector<CategoryStatistic> statistics;
  std::vector<TypeName> culprits;
  SpecPreemption spec_preemption = SpecPreemption::Primed;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

enum class DeclKind { Type, Feature, Constraint, Percolation, Statistic, Culprit };

struct ValidationIssue {
  std::string message;
  DeclKind kind = DeclKind::Type;
  std::size_t index = 0;  // position within the matching NetworkSpec vector
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  bool ok() const { return issues.empty(); }
};

class InvalidNetwork : public Error {
 public:
  explicit InvalidNetwork(ValidationReport report)
      : Error(ErrorKind::InvalidNetwork, summarize(report)), report_(std::move(report)) {}

  const ValidationReport& report() const { return report_; }

 private:
  static std::string summarize(const ValidationReport& r) {
    std::string out;
    for (const auto& issue : r.issues) {
      if (!out.empty()) out += "; ";
      out += issue.message;
    }
    return out;
  }

  ValidationReport report_;
};

// A feature reachable from some type: declared at `via` (the type itself or
// an isa ancestor), mapping into `target`.
struct FeatureLink {
  TypeName via;
  FeatureName feature;
  TypeName target;

  friend bool operator==(const FeatureLink&, const FeatureLink&) = default;
};

// Inherited feature path with its generalization-preemption verdict.
struct FeaturePath {
  FeatureLink link;
  bool preempted = false;
  std::optional<FeatureLink> preemptor;
};

namespace detail {

// Hierarchy closure over a name-indexed type set. Used by both validation
// (which may see broken candidates) and the built network.
class Hierarchy {
 public:
  Hierarchy() = default;

  // Returns false when an isa cycle is present; unresolved parents are ignored.
  bool init(const std::vector<TypeDecl>& types) {
    names_.clear();
    index_.clear();
    for (const auto& t : types) {
      if (index_.count(t.name)) continue;
      index_[t.name] = names_.size();
      names_.push_back(t.name);
    }
    const std::size_t n = names_.size();
    parents_.assign(n, {});
    for (const auto& t : types) {
      auto child = index_.at(t.name);
      for (const auto& p : t.parents) {
        auto it = index_.find(p);
        if (it == index_.end()) continue;
        auto& ps = parents_[child];
        if (std::find(ps.begin(), ps.end(), it->second) == ps.end()) ps.push_back(it->second);
      }
    }
    // strict-ancestor closure by DFS
    reach_.assign(n, std::vector<char>(n, 0));
    bool acyclic = true;
    for (std::size_t s = 0; s < n; ++s) {
      std::vector<std::size_t> stack(parents_[s].begin(), parents_[s].end());
      while (!stack.empty()) {
        auto v = stack.back();
        stack.pop_back();
        if (reach_[s][v]) continue;
        reach_[s][v] = 1;
        for (auto p : parents_[v]) stack.push_back(p);
      }
      if (reach_[s][s]) acyclic = false;
    }
    acyclic_ = acyclic;
    return acyclic;
  }

  bool acyclic() const { return acyclic_; }
  std::size_t size() const { return names_.size(); }
  const std::vector<TypeName>& names() const { return names_; }
  const std::string& name(std::size_t i) const { return names_[i]; }

  std::optional<std::size_t> find(const TypeName& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  // a isa+ b
  bool strict_isa(std::size_t a, std::size_t b) const { return reach_[a][b] != 0; }
  // a isa* b
  bool isa(std::size_t a, std::size_t b) const { return a == b || reach_[a][b] != 0; }

  const std::vector<std::size_t>& parents(std::size_t i) const { return parents_[i]; }

  // Types on isa cycles, grouped per strongly connected component.
  std::vector<std::vector<TypeName>> cycles() const {
    std::vector<std::vector<TypeName>> out;
    std::vector<char> seen(size(), 0);
    for (std::size_t i = 0; i < size(); ++i) {
      if (seen[i] || !reach_[i][i]) continue;
      std::vector<TypeName> group;
      for (std::size_t j = 0; j < size(); ++j) {
        if (reach_[i][j] && reach_[j][i]) {
          seen[j] = 1;
          group.push_back(names_[j]);
        }
      }
      std::sort(group.begin(), group.end());
      out.push_back(std::move(group));
    }
    return out;
  }

 private:
  std::vector<TypeName> names_;
  std::map<TypeName, std::size_t> index_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<std::vector<char>> reach_;
  bool acyclic_ = true;
};

inline std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

// Generalization preemption over raw feature declarations.
inline std::vector<FeaturePath> feature_paths(const Hierarchy& h,
                                              const std::vector<FeatureDecl>& features,
                                              std::size_t c) {
  std::vector<FeaturePath> out;
  for (const auto& decl : features) {
    auto via = h.find(decl.source);
    auto target = h.find(decl.target);
    if (!via || !target || !h.isa(c, *via)) continue;
    FeaturePath path{{decl.source, decl.label, decl.target}, false, std::nullopt};
    if (*via != c) {
      // Def 3.1.a: c isa* c1 -f-> c1' isa+ target with c1 isa+ via.
      for (const auto& other : features) {
        if (other.label != decl.label) continue;
        auto c1 = h.find(other.source);
        auto t1 = h.find(other.target);
        if (!c1 || !t1) continue;
        if (h.isa(c, *c1) && h.strict_isa(*c1, *via) && h.strict_isa(*t1, *target)) {
          FeatureLink pre{other.source, other.label, other.target};
          if (!path.preempted || pre.via < path.preemptor->via) path.preemptor = pre;
          path.preempted = true;
        }
      }
    }
    out.push_back(std::move(path));
  }
  std::sort(out.begin(), out.end(), [](const FeaturePath& a, const FeaturePath& b) {
    return std::tie(a.link.feature, a.link.via) < std::tie(b.link.feature, b.link.via);
  });
  return out;
}

}  // namespace detail

// Structural checks on a candidate network. Violations are returned as data.
inline ValidationReport validate_network(const NetworkSpec& spec) {
  ValidationReport report;
  auto add = [&](DeclKind kind, std::size_t index, std::string message) {
    report.issues.push_back({std::move(message), kind, index});
  };

  std::set<TypeName> declared;
  for (std::size_t i = 0; i < spec.types.size(); ++i) {
    if (!declared.insert(spec.types[i].name).second)
      add(DeclKind::Type, i, "duplicate type: " + spec.types[i].name);
  }
  auto known = [&](const TypeName& t) { return declared.count(t) > 0; };

  for (std::size_t i = 0; i < spec.types.size(); ++i) {
    for (const auto& p : spec.types[i].parents) {
      if (!known(p))
        add(DeclKind::Type, i, "unknown type: " + p + " (isa parent of " + spec.types[i].name + ")");
      if (p == spec.types[i].name) {
        // self-loops are reported by the cycle check below
      }
    }
  }

  detail::Hierarchy h;
  bool acyclic = h.init(spec.types);
  if (!acyclic) {
    for (const auto& group : h.cycles()) {
      std::size_t at = 0;
      for (std::size_t i = 0; i < spec.types.size(); ++i)
        if (spec.types[i].name == group.front()) at = i;
      add(DeclKind::Type, at, "isa cycle: " + detail::join(group, ","));
    }
  }

  std::set<std::pair<FeatureName, TypeName>> feature_keys;
  for (std::size_t i = 0; i < spec.features.size(); ++i) {
    const auto& f = spec.features[i];
    if (!known(f.source)) add(DeclKind::Feature, i, "unknown type: " + f.source + " (source of feature " + f.label + ")");
    if (!known(f.target)) add(DeclKind::Feature, i, "unknown type: " + f.target + " (target of feature " + f.label + ")");
    if (!feature_keys.insert({f.label, f.source}).second)
      add(DeclKind::Feature, i, "duplicate feature: " + f.label + " on " + f.source);
  }

  if (acyclic) {
    // A redeclared feature must narrow the inherited target.
    for (std::size_t i = 0; i < spec.features.size(); ++i) {
      const auto& lower = spec.features[i];
      auto ls = h.find(lower.source), lt = h.find(lower.target);
      if (!ls || !lt) continue;
      for (const auto& upper : spec.features) {
        if (upper.label != lower.label) continue;
        auto us = h.find(upper.source), ut = h.find(upper.target);
        if (!us || !ut || !h.strict_isa(*ls, *us)) continue;
        if (!h.strict_isa(*lt, *ut))
          add(DeclKind::Feature, i,
              "feature redeclaration does not narrow target: " + lower.label + " on " +
                  lower.source + " -> " + lower.target + " vs inherited " + upper.source + " -> " +
                  upper.target);
      }
    }
  }

  for (std::size_t i = 0; i < spec.local_constraints.size(); ++i) {
    const auto& c = spec.local_constraints[i];
    if (!known(c.owner)) add(DeclKind::Constraint, i, "unknown type: " + c.owner + " (constraint owner)");
    if (c.attr.empty() || c.other.empty()) add(DeclKind::Constraint, i, "empty attribute or constant in constraint");
  }

  // Feature target reachable from `source` under label `label`, if any.
  auto reachable_targets = [&](const TypeName& source, const FeatureName& label) {
    std::vector<TypeName> out;
    auto c = h.find(source);
    if (!c || !acyclic) return out;
    for (const auto& p : detail::feature_paths(h, spec.features, *c))
      if (!p.preempted && p.link.feature == label) out.push_back(p.link.target);
    return out;
  };

  for (std::size_t i = 0; i < spec.percolation_constraints.size(); ++i) {
    const auto& pc = spec.percolation_constraints[i];
    if (!known(pc.parent_type)) {
      add(DeclKind::Percolation, i, "unknown type: " + pc.parent_type + " (percolation)");
      continue;
    }
    if (!acyclic) continue;
    auto targets = reachable_targets(pc.parent_type, pc.feature);
    if (targets.empty()) {
      add(DeclKind::Percolation, i, "unknown feature: " + pc.feature + " is not reachable from " + pc.parent_type);
      continue;
    }
    if (!pc.child_type.empty()) {
      auto ct = h.find(pc.child_type);
      bool ok = false;
      if (ct)
        for (const auto& t : targets) ok = ok || h.isa(*ct, *h.find(t));
      if (!ok) add(DeclKind::Percolation, i, "percolation child type mismatch: " + pc.child_type);
    }
  }

  std::map<std::string, double> stat_keys;
  for (std::size_t i = 0; i < spec.statistics.size(); ++i) {
    const auto& s = spec.statistics[i];
    double p = std::visit([](const auto& v) { return v.p; }, s);
    if (!(p >= 0.0 && p <= 1.0)) {
      std::ostringstream os;
      os << "probability out of range: " << p;
      add(DeclKind::Statistic, i, os.str());
    }
    std::string key;
    if (auto* prior = std::get_if<PriorStat>(&s)) {
      if (!known(prior->desc.type)) add(DeclKind::Statistic, i, "unknown type: " + prior->desc.type + " (prior)");
      key = "prior " + prior->desc.type;
      for (const auto& [a, v] : prior->desc.bindings) key += " " + a + "=" + v;
    } else if (auto* fc = std::get_if<FeatureCondStat>(&s)) {
      bool types_ok = true;
      for (const auto* t : {&fc->parent.type, &fc->child.type}) {
        if (!known(*t)) {
          add(DeclKind::Statistic, i, "unknown type: " + *t + " (cond)");
          types_ok = false;
        }
      }
      if (types_ok && acyclic) {
        auto targets = reachable_targets(fc->parent.type, fc->feature);
        if (targets.empty()) {
          add(DeclKind::Statistic, i, "FeatureCond unknown feature: " + fc->feature + " from " + fc->parent.type);
        } else if (std::find(targets.begin(), targets.end(), fc->child.type) == targets.end()) {
          add(DeclKind::Statistic, i,
              "FeatureCond target mismatch: " + fc->feature + " from " + fc->parent.type + " targets " +
                  detail::join(targets, ",") + ", not " + fc->child.type);
        }
      }
      key = "cond " + fc->parent.type;
      for (const auto& [a, v] : fc->parent.bindings) key += " " + a + "=" + v;
      key += " -" + fc->feature + "-> " + fc->child.type;
      for (const auto& [a, v] : fc->child.bindings) key += " " + a + "=" + v;
    } else {
      const auto& sc = std::get<SpecCondStat>(s);
      bool types_ok = true;
      for (const auto* t : {&sc.general, &sc.specific}) {
        if (!known(*t)) {
          add(DeclKind::Statistic, i, "unknown type: " + *t + " (speccond)");
          types_ok = false;
        }
      }
      if (types_ok && acyclic && !h.strict_isa(*h.find(sc.specific), *h.find(sc.general)))
        add(DeclKind::Statistic, i, "SpecCond not a descendant: " + sc.specific + " is not below " + sc.general);
      key = "speccond " + sc.general + " " + sc.specific;
    }
    auto [it, fresh] = stat_keys.emplace(key, p);
    if (!fresh && it->second != p) add(DeclKind::Statistic, i, "conflicting statistics: " + key);
  }

  std::set<TypeName> culprit_seen;
  for (std::size_t i = 0; i < spec.culprits.size(); ++i) {
    const auto& c = spec.culprits[i];
    if (!known(c)) {
      add(DeclKind::Culprit, i, "unknown type: " + c + " (culprit)");
      continue;
    }
    if (!culprit_seen.insert(c).second) {
      add(DeclKind::Culprit, i, "duplicate culprit: " + c);
      continue;
    }
    bool has_prior = std::any_of(spec.statistics.begin(), spec.statistics.end(), [&](const auto& s) {
      auto* prior = std::get_if<PriorStat>(&s);
      return prior && prior->desc.type == c;
    });
    if (!has_prior) add(DeclKind::Culprit, i, "culprit without prior: " + c);
  }
  return report;
}

class EventNetwork {
 public:
  EventNetwork() { hierarchy_.init({}); }
  // Indices hold pointers into spec_, so copies re-index.
  EventNetwork(const EventNetwork& other) : spec_(other.spec_) { index(); }
  EventNetwork& operator=(const EventNetwork& other) {
    if (this != &other) {
      spec_ = other.spec_;
      index();
    }
    return *this;
  }
  EventNetwork(EventNetwork&&) noexcept = default;
  EventNetwork& operator=(EventNetwork&&) noexcept = default;

  // Validates and indexes `spec`; throws InvalidNetwork on any violation.
  static EventNetwork build(NetworkSpec spec) {
    auto report = validate_network(spec);
    if (!report.ok()) throw InvalidNetwork(std::move(report));
    EventNetwork net;
    net.spec_ = std::move(spec);
    net.index();
    return net;
  }

  const NetworkSpec& spec() const { return spec_; }
  SpecPreemption spec_preemption() const { return spec_.spec_preemption; }
  const std::vector<TypeDecl>& types() const { return types_; }
  const std::vector<FeatureDecl>& features() const { return spec_.features; }
  const std::vector<LocalConstraint>& local_constraints() const { return spec_.local_constraints; }
  const std::vector<PercolationConstraint>& percolation_constraints() const { return percolation_; }
  const std::vector<CategoryStatistic>& statistics() const { return spec_.statistics; }

  bool has_type(const TypeName& t) const { return hierarchy_.find(t).has_value(); }
  bool is_culprit(const TypeName& t) const { return culprits_.count(t) > 0; }
  bool has_culprits() const { return !culprits_.empty(); }
  const std::set<TypeName>& culprits() const { return culprits_; }

  // a isa* b
  bool isa(const TypeName& a, const TypeName& b) const {
    return hierarchy_.isa(require(a), require(b));
  }
  // a isa+ b
  bool strict_isa(const TypeName& a, const TypeName& b) const {
    return hierarchy_.strict_isa(require(a), require(b));
  }

  // Strict isa closure of c, nearest first (topological, ties by name).
  std::vector<TypeName> isa_ancestors(const TypeName& c) const {
    auto ci = require(c);
    std::vector<std::size_t> members;
    for (std::size_t j = 0; j < hierarchy_.size(); ++j)
      if (hierarchy_.strict_isa(ci, j)) members.push_back(j);
    return topological(members);
  }

  // Strict spec closure of c (every type below it), in name order.
  std::vector<TypeName> isa_descendants(const TypeName& c) const {
    auto ci = require(c);
    std::vector<TypeName> out;
    for (std::size_t j = 0; j < hierarchy_.size(); ++j)
      if (hierarchy_.strict_isa(j, ci)) out.push_back(hierarchy_.name(j));
    std::sort(out.begin(), out.end());
    return out;
  }

  std::vector<FeaturePath> feature_paths(const TypeName& c) const {
    return detail::feature_paths(hierarchy_, spec_.features, require(c));
  }

  // Non-preempted feature links usable from a node of type c, sorted by
  // (feature, via).
  const std::vector<FeatureLink>& legal_feature_links(const TypeName& c) const {
    return legal_links_[require(c)];
  }

  // Specialization preemption for the path source -f-> target -spec+-> refined.
  // Returns the preempting declaration, if any.
  std::optional<FeatureLink> spec_preemptor(const TypeName& source, const FeatureName& feature,
                                            const TypeName& target, const TypeName& refined) const {
    auto c = require(source);
    auto c2 = require(target);
    auto cp = require(refined);
    for (const auto& decl : spec_.features) {
      if (decl.label != feature) continue;
      auto c1 = require(decl.source);
      auto t1 = require(decl.target);
      if (!hierarchy_.isa(c1, c)) continue;             // c spec* c1
      if (!hierarchy_.strict_isa(cp, t1)) continue;      // c1' spec+ c'
      bool side = spec_.spec_preemption == SpecPreemption::Primed
                      ? hierarchy_.strict_isa(t1, c2)    // c2 spec+ c1'
                      : hierarchy_.strict_isa(c1, c2);   // c2 spec+ c1
      if (side) return FeatureLink{decl.source, decl.label, decl.target};
    }
    return std::nullopt;
  }

  bool legal_spec_refinement(const TypeName& source, const FeatureName& feature,
                             const TypeName& target, const TypeName& refined) const {
    return !spec_preemptor(source, feature, target, refined).has_value();
  }

  // True iff source -feature-> (its target) -spec+-> refined is not preempted.
  bool legal_spec_refinements(const TypeName& source, const FeatureName& feature,
                              const TypeName& refined) const {
    require(refined);
    bool any = false;
    for (const auto& link : legal_feature_links(source)) {
      if (link.feature != feature || !strict_isa(refined, link.target)) continue;
      any = true;
      if (legal_spec_refinement(source, feature, link.target, refined)) return true;
    }
    if (!any)
      throw Error(ErrorKind::InvalidArgument, refined + " does not refine the target of " + feature +
                                                  " from " + source);
    return false;
  }

  // Most specific Prior whose type equals desc.type and whose bindings are a
  // subset of desc's.
  double lookup_prior(const EventDescription& desc) const {
    require(desc.type);
    const PriorStat* best = nullptr;
    std::size_t best_count = 0;
    bool ambiguous = false;
    for (const auto* s : priors_by_type(desc.type)) {
      if (!bindings_subset(s->desc.bindings, desc.bindings)) continue;
      pick(best, best_count, ambiguous, s, s->desc.bindings.size());
    }
    if (!best) throw Error(ErrorKind::NoStatistic, "no prior for " + desc.type);
    if (ambiguous) throw Error(ErrorKind::AmbiguousStatistic, "ambiguous prior for " + desc.type);
    return best->p;
  }

  double lookup_feature_cond(const EventDescription& parent, const FeatureName& feature,
                             const EventDescription& child) const {
    require(parent.type);
    require(child.type);
    const FeatureCondStat* best = nullptr;
    std::size_t best_count = 0;
    bool ambiguous = false;
    for (const auto* s : feature_conds(parent.type, feature, child.type)) {
      if (!bindings_subset(s->parent.bindings, parent.bindings) ||
          !bindings_subset(s->child.bindings, child.bindings))
        continue;
      pick(best, best_count, ambiguous, s, s->parent.bindings.size() + s->child.bindings.size());
    }
    if (!best)
      throw Error(ErrorKind::NoStatistic,
                  "no statistic for " + parent.type + " -" + feature + "-> " + child.type);
    if (ambiguous)
      throw Error(ErrorKind::AmbiguousStatistic,
                  "ambiguous statistic for " + parent.type + " -" + feature + "-> " + child.type);
    return best->p;
  }

  double lookup_spec_cond(const TypeName& general, const TypeName& specific) const {
    auto g = require(general);
    auto s = require(specific);
    double p = spec_chain_[g][s];
    if (p < 0.0) throw Error(ErrorKind::NoStatistic, "no specialization statistic " + general + " => " + specific);
    return p;
  }

  std::optional<double> find_spec_cond(const TypeName& general, const TypeName& specific) const {
    auto g = hierarchy_.find(general), s = hierarchy_.find(specific);
    if (!g || !s || spec_chain_[*g][*s] < 0.0) return std::nullopt;
    return spec_chain_[*g][*s];
  }

  const std::vector<const PriorStat*>& priors_by_type(const TypeName& t) const {
    static const std::vector<const PriorStat*> none;
    auto it = priors_.find(t);
    return it == priors_.end() ? none : it->second;
  }

  const std::vector<const FeatureCondStat*>& feature_conds(const TypeName& parent,
                                                           const FeatureName& feature,
                                                           const TypeName& child) const {
    static const std::vector<const FeatureCondStat*> none;
    auto it = conds_.find({parent, feature, child});
    return it == conds_.end() ? none : it->second;
  }

  // Local constraints whose owner is an isa* ancestor of t.
  std::vector<const LocalConstraint*> constraints_for(const TypeName& t) const {
    std::vector<const LocalConstraint*> out;
    auto ti = require(t);
    for (const auto& c : spec_.local_constraints)
      if (hierarchy_.isa(ti, require(c.owner))) out.push_back(&c);
    return out;
  }

  friend bool operator==(const EventNetwork& a, const EventNetwork& b) {
    return canonical(a.spec_) == canonical(b.spec_);
  }

  // Spec with every declaration list sorted, culprits folded into TypeDecl.
  static NetworkSpec canonical(NetworkSpec s) {
    std::set<TypeName> culprits(s.culprits.begin(), s.culprits.end());
    for (auto& t : s.types) {
      std::sort(t.parents.begin(), t.parents.end());
      t.parents.erase(std::unique(t.parents.begin(), t.parents.end()), t.parents.end());
      t.is_culprit = t.is_culprit || culprits.count(t.name) > 0;
    }
    s.culprits.assign(culprits.begin(), culprits.end());
    std::sort(s.types.begin(), s.types.end());
    std::sort(s.features.begin(), s.features.end());
    std::sort(s.local_constraints.begin(), s.local_constraints.end());
    std::sort(s.percolation_constraints.begin(), s.percolation_constraints.end());
    std::sort(s.statistics.begin(), s.statistics.end());
    return s;
  }

 private:
  std::size_t require(const TypeName& t) const {
    auto i = hierarchy_.find(t);
    if (!i) throw Error(ErrorKind::UnknownType, t);
    return *i;
  }

  template <typename Stat>
  static void pick(const Stat*& best, std::size_t& best_count, bool& ambiguous, const Stat* s,
                   std::size_t count) {
    if (!best || count > best_count) {
      best = s;
      best_count = count;
      ambiguous = false;
    } else if (count == best_count && s->p != best->p) {
      ambiguous = true;
    }
  }

  std::vector<TypeName> topological(std::vector<std::size_t> members) const {
    std::vector<TypeName> out;
    std::vector<char> done(hierarchy_.size(), 0);
    while (!members.empty()) {
      // ready: no other remaining member below it
      std::vector<std::size_t> ready;
      for (auto m : members) {
        bool blocked = false;
        for (auto o : members)
          if (o != m && hierarchy_.strict_isa(o, m)) blocked = true;
        if (!blocked) ready.push_back(m);
      }
      std::sort(ready.begin(), ready.end(),
                [&](auto a, auto b) { return hierarchy_.name(a) < hierarchy_.name(b); });
      auto first = ready.front();
      out.push_back(hierarchy_.name(first));
      members.erase(std::find(members.begin(), members.end(), first));
    }
    return out;
  }

  void index() {
    hierarchy_.init(spec_.types);
    culprits_.clear();
    culprits_.insert(spec_.culprits.begin(), spec_.culprits.end());
    types_ = spec_.types;
    for (auto& t : types_) t.is_culprit = t.is_culprit || culprits_.count(t.name) > 0;
    for (const auto& t : types_)
      if (t.is_culprit) culprits_.insert(t.name);

    const std::size_t n = hierarchy_.size();
    legal_links_.assign(n, {});
    for (std::size_t c = 0; c < n; ++c)
      for (const auto& path : detail::feature_paths(hierarchy_, spec_.features, c))
        if (!path.preempted) legal_links_[c].push_back(path.link);

    percolation_ = spec_.percolation_constraints;
    for (auto& pc : percolation_) {
      if (!pc.child_type.empty()) continue;
      for (const auto& link : legal_links_[require(pc.parent_type)])
        if (link.feature == pc.feature) {
          pc.child_type = link.target;
          break;
        }
    }

    priors_.clear();
    conds_.clear();
    std::vector<std::vector<double>> direct(n, std::vector<double>(n, -1.0));
    for (const auto& s : spec_.statistics) {
      if (auto* prior = std::get_if<PriorStat>(&s)) {
        priors_[prior->desc.type].push_back(prior);
      } else if (auto* fc = std::get_if<FeatureCondStat>(&s)) {
        conds_[{fc->parent.type, fc->feature, fc->child.type}].push_back(fc);
      } else {
        const auto& sc = std::get<SpecCondStat>(s);
        direct[require(sc.general)][require(sc.specific)] = sc.p;
      }
    }
    // Best product over chains of declared specialization steps; a declared
    // direct statistic always wins.
    spec_chain_.assign(n, std::vector<double>(n, -1.0));
    std::vector<std::vector<char>> solved(n, std::vector<char>(n, 0));
    std::function<double(std::size_t, std::size_t)> best = [&](std::size_t g, std::size_t s) {
      if (solved[g][s]) return spec_chain_[g][s];
      double value = direct[g][s];
      if (value < 0.0) {
        for (std::size_t m = 0; m < n; ++m) {
          if (direct[g][m] < 0.0 || m == s || !hierarchy_.strict_isa(s, m)) continue;
          double rest = best(m, s);
          if (rest >= 0.0) value = std::max(value, direct[g][m] * rest);
        }
      }
      solved[g][s] = 1;
      spec_chain_[g][s] = value;
      return value;
    };
    for (std::size_t g = 0; g < n; ++g)
      for (std::size_t s = 0; s < n; ++s)
        if (hierarchy_.strict_isa(s, g)) best(g, s);
  }

  NetworkSpec spec_;
  detail::Hierarchy hierarchy_;
  std::vector<TypeDecl> types_;
  std::set<TypeName> culprits_;
  std::vector<std::vector<FeatureLink>> legal_links_;
  std::vector<PercolationConstraint> percolation_;
  std::map<TypeName, std::vector<const PriorStat*>> priors_;
  std::map<std::tuple<TypeName, FeatureName, TypeName>, std::vector<const FeatureCondStat*>> conds_;
  std::vector<std::vector<double>> spec_chain_;
};

}  // namespace evnet
