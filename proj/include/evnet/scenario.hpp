#pragma once
// Scenarios: trees of event descriptions joined by feature edges and
// specialization edges, with percolation/consistency checking, observation
// entailment and the probability product.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "evnet/kbdsl.hpp"
#include "evnet/network.hpp"
#include "evnet/types.hpp"

namespace evnet {

enum class EdgeKind { Feature, Spec };

struct ScenarioEdge;

struct ScenarioNode {
  EventDescription desc;
  // Either feature edges with distinct labels sorted by label, or exactly one
  // spec edge, or nothing.
  std::vector<ScenarioEdge> children;

  bool is_leaf() const { return children.empty(); }
  bool has_spec_child() const;
};

struct ScenarioEdge {
  EdgeKind kind = EdgeKind::Feature;
  FeatureName label;  // empty for spec edges
  ScenarioNode node;
};

inline bool ScenarioNode::has_spec_child() const {
  return children.size() == 1 && children.front().kind == EdgeKind::Spec;
}

inline bool operator==(const ScenarioNode& a, const ScenarioNode& b);

inline bool operator==(const ScenarioEdge& a, const ScenarioEdge& b) {
  return a.kind == b.kind && a.label == b.label && a.node == b.node;
}

inline bool operator==(const ScenarioNode& a, const ScenarioNode& b) {
  return a.desc == b.desc && a.children == b.children;
}

struct Scenario {
  ScenarioNode root;

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

// One node in canonical order: pre-order, feature children by label.
struct FlatNode {
  const ScenarioNode* node = nullptr;
  int parent = -1;
  const ScenarioEdge* incoming = nullptr;
  int member = 0;  // index of the scenario within a forest
};

namespace detail {

inline void flatten_into(const ScenarioNode& n, int parent, const ScenarioEdge* incoming, int member,
                         std::vector<FlatNode>& out) {
  int self = static_cast<int>(out.size());
  out.push_back({&n, parent, incoming, member});
  for (const auto& e : n.children) flatten_into(e.node, self, &e, member, out);
}

inline void sort_children(ScenarioNode& n) {
  std::sort(n.children.begin(), n.children.end(),
            [](const ScenarioEdge& a, const ScenarioEdge& b) { return a.label < b.label; });
  for (auto& e : n.children) sort_children(e.node);
}

}  // namespace detail

inline std::vector<FlatNode> flatten(const Scenario& s) {
  std::vector<FlatNode> out;
  detail::flatten_into(s.root, -1, nullptr, 0, out);
  return out;
}

inline std::vector<FlatNode> flatten(const std::vector<Scenario>& forest) {
  std::vector<FlatNode> out;
  for (std::size_t m = 0; m < forest.size(); ++m)
    detail::flatten_into(forest[m].root, -1, nullptr, static_cast<int>(m), out);
  return out;
}

inline std::string node_id(std::size_t canonical_index) { return "n" + std::to_string(canonical_index + 1); }

inline std::size_t node_count(const ScenarioNode& n) {
  std::size_t total = 1;
  for (const auto& e : n.children) total += node_count(e.node);
  return total;
}

inline std::size_t node_count(const Scenario& s) { return node_count(s.root); }

// Deterministic text used for structural equality and tie-breaking.
inline std::string canonical_string(const ScenarioNode& n) {
  std::string out = n.desc.type + "{";
  bool first = true;
  for (const auto& [attr, value] : n.desc.bindings) {
    if (!first) out += ",";
    first = false;
    out += attr + "=" + dsl::format_const(value);
  }
  out += "}";
  if (!n.children.empty()) {
    out += "[";
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      const auto& e = n.children[i];
      if (i) out += ";";
      out += (e.kind == EdgeKind::Spec ? std::string("spec>") : e.label + ":") + canonical_string(e.node);
    }
    out += "]";
  }
  return out;
}

inline std::string canonical_string(const Scenario& s) { return canonical_string(s.root); }

inline std::string canonical_string(const std::vector<Scenario>& forest) {
  std::string out;
  for (std::size_t i = 0; i < forest.size(); ++i) {
    if (i) out += " | ";
    out += canonical_string(forest[i]);
  }
  return out;
}

namespace detail {

inline std::size_t parse_node_id(const std::string& id, std::size_t count) {
  if (id.size() < 2 || id[0] != 'n') throw Error(ErrorKind::UnknownNode, id);
  std::size_t value = 0;
  for (std::size_t i = 1; i < id.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(id[i]))) throw Error(ErrorKind::UnknownNode, id);
    value = value * 10 + static_cast<std::size_t>(id[i] - '0');
    if (value > count) throw Error(ErrorKind::UnknownNode, id);
  }
  if (value == 0 || value > count) throw Error(ErrorKind::UnknownNode, id);
  return value - 1;
}

// Mutable node at canonical index `target` (pre-order).
inline ScenarioNode* node_at(ScenarioNode& n, std::size_t target, std::size_t& counter) {
  if (counter == target) return &n;
  ++counter;
  for (auto& e : n.children)
    if (auto* hit = node_at(e.node, target, counter)) return hit;
  return nullptr;
}

}  // namespace detail

// The feature edge a node's spec chain hangs from: the node holding the
// feature, the label, and that edge's declared target.
struct IncomingFeature {
  TypeName source;
  FeatureName feature;
  TypeName target;
};

inline std::optional<IncomingFeature> incoming_feature(const std::vector<FlatNode>& flat, std::size_t index) {
  int i = static_cast<int>(index);
  while (flat[i].incoming && flat[i].incoming->kind == EdgeKind::Spec) i = flat[i].parent;
  if (!flat[i].incoming) return std::nullopt;
  return IncomingFeature{flat[flat[i].parent].node->desc.type, flat[i].incoming->label, flat[i].node->desc.type};
}

// Single-node scenario. Roots must be culprits when any are declared.
inline Scenario new_scenario(const EventNetwork& net, EventDescription root_desc) {
  if (!net.has_type(root_desc.type)) throw Error(ErrorKind::UnknownType, root_desc.type);
  if (net.has_culprits() && !net.is_culprit(root_desc.type))
    throw Error(ErrorKind::NotACulprit, root_desc.type + " is not a culprit type");
  return Scenario{ScenarioNode{std::move(root_desc), {}}};
}

// Adds a feature child under `node`. The node may already carry other
// feature children (a local tree grows one edge at a time).
inline Scenario extend_with_feature(const EventNetwork& net, const Scenario& s, const std::string& node,
                                    const FeatureName& feature, EventDescription child_desc) {
  auto flat = flatten(s);
  auto index = detail::parse_node_id(node, flat.size());
  const ScenarioNode& at = *flat[index].node;
  if (at.has_spec_child()) throw Error(ErrorKind::NotALeaf, node + " already has a specialization child");
  for (const auto& e : at.children)
    if (e.label == feature) throw Error(ErrorKind::DuplicateFeature, feature + " already used at " + node);
  if (!net.has_type(child_desc.type)) throw Error(ErrorKind::UnknownType, child_desc.type);

  bool label_known = false;
  for (const auto& link : net.legal_feature_links(at.desc.type)) {
    if (link.feature != feature) continue;
    label_known = true;
    if (link.target == child_desc.type) {
      Scenario out = s;
      std::size_t counter = 0;
      auto* target = detail::node_at(out.root, index, counter);
      target->children.push_back({EdgeKind::Feature, feature, ScenarioNode{std::move(child_desc), {}}});
      detail::sort_children(*target);
      return out;
    }
  }
  for (const auto& path : net.feature_paths(at.desc.type)) {
    if (path.preempted && path.link.feature == feature && path.link.target == child_desc.type)
      throw Error(ErrorKind::PreemptedPath, at.desc.type + " -" + feature + "-> " + child_desc.type +
                                                " via " + path.link.via + " is preempted by " +
                                                path.preemptor->via + " -" + feature + "-> " +
                                                path.preemptor->target);
  }
  if (!label_known) throw Error(ErrorKind::UnknownFeature, feature + " is not a feature of " + at.desc.type);
  throw Error(ErrorKind::TypeMismatch, child_desc.type + " is not the target of " + feature + " from " +
                                           at.desc.type);
}

// Adds a specialization child below a leaf; the child copies the leaf's
// bindings.
inline Scenario extend_with_spec(const EventNetwork& net, const Scenario& s, const std::string& node,
                                 const TypeName& subtype) {
  auto flat = flatten(s);
  auto index = detail::parse_node_id(node, flat.size());
  const ScenarioNode& at = *flat[index].node;
  if (!at.is_leaf()) throw Error(ErrorKind::NotALeaf, node + " is not a leaf");
  if (!net.has_type(subtype)) throw Error(ErrorKind::UnknownType, subtype);
  if (!net.strict_isa(subtype, at.desc.type))
    throw Error(ErrorKind::NotADescendant, subtype + " is not a strict specialization of " + at.desc.type);
  if (auto ctx = incoming_feature(flat, index)) {
    if (auto pre = net.spec_preemptor(ctx->source, ctx->feature, ctx->target, subtype))
      throw Error(ErrorKind::PreemptedPath, ctx->source + " -" + ctx->feature + "-> " + ctx->target +
                                                " spec+ " + subtype + " is preempted by " + pre->via + " -" +
                                                pre->feature + "-> " + pre->target);
  }
  Scenario out = s;
  std::size_t counter = 0;
  auto* target = detail::node_at(out.root, index, counter);
  target->children.push_back({EdgeKind::Spec, "", ScenarioNode{{subtype, at.desc.bindings}, {}}});
  return out;
}

// ---------------------------------------------------------------------------
// Percolation and consistency

// One propagation rule over (node, attribute) slots. Slots are numbered
// node_index * attribute_count + attribute_index.
struct PercolationRule {
  enum class Kind { Equal, Assert, NotEqualConst, NotEqualSlot };
  Kind kind = Kind::Equal;
  std::size_t slot = 0;
  std::size_t other_slot = 0;  // Equal, NotEqualSlot
  Const value;                 // Assert, NotEqualConst
  std::size_t node = 0;        // node that owns the rule, for reporting
  std::string origin;          // constraint text or "binding a=v"
};

struct PercolationProblem {
  std::vector<AttrName> attributes;
  std::size_t node_count = 0;
  std::vector<PercolationRule> rules;

  std::size_t slot(std::size_t node, std::size_t attr) const { return node * attributes.size() + attr; }
};

struct Inconsistency {
  std::string node;        // canonical id of the offending node
  std::string constraint;  // violated constraint or conflicting binding
  std::string detail;
};

struct CheckResult {
  std::optional<Scenario> scenario;  // set when consistent, bindings filled in
  std::optional<Inconsistency> inconsistency;

  bool consistent() const { return scenario.has_value(); }
};

namespace detail {

inline bool applies_percolation(const EventNetwork& net, const PercolationConstraint& pc, const TypeName& parent_type,
                                const FeatureName& feature, const std::vector<FlatNode>& flat,
                                std::size_t child) {
  if (pc.feature != feature || !net.isa(parent_type, pc.parent_type)) return false;
  // the child event is described by the child node and its spec chain
  for (std::size_t i = child;;) {
    if (net.isa(flat[i].node->desc.type, pc.child_type)) return true;
    const auto& n = *flat[i].node;
    if (!n.has_spec_child()) return false;
    i = i + 1;  // a spec child directly follows its parent in pre-order
  }
}

}  // namespace detail

// Rules in canonical order: equalities, observed bindings, asserted
// constants, then disequality checks.
inline PercolationProblem percolation_problem(const EventNetwork& net, const Scenario& s) {
  PercolationProblem prob;
  auto flat = flatten(s);
  prob.node_count = flat.size();

  std::set<AttrName> attrs;
  for (const auto& f : flat)
    for (const auto& kv : f.node->desc.bindings) attrs.insert(kv.first);
  for (const auto& c : net.local_constraints()) {
    attrs.insert(c.attr);
    if (c.against_attr()) attrs.insert(c.other);
  }
  for (const auto& pc : net.percolation_constraints()) {
    attrs.insert(pc.child_attr);
    attrs.insert(pc.parent_attr);
  }
  prob.attributes.assign(attrs.begin(), attrs.end());
  auto attr_index = [&](const AttrName& a) {
    return static_cast<std::size_t>(std::lower_bound(prob.attributes.begin(), prob.attributes.end(), a) -
                                    prob.attributes.begin());
  };

  using K = PercolationRule::Kind;
  std::vector<PercolationRule> equalities, bindings, asserts, checks;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const auto& n = *flat[i].node;
    for (const auto& c : net.constraints_for(n.desc.type)) {
      auto a = prob.slot(i, attr_index(c->attr));
      switch (c->relation) {
        case Relation::AttrEqAttr:
          equalities.push_back({K::Equal, a, prob.slot(i, attr_index(c->other)), {}, i, describe(*c)});
          break;
        case Relation::AttrEqConst:
          asserts.push_back({K::Assert, a, 0, c->other, i, describe(*c)});
          break;
        case Relation::AttrNeqConst:
          checks.push_back({K::NotEqualConst, a, 0, c->other, i, describe(*c)});
          break;
        case Relation::AttrNeqAttr:
          checks.push_back({K::NotEqualSlot, a, prob.slot(i, attr_index(c->other)), {}, i, describe(*c)});
          break;
      }
    }
    for (const auto& [attr, value] : n.desc.bindings)
      bindings.push_back({K::Assert, prob.slot(i, attr_index(attr)), 0, value, i, "binding " + attr + "=" + value});
    for (std::size_t ci = 0; ci < n.children.size(); ++ci) {
      const auto& e = n.children[ci];
      // locate the child's canonical index
      std::size_t child = i + 1;
      for (std::size_t k = 0; k < ci; ++k) child += node_count(n.children[k].node);
      if (e.kind == EdgeKind::Spec) {
        for (std::size_t a = 0; a < prob.attributes.size(); ++a)
          equalities.push_back({K::Equal, prob.slot(i, a), prob.slot(child, a), {}, i, "specialization"});
        continue;
      }
      for (const auto& pc : net.percolation_constraints()) {
        if (!detail::applies_percolation(net, pc, n.desc.type, e.label, flat, child)) continue;
        equalities.push_back({K::Equal, prob.slot(child, attr_index(pc.child_attr)),
                              prob.slot(i, attr_index(pc.parent_attr)), {}, i,
                              "percolate " + pc.parent_type + "." + pc.feature + " : " + pc.child_attr + " => " +
                                  pc.parent_attr});
      }
    }
  }
  for (auto* group : {&equalities, &bindings, &asserts, &checks})
    prob.rules.insert(prob.rules.end(), group->begin(), group->end());
  return prob;
}

namespace detail {

class SlotUnion {
 public:
  explicit SlotUnion(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

inline Scenario with_bindings(const Scenario& s, const std::vector<Bindings>& per_node) {
  Scenario out = s;
  std::size_t counter = 0;
  std::function<void(ScenarioNode&)> fill = [&](ScenarioNode& n) {
    n.desc.bindings = per_node[counter++];
    for (auto& e : n.children) fill(e.node);
  };
  fill(out.root);
  return out;
}

}  // namespace detail

// Outcome of driving the rules to a fixpoint.
struct RuleOutcome {
  bool consistent = true;
  std::optional<std::size_t> failed_rule;
  std::vector<Bindings> bindings;  // per node, when consistent
};

// Union-find closure: all equalities first, then assertions in canonical
// order, then disequality checks. The first failing rule is reported.
inline RuleOutcome solve_rules(const PercolationProblem& prob) {
  using K = PercolationRule::Kind;
  const std::size_t slots = prob.node_count * prob.attributes.size();
  detail::SlotUnion uf(slots);
  for (const auto& r : prob.rules)
    if (r.kind == K::Equal) uf.unite(r.slot, r.other_slot);
  std::vector<std::optional<Const>> value(slots);
  RuleOutcome out;
  for (std::size_t i = 0; i < prob.rules.size(); ++i) {
    const auto& r = prob.rules[i];
    if (r.kind != K::Assert) continue;
    auto& v = value[uf.find(r.slot)];
    if (!v) {
      v = r.value;
    } else if (*v != r.value) {
      out.consistent = false;
      out.failed_rule = i;
      return out;
    }
  }
  for (std::size_t i = 0; i < prob.rules.size(); ++i) {
    const auto& r = prob.rules[i];
    if (r.kind == K::NotEqualConst) {
      const auto& v = value[uf.find(r.slot)];
      if (v && *v == r.value) {
        out.consistent = false;
        out.failed_rule = i;
        return out;
      }
    } else if (r.kind == K::NotEqualSlot) {
      const auto& a = value[uf.find(r.slot)];
      const auto& b = value[uf.find(r.other_slot)];
      if ((a && b && *a == *b) || uf.find(r.slot) == uf.find(r.other_slot)) {
        // identical slots are equal whenever bound; unbound slots pass
        if (a && b) {
          out.consistent = false;
          out.failed_rule = i;
          return out;
        }
      }
    }
  }
  out.bindings.assign(prob.node_count, {});
  for (std::size_t n = 0; n < prob.node_count; ++n)
    for (std::size_t a = 0; a < prob.attributes.size(); ++a)
      if (const auto& v = value[uf.find(prob.slot(n, a))]) out.bindings[n][prob.attributes[a]] = *v;
  return out;
}

// Naive propagation applying rules in the given order until nothing
// changes. Equal to solve_rules in verdict and fixpoint for every order.
inline RuleOutcome apply_rules_in_order(const PercolationProblem& prob, const std::vector<std::size_t>& order) {
  using K = PercolationRule::Kind;
  const std::size_t slots = prob.node_count * prob.attributes.size();
  std::vector<std::optional<Const>> value(slots);
  RuleOutcome out;
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto i : order) {
      const auto& r = prob.rules[i];
      if (r.kind == K::Assert) {
        auto& v = value[r.slot];
        if (!v) {
          v = r.value;
          changed = true;
        } else if (*v != r.value) {
          out.consistent = false;
          out.failed_rule = i;
          return out;
        }
      } else if (r.kind == K::Equal) {
        auto& a = value[r.slot];
        auto& b = value[r.other_slot];
        if (a && b && *a != *b) {
          out.consistent = false;
          out.failed_rule = i;
          return out;
        }
        if (a && !b) {
          b = a;
          changed = true;
        } else if (b && !a) {
          a = b;
          changed = true;
        }
      }
    }
  }
  for (auto i : order) {
    const auto& r = prob.rules[i];
    bool violated = false;
    if (r.kind == K::NotEqualConst) violated = value[r.slot] && *value[r.slot] == r.value;
    if (r.kind == K::NotEqualSlot)
      violated = value[r.slot] && value[r.other_slot] && *value[r.slot] == *value[r.other_slot];
    if (violated) {
      out.consistent = false;
      out.failed_rule = i;
      return out;
    }
  }
  out.bindings.assign(prob.node_count, {});
  for (std::size_t n = 0; n < prob.node_count; ++n)
    for (std::size_t a = 0; a < prob.attributes.size(); ++a)
      if (const auto& v = value[prob.slot(n, a)]) out.bindings[n][prob.attributes[a]] = *v;
  return out;
}

// Least fixpoint of percolation, attribute equalities and asserted
// constants, followed by the disequality checks.
inline CheckResult percolate_and_check(const EventNetwork& net, const Scenario& s) {
  auto prob = percolation_problem(net, s);
  auto outcome = solve_rules(prob);
  CheckResult result;
  if (!outcome.consistent) {
    const auto& rule = prob.rules[*outcome.failed_rule];
    std::string detail;
    if (rule.kind == PercolationRule::Kind::Assert) {
      detail = "conflicts with a value derived for " +
               prob.attributes[rule.slot % prob.attributes.size()];
    } else {
      detail = "violated by derived values";
    }
    result.inconsistency = Inconsistency{node_id(rule.node), rule.origin, detail};
    return result;
  }
  result.scenario = detail::with_bindings(s, outcome.bindings);
  return result;
}

// ---------------------------------------------------------------------------
// Entailment

inline bool witnesses(const EventNetwork& net, const ScenarioNode& n, const EventDescription& obs) {
  return net.isa(n.desc.type, obs.type) && bindings_subset(obs.bindings, n.desc.bindings);
}

// First node in canonical order whose type is the observed type (or below it)
// and whose bindings include the observed ones.
inline std::optional<std::string> entails(const EventNetwork& net, const Scenario& s, const Observation& obs) {
  auto flat = flatten(s);
  for (std::size_t i = 0; i < flat.size(); ++i)
    if (witnesses(net, *flat[i].node, obs.desc)) return node_id(i);
  return std::nullopt;
}

inline std::optional<std::string> entails(const EventNetwork& net, const std::vector<Scenario>& forest,
                                          const Observation& obs) {
  auto flat = flatten(forest);
  for (std::size_t i = 0; i < flat.size(); ++i)
    if (witnesses(net, *flat[i].node, obs.desc)) return node_id(i);
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Probability

enum class FactorKind { Prior, FeatureCond, SpecCond };

inline std::string_view to_string(FactorKind k) {
  switch (k) {
    case FactorKind::Prior: return "prior";
    case FactorKind::FeatureCond: return "feature-cond";
    case FactorKind::SpecCond: return "spec-cond";
  }
  return "";
}

struct Factor {
  FactorKind kind = FactorKind::Prior;
  std::string at;  // node id for priors, "nA-label->nB" for edges
  double p = 1.0;
  bool assumed = false;

  friend bool operator==(const Factor&, const Factor&) = default;
};

struct ProbabilityResult {
  double probability = 0.0;
  double log10_probability = 0.0;
  std::vector<Factor> factors;
};

namespace detail {

inline std::size_t feature_rank(const EventNetwork& net, const TypeName& type, const FeatureName& label) {
  const auto& links = net.legal_feature_links(type);
  const auto& decls = net.features();
  std::size_t best = decls.size();
  for (const auto& link : links) {
    if (link.feature != label) continue;
    for (std::size_t i = 0; i < decls.size(); ++i)
      if (decls[i].label == link.feature && decls[i].source == link.via) best = std::min(best, i);
  }
  return best;
}

inline double log_sum_to_probability(double log_sum) { return std::exp(log_sum); }

}  // namespace detail

// Prior of the root times one conditional per edge. Factors are grouped by
// local tree: each internal node in canonical order contributes its edges,
// ordered by where the feature was declared in the knowledge base.
// `id_offset` shifts node ids when the scenario is a forest member.
inline ProbabilityResult probability(const EventNetwork& net, const Scenario& s, bool assume_one = false,
                                     std::size_t id_offset = 0) {
  auto flat = flatten(s);
  ProbabilityResult result;
  double log_sum = 0.0;
  auto add = [&](FactorKind kind, std::string at, auto&& lookup) {
    Factor f{kind, std::move(at), 1.0, false};
    try {
      f.p = lookup();
    } catch (const Error& e) {
      if (!assume_one || e.kind() != ErrorKind::NoStatistic) throw;
      f.p = 1.0;
      f.assumed = true;
    }
    log_sum += f.p > 0.0 ? std::log(f.p) : -std::numeric_limits<double>::infinity();
    result.factors.push_back(std::move(f));
  };

  add(FactorKind::Prior, node_id(id_offset), [&] { return net.lookup_prior(flat[0].node->desc); });
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const auto& n = *flat[i].node;
    if (n.children.empty()) continue;
    std::vector<std::pair<std::size_t, std::size_t>> edges;  // (rank, child index)
    std::size_t child = i + 1;
    for (std::size_t ci = 0; ci < n.children.size(); ++ci) {
      const auto& e = n.children[ci];
      std::size_t rank = e.kind == EdgeKind::Spec ? 0 : detail::feature_rank(net, n.desc.type, e.label);
      edges.push_back({rank, ci});
      (void)child;
    }
    std::stable_sort(edges.begin(), edges.end());
    for (const auto& [rank, ci] : edges) {
      std::size_t child_index = i + 1;
      for (std::size_t k = 0; k < ci; ++k) child_index += node_count(n.children[k].node);
      const auto& e = n.children[ci];
      const auto& c = e.node;
      std::string at = node_id(i + id_offset) + "-" + (e.kind == EdgeKind::Spec ? std::string("spec") : e.label) +
                       "->" + node_id(child_index + id_offset);
      if (e.kind == EdgeKind::Spec) {
        add(FactorKind::SpecCond, std::move(at), [&] { return net.lookup_spec_cond(n.desc.type, c.desc.type); });
      } else {
        add(FactorKind::FeatureCond, std::move(at),
            [&] { return net.lookup_feature_cond(n.desc, e.label, c.desc); });
      }
    }
  }
  result.probability = detail::log_sum_to_probability(log_sum);
  result.log10_probability = log_sum / std::log(10.0);
  return result;
}

// ---------------------------------------------------------------------------
// Explanations

struct Explanation {
  std::vector<Scenario> members;  // one scenario, or several in forest mode
  double probability = 0.0;
  double log10_probability = 0.0;
  std::vector<Factor> factors;
  std::map<std::string, std::string> coverage;  // observation id -> node id
  std::string canonical;                        // canonical_string(members)

  const Scenario& scenario() const { return members.front(); }
  std::size_t node_count() const {
    std::size_t total = 0;
    for (const auto& m : members) total += evnet::node_count(m);
    return total;
  }
};

// Canonical member order for forests: by canonical string.
inline void sort_members(std::vector<Scenario>& members) {
  for (auto& m : members) detail::sort_children(m.root);
  std::sort(members.begin(), members.end(), [](const Scenario& a, const Scenario& b) {
    return canonical_string(a) < canonical_string(b);
  });
}

// Assembles an explanation from percolated members. Throws NoStatistic /
// AmbiguousStatistic per `probability`.
inline Explanation make_explanation(const EventNetwork& net, std::vector<Scenario> members,
                                    const std::vector<Observation>& observations, bool assume_one) {
  sort_members(members);
  Explanation ex;
  std::size_t offset = 0;
  double log_sum = 0.0;
  for (const auto& m : members) {
    auto pr = probability(net, m, assume_one, offset);
    for (auto& f : pr.factors) {
      log_sum += f.p > 0.0 ? std::log(f.p) : -std::numeric_limits<double>::infinity();
      ex.factors.push_back(std::move(f));
    }
    offset += node_count(m);
  }
  ex.members = std::move(members);
  ex.probability = std::exp(log_sum);
  ex.log10_probability = log_sum / std::log(10.0);
  for (const auto& o : observations)
    if (auto id = entails(net, ex.members, o)) ex.coverage[o.id] = *id;
  ex.canonical = canonical_string(ex.members);
  return ex;
}

// Every leaf is needed: deleting any single leaf (a whole member when the
// member is one node) leaves some observation without a witness.
inline bool is_minimal(const EventNetwork& net, const std::vector<Scenario>& members,
                       const std::vector<Observation>& observations) {
  auto flat = flatten(members);
  for (std::size_t leaf = 0; leaf < flat.size(); ++leaf) {
    if (!flat[leaf].node->is_leaf()) continue;
    bool still_covered = true;
    for (const auto& o : observations) {
      bool found = false;
      for (std::size_t i = 0; i < flat.size() && !found; ++i)
        if (i != leaf && witnesses(net, *flat[i].node, o.desc)) found = true;
      if (!found) {
        still_covered = false;
        break;
      }
    }
    if (still_covered) return false;
  }
  return true;
}

}  // namespace evnet
