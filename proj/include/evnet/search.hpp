#pragma once
// Abduction: the most probable consistent scenarios that entail a set of
// observations. `explain` is a best-first branch-and-bound search;
// `enumerate_explanations` is the exhaustive reference it must agree with.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "evnet/kbdsl.hpp"
#include "evnet/network.hpp"
#include "evnet/scenario.hpp"
#include "evnet/types.hpp"

namespace evnet {

struct SearchParams {
  std::size_t top_k = 3;
  std::size_t max_nodes = 64;
  double min_prob = 1e-12;
  bool assume_one = false;
  bool allow_forest = false;
  unsigned threads = 1;
};

struct RankedResult {
  std::vector<Explanation> explanations;
  bool exhausted = true;  // no pruning bound cut off a possible result
};

// A candidate the oracle generated and discarded, with the reason.
struct Rejection {
  std::string scenario;
  std::string reason;
};

// <0 when a ranks before b, 0 when tied, >0 otherwise.
inline int compare_explanations(const Explanation& a, const Explanation& b) {
  if (!approx_equal(a.probability, b.probability)) return a.probability > b.probability ? -1 : 1;
  if (a.node_count() != b.node_count()) return a.node_count() < b.node_count() ? -1 : 1;
  return a.canonical.compare(b.canonical) < 0 ? -1 : (a.canonical == b.canonical ? 0 : 1);
}

namespace detail {

inline void check_inputs(const EventNetwork& net, const std::vector<Observation>& observations,
                         const SearchParams& params) {
  if (params.top_k == 0) throw Error(ErrorKind::InvalidArgument, "top_k must be positive");
  if (params.max_nodes == 0) throw Error(ErrorKind::InvalidArgument, "max_nodes must be positive");
  if (!(params.min_prob > 0.0 && params.min_prob <= 1.0))
    throw Error(ErrorKind::InvalidArgument, "min_prob must be in (0,1]");
  if (observations.empty()) throw Error(ErrorKind::InvalidArgument, "no observations");
  if (observations.size() > 20) throw Error(ErrorKind::InvalidArgument, "too many observations");
  for (const auto& o : observations)
    if (!net.has_type(o.desc.type))
      throw Error(ErrorKind::UnknownObservationType, o.id + ": unknown type " + o.desc.type);
}

inline void rank(std::vector<Explanation>& found, std::size_t top_k) {
  std::sort(found.begin(), found.end(),
            [](const Explanation& a, const Explanation& b) { return compare_explanations(a, b) < 0; });
  if (found.size() > top_k) found.resize(top_k);
}

inline std::vector<TypeName> root_types(const EventNetwork& net) {
  std::vector<TypeName> out;
  for (const auto& t : net.types())
    if (!net.has_culprits() || net.is_culprit(t.name)) out.push_back(t.name);
  std::sort(out.begin(), out.end());
  return out;
}

// Set partitions of {0..n-1} as block masks, blocks ordered by least element.
inline std::vector<std::vector<std::uint32_t>> set_partitions(std::size_t n) {
  std::vector<std::vector<std::uint32_t>> out;
  std::vector<std::size_t> block(n, 0);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t used) {
    if (i == n) {
      std::vector<std::uint32_t> masks(used, 0);
      for (std::size_t k = 0; k < n; ++k) masks[block[k]] |= 1u << k;
      out.push_back(std::move(masks));
      return;
    }
    for (std::size_t b = 0; b <= used; ++b) {
      block[i] = b;
      rec(i + 1, std::max(used, b + 1));
    }
  };
  rec(0, 0);
  return out;
}

inline std::vector<Observation> select(const std::vector<Observation>& obs, std::uint32_t mask) {
  std::vector<Observation> out;
  for (std::size_t i = 0; i < obs.size(); ++i)
    if (mask & (1u << i)) out.push_back(obs[i]);
  return out;
}

// Spec refinements allowed below a node of type t given its incoming feature.
inline std::vector<TypeName> spec_options(const EventNetwork& net, const TypeName& t,
                                          const std::optional<IncomingFeature>& ctx) {
  std::vector<TypeName> out;
  for (const auto& s : net.isa_descendants(t)) {
    if (s == t || !net.strict_isa(s, t)) continue;
    if (ctx && net.spec_preemptor(ctx->source, ctx->feature, ctx->target, s)) continue;
    out.push_back(s);
  }
  return out;
}

// Percolates `shape` with each node seeded from the observations assigned
// to it. Returns nullopt with a reason on conflict or inconsistency.
inline std::optional<Scenario> seed_and_percolate(const EventNetwork& net, const Scenario& shape,
                                                  const std::vector<std::vector<std::size_t>>& assigned,
                                                  const std::vector<Observation>& obs, std::string* reason,
                                                  Scenario* seeded_out = nullptr) {
  Scenario seeded = shape;
  std::size_t counter = 0;
  bool conflict = false;
  std::function<void(ScenarioNode&)> fill = [&](ScenarioNode& n) {
    std::size_t me = counter++;
    for (auto oi : assigned[me])
      for (const auto& [a, v] : obs[oi].desc.bindings) {
        auto [it, inserted] = n.desc.bindings.emplace(a, v);
        if (!inserted && it->second != v) {
          conflict = true;
          if (reason) *reason = "conflicting observations at " + node_id(me) + " on " + a;
        }
      }
    for (auto& e : n.children) fill(e.node);
  };
  fill(seeded.root);
  if (seeded_out) *seeded_out = seeded;
  if (conflict) return std::nullopt;
  auto checked = percolate_and_check(net, seeded);
  if (!checked.consistent()) {
    if (reason)
      *reason = "Inconsistency at " + checked.inconsistency->node + ": " + checked.inconsistency->constraint;
    return std::nullopt;
  }
  return std::move(checked.scenario);
}

// Exhaustive generator of type-only trees (Def 3.3's two rules).
class ShapeGenerator {
 public:
  ShapeGenerator(const EventNetwork& net, const std::vector<Observation>& obs) : net_(net), obs_(obs) {}

  bool blocked() const { return blocked_; }

  std::vector<ScenarioNode> generate(const TypeName& t, const std::optional<IncomingFeature>& ctx,
                                     std::size_t budget, std::size_t max_leaves) {
    std::vector<ScenarioNode> out;
    for (auto& n : gen(t, ctx, budget))
      if (leaves(n) <= max_leaves) out.push_back(n);
    return out;
  }

 private:
  static std::size_t leaves(const ScenarioNode& n) {
    if (n.is_leaf()) return 1;
    std::size_t total = 0;
    for (const auto& e : n.children) total += leaves(e.node);
    return total;
  }

  bool leaf_ok(const TypeName& t) const {
    return std::any_of(obs_.begin(), obs_.end(), [&](const Observation& o) { return net_.isa(t, o.desc.type); });
  }

  const std::vector<ScenarioNode>& gen(const TypeName& t, const std::optional<IncomingFeature>& ctx,
                                       std::size_t budget) {
    std::string key = t + "|" + std::to_string(budget);
    if (ctx) key += "|" + ctx->source + "|" + ctx->feature + "|" + ctx->target;
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;

    std::vector<ScenarioNode> out;
    if (leaf_ok(t)) out.push_back(ScenarioNode{{t, {}}, {}});
    auto specs = spec_options(net_, t, ctx);
    const auto& links = net_.legal_feature_links(t);
    if (budget <= 1) {
      if (!specs.empty() || !links.empty()) blocked_ = true;
      return memo_[key] = out;
    }
    for (const auto& s : specs)
      for (const auto& sub : gen(s, ctx, budget - 1))
        out.push_back(ScenarioNode{{t, {}}, {ScenarioEdge{EdgeKind::Spec, "", sub}}});

    // one link per label, any nonempty selection of labels
    std::map<FeatureName, std::vector<const FeatureLink*>> by_label;
    for (const auto& l : links) by_label[l.feature].push_back(&l);
    std::vector<std::vector<const FeatureLink*>> groups;
    for (auto& kv : by_label) groups.push_back(kv.second);
    std::vector<const FeatureLink*> chosen;
    std::function<void(std::size_t)> pick = [&](std::size_t g) {
      if (g == groups.size()) {
        if (chosen.empty()) return;
        if (chosen.size() > budget - 1) {
          blocked_ = true;
          return;
        }
        combine(t, chosen, budget - 1, out);
        return;
      }
      pick(g + 1);
      for (const auto* l : groups[g]) {
        chosen.push_back(l);
        pick(g + 1);
        chosen.pop_back();
      }
    };
    pick(0);
    return memo_[key] = out;
  }

  void combine(const TypeName& t, const std::vector<const FeatureLink*>& chosen, std::size_t budget,
               std::vector<ScenarioNode>& out) {
    std::vector<ScenarioEdge> edges;
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t left) {
      if (i == chosen.size()) {
        ScenarioNode n{{t, {}}, edges};
        detail::sort_children(n);
        out.push_back(std::move(n));
        return;
      }
      std::size_t reserve = chosen.size() - i - 1;
      const auto* l = chosen[i];
      IncomingFeature ctx{t, l->feature, l->target};
      const auto& subs = gen(l->target, ctx, left - reserve);
      for (const auto& sub : subs) {
        edges.push_back(ScenarioEdge{EdgeKind::Feature, l->feature, sub});
        rec(i + 1, left - node_count(sub));
        edges.pop_back();
      }
    };
    rec(0, budget);
  }

  const EventNetwork& net_;
  const std::vector<Observation>& obs_;
  std::map<std::string, std::vector<ScenarioNode>> memo_;
  bool blocked_ = false;
};

struct Strictness {
  static bool excluded(const Error& e) {
    return e.kind() == ErrorKind::NoStatistic || e.kind() == ErrorKind::AmbiguousStatistic;
  }
};

// All minimal consistent single-tree explanations of `obs` within `budget`
// nodes, unranked and without a probability floor.
inline std::vector<Explanation> oracle_trees(const EventNetwork& net, const std::vector<Observation>& obs,
                                             std::size_t budget, bool assume_one, bool& blocked,
                                             std::vector<Rejection>* rejections) {
  std::vector<Explanation> out;
  std::set<std::string> seen;
  ShapeGenerator shapes(net, obs);
  auto reject = [&](const Scenario& s, std::string reason) {
    if (rejections) rejections->push_back({canonical_string(s), std::move(reason)});
  };
  for (const auto& root : root_types(net)) {
    for (const auto& shape_root : shapes.generate(root, std::nullopt, budget, obs.size())) {
      Scenario shape{shape_root};
      auto flat = flatten(shape);
      std::vector<std::vector<std::size_t>> options(obs.size());
      bool coverable = true;
      for (std::size_t o = 0; o < obs.size(); ++o) {
        for (std::size_t i = 0; i < flat.size(); ++i)
          if (net.isa(flat[i].node->desc.type, obs[o].desc.type)) options[o].push_back(i);
        if (options[o].empty()) coverable = false;
      }
      if (!coverable) continue;
      std::vector<std::size_t> choice(obs.size(), 0);
      while (true) {
        std::vector<std::vector<std::size_t>> assigned(flat.size());
        for (std::size_t o = 0; o < obs.size(); ++o) assigned[options[o][choice[o]]].push_back(o);
        bool leaves_covered = true;
        for (std::size_t i = 0; i < flat.size(); ++i)
          if (flat[i].node->is_leaf() && assigned[i].empty()) leaves_covered = false;
        if (leaves_covered) {
          std::string reason;
          Scenario seeded;
          auto s = seed_and_percolate(net, shape, assigned, obs, &reason, &seeded);
          if (!s) {
            reject(seeded, reason);
          } else if (!seen.count(canonical_string(*s))) {
            seen.insert(canonical_string(*s));
            if (!is_minimal(net, {*s}, obs)) {
              reject(*s, "not minimal");
            } else {
              try {
                out.push_back(make_explanation(net, {*s}, obs, assume_one));
              } catch (const Error& e) {
                if (!Strictness::excluded(e)) throw;
                reject(*s, e.what());
              }
            }
          }
        }
        std::size_t k = 0;
        while (k < obs.size() && ++choice[k] == options[k].size()) choice[k++] = 0;
        if (k == obs.size()) break;
      }
    }
  }
  if (shapes.blocked()) blocked = true;
  return out;
}

}  // namespace detail

// Exhaustive reference: every minimal consistent covering scenario (or
// forest) within the bounds, ranked. Intended for small max_nodes.
inline RankedResult enumerate_explanations(const EventNetwork& net, const std::vector<Observation>& observations,
                                           const SearchParams& params,
                                           std::vector<Rejection>* rejections = nullptr) {
  detail::check_inputs(net, observations, params);
  RankedResult result;
  bool blocked = false;
  std::vector<Explanation> found;
  std::set<std::string> seen;
  auto accept = [&](Explanation ex) {
    if (!seen.insert(ex.canonical).second) return;
    if (ex.probability < params.min_prob) {
      blocked = true;
      if (rejections) rejections->push_back({ex.canonical, "below min_prob"});
      return;
    }
    found.push_back(std::move(ex));
  };

  const std::size_t n = observations.size();
  std::vector<std::vector<std::uint32_t>> partitions;
  if (params.allow_forest) {
    partitions = detail::set_partitions(n);
  } else {
    partitions.push_back({n == 32 ? ~0u : (1u << n) - 1});
  }
  std::map<std::pair<std::uint32_t, std::size_t>, std::vector<Explanation>> cache;
  for (const auto& blocks : partitions) {
    if (blocks.size() > params.max_nodes) {
      blocked = true;
      continue;
    }
    std::size_t budget = params.max_nodes - (blocks.size() - 1);
    std::vector<const std::vector<Explanation>*> lists;
    for (auto mask : blocks) {
      auto key = std::make_pair(mask, budget);
      if (!cache.count(key))
        cache[key] = detail::oracle_trees(net, detail::select(observations, mask), budget, params.assume_one,
                                          blocked, blocks.size() == 1 ? rejections : nullptr);
      lists.push_back(&cache[key]);
    }
    if (blocks.size() == 1) {
      for (const auto& ex : *lists[0])
        accept(make_explanation(net, ex.members, observations, params.assume_one));
      continue;
    }
    std::vector<std::size_t> idx(blocks.size(), 0);
    if (std::any_of(lists.begin(), lists.end(), [](auto* l) { return l->empty(); })) continue;
    while (true) {
      std::vector<Scenario> members;
      std::size_t nodes = 0;
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        members.push_back((*lists[b])[idx[b]].scenario());
        nodes += node_count(members.back());
      }
      if (nodes > params.max_nodes) {
        blocked = true;
      } else if (is_minimal(net, members, observations)) {
        accept(make_explanation(net, members, observations, params.assume_one));
      }
      std::size_t k = 0;
      while (k < blocks.size() && ++idx[k] == lists[k]->size()) idx[k++] = 0;
      if (k == blocks.size()) break;
    }
  }
  detail::rank(found, params.top_k);
  result.explanations = std::move(found);
  result.exhausted = !blocked;
  return result;
}


namespace detail {

// Optimistic per-type tables for one observation set: h[o][t] bounds the
// product of conditionals on any path from type t down to a node that can
// witness observation o; dist[o][t] is the fewest extra nodes on such a path.
class Heuristics {
 public:
  Heuristics(const EventNetwork& net, const std::vector<Observation>& obs, bool assume_one)
      : net_(net), assume_one_(assume_one) {
    for (const auto& t : net.types()) {
      index_[t.name] = names_.size();
      names_.push_back(t.name);
    }
    const std::size_t n = names_.size();
    struct Edge {
      std::size_t to;
      double w;
    };
    std::vector<std::vector<Edge>> edges(n);
    for (std::size_t t = 0; t < n; ++t) {
      for (const auto& l : net.legal_feature_links(names_[t]))
        edges[t].push_back({index_.at(l.target), feature_ub(names_[t], l.feature, l.target, nullptr, nullptr)});
      for (const auto& s : net.isa_descendants(names_[t]))
        if (s != names_[t] && net.strict_isa(s, names_[t])) edges[t].push_back({index_.at(s), spec_ub(names_[t], s)});
    }
    const double inf = std::numeric_limits<double>::infinity();
    for (const auto& o : obs) {
      std::vector<double> h(n, 0.0);
      std::vector<double> d(n, inf);
      for (std::size_t t = 0; t < n; ++t)
        if (net.isa(names_[t], o.desc.type)) {
          h[t] = 1.0;
          d[t] = 0.0;
        }
      for (bool changed = true; changed;) {
        changed = false;
        for (std::size_t t = 0; t < n; ++t)
          for (const auto& e : edges[t]) {
            if (e.w * h[e.to] > h[t]) {
              h[t] = e.w * h[e.to];
              changed = true;
            }
            if (d[e.to] + 1.0 < d[t]) {
              d[t] = d[e.to] + 1.0;
              changed = true;
            }
          }
      }
      h_.push_back(std::move(h));
      dist_.push_back(std::move(d));
    }
  }

  double h(std::size_t obs, const TypeName& t) const { return h_[obs][index_.at(t)]; }
  double dist(std::size_t obs, const TypeName& t) const { return dist_[obs][index_.at(t)]; }

  // Largest prior that could still apply once bindings grow; 0 if none can.
  double prior_ub(const EventDescription& d) const {
    double best = 0.0;
    bool unconditional = false;
    for (const auto* s : net_.priors_by_type(d.type)) {
      if (!bindings_compatible(s->desc.bindings, d.bindings)) continue;
      best = std::max(best, s->p);
      unconditional = unconditional || s->desc.bindings.empty();
    }
    if (assume_one_ && !unconditional) best = 1.0;
    return best;
  }

  double feature_ub(const TypeName& parent, const FeatureName& f, const TypeName& child, const Bindings* pb,
                    const Bindings* cb) const {
    double best = 0.0;
    bool unconditional = false;
    for (const auto* s : net_.feature_conds(parent, f, child)) {
      if (pb && !bindings_compatible(s->parent.bindings, *pb)) continue;
      if (cb && !bindings_compatible(s->child.bindings, *cb)) continue;
      best = std::max(best, s->p);
      unconditional = unconditional || (s->parent.bindings.empty() && s->child.bindings.empty());
    }
    if (assume_one_ && !unconditional) best = 1.0;
    return best;
  }

  double spec_ub(const TypeName& general, const TypeName& specific) const {
    if (auto p = net_.find_spec_cond(general, specific)) return *p;
    return assume_one_ ? 1.0 : 0.0;
  }

 private:
  const EventNetwork& net_;
  bool assume_one_;
  std::map<TypeName, std::size_t> index_;
  std::vector<TypeName> names_;
  std::vector<std::vector<double>> h_;
  std::vector<std::vector<double>> dist_;
};

// Node of a partial scenario. Open nodes still owe coverage of `pending`.
struct PartialNode {
  TypeName type;
  int parent = -1;
  EdgeKind via = EdgeKind::Feature;
  FeatureName label;
  std::vector<int> children;  // sorted by label
  std::vector<std::size_t> assigned;
  std::uint32_t pending = 0;
  bool open = false;
};

struct PartialState {
  std::vector<PartialNode> nodes;
  double ub = 1.0;
  std::uint64_t seq = 0;
};

// Best-first stream of the single-tree explanations of one observation set,
// produced in nonincreasing probability order.
class TreeStream {
 public:
  TreeStream(const EventNetwork& net, std::vector<Observation> obs, std::size_t max_nodes, const SearchParams& params)
      : net_(net), obs_(std::move(obs)), max_nodes_(max_nodes), params_(params),
        heur_(net, obs_, params.assume_one) {
    const std::uint32_t all = obs_.size() >= 32 ? ~0u : (1u << obs_.size()) - 1;
    std::vector<PartialState> roots;
    for (const auto& r : root_types(net)) {
      PartialState s;
      PartialNode n;
      n.type = r;
      n.pending = all;
      n.open = true;
      s.nodes.push_back(std::move(n));
      roots.push_back(std::move(s));
    }
    for (auto& s : roots) admit(std::move(s));
  }

  // The i-th explanation in order, or nullptr past the end.
  const Explanation* get(std::size_t i) {
    while (out_.size() <= i && advance()) {
    }
    return i < out_.size() ? &out_[i] : nullptr;
  }

  // Largest bound among states cut by max_nodes or min_prob.
  double pruned_ub() const { return pruned_ub_; }

 private:
  struct ByBound {
    bool operator()(const PartialState& a, const PartialState& b) const {
      if (a.ub != b.ub) return a.ub < b.ub;
      return a.seq > b.seq;
    }
  };
  struct ByProbability {
    bool operator()(const Explanation& a, const Explanation& b) const { return compare_explanations(a, b) > 0; }
  };

  // Moves one explanation to out_ if it is certain to be next; otherwise
  // expands a batch of states. Returns false when nothing remains.
  bool advance() {
    while (true) {
      if (!ready_.empty() && (open_.empty() || ready_.top().probability >= open_.top().ub)) {
        out_.push_back(ready_.top());
        ready_.pop();
        return true;
      }
      if (open_.empty()) return false;
      expand_batch();
    }
  }

  void expand_batch() {
    const std::size_t width = params_.threads > 1 ? 8 * static_cast<std::size_t>(params_.threads) : 1;
    std::vector<PartialState> batch;
    while (!open_.empty() && batch.size() < width) {
      batch.push_back(open_.top());
      open_.pop();
    }
    std::vector<std::vector<PartialState>> children(batch.size());
    if (batch.size() == 1) {
      children[0] = successors(batch[0]);
    } else {
      std::vector<std::thread> pool;
      const std::size_t workers = std::min<std::size_t>(params_.threads, batch.size());
      for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
          for (std::size_t i = w; i < batch.size(); i += workers) children[i] = successors(batch[i]);
        });
      for (auto& t : pool) t.join();
    }
    // merge in batch order so sequence numbers do not depend on scheduling
    for (auto& group : children)
      for (auto& s : group) admit(std::move(s));
  }

  static std::vector<int> preorder(const PartialState& s) {
    std::vector<int> order;
    std::vector<int> stack{0};
    while (!stack.empty()) {
      int i = stack.back();
      stack.pop_back();
      order.push_back(i);
      const auto& ch = s.nodes[i].children;
      for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
    }
    return order;
  }

  static std::optional<IncomingFeature> context(const PartialState& s, int i) {
    while (s.nodes[i].parent >= 0 && s.nodes[i].via == EdgeKind::Spec) i = s.nodes[i].parent;
    if (s.nodes[i].parent < 0) return std::nullopt;
    return IncomingFeature{s.nodes[s.nodes[i].parent].type, s.nodes[i].label, s.nodes[i].type};
  }

  static int add_child(PartialState& s, int parent, EdgeKind via, const FeatureName& label, const TypeName& type,
                       std::uint32_t pending) {
    PartialNode n;
    n.type = type;
    n.parent = parent;
    n.via = via;
    n.label = label;
    n.pending = pending;
    n.open = true;
    int id = static_cast<int>(s.nodes.size());
    s.nodes.push_back(std::move(n));
    auto& ch = s.nodes[parent].children;
    ch.push_back(id);
    std::sort(ch.begin(), ch.end(), [&](int a, int b) { return s.nodes[a].label < s.nodes[b].label; });
    return id;
  }

  bool reachable(std::uint32_t mask, const TypeName& t) const {
    for (std::size_t o = 0; o < obs_.size(); ++o)
      if ((mask & (1u << o)) && heur_.h(o, t) <= 0.0) return false;
    return true;
  }

  std::vector<PartialState> successors(const PartialState& state) const {
    std::vector<PartialState> out;
    int x = -1;
    for (int i : preorder(state))
      if (state.nodes[i].open) {
        x = i;
        break;
      }
    const PartialNode& node = state.nodes[x];
    std::uint32_t compatible = 0;
    for (std::size_t o = 0; o < obs_.size(); ++o)
      if ((node.pending & (1u << o)) && net_.isa(node.type, obs_[o].desc.type)) compatible |= 1u << o;

    auto ctx = context(state, x);
    auto specs = spec_options(net_, node.type, ctx);
    const auto& links = net_.legal_feature_links(node.type);

    // every subset A of the compatible pending observations is assigned here
    for (std::uint32_t a = compatible;; a = (a - 1) & compatible) {
      std::uint32_t rest = node.pending & ~a;
      PartialState base = state;
      auto& here = base.nodes[x];
      here.open = false;
      here.pending = 0;
      here.assigned.clear();
      for (std::size_t o = 0; o < obs_.size(); ++o)
        if (a & (1u << o)) here.assigned.push_back(o);

      if (rest == 0) {
        out.push_back(std::move(base));
      } else {
        for (const auto& s : specs) {
          if (!reachable(rest, s)) continue;
          PartialState next = base;
          add_child(next, x, EdgeKind::Spec, "", s, rest);
          out.push_back(std::move(next));
        }
        feature_splits(base, x, rest, links, out);
      }
      if (a == 0) break;
    }
    return out;
  }

  // Every map from the remaining observations onto legal links with
  // distinct labels; each used link becomes a child owing its preimage.
  void feature_splits(const PartialState& base, int x, std::uint32_t rest, const std::vector<FeatureLink>& links,
                      std::vector<PartialState>& out) const {
    std::vector<std::size_t> pending;
    for (std::size_t o = 0; o < obs_.size(); ++o)
      if (rest & (1u << o)) pending.push_back(o);
    std::vector<std::size_t> choice(pending.size());
    std::function<void(std::size_t)> rec = [&](std::size_t i) {
      if (i == pending.size()) {
        std::map<std::size_t, std::uint32_t> preimage;
        for (std::size_t k = 0; k < pending.size(); ++k) preimage[choice[k]] |= 1u << pending[k];
        std::set<FeatureName> labels;
        for (const auto& [li, mask] : preimage)
          if (!labels.insert(links[li].feature).second) return;
        PartialState next = base;
        for (const auto& [li, mask] : preimage)
          add_child(next, x, EdgeKind::Feature, links[li].feature, links[li].target, mask);
        out.push_back(std::move(next));
        return;
      }
      for (std::size_t li = 0; li < links.size(); ++li) {
        if (heur_.h(pending[i], links[li].target) <= 0.0) continue;
        choice[i] = li;
        rec(i + 1);
      }
    };
    rec(0);
  }

  Scenario build(const PartialState& s, std::vector<int>& order) const {
    std::function<ScenarioNode(int)> make = [&](int i) {
      order.push_back(i);
      ScenarioNode n{{s.nodes[i].type, {}}, {}};
      for (int c : s.nodes[i].children)
        n.children.push_back({s.nodes[c].via, s.nodes[c].label, make(c)});
      return n;
    };
    return Scenario{make(0)};
  }

  // Scores a state and files it as pruned, complete or open.
  void admit(PartialState s) {
    s.seq = next_seq_++;
    std::vector<int> order;
    Scenario shape = build(s, order);
    std::vector<std::vector<std::size_t>> assigned(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) assigned[k] = s.nodes[order[k]].assigned;
    auto perc = seed_and_percolate(net_, shape, assigned, obs_, nullptr);
    if (!perc) return;
    auto flat = flatten(*perc);
    std::vector<const Bindings*> bound(s.nodes.size());
    for (std::size_t k = 0; k < order.size(); ++k) bound[order[k]] = &flat[k].node->desc.bindings;

    double ub = heur_.prior_ub({s.nodes[0].type, *bound[0]});
    double extra_nodes = 0.0;
    for (std::size_t i = 0; i < s.nodes.size() && ub > 0.0; ++i) {
      const auto& n = s.nodes[i];
      if (n.parent >= 0) {
        const auto& p = s.nodes[n.parent];
        ub *= n.via == EdgeKind::Spec ? heur_.spec_ub(p.type, n.type)
                                      : heur_.feature_ub(p.type, n.label, n.type, bound[n.parent], bound[i]);
      }
      if (n.open) {
        double h = 1.0, d = 0.0;
        for (std::size_t o = 0; o < obs_.size(); ++o)
          if (n.pending & (1u << o)) {
            h = std::min(h, heur_.h(o, n.type));
            d = std::max(d, heur_.dist(o, n.type));
          }
        ub *= h;
        extra_nodes += d;
      }
    }
    if (ub <= 0.0) return;
    ub *= 1.0 + 1e-9;  // slack for rounding against the exact product
    s.ub = ub;
    if (static_cast<double>(s.nodes.size()) + extra_nodes > static_cast<double>(max_nodes_) ||
        ub < params_.min_prob) {
      pruned_ub_ = std::max(pruned_ub_, ub);
      return;
    }
    bool complete = std::none_of(s.nodes.begin(), s.nodes.end(), [](const PartialNode& n) { return n.open; });
    if (!complete) {
      open_.push(std::move(s));
      return;
    }
    auto key = canonical_string(*perc);
    if (!seen_.insert(key).second) return;
    if (!is_minimal(net_, {*perc}, obs_)) return;
    try {
      auto ex = make_explanation(net_, {*perc}, obs_, params_.assume_one);
      if (ex.probability < params_.min_prob) {
        pruned_ub_ = std::max(pruned_ub_, ex.probability);
        return;
      }
      ready_.push(std::move(ex));
    } catch (const Error& e) {
      if (!Strictness::excluded(e)) throw;
    }
  }

  const EventNetwork& net_;
  std::vector<Observation> obs_;
  std::size_t max_nodes_;
  SearchParams params_;
  Heuristics heur_;
  std::priority_queue<PartialState, std::vector<PartialState>, ByBound> open_;
  std::priority_queue<Explanation, std::vector<Explanation>, ByProbability> ready_;
  std::vector<Explanation> out_;
  std::set<std::string> seen_;
  std::uint64_t next_seq_ = 0;
  double pruned_ub_ = 0.0;
};

}  // namespace detail

// Top-k explanations by best-first branch and bound. Each observation block
// (the whole set unless allow_forest) is searched by its own stream; forests
// combine streams in descending product order.
inline RankedResult explain(const EventNetwork& net, const std::vector<Observation>& observations,
                            const SearchParams& params) {
  detail::check_inputs(net, observations, params);
  const std::size_t n = observations.size();
  std::vector<std::vector<std::uint32_t>> partitions;
  if (params.allow_forest) {
    partitions = detail::set_partitions(n);
  } else {
    partitions.push_back({(1u << n) - 1});
  }

  struct Partition {
    std::vector<detail::TreeStream*> streams;
  };
  std::map<std::pair<std::uint32_t, std::size_t>, std::unique_ptr<detail::TreeStream>> streams;
  std::vector<Partition> parts;
  for (const auto& blocks : partitions) {
    if (blocks.size() > params.max_nodes) continue;
    std::size_t budget = params.max_nodes - (blocks.size() - 1);
    Partition part;
    for (auto mask : blocks) {
      auto key = std::make_pair(mask, budget);
      auto& slot = streams[key];
      if (!slot)
        slot = std::make_unique<detail::TreeStream>(net, detail::select(observations, mask), budget, params);
      part.streams.push_back(slot.get());
    }
    parts.push_back(std::move(part));
  }

  struct Combo {
    double ub;
    std::size_t part;
    std::vector<std::size_t> idx;
    std::uint64_t seq;
    bool operator<(const Combo& o) const { return ub != o.ub ? ub < o.ub : seq > o.seq; }
  };
  std::priority_queue<Combo> heap;
  std::uint64_t seq = 0;
  std::vector<std::set<std::vector<std::size_t>>> visited(parts.size());
  auto push = [&](std::size_t p, std::vector<std::size_t> idx) {
    double ub = 1.0 + 1e-9;
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const auto* ex = parts[p].streams[b]->get(idx[b]);
      if (!ex) return;
      ub *= ex->probability;
    }
    if (!visited[p].insert(idx).second) return;
    heap.push({ub, p, std::move(idx), seq++});
  };
  for (std::size_t p = 0; p < parts.size(); ++p) push(p, std::vector<std::size_t>(parts[p].streams.size(), 0));

  std::vector<Explanation> found;
  std::set<std::string> seen;
  std::multiset<double, std::greater<>> top;
  double combo_pruned = 0.0;
  auto threshold = [&] {
    if (top.size() < params.top_k) return 0.0;
    return *std::next(top.begin(), static_cast<std::ptrdiff_t>(params.top_k - 1));
  };
  while (!heap.empty()) {
    Combo c = heap.top();
    if (c.ub < threshold() * (1.0 - 2 * kRelativeTolerance)) break;
    heap.pop();
    const auto& part = parts[c.part];
    std::vector<Scenario> members;
    std::size_t nodes = 0;
    for (std::size_t b = 0; b < c.idx.size(); ++b) {
      members.push_back(part.streams[b]->get(c.idx[b])->scenario());
      nodes += node_count(members.back());
    }
    if (nodes > params.max_nodes) {
      combo_pruned = std::max(combo_pruned, c.ub);
    } else if (members.size() == 1 || is_minimal(net, members, observations)) {
      auto ex = make_explanation(net, members, observations, params.assume_one);
      if (ex.probability < params.min_prob) {
        combo_pruned = std::max(combo_pruned, ex.probability);
      } else if (seen.insert(ex.canonical).second) {
        top.insert(ex.probability);
        found.push_back(std::move(ex));
      }
    }
    for (std::size_t b = 0; b < c.idx.size(); ++b) {
      auto next = c.idx;
      ++next[b];
      push(c.part, std::move(next));
    }
  }

  RankedResult result;
  detail::rank(found, params.top_k);
  const double thr = found.size() >= params.top_k ? found.back().probability * (1.0 - 2 * kRelativeTolerance) : 0.0;
  double worst = combo_pruned;
  for (const auto& part : parts) {
    // a member's bound times the best of the other blocks bounds the forest
    for (std::size_t b = 0; b < part.streams.size(); ++b) {
      double others = 1.0;
      for (std::size_t k = 0; k < part.streams.size(); ++k) {
        if (k == b) continue;
        const auto* first = part.streams[k]->get(0);
        others *= first ? first->probability : 0.0;
      }
      if (part.streams.size() == 1 || others > 0.0) worst = std::max(worst, part.streams[b]->pruned_ub() * others);
    }
  }
  result.exhausted = thr > 0.0 ? worst < thr : worst == 0.0;
  for (const auto& blocks : partitions)
    if (blocks.size() > params.max_nodes) result.exhausted = false;
  result.explanations = std::move(found);
  return result;
}

}  // namespace evnet
