#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "support.hpp"

using namespace evnet;

namespace {

constexpr int kRounds = 300;

SearchParams small(std::size_t top_k = 5, std::size_t max_nodes = 5) {
  SearchParams p;
  p.top_k = top_k;
  p.max_nodes = max_nodes;
  return p;
}

std::vector<std::string> canon(const RankedResult& r) {
  std::vector<std::string> out;
  for (const auto& e : r.explanations) out.push_back(e.canonical);
  return out;
}

// Gives every leaf of a random scenario some random bindings.
Scenario bind_leaves(evtest::Generator& gen, Scenario s) {
  std::function<void(ScenarioNode&)> walk = [&](ScenarioNode& n) {
    if (n.is_leaf()) {
      for (const auto& [a, v] : gen.bindings(0.5)) n.desc.bindings[a] = v;
    }
    for (auto& e : n.children) walk(e.node);
  };
  walk(s.root);
  return s;
}

}  // namespace

TEST(Properties, SearchMatchesOracle) {
  evtest::Generator gen(1);
  int nonempty = 0;
  for (int round = 0; round < kRounds; ++round) {
    auto c = gen.random_case(6, 8, 3);
    auto params = small();
    params.allow_forest = gen.chance(0.3);
    params.assume_one = gen.chance(0.3);
    auto fast = explain(c.net, c.observations, params);
    auto slow = enumerate_explanations(c.net, c.observations, params);
    ASSERT_EQ(canon(fast), canon(slow)) << "round " << round << "\n" << serialize_kb(c.net);
    for (std::size_t i = 0; i < fast.explanations.size(); ++i)
      EXPECT_NEAR(fast.explanations[i].probability, slow.explanations[i].probability,
                  1e-12 * slow.explanations[i].probability);
    nonempty += !fast.explanations.empty();
  }
  EXPECT_GT(nonempty, kRounds / 4);
}

TEST(Properties, PercolationIsConfluent) {
  evtest::Generator gen(2);
  for (int round = 0; round < kRounds; ++round) {
    auto c = gen.random_case();
    auto s = bind_leaves(gen, gen.random_scenario(c.net, 7));
    auto prob = percolation_problem(c.net, s);
    auto reference = solve_rules(prob);
    std::vector<std::size_t> order(prob.rules.size());
    std::iota(order.begin(), order.end(), 0);
    for (int shuffle = 0; shuffle < 5; ++shuffle) {
      std::shuffle(order.begin(), order.end(), gen.rng());
      auto naive = apply_rules_in_order(prob, order);
      ASSERT_EQ(naive.consistent, reference.consistent) << canonical_string(s);
      if (reference.consistent) {
        EXPECT_EQ(naive.bindings, reference.bindings) << canonical_string(s);
      }
    }
  }
}

TEST(Properties, PercolationSoundness) {
  evtest::Generator gen(3);
  for (int round = 0; round < kRounds; ++round) {
    auto c = gen.random_case();
    auto s = bind_leaves(gen, gen.random_scenario(c.net, 7));
    auto r = percolate_and_check(c.net, s);
    if (!r.consistent()) continue;
    auto before = flatten(s);
    auto flat = flatten(*r.scenario);
    ASSERT_EQ(flat.size(), before.size());
    for (std::size_t i = 0; i < flat.size(); ++i) {
      // existing bindings survive
      for (const auto& [a, v] : before[i].node->desc.bindings) EXPECT_EQ(flat[i].node->desc.bindings.at(a), v);
      // feature edges respect matching percolation constraints
      auto in = incoming_feature(flat, i);
      if (!in || flat[i].incoming->kind != EdgeKind::Feature) continue;
      const auto& parent = flat[static_cast<std::size_t>(flat[i].parent)].node->desc;
      const auto& child = flat[i].node->desc;
      for (const auto& pc : c.net.spec().percolation_constraints) {
        if (pc.feature != in->feature || !c.net.isa(parent.type, pc.parent_type) ||
            (!pc.child_type.empty() && !c.net.isa(child.type, pc.child_type)))
          continue;
        auto pv = parent.bindings.find(pc.parent_attr);
        auto cv = child.bindings.find(pc.child_attr);
        if (pv != parent.bindings.end() && cv != child.bindings.end()) {
          EXPECT_EQ(pv->second, cv->second);
        }
      }
    }
  }
}

TEST(Properties, ExplanationsAreSoundAndMinimal) {
  evtest::Generator gen(4);
  for (int round = 0; round < kRounds; ++round) {
    auto c = gen.random_case();
    auto params = small(5, 6);
    params.allow_forest = gen.chance(0.3);
    auto r = explain(c.net, c.observations, params);
    for (const auto& e : r.explanations) {
      EXPECT_LE(e.node_count(), params.max_nodes);
      EXPECT_GE(e.probability, params.min_prob);
      for (const auto& m : e.members) {
        auto check = percolate_and_check(c.net, m);
        ASSERT_TRUE(check.consistent());
        EXPECT_EQ(*check.scenario, m);
        EXPECT_TRUE(c.net.is_culprit(m.root.desc.type));
      }
      for (const auto& o : c.observations) EXPECT_TRUE(entails(c.net, e.members, o)) << o.id;
      EXPECT_TRUE(is_minimal(c.net, e.members, c.observations)) << e.canonical;
      double product = 1.0;
      std::size_t offset = 0;
      for (const auto& m : e.members) {
        product *= probability(c.net, m, params.assume_one, offset).probability;
        offset += node_count(m);
      }
      EXPECT_NEAR(e.probability, product, 1e-12 * product);
    }
    for (std::size_t i = 1; i < r.explanations.size(); ++i)
      EXPECT_LE(compare_explanations(r.explanations[i - 1], r.explanations[i]), 0);
  }
}

// Raising max_nodes or top_k can only add candidates.
TEST(Properties, BoundsAreMonotone) {
  evtest::Generator gen(5);
  for (int round = 0; round < kRounds; ++round) {
    auto c = gen.random_case();
    auto base = explain(c.net, c.observations, small(3, 4));
    auto wider = explain(c.net, c.observations, small(3, 6));
    auto longer = explain(c.net, c.observations, small(6, 4));
    if (!base.explanations.empty()) {
      ASSERT_FALSE(wider.explanations.empty());
      EXPECT_GE(wider.explanations[0].probability * (1 + 1e-12), base.explanations[0].probability);
    }
    auto lc = canon(longer);
    auto bc = canon(base);
    ASSERT_GE(lc.size(), bc.size());
    EXPECT_TRUE(std::equal(bc.begin(), bc.end(), lc.begin()));
  }
}

TEST(Properties, ProbabilityFloorOnlyFilters) {
  evtest::Generator gen(6);
  for (int round = 0; round < kRounds; ++round) {
    auto c = gen.random_case();
    auto open = explain(c.net, c.observations, small(8, 5));
    if (open.explanations.empty()) continue;
    auto floored_params = small(8, 5);
    floored_params.min_prob = open.explanations.back().probability;
    auto floored = explain(c.net, c.observations, floored_params);
    std::vector<std::string> expected;
    for (const auto& e : open.explanations)
      if (e.probability >= floored_params.min_prob) expected.push_back(e.canonical);
    EXPECT_EQ(canon(floored), expected);
  }
}

TEST(Properties, ThreadCountDoesNotMatter) {
  evtest::Generator gen(7);
  for (int round = 0; round < 60; ++round) {
    auto c = gen.random_case();
    auto p1 = small(4, 6);
    p1.allow_forest = gen.chance(0.5);
    auto p4 = p1;
    p4.threads = 4;
    auto a = explain(c.net, c.observations, p1);
    auto b = explain(c.net, c.observations, p4);
    EXPECT_EQ(canon(a), canon(b));
    EXPECT_EQ(a.exhausted, b.exhausted);
  }
}

// A forest's probability is the product of its members' probabilities.
TEST(Properties, ForestDecomposes) {
  evtest::Generator gen(8);
  int forests = 0;
  for (int round = 0; round < kRounds; ++round) {
    auto c = gen.random_case(6, 8, 3);
    auto p = small(5, 6);
    p.allow_forest = true;
    for (const auto& e : explain(c.net, c.observations, p).explanations) {
      if (e.members.size() < 2) continue;
      ++forests;
      double product = 1.0;
      for (const auto& m : e.members) product *= probability(c.net, m).probability;
      EXPECT_NEAR(e.probability, product, 1e-12 * product);
      auto sorted = e.members;
      sort_members(sorted);
      EXPECT_EQ(sorted, e.members);
    }
  }
  EXPECT_GT(forests, 0);
}

// Weakening an observation keeps it entailed.
TEST(Properties, EntailmentSurvivesWeakening) {
  evtest::Generator gen(9);
  for (int round = 0; round < kRounds; ++round) {
    auto c = gen.random_case();
    auto r = explain(c.net, c.observations, small(3, 6));
    for (const auto& e : r.explanations) {
      for (const auto& o : c.observations) {
        Observation weaker = o;
        if (!weaker.desc.bindings.empty()) weaker.desc.bindings.erase(weaker.desc.bindings.begin());
        EXPECT_TRUE(entails(c.net, e.members, weaker));
        for (const auto& anc : c.net.isa_ancestors(o.desc.type)) {
          weaker.desc.type = anc;
          EXPECT_TRUE(entails(c.net, e.members, weaker)) << anc;
        }
      }
    }
  }
}
