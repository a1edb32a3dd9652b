#include <gtest/gtest.h>

#include "support.hpp"

using namespace evnet;
using evtest::corpus_kb;
using evtest::corpus_obs;

namespace {

std::vector<std::string> root_types_of(const RankedResult& r) {
  std::vector<std::string> out;
  for (const auto& e : r.explanations) out.push_back(e.scenario().root.desc.type);
  return out;
}

SearchParams top(std::size_t k) {
  SearchParams p;
  p.top_k = k;
  return p;
}

}  // namespace

TEST(Explain, EngineBothCauses) {
  auto net = corpus_kb("engine.ekb");
  auto r = explain(net, corpus_obs("us.obs"), top(3));
  ASSERT_EQ(r.explanations.size(), 2u);
  EXPECT_EQ(root_types_of(r), (std::vector<std::string>{"im", "bs"}));
  EXPECT_NEAR(r.explanations[0].probability, 0.02 * 0.8 * 0.95, 1e-15);
  EXPECT_NEAR(r.explanations[1].probability, 0.01 * 0.9 * 0.95, 1e-15);
  EXPECT_TRUE(r.exhausted);
}

TEST(Explain, EngineContinuousSymptom) {
  auto net = corpus_kb("engine.ekb");
  auto obs = corpus_obs("us-cont.obs");
  auto r = explain(net, obs, top(3));
  ASSERT_EQ(r.explanations.size(), 1u);
  EXPECT_EQ(r.explanations[0].scenario().root.desc.type, "bs");
  EXPECT_EQ(r.explanations[0].canonical, "bs{occ=cont}[f1:mf{occ=cont}[f3:us{occ=cont}]]");

  std::vector<Rejection> rejected;
  enumerate_explanations(net, obs, top(3), &rejected);
  bool im_rejected = false;
  for (const auto& rj : rejected)
    if (rj.scenario.rfind("im{", 0) == 0 && rj.reason.find("n1") != std::string::npos &&
        rj.reason.find("im : occ = int") != std::string::npos)
      im_rejected = true;
  EXPECT_TRUE(im_rejected);
}

TEST(Explain, ImpossibleObservation) {
  auto net = corpus_kb("engine.ekb");
  auto r = explain(net, corpus_obs("impossible.obs"), top(3));
  EXPECT_TRUE(r.explanations.empty());
  EXPECT_TRUE(r.exhausted);
}

TEST(Explain, FluTopTwoTie) {
  auto net = corpus_kb("flu.ekb");
  auto r = explain(net, corpus_obs("arnold-bob.obs"), top(3));
  ASSERT_GE(r.explanations.size(), 2u);
  const double derived = 0.001 * 0.6 * 0.5 * 0.3 * 0.6 * 0.5;
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(r.explanations[i].probability, derived, 1e-15);
    EXPECT_EQ(r.explanations[i].node_count(), 6u);
  }
  // The two orientations of the infection chain; ties break by canonical string.
  EXPECT_EQ(r.explanations[0].scenario().root.desc.bindings.at("agent"), "Arnold");
  EXPECT_EQ(r.explanations[1].scenario().root.desc.bindings.at("agent"), "Bob");
  EXPECT_EQ(r.explanations[1].scenario().root.desc.bindings.at("infectee"), "Arnold");
  EXPECT_LT(r.explanations[0].canonical, r.explanations[1].canonical);
  EXPECT_EQ(r.explanations[1].coverage.at("s2"), "n6");
  EXPECT_EQ(r.explanations[1].coverage.at("h1"), "n4");
}

TEST(Explain, SizeBound) {
  auto net = corpus_kb("flu.ekb");
  std::vector<Observation> obs{{"s", {"sneezing", {{"agent", "Arnold"}}}}};
  SearchParams p = top(3);
  p.max_nodes = 2;
  auto r = explain(net, obs, p);
  ASSERT_EQ(r.explanations.size(), 1u);
  EXPECT_NEAR(r.explanations[0].probability, 0.001 * 0.6, 1e-15);
  p.max_nodes = 1;
  EXPECT_TRUE(explain(net, obs, p).explanations.empty());
}

TEST(Explain, MinProbFloor) {
  auto net = corpus_kb("engine.ekb");
  SearchParams p = top(3);
  p.min_prob = 0.01;
  auto r = explain(net, corpus_obs("us.obs"), p);
  ASSERT_EQ(r.explanations.size(), 1u);
  EXPECT_EQ(r.explanations[0].scenario().root.desc.type, "im");
  EXPECT_FALSE(r.exhausted);
}

TEST(Explain, ShoppingJohn) {
  auto net = corpus_kb("shopping.ekb");
  auto r = explain(net, corpus_obs("john.obs"), top(3));
  ASSERT_EQ(r.explanations.size(), 3u);
  EXPECT_EQ(r.explanations[0].canonical,
            "work-in-supermarket{agent-name=John,agent-sex=male}[goto:goto-supermarket{agent-name=John,agent-sex=male};"
            "wear:put-on-uniform{agent-name=John,agent-sex=male}]");
  EXPECT_NEAR(r.explanations[0].probability, 0.01, 1e-15);
  for (int i = 1; i < 3; ++i) {
    EXPECT_EQ(r.explanations[i].scenario().root.desc.type, "do-things");
    EXPECT_NEAR(r.explanations[i].probability, 0.4 * 0.05 * 0.9 * 0.1, 1e-15);
    EXPECT_EQ(r.explanations[i].node_count(), 8u);
  }
}

TEST(Explain, ShoppingSue) {
  auto net = corpus_kb("shopping.ekb");
  auto r = explain(net, corpus_obs("sue.obs"), top(12));
  ASSERT_GE(r.explanations.size(), 2u);
  EXPECT_EQ(r.explanations[0].scenario().root.desc.type, "do-things");
  EXPECT_NEAR(r.explanations[0].probability, 0.4 * 0.1 * 0.8 * 0.9, 1e-15);
  // each further -rest-> step costs a factor 0.9
  EXPECT_NEAR(r.explanations[1].probability, 0.4 * 0.9 * 0.1 * 0.8 * 0.9, 1e-15);
  auto roots = root_types_of(r);
  auto it = std::find(roots.begin(), roots.end(), "shop-in-supermarket");
  ASSERT_NE(it, roots.end());
  EXPECT_NEAR(r.explanations[it - roots.begin()].probability, 0.02 * 0.8 * 0.9, 1e-15);
  for (const auto& e : r.explanations) EXPECT_NE(e.canonical.find("pick-from-shelf"), std::string::npos);
}

TEST(Explain, ShoppingBill) {
  auto net = corpus_kb("shopping.ekb");
  auto r = explain(net, corpus_obs("bill.obs"), top(3));
  ASSERT_FALSE(r.explanations.empty());
  const auto& best = r.explanations[0];
  EXPECT_EQ(best.scenario().root.desc.type, "bureaucrat-work");
  EXPECT_NEAR(best.probability, 0.005 * 0.3 * 0.9, 1e-15);
  EXPECT_NE(best.canonical.find("spec>goto-cityhall"), std::string::npos);
}

TEST(Explain, AlarmStages) {
  auto net = corpus_kb("alarm.ekb");
  auto r1 = explain(net, corpus_obs("holmes-1.obs"), top(3));
  EXPECT_EQ(root_types_of(r1), (std::vector<std::string>{"burglary", "practical-joke", "earthquake"}));
  EXPECT_NEAR(r1.explanations[0].probability, 0.01 * 0.9 * 0.8 * 0.9, 1e-15);
  EXPECT_NEAR(r1.explanations[1].probability, 0.001 * 0.5, 1e-15);
  EXPECT_NEAR(r1.explanations[2].probability, 0.0001 * 0.5 * 0.8 * 0.9, 1e-15);

  auto r2 = explain(net, corpus_obs("holmes-2.obs"), top(3));
  EXPECT_EQ(root_types_of(r2), (std::vector<std::string>{"burglary", "earthquake"}));
  EXPECT_NEAR(r2.explanations[0].probability, 0.01 * 0.9 * 0.016 * 0.9, 1e-15);

  auto r3 = explain(net, corpus_obs("holmes-3.obs"), top(3));
  EXPECT_EQ(root_types_of(r3), (std::vector<std::string>{"earthquake"}));
  EXPECT_NEAR(r3.explanations[0].probability, 0.0001 * 0.5 * 0.016 * 0.9 * 0.9, 1e-18);
}

TEST(Explain, ForestNeededForUnrelatedObservations) {
  auto net = evtest::kb_from_text(
      "type a\ntype b\ntype x\ntype y\nfeature f : a -> x\nfeature g : b -> y\n"
      "prior a = 0.5\nprior b = 0.2\ncond a -f-> x = 0.5\ncond b -g-> y = 0.5\nculprit a\nculprit b\n");
  std::vector<Observation> obs{{"o1", {"x", {}}}, {"o2", {"y", {}}}};
  EXPECT_TRUE(explain(net, obs, top(3)).explanations.empty());
  SearchParams p = top(3);
  p.allow_forest = true;
  auto r = explain(net, obs, p);
  ASSERT_EQ(r.explanations.size(), 1u);
  EXPECT_EQ(r.explanations[0].members.size(), 2u);
  EXPECT_NEAR(r.explanations[0].probability, 0.25 * 0.1, 1e-15);
  EXPECT_EQ(r.explanations[0].coverage.at("o2"), "n4");
  EXPECT_EQ(enumerate_explanations(net, obs, p).explanations[0].canonical, r.explanations[0].canonical);
}

TEST(Explain, MatchesOracleOnFlu) {
  auto net = corpus_kb("flu.ekb");
  SearchParams p = top(5);
  p.max_nodes = 7;
  auto a = explain(net, corpus_obs("arnold-bob.obs"), p);
  auto b = enumerate_explanations(net, corpus_obs("arnold-bob.obs"), p);
  ASSERT_EQ(a.explanations.size(), b.explanations.size());
  for (std::size_t i = 0; i < a.explanations.size(); ++i)
    EXPECT_EQ(a.explanations[i].canonical, b.explanations[i].canonical);
}

TEST(Explain, InputValidation) {
  auto net = corpus_kb("flu.ekb");
  auto obs = corpus_obs("arnold-bob.obs");
  auto kind = [&](const std::vector<Observation>& o, SearchParams p) {
    try {
      explain(net, o, p);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::InvalidNetwork;
  };
  EXPECT_EQ(kind(obs, top(0)), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind({}, top(1)), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind({{"z", {"nosuch", {}}}}, top(1)), ErrorKind::UnknownObservationType);
  std::vector<Observation> many;
  for (int i = 0; i < 21; ++i) many.push_back({"o" + std::to_string(i), {"sneezing", {}}});
  EXPECT_EQ(kind(many, top(1)), ErrorKind::InvalidArgument);
  SearchParams p = top(1);
  p.min_prob = 0.0;
  EXPECT_EQ(kind(obs, p), ErrorKind::InvalidArgument);
}

TEST(Ranking, CompareExplanations) {
  Explanation a, b;
  a.probability = 0.5;
  b.probability = 0.25;
  EXPECT_LT(compare_explanations(a, b), 0);
  EXPECT_GT(compare_explanations(b, a), 0);
  b.probability = 0.5 * (1 + 1e-14);
  a.members.resize(1);
  a.members[0].root.children.push_back({EdgeKind::Spec, "", {}});
  b.members.resize(1);
  EXPECT_GT(compare_explanations(a, b), 0);  // tie on probability, fewer nodes first
  a.members[0].root.children.clear();
  a.canonical = "a";
  b.canonical = "b";
  EXPECT_LT(compare_explanations(a, b), 0);
  EXPECT_EQ(compare_explanations(a, a), 0);
}
