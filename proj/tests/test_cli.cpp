#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "evnet/cli.hpp"
#include "support.hpp"

using namespace evnet;
using evtest::corpus_path;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string temp_file(const std::string& name, const std::string& text) {
  auto path = std::filesystem::temp_directory_path() / ("evnet-cli-" + name);
  std::ofstream(path) << text;
  return path.string();
}

}  // namespace

TEST(Cli, ValidateOk) {
  auto r = run({"validate", "--kb", corpus_path("flu.ekb")});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "ok\n");
}

TEST(Cli, ValidateSyntaxError) {
  auto path = temp_file("syntax.ekb", "type a\nprior a 0.5\n");
  auto r = run({"validate", "--kb", path});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find(path + ":2:9: syntax error"), std::string::npos) << r.err;
}

TEST(Cli, ValidateInvalidKb) {
  auto path = temp_file("invalid.ekb", "type a isa b\ntype b isa a\n");
  auto r = run({"validate", "--kb", path});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("invalid: isa cycle"), std::string::npos) << r.err;
}

TEST(Cli, MissingFileAndBadUsage) {
  EXPECT_EQ(run({"validate", "--kb", "/nonexistent/kb.ekb"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"explain", "--kb", corpus_path("flu.ekb")}).code, 2);
  EXPECT_EQ(run({"explain", "--kb", corpus_path("flu.ekb"), "--obs", corpus_path("arnold-bob.obs"), "--format", "xml"})
                .code,
            2);
}

TEST(Cli, ExplainJsonSchema) {
  auto r = run({"explain", "--kb", corpus_path("engine.ekb"), "--obs", corpus_path("us.obs")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = Json::parse(r.out);
  EXPECT_TRUE(j["exhausted"].get<bool>());
  EXPECT_EQ(j["params"]["top_k"], 3);
  EXPECT_EQ(j["params"]["max_nodes"], 64);
  ASSERT_EQ(j["explanations"].size(), 2u);
  const auto& e = j["explanations"][0];
  for (const char* key : {"probability", "log10_probability", "node_count", "root", "factors", "coverage"})
    EXPECT_TRUE(e.contains(key)) << key;
  EXPECT_EQ(e["root"]["id"], "n1");
  EXPECT_EQ(e["root"]["type"], "im");
  EXPECT_EQ(e["coverage"]["obs1"], "n3");
  EXPECT_EQ(e["factors"][0]["kind"], "prior");
  EXPECT_EQ(e["factors"][1]["kind"], "feature-cond");
  EXPECT_NEAR(e["probability"].get<double>(), 0.0152, 1e-15);
}

TEST(Cli, NoExplanationExitCode) {
  auto r = run({"explain", "--kb", corpus_path("engine.ekb"), "--obs", corpus_path("impossible.obs")});
  EXPECT_EQ(r.code, 1);
  auto j = Json::parse(r.out);
  EXPECT_TRUE(j["explanations"].empty());
  EXPECT_TRUE(j["exhausted"].get<bool>());
}

TEST(Cli, UnknownObservationType) {
  auto obs = temp_file("unknown.obs", "obs z nosuch\n");
  auto r = run({"explain", "--kb", corpus_path("engine.ekb"), "--obs", obs});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nosuch"), std::string::npos);
}

TEST(Cli, TextAndDotFormats) {
  auto text = run({"explain", "--kb", corpus_path("engine.ekb"), "--obs", corpus_path("us.obs"), "--format", "text"});
  EXPECT_EQ(text.code, 0);
  EXPECT_EQ(text.out.rfind("#1 probability 0.0152", 0), 0u) << text.out;
  EXPECT_NE(text.out.find("exhausted: true"), std::string::npos);
  auto dot = run({"explain", "--kb", corpus_path("engine.ekb"), "--obs", corpus_path("us.obs"), "--format", "dot"});
  EXPECT_EQ(dot.code, 0);
  EXPECT_NE(dot.out.find("digraph explanation1 {"), std::string::npos);
  EXPECT_NE(dot.out.find("digraph explanation2 {"), std::string::npos);
}

TEST(Cli, EnumerateMatchesExplain) {
  std::vector<std::string> common{"--kb", corpus_path("alarm.ekb"), "--obs", corpus_path("holmes-1.obs"),
                                  "--top-k", "3", "--max-nodes", "8"};
  auto a = common, b = common;
  a.insert(a.begin(), "explain");
  b.insert(b.begin(), "enumerate");
  auto ra = run(a), rb = run(b);
  EXPECT_EQ(ra.code, 0);
  EXPECT_EQ(ra.out, rb.out);
  EXPECT_EQ(run({"enumerate", "--kb", corpus_path("alarm.ekb"), "--obs", corpus_path("holmes-1.obs"), "--max-nodes",
                 "1"})
                .code,
            1);
}

TEST(Cli, Paths) {
  auto r = run({"paths", "--kb", corpus_path("shopping.ekb"), "--type", "work-in-supermarket"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("work-in-supermarket via work -goto-> goto-workplace preempted by work-in-supermarket -goto-> "
                       "goto-supermarket"),
            std::string::npos)
      << r.out;
  EXPECT_NE(r.out.find("work-in-supermarket via work-in-uniform -wear-> put-on-uniform kept"), std::string::npos);
  EXPECT_EQ(run({"paths", "--kb", corpus_path("shopping.ekb"), "--type", "nosuch"}).code, 2);
}

TEST(Cli, SpecPreemptionVariant) {
  auto obs = temp_file("b2.obs", "obs b B2\n");
  std::vector<std::string> args{"explain", "--kb", corpus_path("preempt.ekb"), "--obs", obs, "--format", "text"};
  auto primed = run(args);
  args.push_back("--spec-preemption");
  args.push_back("literal");
  auto literal = run(args);
  EXPECT_EQ(primed.code, 0);
  EXPECT_EQ(literal.code, 0);
  EXPECT_EQ(primed.out.find("n1 A {}\n  -f-> n2 B"), std::string::npos) << primed.out;
  EXPECT_NE(literal.out.find("n1 A {}\n  -f-> n2 B {}"), std::string::npos) << literal.out;
}

TEST(Cli, ThreadsDoNotChangeOutput) {
  std::vector<std::string> args{"explain", "--kb", corpus_path("flu.ekb"), "--obs", corpus_path("arnold-bob.obs")};
  auto one = run(args);
  args.push_back("--threads");
  args.push_back("4");
  EXPECT_EQ(one.out, run(args).out);
}
