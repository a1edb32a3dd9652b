#pragma once
// Command-line front end: validate, explain, enumerate, paths.
// Exit codes: 0 ok, 1 no explanation, 2 input/usage error, 3 invalid KB.

#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "evnet/kbdsl.hpp"
#include "evnet/network.hpp"
#include "evnet/render.hpp"
#include "evnet/search.hpp"

namespace evnet::cli {

enum ExitCode { kOk = 0, kNoExplanation = 1, kUsage = 2, kInvalidKb = 3 };

namespace detail {

inline bool read_file(const std::string& path, std::string& text) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream buf;
  buf << in.rdbuf();
  text = buf.str();
  return true;
}

// Loads and validates a KB, reporting diagnostics. Returns an exit code.
inline int load_kb(const std::string& path, std::optional<SpecPreemption> variant, std::optional<EventNetwork>& net,
                   std::ostream& err) {
  std::string text;
  if (!read_file(path, text)) {
    err << path << ": cannot read file\n";
    return kUsage;
  }
  auto parsed = parse_kb(text);
  for (const auto& d : parsed.diagnostics) err << format_diagnostic(d, path) << "\n";
  if (parsed.has_syntax_errors()) return kUsage;
  if (!parsed.ok()) return kInvalidKb;
  if (variant && *variant != parsed.spec.spec_preemption) {
    auto spec = parsed.spec;
    spec.spec_preemption = *variant;
    net = EventNetwork::build(std::move(spec));
  } else {
    net = std::move(parsed.network);
  }
  return kOk;
}

inline int load_observations(const std::string& path, std::vector<Observation>& obs, std::ostream& err) {
  std::string text;
  if (!read_file(path, text)) {
    err << path << ": cannot read file\n";
    return kUsage;
  }
  auto parsed = parse_observations(text);
  for (const auto& d : parsed.diagnostics) err << format_diagnostic(d, path) << "\n";
  if (!parsed.ok()) return kUsage;
  obs = std::move(parsed.observations);
  return kOk;
}

struct QueryOptions {
  std::string kb;
  std::string obs;
  std::string format = "json";
  std::string spec_preemption;
  SearchParams params;
};

inline void add_query_options(CLI::App* cmd, QueryOptions& q) {
  cmd->add_option("--kb", q.kb, "knowledge base file")->required();
  cmd->add_option("--obs", q.obs, "observation file")->required();
  cmd->add_option("--top-k", q.params.top_k, "number of explanations")->check(CLI::PositiveNumber);
  cmd->add_option("--max-nodes", q.params.max_nodes, "scenario size bound")->check(CLI::PositiveNumber);
  cmd->add_option("--min-prob", q.params.min_prob, "probability floor")->check(CLI::Range(0.0, 1.0));
  cmd->add_flag("--assume-one", q.params.assume_one, "missing statistics count as 1.0");
  cmd->add_flag("--allow-forest", q.params.allow_forest, "allow several independent scenarios");
  cmd->add_option("--threads", q.params.threads, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--format", q.format, "json, text or dot")->check(CLI::IsMember({"json", "text", "dot"}));
  cmd->add_option("--spec-preemption", q.spec_preemption, "primed or literal")
      ->check(CLI::IsMember({"primed", "literal"}));
}

inline std::optional<SpecPreemption> variant_of(const std::string& name) {
  if (name == "primed") return SpecPreemption::Primed;
  if (name == "literal") return SpecPreemption::Literal;
  return std::nullopt;
}

inline int run_query(const QueryOptions& q, bool oracle, std::ostream& out, std::ostream& err) {
  std::optional<EventNetwork> net;
  if (int code = load_kb(q.kb, variant_of(q.spec_preemption), net, err)) return code;
  std::vector<Observation> obs;
  if (int code = load_observations(q.obs, obs, err)) return code;
  RankedResult result;
  try {
    result = oracle ? enumerate_explanations(*net, obs, q.params) : explain(*net, obs, q.params);
  } catch (const Error& e) {
    err << e.what() << "\n";
    return kUsage;
  }
  if (q.format == "text") {
    out << render_text(result);
  } else if (q.format == "dot") {
    out << render_dot(result);
  } else {
    out << to_json_string(result_json(result, q.params)) << "\n";
  }
  return result.explanations.empty() ? kNoExplanation : kOk;
}

inline int run_paths(const std::string& kb, const std::string& type, const std::string& variant, std::ostream& out,
                     std::ostream& err) {
  std::optional<EventNetwork> net;
  if (int code = load_kb(kb, variant_of(variant), net, err)) return code;
  if (!net->has_type(type)) {
    err << "unknown type: " << type << "\n";
    return kUsage;
  }
  for (const auto& p : net->feature_paths(type)) {
    out << type << " via " << p.link.via << " -" << p.link.feature << "-> " << p.link.target;
    if (p.preempted) {
      out << " preempted by " << p.preemptor->via << " -" << p.preemptor->feature << "-> " << p.preemptor->target;
    } else {
      out << " kept";
    }
    out << "\n";
  }
  return kOk;
}

}  // namespace detail

// Runs one invocation; `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"evnet: abductive explanation over event networks"};
  app.require_subcommand(1);

  std::string validate_kb;
  auto* validate = app.add_subcommand("validate", "check a knowledge base");
  validate->add_option("--kb", validate_kb, "knowledge base file")->required();

  detail::QueryOptions explain_q;
  auto* explain_cmd = app.add_subcommand("explain", "most probable explanations");
  detail::add_query_options(explain_cmd, explain_q);

  detail::QueryOptions enum_q;
  enum_q.params.top_k = 999;
  enum_q.params.max_nodes = 8;
  auto* enumerate_cmd = app.add_subcommand("enumerate", "exhaustive enumeration within bounds");
  detail::add_query_options(enumerate_cmd, enum_q);

  std::string paths_kb, paths_type, paths_variant;
  auto* paths = app.add_subcommand("paths", "inherited feature paths and preemption verdicts");
  paths->add_option("--kb", paths_kb, "knowledge base file")->required();
  paths->add_option("--type", paths_type, "type name")->required();
  paths->add_option("--spec-preemption", paths_variant, "primed or literal")
      ->check(CLI::IsMember({"primed", "literal"}));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kOk;
    }
    err << e.what() << "\n";
    return kUsage;
  }

  if (validate->parsed()) {
    std::optional<EventNetwork> net;
    int code = detail::load_kb(validate_kb, std::nullopt, net, err);
    if (code == kOk) out << "ok\n";
    return code;
  }
  if (explain_cmd->parsed()) return detail::run_query(explain_q, false, out, err);
  if (enumerate_cmd->parsed()) return detail::run_query(enum_q, true, out, err);
  return detail::run_paths(paths_kb, paths_type, paths_variant, out, err);
}

}  // namespace evnet::cli
