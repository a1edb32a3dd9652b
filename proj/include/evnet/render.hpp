#pragma once
// Text, Graphviz dot and JSON renderings of scenarios and ranked results.

#include <cstdio>
#include <string>
#include <vector>

#include "json.hpp"

#include "evnet/scenario.hpp"
#include "evnet/search.hpp"

namespace evnet {

using Json = nlohmann::json;

namespace detail {

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_json(const Json& j, std::string& out) {
  switch (j.type()) {
    case Json::value_t::object: {
      out += '{';
      bool first = true;
      for (const auto& [k, v] : j.items()) {  // std::map backed: keys sorted
        if (!first) out += ',';
        first = false;
        out += Json(k).dump();
        out += ':';
        write_json(v, out);
      }
      out += '}';
      break;
    }
    case Json::value_t::array: {
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ',';
        write_json(j[i], out);
      }
      out += ']';
      break;
    }
    case Json::value_t::number_float:
      out += format_number(j.get<double>());
      break;
    default:
      out += j.dump();
  }
}

inline std::string describe_bindings(const Bindings& b) {
  std::string out = "{";
  bool first = true;
  for (const auto& [a, v] : b) {
    if (!first) out += ",";
    first = false;
    out += a + "=" + dsl::format_const(v);
  }
  return out + "}";
}

inline std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace detail

// Compact JSON with sorted keys and 17-significant-digit numbers.
inline std::string to_json_string(const Json& j) {
  std::string out;
  detail::write_json(j, out);
  return out;
}

inline Json node_json(const ScenarioNode& n, std::size_t& counter) {
  Json j;
  j["id"] = node_id(counter++);
  j["type"] = n.desc.type;
  j["attrs"] = Json::object();
  for (const auto& [a, v] : n.desc.bindings) j["attrs"][a] = v;
  j["children"] = Json::array();
  for (const auto& e : n.children) {
    Json edge;
    edge["via"] = e.kind == EdgeKind::Spec ? "spec" : "feature";
    if (e.kind == EdgeKind::Feature) edge["label"] = e.label;
    edge["node"] = node_json(e.node, counter);
    j["children"].push_back(std::move(edge));
  }
  return j;
}

inline Json scenario_json(const Scenario& s, std::size_t first_id = 0) {
  std::size_t counter = first_id;
  return node_json(s.root, counter);
}

inline Json explanation_json(const Explanation& ex) {
  Json j;
  j["probability"] = ex.probability;
  j["log10_probability"] = ex.log10_probability;
  j["node_count"] = ex.node_count();
  j["root"] = scenario_json(ex.members.front());
  if (ex.members.size() > 1) {
    j["forest"] = Json::array();
    std::size_t offset = 0;
    for (const auto& m : ex.members) {
      j["forest"].push_back(scenario_json(m, offset));
      offset += node_count(m);
    }
  }
  j["factors"] = Json::array();
  for (const auto& f : ex.factors)
    j["factors"].push_back({{"kind", std::string(to_string(f.kind))}, {"at", f.at}, {"p", f.p}, {"assumed", f.assumed}});
  j["coverage"] = Json::object();
  for (const auto& [obs, node] : ex.coverage) j["coverage"][obs] = node;
  return j;
}

inline Json params_json(const SearchParams& p) {
  return {{"top_k", p.top_k},           {"max_nodes", p.max_nodes},       {"min_prob", p.min_prob},
          {"assume_one", p.assume_one}, {"allow_forest", p.allow_forest}};
}

inline Json result_json(const RankedResult& r, const SearchParams& params) {
  Json j;
  j["explanations"] = Json::array();
  for (const auto& ex : r.explanations) j["explanations"].push_back(explanation_json(ex));
  j["exhausted"] = r.exhausted;
  j["params"] = params_json(params);
  return j;
}

// ---------------------------------------------------------------------------
// Text

namespace detail {

inline void text_node(const ScenarioNode& n, std::size_t& counter, int depth, const std::string& edge,
                      std::string& out) {
  out += std::string(2 * depth, ' ');
  if (!edge.empty()) out += edge + " ";
  out += node_id(counter++) + " " + n.desc.type + " " + describe_bindings(n.desc.bindings) + "\n";
  for (const auto& e : n.children)
    text_node(e.node, counter, depth + 1, e.kind == EdgeKind::Spec ? "=spec=>" : "-" + e.label + "->", out);
}

}  // namespace detail

inline std::string render_text(const Scenario& s, std::size_t first_id = 0) {
  std::string out;
  std::size_t counter = first_id;
  detail::text_node(s.root, counter, 0, "", out);
  return out;
}

inline std::string render_text(const Explanation& ex) {
  std::string out = "probability " + detail::format_number(ex.probability) + " (log10 " +
                    detail::format_number(ex.log10_probability) + "), " + std::to_string(ex.node_count()) +
                    " nodes\n";
  std::size_t offset = 0;
  for (const auto& m : ex.members) {
    out += render_text(m, offset);
    offset += node_count(m);
  }
  out += "factors:";
  for (const auto& f : ex.factors) {
    out += " " + std::string(to_string(f.kind)) + "@" + f.at + "=" + detail::format_number(f.p);
    if (f.assumed) out += "(assumed)";
  }
  out += "\ncoverage:";
  for (const auto& [obs, node] : ex.coverage) out += " " + obs + "->" + node;
  return out + "\n";
}

inline std::string render_text(const RankedResult& r) {
  std::string out;
  for (std::size_t i = 0; i < r.explanations.size(); ++i)
    out += "#" + std::to_string(i + 1) + " " + render_text(r.explanations[i]);
  if (r.explanations.empty()) out += "no explanation\n";
  out += std::string("exhausted: ") + (r.exhausted ? "true" : "false") + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Graphviz

namespace detail {

inline void dot_node(const ScenarioNode& n, std::size_t& counter, std::string& out) {
  std::string id = node_id(counter++);
  out += "  " + id + " [label=\"" + dot_escape(n.desc.type) + "\\n" + dot_escape(describe_bindings(n.desc.bindings)) +
         "\"];\n";
  for (const auto& e : n.children) {
    out += "  " + id + " -> " + node_id(counter) + " [label=\"" +
           dot_escape(e.kind == EdgeKind::Spec ? std::string("spec") : e.label) + "\"];\n";
    dot_node(e.node, counter, out);
  }
}

}  // namespace detail

inline std::string render_dot(const std::vector<Scenario>& members, const std::string& name = "scenario") {
  std::string out = "digraph " + name + " {\n";
  std::size_t counter = 0;
  for (const auto& m : members) detail::dot_node(m.root, counter, out);
  return out + "}\n";
}

inline std::string render_dot(const Scenario& s, const std::string& name = "scenario") {
  return render_dot(std::vector<Scenario>{s}, name);
}

inline std::string render_dot(const RankedResult& r) {
  std::string out;
  for (std::size_t i = 0; i < r.explanations.size(); ++i)
    out += render_dot(r.explanations[i].members, "explanation" + std::to_string(i + 1));
  return out;
}

}  // namespace evnet
