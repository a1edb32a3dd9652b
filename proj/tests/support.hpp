#pragma once
// Shared helpers for unit, property and acceptance tests.

#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "evnet/kbdsl.hpp"
#include "evnet/network.hpp"
#include "evnet/scenario.hpp"
#include "evnet/search.hpp"

namespace evtest {

using namespace evnet;

inline std::string corpus_path(const std::string& name) { return std::string(EVNET_CORPUS_DIR) + "/" + name; }

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline EventNetwork kb_from_text(const std::string& text) {
  auto r = parse_kb(text);
  if (!r.ok()) {
    std::string msg;
    for (const auto& d : r.diagnostics) msg += format_diagnostic(d, "kb") + "\n";
    throw std::runtime_error(msg);
  }
  return std::move(*r.network);
}

inline EventNetwork corpus_kb(const std::string& name) { return kb_from_text(slurp(corpus_path(name))); }

inline std::vector<Observation> obs_from_text(const std::string& text) {
  auto r = parse_observations(text);
  if (!r.ok()) throw std::runtime_error("bad observations");
  return r.observations;
}

inline std::vector<Observation> corpus_obs(const std::string& name) { return obs_from_text(slurp(corpus_path(name))); }

// ---------------------------------------------------------------------------
// Random networks: at most 8 types, 10 feature links, 2 statistics per edge.

struct RandomCase {
  EventNetwork net;
  std::vector<Observation> observations;
};

class Generator {
 public:
  explicit Generator(std::uint32_t seed) : rng_(seed) {}

  std::mt19937& rng() { return rng_; }

  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool chance(double p) { return std::bernoulli_distribution(p)(rng_); }

  template <class T>
  const T& any(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(pick(0, static_cast<int>(v.size()) - 1))];
  }

  Bindings bindings(double density) {
    Bindings b;
    for (const auto& a : attrs_)
      if (chance(density)) b[a] = any(values_);
    return b;
  }

  NetworkSpec spec(int max_types = 8, int max_links = 10) {
    NetworkSpec s;
    const int n = pick(3, max_types);
    std::vector<std::string> names;
    for (int i = 0; i < n; ++i) names.push_back("t" + std::to_string(i));
    for (int i = 0; i < n; ++i) {
      TypeDecl t{names[i], {}, false};
      if (i > 0 && chance(0.4)) t.parents.push_back(names[pick(0, i - 1)]);
      if (i > 1 && chance(0.1)) {
        auto p = names[pick(0, i - 1)];
        if (std::find(t.parents.begin(), t.parents.end(), p) == t.parents.end()) t.parents.push_back(p);
      }
      s.types.push_back(t);
    }
    const std::vector<std::string> labels{"f", "g", "h"};
    const int links = pick(1, max_links);
    for (int i = 0; i < links; ++i) s.features.push_back({any(labels), any(names), any(names)});
    drop_invalid_features(s);

    for (int i = pick(0, 2); i > 0; --i) {
      Relation rel = static_cast<Relation>(pick(0, 3));
      LocalConstraint c{any(names), rel, any(attrs_), ""};
      c.other = (rel == Relation::AttrEqAttr || rel == Relation::AttrNeqAttr) ? other_attr(c.attr) : any(values_);
      s.local_constraints.push_back(c);
    }
    for (const auto& f : s.features)
      if (chance(0.5)) s.percolation_constraints.push_back({f.source, f.label, "", any(attrs_), any(attrs_)});

    std::vector<std::string> culprits;
    for (const auto& t : names)
      if (chance(0.35)) culprits.push_back(t);
    if (culprits.empty()) culprits.push_back(names[0]);
    for (const auto& c : culprits) {
      s.culprits.push_back(c);
      s.statistics.push_back(PriorStat{{c, {}}, probability()});
      if (chance(0.3)) s.statistics.push_back(PriorStat{{c, one_binding()}, probability()});
    }
    for (const auto& f : s.features) {
      if (chance(0.1)) continue;  // occasionally missing
      s.statistics.push_back(FeatureCondStat{{f.source, {}}, f.label, {f.target, {}}, probability()});
      if (chance(0.3)) s.statistics.push_back(FeatureCondStat{{f.source, {}}, f.label, {f.target, one_binding()}, probability()});
    }
    for (const auto& t : s.types)
      for (const auto& p : t.parents)
        if (chance(0.7)) s.statistics.push_back(SpecCondStat{p, t.name, probability()});
    return s;
  }

  std::vector<Observation> observations(const NetworkSpec& s, int max_obs = 3) {
    std::vector<Observation> out;
    const int m = pick(1, max_obs);
    for (int i = 0; i < m; ++i) {
      // prefer feature targets so most cases have explanations
      TypeName t = chance(0.8) && !s.features.empty() ? any(s.features).target : any(s.types).name;
      out.push_back({"o" + std::to_string(i + 1), {t, bindings(0.25)}});
    }
    return out;
  }

  RandomCase random_case(int max_types = 8, int max_links = 10, int max_obs = 3) {
    while (true) {
      auto s = spec(max_types, max_links);
      if (!validate_network(s).ok()) continue;
      auto obs = observations(s, max_obs);
      return {EventNetwork::build(std::move(s)), std::move(obs)};
    }
  }

  // A random scenario grown by legal extensions, with random bindings.
  Scenario random_scenario(const EventNetwork& net, int max_nodes) {
    const auto roots = std::vector<TypeName>(net.culprits().begin(), net.culprits().end());
    Scenario s = new_scenario(net, {any(roots), bindings(0.3)});
    for (int step = 0; step < 3 * max_nodes && static_cast<int>(node_count(s)) < max_nodes; ++step) {
      auto flat = flatten(s);
      std::size_t i = static_cast<std::size_t>(pick(0, static_cast<int>(flat.size()) - 1));
      const auto& n = *flat[i].node;
      try {
        if (chance(0.3)) {
          auto desc = net.isa_descendants(n.desc.type);
          std::vector<TypeName> strict;
          for (const auto& d : desc)
            if (net.strict_isa(d, n.desc.type)) strict.push_back(d);
          if (strict.empty()) continue;
          s = extend_with_spec(net, s, node_id(i), any(strict));
        } else {
          const auto& links = net.legal_feature_links(n.desc.type);
          if (links.empty()) continue;
          const auto& l = any(links);
          s = extend_with_feature(net, s, node_id(i), l.feature, {l.target, bindings(0.3)});
        }
      } catch (const Error&) {
        // illegal choice for this node; try another
      }
    }
    return s;
  }

 private:
  double probability() {
    static const std::vector<double> ps{0.1, 0.2, 0.25, 0.3, 0.5, 0.6, 0.75, 0.8, 0.9, 1.0};
    return any(ps);
  }

  Bindings one_binding() { return {{any(attrs_), any(values_)}}; }

  AttrName other_attr(const AttrName& a) {
    for (const auto& b : attrs_)
      if (b != a) return b;
    return a;
  }

  // Keeps only declarations that the validator accepts in sequence.
  static void drop_invalid_features(NetworkSpec& s) {
    std::vector<FeatureDecl> kept;
    for (const auto& f : s.features) {
      NetworkSpec trial;
      trial.types = s.types;
      trial.features = kept;
      trial.features.push_back(f);
      if (validate_network(trial).ok()) kept.push_back(f);
    }
    s.features = kept;
  }

  std::mt19937 rng_;
  std::vector<AttrName> attrs_{"a", "b"};
  std::vector<Const> values_{"x", "y"};
};

}  // namespace evtest
