#pragma once
// Line-oriented knowledge-base and observation language.
//
//   type NAME [isa NAME (, NAME)*]
//   feature NAME : NAME -> NAME
//   constraint NAME : ATTR (= | !=) (ATTR | CONST)
//   percolate NAME . FEATURE : CHILDATTR => PARENTATTR
//   prior NAME [BINDINGS] = P
//   cond NAME [BINDINGS] -FEATURE-> NAME [BINDINGS] = P
//   speccond NAME => NAME = P
//   culprit NAME
//   obs [LABEL] NAME [BINDINGS]
//
// BINDINGS := { ATTR = CONST (, ATTR = CONST)* }. `#` starts a comment.
// Constants are opaque: "1" and 1 are the same atom, 01 and 1 are not.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "evnet/network.hpp"
#include "evnet/types.hpp"

namespace evnet {

struct SourceSpan {
  int line = 1;    // 1-based
  int column = 1;  // 1-based

  friend bool operator==(const SourceSpan&, const SourceSpan&) = default;
};

enum class DiagnosticKind { Syntax, Invalid };

struct Diagnostic {
  SourceSpan span;
  std::string message;
  DiagnosticKind kind = DiagnosticKind::Syntax;
};

inline std::string format_diagnostic(const Diagnostic& d, std::string_view file = {}) {
  std::ostringstream os;
  if (!file.empty()) os << file << ":";
  os << d.span.line << ":" << d.span.column << ": "
     << (d.kind == DiagnosticKind::Syntax ? "syntax error: " : "invalid: ") << d.message;
  return os.str();
}

struct Observation {
  std::string id;
  EventDescription desc;

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct KbParseResult {
  std::optional<EventNetwork> network;
  NetworkSpec spec;
  std::vector<Diagnostic> diagnostics;

  bool ok() const { return network.has_value(); }
  bool has_syntax_errors() const {
    return std::any_of(diagnostics.begin(), diagnostics.end(),
                       [](const Diagnostic& d) { return d.kind == DiagnosticKind::Syntax; });
  }
};

struct ObservationParseResult {
  std::vector<Observation> observations;
  std::vector<Diagnostic> diagnostics;

  bool ok() const { return diagnostics.empty(); }
};

namespace dsl {

enum class Tok { Word, Quoted, Punct, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  int column = 1;
};

inline bool word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

struct LexError {
  int column;
  std::string message;
};

// Splits one line into tokens. `-` and `.` join a word only when they cannot
// start an arrow or separate a percolation target.
inline std::vector<Token> lex_line(std::string_view line, std::optional<LexError>& error) {
  std::vector<Token> out;
  std::size_t i = 0;
  const std::size_t n = line.size();
  std::size_t end_col = n + 1;
  while (i < n) {
    char c = line[i];
    if (c == '#') {
      end_col = i + 1;
      break;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    int col = static_cast<int>(i) + 1;
    if (word_char(c)) {
      std::size_t j = i;
      while (j < n) {
        char d = line[j];
        if (word_char(d)) {
          ++j;
        } else if (d == '-' && j + 1 < n && line[j + 1] != '>' && j > i) {
          ++j;
        } else if (d == '.' && j > i && j + 1 < n && std::isdigit(static_cast<unsigned char>(line[j - 1])) &&
                   std::isdigit(static_cast<unsigned char>(line[j + 1]))) {
          ++j;
        } else {
          break;
        }
      }
      // a word never ends in '-'
      while (j > i + 1 && line[j - 1] == '-') --j;
      out.push_back({Tok::Word, std::string(line.substr(i, j - i)), col});
      i = j;
      continue;
    }
    if (c == '"') {
      std::string text;
      std::size_t j = i + 1;
      bool closed = false;
      while (j < n) {
        if (line[j] == '\\' && j + 1 < n) {
          text += line[j + 1];
          j += 2;
        } else if (line[j] == '"') {
          closed = true;
          ++j;
          break;
        } else {
          text += line[j++];
        }
      }
      if (!closed) {
        error = LexError{col, "unterminated string"};
        return out;
      }
      out.push_back({Tok::Quoted, std::move(text), col});
      i = j;
      continue;
    }
    auto two = line.substr(i, 2);
    if (two == "->" || two == "=>" || two == "!=") {
      out.push_back({Tok::Punct, std::string(two), col});
      i += 2;
      continue;
    }
    if (std::string_view(":=,{}.-").find(c) != std::string_view::npos) {
      out.push_back({Tok::Punct, std::string(1, c), col});
      ++i;
      continue;
    }
    error = LexError{col, std::string("unexpected character '") + c + "'"};
    return out;
  }
  out.push_back({Tok::End, "", static_cast<int>(end_col)});
  return out;
}

struct SyntaxError {
  int column;
  std::string message;
};

// Cursor over one line's tokens; every expect_* throws SyntaxError.
class LineParser {
 public:
  explicit LineParser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  bool at_end() const { return peek().kind == Tok::End; }
  bool at_punct(std::string_view p) const { return peek().kind == Tok::Punct && peek().text == p; }
  bool at_word(std::string_view w) const { return peek().kind == Tok::Word && peek().text == w; }

  Token next() {
    Token t = peek();
    if (pos_ < toks_.size() - 1) ++pos_;
    return t;
  }

  [[noreturn]] void fail(const std::string& message) const { throw SyntaxError{peek().column, message}; }

  std::string expect_name(std::string_view what) {
    if (peek().kind != Tok::Word) fail("expected " + std::string(what) + describe_found());
    return next().text;
  }

  // Constants accept quoted strings as well as bare words.
  std::string expect_const(std::string_view what) {
    if (peek().kind != Tok::Word && peek().kind != Tok::Quoted) fail("expected " + std::string(what) + describe_found());
    return next().text;
  }

  void expect_punct(std::string_view p) {
    if (!at_punct(p)) fail("expected '" + std::string(p) + "'" + describe_found());
    next();
  }

  void expect_end() {
    if (!at_end()) fail("unexpected '" + peek().text + "' after declaration");
  }

  double expect_probability() {
    if (peek().kind != Tok::Word) fail("expected probability" + describe_found());
    const Token t = peek();
    const std::string& s = t.text;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    bool numeric = !s.empty() && (std::isdigit(static_cast<unsigned char>(s[0])));
    if (ec != std::errc() || ptr != s.data() + s.size() || !numeric)
      fail("expected probability, found '" + s + "'");
    next();
    return value;
  }

  // Optional `{ a = v, ... }` block.
  Bindings maybe_bindings() {
    Bindings out;
    if (!at_punct("{")) return out;
    next();
    if (at_punct("}")) {
      next();
      return out;
    }
    while (true) {
      int col = peek().column;
      std::string attr = expect_name("attribute name");
      expect_punct("=");
      std::string value = expect_const("constant");
      if (!out.emplace(attr, value).second) throw SyntaxError{col, "duplicate binding for attribute " + attr};
      if (at_punct(",")) {
        next();
        continue;
      }
      expect_punct("}");
      return out;
    }
  }

 private:
  std::string describe_found() const {
    if (peek().kind == Tok::End) return ", found end of line";
    return ", found '" + peek().text + "'";
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      if (start < text.size()) lines.push_back(text.substr(start));
      break;
    }
    auto line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  return lines;
}

// True when `s` re-lexes as exactly one bare word.
inline bool is_bare_word(std::string_view s) {
  if (s.empty()) return false;
  std::optional<LexError> err;
  auto toks = lex_line(s, err);
  return !err && toks.size() == 2 && toks[0].kind == Tok::Word && toks[0].text == s;
}

inline std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string format_const(std::string_view s) { return is_bare_word(s) ? std::string(s) : quote(s); }

inline std::string format_probability(double p) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, p);
  (void)ec;
  return std::string(buf, ptr);
}

inline std::string format_bindings(const Bindings& b) {
  if (b.empty()) return "";
  std::string out = " { ";
  bool first = true;
  for (const auto& [attr, value] : b) {
    if (!first) out += ", ";
    first = false;
    out += attr + " = " + format_const(value);
  }
  return out + " }";
}

}  // namespace dsl

// Parses a knowledge base. Syntax errors leave `network` empty with
// Syntax diagnostics; well-formed text that fails validation yields Invalid
// diagnostics spanning the offending declaration.
inline KbParseResult parse_kb(std::string_view text) {
  using namespace dsl;
  KbParseResult result;
  NetworkSpec& spec = result.spec;

  struct PendingConstraint {
    LocalConstraint decl;
    bool rhs_quoted;
  };
  std::vector<PendingConstraint> pending;
  std::vector<SourceSpan> type_spans, feature_spans, constraint_spans, percolate_spans, stat_spans, culprit_spans;

  auto lines = split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const int line_no = static_cast<int>(ln) + 1;
    std::optional<LexError> lex_error;
    auto toks = lex_line(lines[ln], lex_error);
    if (lex_error) {
      result.diagnostics.push_back({{line_no, lex_error->column}, lex_error->message, DiagnosticKind::Syntax});
      continue;
    }
    if (toks.front().kind == Tok::End) continue;
    SourceSpan at{line_no, toks.front().column};
    LineParser p(std::move(toks));
    try {
      std::string keyword = p.expect_name("declaration keyword");
      if (keyword == "type") {
        TypeDecl decl;
        decl.name = p.expect_name("type name");
        if (p.at_word("isa")) {
          p.next();
          decl.parents.push_back(p.expect_name("parent type name"));
          while (p.at_punct(",")) {
            p.next();
            decl.parents.push_back(p.expect_name("parent type name"));
          }
        }
        p.expect_end();
        spec.types.push_back(std::move(decl));
        type_spans.push_back(at);
      } else if (keyword == "feature") {
        FeatureDecl decl;
        decl.label = p.expect_name("feature name");
        p.expect_punct(":");
        decl.source = p.expect_name("source type name");
        p.expect_punct("->");
        decl.target = p.expect_name("target type name");
        p.expect_end();
        spec.features.push_back(std::move(decl));
        feature_spans.push_back(at);
      } else if (keyword == "constraint") {
        LocalConstraint decl;
        decl.owner = p.expect_name("type name");
        p.expect_punct(":");
        decl.attr = p.expect_name("attribute name");
        bool eq;
        if (p.at_punct("=")) {
          eq = true;
        } else if (p.at_punct("!=")) {
          eq = false;
        } else {
          p.fail("expected '=' or '!='");
        }
        p.next();
        bool quoted = p.peek().kind == Tok::Quoted;
        decl.other = p.expect_const("attribute or constant");
        p.expect_end();
        decl.relation = eq ? Relation::AttrEqConst : Relation::AttrNeqConst;
        pending.push_back({std::move(decl), quoted});
        constraint_spans.push_back(at);
      } else if (keyword == "percolate") {
        PercolationConstraint decl;
        decl.parent_type = p.expect_name("type name");
        p.expect_punct(".");
        decl.feature = p.expect_name("feature name");
        p.expect_punct(":");
        decl.child_attr = p.expect_name("child attribute");
        p.expect_punct("=>");
        decl.parent_attr = p.expect_name("parent attribute");
        p.expect_end();
        spec.percolation_constraints.push_back(std::move(decl));
        percolate_spans.push_back(at);
      } else if (keyword == "prior") {
        PriorStat s;
        s.desc.type = p.expect_name("type name");
        s.desc.bindings = p.maybe_bindings();
        p.expect_punct("=");
        s.p = p.expect_probability();
        p.expect_end();
        spec.statistics.emplace_back(std::move(s));
        stat_spans.push_back(at);
      } else if (keyword == "cond") {
        FeatureCondStat s;
        s.parent.type = p.expect_name("type name");
        s.parent.bindings = p.maybe_bindings();
        p.expect_punct("-");
        s.feature = p.expect_name("feature name");
        p.expect_punct("->");
        s.child.type = p.expect_name("type name");
        s.child.bindings = p.maybe_bindings();
        p.expect_punct("=");
        s.p = p.expect_probability();
        p.expect_end();
        spec.statistics.emplace_back(std::move(s));
        stat_spans.push_back(at);
      } else if (keyword == "speccond") {
        SpecCondStat s;
        s.general = p.expect_name("type name");
        p.expect_punct("=>");
        s.specific = p.expect_name("type name");
        p.expect_punct("=");
        s.p = p.expect_probability();
        p.expect_end();
        spec.statistics.emplace_back(std::move(s));
        stat_spans.push_back(at);
      } else if (keyword == "culprit") {
        spec.culprits.push_back(p.expect_name("type name"));
        p.expect_end();
        culprit_spans.push_back(at);
      } else {
        throw SyntaxError{at.column, "unknown declaration '" + keyword + "'"};
      }
    } catch (const SyntaxError& e) {
      result.diagnostics.push_back({{line_no, e.column}, e.message, DiagnosticKind::Syntax});
    }
  }
  if (result.has_syntax_errors()) return result;

  // Attribute names are declared by use; a bare constraint RHS naming one of
  // them is an attribute, anything else is a constant.
  std::set<AttrName> attrs;
  for (const auto& c : pending) attrs.insert(c.decl.attr);
  for (const auto& pc : spec.percolation_constraints) {
    attrs.insert(pc.child_attr);
    attrs.insert(pc.parent_attr);
  }
  for (const auto& s : spec.statistics) {
    auto add = [&](const Bindings& b) {
      for (const auto& kv : b) attrs.insert(kv.first);
    };
    if (auto* prior = std::get_if<PriorStat>(&s)) add(prior->desc.bindings);
    if (auto* fc = std::get_if<FeatureCondStat>(&s)) {
      add(fc->parent.bindings);
      add(fc->child.bindings);
    }
  }
  for (auto& c : pending) {
    if (!c.rhs_quoted && attrs.count(c.decl.other))
      c.decl.relation = c.decl.relation == Relation::AttrEqConst ? Relation::AttrEqAttr : Relation::AttrNeqAttr;
    spec.local_constraints.push_back(std::move(c.decl));
  }

  auto report = validate_network(spec);
  if (!report.ok()) {
    for (const auto& issue : report.issues) {
      const std::vector<SourceSpan>* spans = nullptr;
      switch (issue.kind) {
        case DeclKind::Type: spans = &type_spans; break;
        case DeclKind::Feature: spans = &feature_spans; break;
        case DeclKind::Constraint: spans = &constraint_spans; break;
        case DeclKind::Percolation: spans = &percolate_spans; break;
        case DeclKind::Statistic: spans = &stat_spans; break;
        case DeclKind::Culprit: spans = &culprit_spans; break;
      }
      SourceSpan span = issue.index < spans->size() ? (*spans)[issue.index] : SourceSpan{};
      result.diagnostics.push_back({span, issue.message, DiagnosticKind::Invalid});
    }
    return result;
  }
  result.network = EventNetwork::build(spec);
  return result;
}

inline ObservationParseResult parse_observations(std::string_view text) {
  using namespace dsl;
  ObservationParseResult result;
  std::set<std::string> labels;
  auto lines = split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const int line_no = static_cast<int>(ln) + 1;
    std::optional<LexError> lex_error;
    auto toks = lex_line(lines[ln], lex_error);
    if (lex_error) {
      result.diagnostics.push_back({{line_no, lex_error->column}, lex_error->message, DiagnosticKind::Syntax});
      continue;
    }
    if (toks.front().kind == Tok::End) continue;
    LineParser p(std::move(toks));
    try {
      if (!p.at_word("obs")) p.fail("expected 'obs'");
      p.next();
      Observation o;
      int label_col = p.peek().column;
      std::string first = p.expect_name("type name");
      if (p.peek().kind == Tok::Word) {
        o.id = first;
        o.desc.type = p.next().text;
      } else {
        o.desc.type = first;
        o.id = "obs" + std::to_string(result.observations.size() + 1);
      }
      o.desc.bindings = p.maybe_bindings();
      p.expect_end();
      if (!labels.insert(o.id).second) throw SyntaxError{label_col, "duplicate observation label " + o.id};
      result.observations.push_back(std::move(o));
    } catch (const SyntaxError& e) {
      result.diagnostics.push_back({{line_no, e.column}, e.message, DiagnosticKind::Syntax});
    }
  }
  return result;
}

// Canonical text: declarations grouped by kind, sorted within each kind.
inline std::string serialize_kb(const EventNetwork& net) {
  using namespace dsl;
  NetworkSpec spec = EventNetwork::canonical(net.spec());

  std::set<AttrName> attrs;
  for (const auto& c : spec.local_constraints) attrs.insert(c.attr);
  for (const auto& pc : spec.percolation_constraints) {
    attrs.insert(pc.child_attr);
    attrs.insert(pc.parent_attr);
  }
  for (const auto& s : spec.statistics) {
    auto add = [&](const Bindings& b) {
      for (const auto& kv : b) attrs.insert(kv.first);
    };
    if (auto* prior = std::get_if<PriorStat>(&s)) add(prior->desc.bindings);
    if (auto* fc = std::get_if<FeatureCondStat>(&s)) {
      add(fc->parent.bindings);
      add(fc->child.bindings);
    }
  }

  std::vector<std::vector<std::string>> groups(8);
  for (const auto& t : spec.types) {
    std::string line = "type " + t.name;
    if (!t.parents.empty()) line += " isa " + detail::join(t.parents, ", ");
    groups[0].push_back(line);
    if (t.is_culprit) groups[7].push_back("culprit " + t.name);
  }
  for (const auto& f : spec.features) groups[1].push_back("feature " + f.label + " : " + f.source + " -> " + f.target);
  for (const auto& c : spec.local_constraints) {
    std::string rhs = c.against_attr() ? c.other
                                       : (attrs.count(c.other) ? quote(c.other) : format_const(c.other));
    groups[2].push_back("constraint " + c.owner + " : " + c.attr + (c.is_equality() ? " = " : " != ") + rhs);
  }
  for (const auto& pc : spec.percolation_constraints)
    groups[3].push_back("percolate " + pc.parent_type + "." + pc.feature + " : " + pc.child_attr + " => " +
                        pc.parent_attr);
  for (const auto& s : spec.statistics) {
    if (auto* prior = std::get_if<PriorStat>(&s)) {
      groups[4].push_back("prior " + prior->desc.type + format_bindings(prior->desc.bindings) + " = " +
                          format_probability(prior->p));
    } else if (auto* fc = std::get_if<FeatureCondStat>(&s)) {
      groups[5].push_back("cond " + fc->parent.type + format_bindings(fc->parent.bindings) + " -" + fc->feature +
                          "-> " + fc->child.type + format_bindings(fc->child.bindings) + " = " +
                          format_probability(fc->p));
    } else {
      const auto& sc = std::get<SpecCondStat>(s);
      groups[6].push_back("speccond " + sc.general + " => " + sc.specific + " = " + format_probability(sc.p));
    }
  }
  std::string out;
  for (auto& g : groups) {
    std::sort(g.begin(), g.end());
    for (const auto& line : g) out += line + "\n";
  }
  return out;
}

inline std::string serialize_observations(const std::vector<Observation>& observations) {
  std::string out;
  for (const auto& o : observations)
    out += "obs " + o.id + " " + o.desc.type + dsl::format_bindings(o.desc.bindings) + "\n";
  return out;
}

}  // namespace evnet
