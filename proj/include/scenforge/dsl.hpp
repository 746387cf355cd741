// Copyright 2026 The Scenforge Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SCENFORGE_DSL_HPP
#define SCENFORGE_DSL_HPP

// Four-section probabilistic scenario language. A scene script is made of a
// fixed header plus three retrievable snippets: adversarial behavior, road
// geometry, and the adversary's spawn position relative to the ego. The
// surface grammar is documented in docs/grammar.md; snippets parse to an
// immutable AST and serialize back to a canonical text form (4-space
// indentation, single spaces after commas).

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "scenforge/text.hpp"

namespace scenforge::dsl {

enum class ComponentKind { Behavior, Geometry, SpawnPosition };

inline const char* to_string(ComponentKind k) {
  switch (k) {
    case ComponentKind::Behavior: return "behavior";
    case ComponentKind::Geometry: return "geometry";
    case ComponentKind::SpawnPosition: return "spawn";
  }
  return "?";
}

inline std::optional<ComponentKind> component_from_string(std::string_view s) {
  if (s == "behavior") return ComponentKind::Behavior;
  if (s == "geometry") return ComponentKind::Geometry;
  if (s == "spawn") return ComponentKind::SpawnPosition;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Errors. Parse failures throw; validation findings are returned as data.

class DslError : public std::runtime_error {
 public:
  DslError(int line, int col, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line) + ", col " +
                           std::to_string(col) + ": " + msg),
        line_(line),
        col_(col) {}
  int line() const { return line_; }
  int col() const { return col_; }

 private:
  int line_;
  int col_;
};

class SyntaxError : public DslError {
 public:
  using DslError::DslError;
};

class UnknownPrimitiveError : public DslError {
 public:
  UnknownPrimitiveError(int line, int col, const std::string& name)
      : DslError(line, col, "unknown primitive '" + name + "'"), name_(name) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

class WrongComponentError : public DslError {
 public:
  WrongComponentError(int line, int col, const std::string& name,
                      ComponentKind expected)
      : DslError(line, col, "primitive '" + name + "' is not a " +
                                std::string(to_string(expected)) +
                                " primitive") {}
};

class AssembleError : public std::runtime_error {
 public:
  enum class Code { KindMismatch, ParamConflict, IncompatibleGeometry };
  AssembleError(Code code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

// ---------------------------------------------------------------------------
// AST

struct ParamSpec {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;

  friend bool operator==(const ParamSpec& a, const ParamSpec& b) {
    return a.name == b.name && a.lo == b.lo && a.hi == b.hi;
  }
};

struct Expr {
  enum class Kind { Number, Param, Ego, Self, BoolLit };
  Kind kind = Kind::Number;
  double number = 0.0;
  std::string param;  // set when kind == Param
  bool bval = false;

  static Expr make_number(double v) { return {Kind::Number, v, "", false}; }
  static Expr make_param(std::string name) { return {Kind::Param, 0.0, std::move(name), false}; }
  static Expr make_ego() { return {Kind::Ego, 0.0, "", false}; }
  static Expr make_self() { return {Kind::Self, 0.0, "", false}; }
  static Expr make_bool(bool b) { return {Kind::BoolLit, 0.0, "", b}; }
};

struct Predicate {
  enum class Kind { WithinDistanceToAnyCars, InSameLaneAsEgo, DistanceToEgoLaneLess };
  Kind kind = Kind::InSameLaneAsEgo;
  Expr arg;  // distance operand for the two parameterized predicates
};

struct Statement;

// A primitive invocation. Behavior snippets write it as `do Name(...)`,
// geometry and spawn snippets as a bare `Name(...)` line.
struct CallStmt {
  std::string primitive;
  std::vector<Expr> args;
};

struct SetSpeedStmt {
  Expr value;
};

struct TryInterruptStmt {
  std::vector<Statement> body;
  Predicate condition;
  std::vector<Statement> handler;
};

struct LoopStmt {
  std::vector<Statement> body;
};

struct ParamDeclStmt {
  ParamSpec spec;
};

struct Statement {
  std::variant<CallStmt, SetSpeedStmt, TryInterruptStmt, LoopStmt, ParamDeclStmt> node;
};

struct SnippetAst {
  ComponentKind kind = ComponentKind::Behavior;
  std::string behavior_name;        // behavior snippets only
  std::vector<Statement> statements;  // body; trailing param decls excluded
  std::vector<ParamSpec> params;      // declared, in declaration order
};

struct SceneScript {
  std::vector<std::string> header;
  SnippetAst behavior;
  SnippetAst geometry;
  SnippetAst spawn;
  std::vector<ParamSpec> params;  // merged declarations, declaration order
};

inline std::vector<std::string> fixed_header() {
  return {"map town01", "model scenforge.kinematic2d"};
}

// ---------------------------------------------------------------------------
// Built-in primitive tables

struct PrimitiveSig {
  ComponentKind kind;
  int arity;
};

inline const std::map<std::string, PrimitiveSig>& primitive_table() {
  static const std::map<std::string, PrimitiveSig> table = {
      {"CrossingBehavior", {ComponentKind::Behavior, 3}},
      {"FollowLaneBehavior", {ComponentKind::Behavior, 1}},
      {"LaneChangeBehavior", {ComponentKind::Behavior, 1}},
      {"StopBehavior", {ComponentKind::Behavior, 0}},
      {"AccelerateBehavior", {ComponentKind::Behavior, 2}},
      {"BrakeBehavior", {ComponentKind::Behavior, 1}},
      {"StraightRoad", {ComponentKind::Geometry, 1}},
      {"FourWayIntersection", {ComponentKind::Geometry, 1}},
      {"TIntersection", {ComponentKind::Geometry, 0}},
      {"Ahead", {ComponentKind::SpawnPosition, 1}},
      {"Behind", {ComponentKind::SpawnPosition, 1}},
      {"LeftFront", {ComponentKind::SpawnPosition, 1}},
      {"RightFront", {ComponentKind::SpawnPosition, 1}},
      {"OncomingLane", {ComponentKind::SpawnPosition, 1}},
      {"CrossingFromLeft", {ComponentKind::SpawnPosition, 1}},
      {"CrossingFromRight", {ComponentKind::SpawnPosition, 1}},
  };
  return table;
}

inline bool is_param_name(std::string_view s) {
  if (s.empty()) return false;
  if (s[0] < 'A' || s[0] > 'Z') return false;
  for (char c : s) {
    if (!((c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_')) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Parser

namespace detail {

struct Line {
  int number = 0;   // 1-based source line
  int indent = 0;   // leading spaces
  std::string body; // without indentation
};

class SnippetParser {
 public:
  SnippetParser(std::string_view text, ComponentKind kind) : kind_(kind) {
    int n = 0;
    for (const auto& raw : text::split_lines(text)) {
      ++n;
      std::string_view sv(raw);
      if (!sv.empty() && sv.back() == '\r') sv.remove_suffix(1);
      int indent = 0;
      for (char c : sv) {
        if (c == ' ') {
          ++indent;
        } else if (c == '\t') {
          throw SyntaxError(n, indent + 1, "tab indentation is not supported");
        } else {
          break;
        }
      }
      std::string_view body = text::trim(sv);
      if (body.empty()) continue;  // blank lines are insignificant
      lines_.push_back({n, indent, std::string(body)});
    }
  }

  SnippetAst parse() {
    if (lines_.empty()) throw SyntaxError(1, 1, "empty snippet");
    SnippetAst ast;
    ast.kind = kind_;
    if (kind_ == ComponentKind::Behavior) {
      parse_behavior_header(ast);
      ast.statements = parse_block(0);
      if (ast.statements.empty()) {
        throw SyntaxError(lines_[pos_ > 0 ? pos_ - 1 : 0].number, 1,
                          "behavior body is empty");
      }
    } else {
      const Line& ln = expect_line(0, "a " + std::string(to_string(kind_)) + " call");
      ast.statements.push_back(parse_call_line(ln));
      ++pos_;
    }
    parse_param_section(ast);
    if (pos_ != lines_.size()) {
      const Line& ln = lines_[pos_];
      throw SyntaxError(ln.number, ln.indent + 1, "unexpected trailing content");
    }
    return ast;
  }

 public:
  class Cursor;

 private:
  ComponentKind kind_;
  std::vector<Line> lines_;
  size_t pos_ = 0;

  const Line& expect_line(int indent, const std::string& what) {
    if (pos_ >= lines_.size()) {
      int last = lines_.empty() ? 1 : lines_.back().number;
      throw SyntaxError(last, 1, "expected " + what + " before end of snippet");
    }
    const Line& ln = lines_[pos_];
    if (ln.indent != indent && indent == 0) {
      throw SyntaxError(ln.number, ln.indent + 1, "unexpected indentation");
    }
    return ln;
  }

  void parse_behavior_header(SnippetAst& ast) {
    const Line& ln = expect_line(0, "behavior header");
    Cursor c(ln);
    c.expect_word("behavior");
    ast.behavior_name = c.take_ident("behavior name");
    c.expect_char('(');
    c.expect_char(')');
    c.expect_char(':');
    c.expect_end();
    ++pos_;
  }

  // Parses statements strictly deeper than parent_indent. The first statement
  // fixes the block's indentation.
  std::vector<Statement> parse_block(int parent_indent) {
    if (pos_ >= lines_.size() || lines_[pos_].indent <= parent_indent) {
      int last = lines_.empty() ? 1 : lines_[std::min(pos_, lines_.size() - 1)].number;
      throw SyntaxError(last, 1, "expected an indented block");
    }
    int block_indent = lines_[pos_].indent;
    std::vector<Statement> out;
    while (pos_ < lines_.size() && lines_[pos_].indent == block_indent) {
      const Line& ln = lines_[pos_];
      Cursor c(ln);
      if (c.peek_word("param")) break;
      if (c.peek_word("do")) {
        c.expect_word("do");
        Statement st;
        CallStmt call = parse_call(c, ln);
        c.expect_end();
        st.node = std::move(call);
        out.push_back(std::move(st));
        ++pos_;
      } else if (c.peek_word("take")) {
        c.expect_word("take");
        std::string name = c.take_ident("action name");
        if (name != "SetSpeed") {
          throw UnknownPrimitiveError(ln.number, c.col(), name);
        }
        c.expect_char('(');
        Expr v = parse_expr(c, ln);
        c.expect_char(')');
        c.expect_end();
        Statement st;
        st.node = SetSpeedStmt{v};
        out.push_back(std::move(st));
        ++pos_;
      } else if (c.peek_word("try")) {
        out.push_back(parse_try(block_indent));
      } else if (c.peek_word("loop")) {
        c.expect_word("loop");
        c.expect_char(':');
        c.expect_end();
        ++pos_;
        LoopStmt loop;
        loop.body = parse_block(block_indent);
        Statement st;
        st.node = std::move(loop);
        out.push_back(std::move(st));
      } else {
        throw SyntaxError(ln.number, ln.indent + 1,
                          "expected a statement (do / take / try / loop)");
      }
    }
    if (pos_ < lines_.size() && lines_[pos_].indent > block_indent) {
      const Line& ln = lines_[pos_];
      throw SyntaxError(ln.number, ln.indent + 1, "unexpected indentation");
    }
    return out;
  }

  Statement parse_try(int indent) {
    const Line& tl = lines_[pos_];
    {
      Cursor c(tl);
      c.expect_word("try");
      c.expect_char(':');
      c.expect_end();
    }
    ++pos_;
    TryInterruptStmt stmt;
    ++try_nest_;
    if (try_nest_ > 2) {
      throw SyntaxError(tl.number, tl.indent + 1, "try nesting deeper than 2");
    }
    stmt.body = parse_block(indent);
    const Line& il = expect_line(indent, "'interrupt when' clause");
    if (il.indent != indent) {
      throw SyntaxError(il.number, il.indent + 1,
                        "'interrupt when' must align with its try");
    }
    Cursor c(il);
    c.expect_word("interrupt");
    c.expect_word("when");
    stmt.condition = parse_predicate(c, il);
    c.expect_char(':');
    c.expect_end();
    ++pos_;
    stmt.handler = parse_block(indent);
    --try_nest_;
    Statement st;
    st.node = std::move(stmt);
    return st;
  }

  Predicate parse_predicate(Cursor& c, const Line& ln);
  CallStmt parse_call(Cursor& c, const Line& ln);
  Statement parse_call_line(const Line& ln);
  Expr parse_expr(Cursor& c, const Line& ln);
  void parse_param_section(SnippetAst& ast);

  int try_nest_ = 0;

 public:
  // Minimal in-line scanner over a single logical line.
  class Cursor {
   public:
    explicit Cursor(const Line& ln) : line_(&ln), s_(ln.body) {}

    void skip_ws() {
      while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\t')) ++i_;
    }

    bool peek_word(std::string_view w) {
      skip_ws();
      if (s_.compare(i_, w.size(), w) != 0) return false;
      size_t end = i_ + w.size();
      if (end < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[end])) || s_[end] == '_'))
        return false;
      return true;
    }

    void expect_word(std::string_view w) {
      if (!peek_word(w)) fail("expected '" + std::string(w) + "'");
      i_ += w.size();
    }

    bool try_char(char c) {
      skip_ws();
      if (i_ < s_.size() && s_[i_] == c) {
        ++i_;
        return true;
      }
      return false;
    }

    void expect_char(char c) {
      if (!try_char(c)) fail(std::string("expected '") + c + "'");
    }

    std::string take_ident(const std::string& what) {
      skip_ws();
      size_t start = i_;
      while (i_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '_'))
        ++i_;
      if (i_ == start) fail("expected " + what);
      return std::string(s_.substr(start, i_ - start));
    }

    std::optional<double> try_number() {
      skip_ws();
      size_t start = i_;
      if (i_ < s_.size() && (s_[i_] == '-' || s_[i_] == '+')) ++i_;
      bool digits = false;
      while (i_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[i_])) || s_[i_] == '.')) {
        if (std::isdigit(static_cast<unsigned char>(s_[i_]))) digits = true;
        ++i_;
      }
      if (!digits) {
        i_ = start;
        return std::nullopt;
      }
      return std::strtod(std::string(s_.substr(start, i_ - start)).c_str(), nullptr);
    }

    void expect_end() {
      skip_ws();
      if (i_ != s_.size()) fail("unexpected trailing text");
    }

    bool at_end() {
      skip_ws();
      return i_ == s_.size();
    }

    int col() const { return line_->indent + static_cast<int>(i_) + 1; }

    [[noreturn]] void fail(const std::string& msg) {
      throw SyntaxError(line_->number, col(), msg);
    }

   private:
    const Line* line_;
    std::string_view s_;
    size_t i_ = 0;
  };
};

inline Expr SnippetParser::parse_expr(Cursor& c, const Line& ln) {
  if (auto num = c.try_number()) return Expr::make_number(*num);
  int col = c.col();
  std::string ident = c.take_ident("an argument");
  if (ident == "ego") return Expr::make_ego();
  if (ident == "self") return Expr::make_self();
  if (ident == "true") return Expr::make_bool(true);
  if (ident == "false") return Expr::make_bool(false);
  if (ident == "globalParameters") {
    c.expect_char('.');
    std::string name = c.take_ident("parameter name");
    if (!is_param_name(name)) {
      throw SyntaxError(ln.number, c.col(), "invalid parameter name '" + name + "'");
    }
    return Expr::make_param(name);
  }
  if (is_param_name(ident)) return Expr::make_param(ident);
  throw SyntaxError(ln.number, col, "unexpected identifier '" + ident + "'");
}

inline CallStmt SnippetParser::parse_call(Cursor& c, const Line& ln) {
  int col = c.col();
  std::string name = c.take_ident("a primitive name");
  auto it = primitive_table().find(name);
  if (it == primitive_table().end()) {
    throw UnknownPrimitiveError(ln.number, col, name);
  }
  if (it->second.kind != kind_) {
    throw WrongComponentError(ln.number, col, name, kind_);
  }
  CallStmt call;
  call.primitive = name;
  c.expect_char('(');
  if (!c.try_char(')')) {
    while (true) {
      call.args.push_back(parse_expr(c, ln));
      if (c.try_char(')')) break;
      c.expect_char(',');
    }
  }
  if (static_cast<int>(call.args.size()) != it->second.arity) {
    throw SyntaxError(ln.number, col,
                      name + " takes " + std::to_string(it->second.arity) +
                          " argument(s), got " + std::to_string(call.args.size()));
  }
  return call;
}

inline Statement SnippetParser::parse_call_line(const Line& ln) {
  Cursor c(ln);
  CallStmt call = parse_call(c, ln);
  c.expect_end();
  Statement st;
  st.node = std::move(call);
  return st;
}

inline Predicate SnippetParser::parse_predicate(Cursor& c, const Line& ln) {
  int col = c.col();
  std::string name = c.take_ident("a predicate");
  Predicate p;
  if (name == "withinDistanceToAnyCars") {
    p.kind = Predicate::Kind::WithinDistanceToAnyCars;
    c.expect_char('(');
    c.expect_word("self");
    c.expect_char(',');
    p.arg = parse_expr(c, ln);
    c.expect_char(')');
  } else if (name == "inSameLaneAsEgo") {
    p.kind = Predicate::Kind::InSameLaneAsEgo;
    c.expect_char('(');
    c.expect_word("self");
    c.expect_char(')');
  } else if (name == "distanceToEgoLane") {
    p.kind = Predicate::Kind::DistanceToEgoLaneLess;
    c.expect_char('(');
    c.expect_word("self");
    c.expect_char(')');
    c.expect_char('<');
    p.arg = parse_expr(c, ln);
  } else {
    throw UnknownPrimitiveError(ln.number, col, name);
  }
  return p;
}

inline void SnippetParser::parse_param_section(SnippetAst& ast) {
  std::set<std::string> seen;
  while (pos_ < lines_.size()) {
    const Line& ln = lines_[pos_];
    if (ln.indent != 0) {
      throw SyntaxError(ln.number, ln.indent + 1, "unexpected indentation");
    }
    Cursor c(ln);
    if (!c.peek_word("param")) break;
    c.expect_word("param");
    int col = c.col();
    std::string name = c.take_ident("parameter name");
    if (!is_param_name(name)) {
      throw SyntaxError(ln.number, col, "parameter name must match [A-Z][A-Z0-9_]*");
    }
    if (!seen.insert(name).second) {
      throw SyntaxError(ln.number, col, "duplicate parameter '" + name + "'");
    }
    c.expect_char('=');
    c.expect_word("Range");
    c.expect_char('(');
    auto lo = c.try_number();
    if (!lo) c.fail("expected a number");
    c.expect_char(',');
    auto hi = c.try_number();
    if (!hi) c.fail("expected a number");
    c.expect_char(')');
    c.expect_end();
    if (*lo > *hi) {
      throw SyntaxError(ln.number, col, "Range lower bound exceeds upper bound");
    }
    ast.params.push_back({name, *lo, *hi});
    ++pos_;
  }
}

}  // namespace detail

inline SnippetAst parse_snippet(std::string_view t, ComponentKind kind) {
  detail::SnippetParser parser(t, kind);
  return parser.parse();
}

// ---------------------------------------------------------------------------
// Serialization (canonical form)

namespace detail {

inline std::string expr_text(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::Number: return text::fmt_number(e.number);
    case Expr::Kind::Param: return e.param;
    case Expr::Kind::Ego: return "ego";
    case Expr::Kind::Self: return "self";
    case Expr::Kind::BoolLit: return e.bval ? "true" : "false";
  }
  return "?";
}

inline std::string call_text(const CallStmt& c) {
  std::string out = c.primitive + "(";
  for (size_t i = 0; i < c.args.size(); ++i) {
    if (i) out += ", ";
    out += expr_text(c.args[i]);
  }
  out += ")";
  return out;
}

inline std::string predicate_text(const Predicate& p) {
  switch (p.kind) {
    case Predicate::Kind::WithinDistanceToAnyCars:
      return "withinDistanceToAnyCars(self, " + expr_text(p.arg) + ")";
    case Predicate::Kind::InSameLaneAsEgo:
      return "inSameLaneAsEgo(self)";
    case Predicate::Kind::DistanceToEgoLaneLess:
      return "distanceToEgoLane(self) < " + expr_text(p.arg);
  }
  return "?";
}

inline void serialize_statements(const std::vector<Statement>& stmts, int level,
                                 std::string& out) {
  const std::string pad(static_cast<size_t>(level) * 4, ' ');
  for (const auto& st : stmts) {
    if (const auto* call = std::get_if<CallStmt>(&st.node)) {
      out += pad + "do " + call_text(*call) + "\n";
    } else if (const auto* ss = std::get_if<SetSpeedStmt>(&st.node)) {
      out += pad + "take SetSpeed(" + expr_text(ss->value) + ")\n";
    } else if (const auto* tr = std::get_if<TryInterruptStmt>(&st.node)) {
      out += pad + "try:\n";
      serialize_statements(tr->body, level + 1, out);
      out += pad + "interrupt when " + predicate_text(tr->condition) + ":\n";
      serialize_statements(tr->handler, level + 1, out);
    } else if (const auto* lp = std::get_if<LoopStmt>(&st.node)) {
      out += pad + "loop:\n";
      serialize_statements(lp->body, level + 1, out);
    } else if (const auto* pd = std::get_if<ParamDeclStmt>(&st.node)) {
      out += pad + "param " + pd->spec.name + " = Range(" +
             text::fmt_number(pd->spec.lo) + ", " + text::fmt_number(pd->spec.hi) + ")\n";
    }
  }
}

}  // namespace detail

inline std::string serialize(const SnippetAst& ast) {
  std::string out;
  if (ast.kind == ComponentKind::Behavior) {
    out += "behavior " + ast.behavior_name + "():\n";
    detail::serialize_statements(ast.statements, 1, out);
  } else {
    const auto& call = std::get<CallStmt>(ast.statements.at(0).node);
    out += detail::call_text(call) + "\n";
  }
  for (const auto& p : ast.params) {
    out += "param " + p.name + " = Range(" + text::fmt_number(p.lo) + ", " +
           text::fmt_number(p.hi) + ")\n";
  }
  return out;
}

inline std::string canonicalize(std::string_view t, ComponentKind kind) {
  return serialize(parse_snippet(t, kind));
}

// ---------------------------------------------------------------------------
// Param reference collection

namespace detail {

inline void collect_expr_refs(const Expr& e, std::vector<std::string>& out) {
  if (e.kind == Expr::Kind::Param) out.push_back(e.param);
}

inline void collect_stmt_refs(const std::vector<Statement>& stmts,
                              std::vector<std::string>& out) {
  for (const auto& st : stmts) {
    if (const auto* call = std::get_if<CallStmt>(&st.node)) {
      for (const auto& a : call->args) collect_expr_refs(a, out);
    } else if (const auto* ss = std::get_if<SetSpeedStmt>(&st.node)) {
      collect_expr_refs(ss->value, out);
    } else if (const auto* tr = std::get_if<TryInterruptStmt>(&st.node)) {
      collect_stmt_refs(tr->body, out);
      collect_expr_refs(tr->condition.arg, out);
      collect_stmt_refs(tr->handler, out);
    } else if (const auto* lp = std::get_if<LoopStmt>(&st.node)) {
      collect_stmt_refs(lp->body, out);
    }
  }
}

}  // namespace detail

inline std::vector<std::string> referenced_params(const SnippetAst& ast) {
  std::vector<std::string> out;
  detail::collect_stmt_refs(ast.statements, out);
  return out;
}

// ---------------------------------------------------------------------------
// Road/spawn compatibility

struct RoadTemplateSpec {
  enum class Kind { StraightRoad, FourWayIntersection, TIntersection };
  Kind kind = Kind::StraightRoad;
  int lanes_per_direction = 2;  // StraightRoad
  bool signalized = false;      // FourWayIntersection
};

inline RoadTemplateSpec road_template_of(const SnippetAst& geometry) {
  const auto& call = std::get<CallStmt>(geometry.statements.at(0).node);
  RoadTemplateSpec spec;
  if (call.primitive == "StraightRoad") {
    spec.kind = RoadTemplateSpec::Kind::StraightRoad;
    spec.lanes_per_direction = static_cast<int>(call.args.at(0).number);
  } else if (call.primitive == "FourWayIntersection") {
    spec.kind = RoadTemplateSpec::Kind::FourWayIntersection;
    spec.signalized = call.args.at(0).kind == Expr::Kind::BoolLit && call.args.at(0).bval;
  } else {
    spec.kind = RoadTemplateSpec::Kind::TIntersection;
  }
  return spec;
}

inline std::string spawn_primitive_of(const SnippetAst& spawn) {
  return std::get<CallStmt>(spawn.statements.at(0).node).primitive;
}

// Which spawn placements each road template offers. StraightRoad(1) is a
// one-way single-lane road, so it has no oncoming lane and no left lane;
// the T-intersection's stem joins from the right, so nothing crosses from
// the left.
inline bool spawn_compatible(const RoadTemplateSpec& road, std::string_view spawn) {
  switch (road.kind) {
    case RoadTemplateSpec::Kind::StraightRoad:
      if (road.lanes_per_direction <= 1 &&
          (spawn == "OncomingLane" || spawn == "LeftFront"))
        return false;
      return true;
    case RoadTemplateSpec::Kind::FourWayIntersection:
      return true;
    case RoadTemplateSpec::Kind::TIntersection:
      return spawn != "CrossingFromLeft" && spawn != "LeftFront";
  }
  return false;
}

// ---------------------------------------------------------------------------
// Assembly and validation

struct Issue {
  enum class Code { UndeclaredParam, DuplicateParam, ParamConflict, IncompatibleGeometry, KindMismatch };
  Code code;
  std::string subject;
  std::string message;
};

struct ValidationReport {
  std::vector<Issue> issues;
  bool ok() const { return issues.empty(); }
};

namespace detail {

inline void merge_params(std::vector<ParamSpec>& into, const std::vector<ParamSpec>& from) {
  for (const auto& p : from) {
    auto it = std::find_if(into.begin(), into.end(),
                           [&](const ParamSpec& q) { return q.name == p.name; });
    if (it == into.end()) {
      into.push_back(p);
    } else if (!(*it == p)) {
      throw AssembleError(AssembleError::Code::ParamConflict,
                          "parameter '" + p.name + "' declared with different ranges");
    }
  }
}

}  // namespace detail

inline SceneScript assemble_script(const SnippetAst& behavior,
                                   const SnippetAst& geometry,
                                   const SnippetAst& spawn) {
  if (behavior.kind != ComponentKind::Behavior ||
      geometry.kind != ComponentKind::Geometry ||
      spawn.kind != ComponentKind::SpawnPosition) {
    throw AssembleError(AssembleError::Code::KindMismatch,
                        "snippet kinds must be behavior/geometry/spawn");
  }
  RoadTemplateSpec road = road_template_of(geometry);
  std::string sp = spawn_primitive_of(spawn);
  if (!spawn_compatible(road, sp)) {
    throw AssembleError(AssembleError::Code::IncompatibleGeometry,
                        "spawn '" + sp + "' is not offered by this road template");
  }
  SceneScript script;
  script.header = fixed_header();
  script.behavior = behavior;
  script.geometry = geometry;
  script.spawn = spawn;
  detail::merge_params(script.params, behavior.params);
  detail::merge_params(script.params, geometry.params);
  detail::merge_params(script.params, spawn.params);
  return script;
}

inline ValidationReport validate(const SceneScript& script) {
  ValidationReport report;
  if (script.behavior.kind != ComponentKind::Behavior)
    report.issues.push_back({Issue::Code::KindMismatch, "behavior", "behavior section has wrong kind"});
  if (script.geometry.kind != ComponentKind::Geometry)
    report.issues.push_back({Issue::Code::KindMismatch, "geometry", "geometry section has wrong kind"});
  if (script.spawn.kind != ComponentKind::SpawnPosition)
    report.issues.push_back({Issue::Code::KindMismatch, "spawn", "spawn section has wrong kind"});
  if (!report.issues.empty()) return report;

  // Declarations: unique names, consistent with any snippet-local declarations.
  std::map<std::string, ParamSpec> declared;
  for (const auto& p : script.params) {
    auto [it, inserted] = declared.emplace(p.name, p);
    if (!inserted) {
      report.issues.push_back({Issue::Code::DuplicateParam, p.name,
                               "parameter '" + p.name + "' declared more than once"});
    }
  }
  for (const auto* snip : {&script.behavior, &script.geometry, &script.spawn}) {
    for (const auto& p : snip->params) {
      auto it = declared.find(p.name);
      if (it == declared.end()) {
        report.issues.push_back({Issue::Code::UndeclaredParam, p.name,
                                 "snippet parameter '" + p.name + "' missing from script"});
      } else if (!(it->second == p)) {
        report.issues.push_back({Issue::Code::ParamConflict, p.name,
                                 "parameter '" + p.name + "' declared with different ranges"});
      }
    }
  }

  // References: everything used must be declared.
  std::set<std::string> reported;
  for (const auto* snip : {&script.behavior, &script.geometry, &script.spawn}) {
    for (const auto& name : referenced_params(*snip)) {
      if (!declared.count(name) && reported.insert(name).second) {
        report.issues.push_back({Issue::Code::UndeclaredParam, name,
                                 "parameter '" + name + "' referenced but not declared"});
      }
    }
  }

  RoadTemplateSpec road = road_template_of(script.geometry);
  std::string sp = spawn_primitive_of(script.spawn);
  if (!spawn_compatible(road, sp)) {
    report.issues.push_back({Issue::Code::IncompatibleGeometry, sp,
                             "spawn '" + sp + "' is not offered by this road template"});
  }
  return report;
}

inline std::vector<ParamSpec> list_params(const SceneScript& script) {
  return script.params;
}

// ---------------------------------------------------------------------------
// Script file form: four marked sections.

inline std::string serialize_script(const SceneScript& script) {
  std::string out = "## HEADER\n";
  for (const auto& line : script.header) out += line + "\n";
  out += "## BEHAVIOR\n";
  out += serialize(script.behavior);
  out += "## GEOMETRY\n";
  out += serialize(script.geometry);
  out += "## SPAWN\n";
  out += serialize(script.spawn);
  return out;
}

inline SceneScript parse_script(std::string_view text) {
  std::vector<std::string> header;
  std::string behavior, geometry, spawn;
  std::string* cur = nullptr;
  int section = 0;
  for (const auto& raw : text::split_lines(text)) {
    std::string_view line(raw);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line == "## HEADER") { cur = nullptr; section = 1; continue; }
    if (line == "## BEHAVIOR") { cur = &behavior; section = 2; continue; }
    if (line == "## GEOMETRY") { cur = &geometry; section = 3; continue; }
    if (line == "## SPAWN") { cur = &spawn; section = 4; continue; }
    if (section == 0) {
      if (text::trim(line).empty()) continue;
      throw SyntaxError(1, 1, "script must start with '## HEADER'");
    }
    if (section == 1) {
      if (!text::trim(line).empty()) header.emplace_back(text::trim(line));
    } else if (cur) {
      cur->append(line);
      cur->push_back('\n');
    }
  }
  if (section < 4) throw SyntaxError(1, 1, "script is missing one or more sections");
  SceneScript script = assemble_script(
      parse_snippet(behavior, ComponentKind::Behavior),
      parse_snippet(geometry, ComponentKind::Geometry),
      parse_snippet(spawn, ComponentKind::SpawnPosition));
  script.header = header;
  return script;
}

}  // namespace scenforge::dsl

#endif  // SCENFORGE_DSL_HPP
