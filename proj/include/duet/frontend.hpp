// Copyright 2026 The Duet Authors. All Rights Reserved.
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

// Lexer, parser, static validation and pretty-printer for the mini
// imperative tensor language.
//
//   program   := prologue_stmt* "steps" INT block
//   stmt      := "let" ID "=" expr | ID "=" expr | "print" "(" expr ")"
//              | "if" expr block ("elif" expr block)* ("else" block)?
//              | "while" expr block
//              | "for" ID "in" "range" "(" expr ")" block
//              | "native" ID "(" args ")"
//   prologue_stmt additionally allows "var" ID "=" expr.
//
// Statements end at a newline or an optional ';'.

#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "duet/error.hpp"
#include "duet/natives.hpp"
#include "duet/tensor.hpp"

namespace duet {

using StmtId = int;
using LoopId = int;

// Program location of an operation: the statement, the index of the
// operation within that statement (a statement may issue several), and the
// lexically enclosing loops, outermost first.
struct SourceLoc {
  StmtId stmt_id = -1;
  int site = 0;
  std::vector<LoopId> loop_path;

  auto operator<=>(const SourceLoc&) const = default;
};

inline std::string loc_to_string(const SourceLoc& loc) {
  std::string out = "s" + std::to_string(loc.stmt_id) + "." + std::to_string(loc.site);
  for (auto l : loc.loop_path) out += "/L" + std::to_string(l);
  return out;
}

// ---------------------------------------------------------------------------
// Tokens

enum class TokenKind { kKeyword, kIdent, kInt, kFloat, kString, kPunct };

struct Token {
  TokenKind kind;
  std::string text;
  double number = 0.0;
  int line = 1;
  int column = 1;
};

inline constexpr std::string_view kKeywords[] = {
    "var", "let", "print", "if", "elif", "else", "while", "for", "in", "range", "steps",
    "input", "native", "item", "true", "false", "and", "or", "not",
};

inline bool is_keyword(std::string_view s) {
  for (auto k : kKeywords) {
    if (k == s) return true;
  }
  return false;
}

inline std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  int line = 1, col = 1;
  std::size_t i = 0;
  auto lex_error = [&](const std::string& msg) {
    Error e(ErrorCode::kLexError, msg);
    e.line = line;
    e.column = col;
    throw e;
  };
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
      ++i;
    }
  };
  while (i < src.size()) {
    char c = src[i];
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      advance(1);
      continue;
    }
    Token tok{TokenKind::kPunct, "", 0.0, line, col};
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
      tok.text = std::string(src.substr(i, j - i));
      tok.kind = is_keyword(tok.text) ? TokenKind::kKeyword : TokenKind::kIdent;
      advance(j - i);
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               (c == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t j = i;
      bool is_float = false;
      while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      if (j < src.size() && src[j] == '.') {
        is_float = true;
        ++j;
        while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      }
      if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
        if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
          is_float = true;
          j = k;
          while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
        }
      }
      tok.text = std::string(src.substr(i, j - i));
      tok.kind = is_float ? TokenKind::kFloat : TokenKind::kInt;
      auto res = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), tok.number);
      if (res.ec != std::errc()) lex_error("malformed number '" + tok.text + "'");
      advance(j - i);
    } else if (c == '"') {
      std::size_t j = i + 1;
      std::string value;
      while (true) {
        if (j >= src.size() || src[j] == '\n') lex_error("unterminated string literal");
        if (src[j] == '"') break;
        if (src[j] == '\\' && j + 1 < src.size()) {
          char e = src[j + 1];
          value += e == 'n' ? '\n' : (e == 't' ? '\t' : e);
          j += 2;
          continue;
        }
        value += src[j++];
      }
      tok.kind = TokenKind::kString;
      tok.text = std::move(value);
      advance(j + 1 - i);
    } else {
      static constexpr std::string_view kTwo[] = {"<=", ">=", "==", "!="};
      static constexpr std::string_view kOne = "(){}[],;=+-*/<>";
      std::string_view two = src.substr(i, 2);
      bool matched = false;
      for (auto t : kTwo) {
        if (two == t) {
          tok.text = std::string(t);
          advance(2);
          matched = true;
          break;
        }
      }
      if (!matched) {
        if (kOne.find(c) == std::string_view::npos) {
          lex_error(std::string("illegal character '") + c + "'");
        }
        tok.text = std::string(1, c);
        advance(1);
      }
    }
    out.push_back(std::move(tok));
  }
  return out;
}

// ---------------------------------------------------------------------------
// AST

enum class ExprKind { kNumber, kString, kBool, kList, kIdent, kOpCall, kInput, kNative, kItem, kBinary, kUnary };

struct Expr;
using ExprPtr = std::unique_ptr<Expr>;

struct Expr {
  ExprKind kind = ExprKind::kNumber;
  int line = 0;
  int column = 0;

  double number = 0.0;
  bool boolean = false;
  // Identifier, string literal, native name, input name, or operator symbol.
  std::string text;
  OpKind op = OpKind::kAdd;
  std::vector<ExprPtr> args;

  // Set by validation for operation-issuing expressions (op calls and
  // variable reads).
  bool is_var = false;
  SourceLoc loc;
};

enum class StmtKind { kVarDecl, kLet, kAssign, kPrint, kIf, kWhile, kFor, kExpr };

struct Stmt;
using Block = std::vector<Stmt>;

struct Stmt {
  StmtKind kind = StmtKind::kLet;
  StmtId id = -1;
  int line = 0;
  int column = 0;

  std::string name;  // declared/assigned name, or the `for` variable
  ExprPtr value;     // initializer, printed expr, `for` count, expression statement

  // if: conds[i] guards blocks[i]; a trailing extra block is the else.
  // while: conds[0] / blocks[0].  for: blocks[0].
  std::vector<ExprPtr> conds;
  std::vector<Block> blocks;
  bool has_else = false;

  LoopId loop_id = -1;
  std::vector<LoopId> loop_path;

  // Assignment to a `var` issues AssignVar at this location.
  bool assigns_var = false;
  SourceLoc assign_loc;
};

struct Program {
  Block prologue;
  std::int64_t step_count = 0;
  Block body;
  std::vector<std::string> var_names;
  int num_stmts = 0;
  int num_loops = 0;
};

// ---------------------------------------------------------------------------
// Parser

struct OpSyntax {
  std::string_view name;
  OpKind kind;
  std::size_t arity;
};

inline constexpr OpSyntax kOpSyntax[] = {
    {"matmul", OpKind::kMatMul, 2},   {"add", OpKind::kAdd, 2},         {"sub", OpKind::kSub, 2},
    {"mul", OpKind::kMul, 2},         {"neg", OpKind::kNeg, 1},         {"relu", OpKind::kRelu, 1},
    {"sigmoid", OpKind::kSigmoid, 1}, {"sum", OpKind::kSum, 1},         {"mean", OpKind::kMean, 1},
    {"transpose", OpKind::kTranspose, 2}, {"reshape", OpKind::kReshape, 2}, {"fill", OpKind::kFill, 2},
};

inline const OpSyntax* find_op_syntax(std::string_view name) {
  for (const auto& s : kOpSyntax) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

inline const OpSyntax* find_op_syntax(OpKind kind) {
  for (const auto& s : kOpSyntax) {
    if (s.kind == kind) return &s;
  }
  return nullptr;
}

namespace detail {

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  Program parse_program() {
    Program prog;
    while (!at_end() && !peek_keyword("steps")) {
      prog.prologue.push_back(parse_stmt(/*prologue=*/true, /*top=*/true));
    }
    if (at_end()) validation_error("program has no `steps N { ... }` block", last_line(), 1);
    const Token& steps_tok = next();
    const Token& count = expect_kind(TokenKind::kInt, "step count");
    if (count.number < 1) validation_error("step count must be positive", count.line, count.column);
    prog.step_count = static_cast<std::int64_t>(count.number);
    prog.body = parse_block(false);
    skip_semis();
    if (!at_end()) {
      if (peek_keyword("steps")) validation_error("duplicate steps block", peek().line, peek().column);
      parse_error("statements are not allowed after the steps block");
    }
    (void)steps_tok;
    prog.num_stmts = next_stmt_id_;
    prog.num_loops = next_loop_id_;
    return prog;
  }

 private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  StmtId next_stmt_id_ = 0;
  LoopId next_loop_id_ = 0;
  std::vector<LoopId> loop_stack_;

  bool at_end() const { return pos_ >= toks_.size(); }
  const Token& peek() const { return toks_[pos_]; }
  const Token& next() { return toks_[pos_++]; }
  int last_line() const { return toks_.empty() ? 1 : toks_.back().line; }

  bool peek_punct(std::string_view p) const {
    return !at_end() && peek().kind == TokenKind::kPunct && peek().text == p;
  }
  bool peek_keyword(std::string_view k) const {
    return !at_end() && peek().kind == TokenKind::kKeyword && peek().text == k;
  }
  bool accept_punct(std::string_view p) {
    if (peek_punct(p)) {
      ++pos_;
      return true;
    }
    return false;
  }
  bool accept_keyword(std::string_view k) {
    if (peek_keyword(k)) {
      ++pos_;
      return true;
    }
    return false;
  }

  [[noreturn]] void parse_error(const std::string& msg) {
    Error e(ErrorCode::kParseError, msg + (at_end() ? " (at end of input)" : " near '" + peek().text + "'"));
    e.line = at_end() ? last_line() : peek().line;
    e.column = at_end() ? 1 : peek().column;
    throw e;
  }
  [[noreturn]] void validation_error(const std::string& msg, int line, int col) {
    Error e(ErrorCode::kValidationError, msg);
    e.line = line;
    e.column = col;
    throw e;
  }

  void expect_punct(std::string_view p) {
    if (!accept_punct(p)) parse_error("expected '" + std::string(p) + "'");
  }
  void expect_keyword(std::string_view k) {
    if (!accept_keyword(k)) parse_error("expected '" + std::string(k) + "'");
  }
  const Token& expect_kind(TokenKind kind, const std::string& what) {
    if (at_end() || peek().kind != kind) parse_error("expected " + what);
    return next();
  }
  void skip_semis() {
    while (accept_punct(";")) {
    }
  }

  Block parse_block(bool prologue) {
    expect_punct("{");
    Block block;
    skip_semis();
    while (!peek_punct("}")) {
      if (at_end()) parse_error("unterminated block");
      block.push_back(parse_stmt(prologue, false));
      skip_semis();
    }
    expect_punct("}");
    return block;
  }

  Stmt parse_stmt(bool prologue, bool top) {
    skip_semis();
    if (at_end()) parse_error("expected statement");
    Stmt s;
    s.line = peek().line;
    s.column = peek().column;
    s.id = next_stmt_id_++;
    s.loop_path = loop_stack_;
    if (accept_keyword("var")) {
      if (!prologue || !top) validation_error("`var` declarations are only allowed at the top level of the prologue",
                                              s.line, s.column);
      s.kind = StmtKind::kVarDecl;
      s.name = expect_kind(TokenKind::kIdent, "variable name").text;
      expect_punct("=");
      s.value = parse_expr();
    } else if (accept_keyword("let")) {
      s.kind = StmtKind::kLet;
      s.name = expect_kind(TokenKind::kIdent, "name").text;
      expect_punct("=");
      s.value = parse_expr();
    } else if (accept_keyword("print")) {
      s.kind = StmtKind::kPrint;
      expect_punct("(");
      s.value = parse_expr();
      expect_punct(")");
    } else if (accept_keyword("if")) {
      s.kind = StmtKind::kIf;
      s.conds.push_back(parse_expr());
      s.blocks.push_back(parse_block(prologue));
      while (accept_keyword("elif")) {
        s.conds.push_back(parse_expr());
        s.blocks.push_back(parse_block(prologue));
      }
      if (accept_keyword("else")) {
        s.has_else = true;
        s.blocks.push_back(parse_block(prologue));
      }
    } else if (accept_keyword("while")) {
      s.kind = StmtKind::kWhile;
      s.loop_id = next_loop_id_++;
      s.conds.push_back(parse_expr());
      loop_stack_.push_back(s.loop_id);
      s.blocks.push_back(parse_block(prologue));
      loop_stack_.pop_back();
    } else if (accept_keyword("for")) {
      s.kind = StmtKind::kFor;
      s.loop_id = next_loop_id_++;
      s.name = expect_kind(TokenKind::kIdent, "loop variable").text;
      expect_keyword("in");
      expect_keyword("range");
      expect_punct("(");
      s.value = parse_expr();
      expect_punct(")");
      loop_stack_.push_back(s.loop_id);
      s.blocks.push_back(parse_block(prologue));
      loop_stack_.pop_back();
    } else if (peek_keyword("native")) {
      s.kind = StmtKind::kExpr;
      s.value = parse_expr();
    } else if (!at_end() && peek().kind == TokenKind::kIdent && pos_ + 1 < toks_.size() &&
               toks_[pos_ + 1].kind == TokenKind::kPunct && toks_[pos_ + 1].text == "=") {
      s.kind = StmtKind::kAssign;
      s.name = next().text;
      next();
      s.value = parse_expr();
    } else {
      parse_error("expected statement");
    }
    skip_semis();
    return s;
  }

  ExprPtr make(ExprKind kind, const Token& at) {
    auto e = std::make_unique<Expr>();
    e->kind = kind;
    e->line = at.line;
    e->column = at.column;
    return e;
  }

  ExprPtr parse_expr() { return parse_or(); }

  ExprPtr binary(const Token& op_tok, ExprPtr lhs, ExprPtr rhs) {
    auto e = make(ExprKind::kBinary, op_tok);
    e->text = op_tok.text;
    e->args.push_back(std::move(lhs));
    e->args.push_back(std::move(rhs));
    return e;
  }

  ExprPtr parse_or() {
    auto lhs = parse_and();
    while (peek_keyword("or")) {
      const Token& t = next();
      lhs = binary(t, std::move(lhs), parse_and());
    }
    return lhs;
  }
  ExprPtr parse_and() {
    auto lhs = parse_not();
    while (peek_keyword("and")) {
      const Token& t = next();
      lhs = binary(t, std::move(lhs), parse_not());
    }
    return lhs;
  }
  ExprPtr parse_not() {
    if (peek_keyword("not")) {
      const Token& t = next();
      auto e = make(ExprKind::kUnary, t);
      e->text = "not";
      e->args.push_back(parse_not());
      return e;
    }
    return parse_cmp();
  }
  ExprPtr parse_cmp() {
    auto lhs = parse_add();
    while (peek_punct("<") || peek_punct(">") || peek_punct("<=") || peek_punct(">=") || peek_punct("==") ||
           peek_punct("!=")) {
      const Token& t = next();
      lhs = binary(t, std::move(lhs), parse_add());
    }
    return lhs;
  }
  ExprPtr parse_add() {
    auto lhs = parse_mul();
    while (peek_punct("+") || peek_punct("-")) {
      const Token& t = next();
      lhs = binary(t, std::move(lhs), parse_mul());
    }
    return lhs;
  }
  ExprPtr parse_mul() {
    auto lhs = parse_unary();
    while (peek_punct("*") || peek_punct("/")) {
      const Token& t = next();
      lhs = binary(t, std::move(lhs), parse_unary());
    }
    return lhs;
  }
  ExprPtr parse_unary() {
    if (peek_punct("-")) {
      const Token& t = next();
      auto e = make(ExprKind::kUnary, t);
      e->text = "-";
      e->args.push_back(parse_unary());
      return e;
    }
    return parse_primary();
  }

  std::vector<ExprPtr> parse_args() {
    std::vector<ExprPtr> args;
    expect_punct("(");
    if (accept_punct(")")) return args;
    do {
      args.push_back(parse_expr());
    } while (accept_punct(","));
    expect_punct(")");
    return args;
  }

  ExprPtr parse_primary() {
    if (at_end()) parse_error("expected expression");
    const Token& t = peek();
    switch (t.kind) {
      case TokenKind::kInt:
      case TokenKind::kFloat: {
        next();
        auto e = make(ExprKind::kNumber, t);
        e->number = t.number;
        return e;
      }
      case TokenKind::kString: {
        next();
        auto e = make(ExprKind::kString, t);
        e->text = t.text;
        return e;
      }
      case TokenKind::kKeyword: {
        if (t.text == "true" || t.text == "false") {
          next();
          auto e = make(ExprKind::kBool, t);
          e->boolean = t.text == "true";
          return e;
        }
        if (t.text == "input") {
          next();
          auto e = make(ExprKind::kInput, t);
          expect_punct("(");
          e->text = expect_kind(TokenKind::kString, "input name string").text;
          if (accept_punct(",")) e->args.push_back(parse_expr());
          expect_punct(")");
          return e;
        }
        if (t.text == "native") {
          next();
          auto e = make(ExprKind::kNative, t);
          const Token& name = expect_kind(TokenKind::kIdent, "native name");
          e->text = name.text;
          e->args = parse_args();
          const NativeInfo* info = find_native(e->text);
          if (!info) validation_error("unknown native '" + e->text + "'", name.line, name.column);
          if (info->arity != e->args.size()) {
            validation_error("native " + e->text + " expects " + std::to_string(info->arity) + " arguments",
                             name.line, name.column);
          }
          return e;
        }
        if (t.text == "item") {
          next();
          auto e = make(ExprKind::kItem, t);
          expect_punct("(");
          e->args.push_back(parse_expr());
          expect_punct(")");
          return e;
        }
        parse_error("unexpected keyword in expression");
      }
      case TokenKind::kIdent: {
        next();
        if (peek_punct("(")) {
          const OpSyntax* syn = find_op_syntax(t.text);
          if (!syn) validation_error("unknown operation '" + t.text + "'", t.line, t.column);
          auto e = make(ExprKind::kOpCall, t);
          e->op = syn->kind;
          e->text = t.text;
          e->args = parse_args();
          if (e->args.size() != syn->arity) {
            validation_error(t.text + " expects " + std::to_string(syn->arity) + " arguments, got " +
                                 std::to_string(e->args.size()),
                             t.line, t.column);
          }
          return e;
        }
        auto e = make(ExprKind::kIdent, t);
        e->text = t.text;
        return e;
      }
      case TokenKind::kPunct: {
        if (t.text == "(") {
          next();
          auto e = parse_expr();
          expect_punct(")");
          return e;
        }
        if (t.text == "[") {
          next();
          auto e = make(ExprKind::kList, t);
          if (!accept_punct("]")) {
            do {
              e->args.push_back(parse_expr());
            } while (accept_punct(","));
            expect_punct("]");
          }
          return e;
        }
        parse_error("expected expression");
      }
    }
    parse_error("expected expression");
  }
};

// Name resolution and op-site numbering.
class Resolver {
 public:
  void run(Program& prog) {
    for (auto& s : prog.prologue) stmt(s, /*prologue=*/true);
    prog.var_names.assign(vars_.begin(), vars_.end());
    for (auto& s : prog.body) stmt(s, false);
  }

 private:
  std::set<std::string> vars_;
  std::set<std::string> declared_;
  int site_ = 0;

  [[noreturn]] static void error(const std::string& msg, int line, int col) {
    Error e(ErrorCode::kValidationError, msg);
    e.line = line;
    e.column = col;
    throw e;
  }

  void expr(Expr& e, const Stmt& owner, const std::vector<LoopId>& loop_path) {
    for (auto& a : e.args) expr(*a, owner, loop_path);
    if (e.kind == ExprKind::kIdent) {
      if (!declared_.count(e.text)) error("unknown name '" + e.text + "'", e.line, e.column);
      if (vars_.count(e.text)) {
        e.is_var = true;
        e.loc = SourceLoc{owner.id, site_++, loop_path};
      }
    } else if (e.kind == ExprKind::kOpCall) {
      e.loc = SourceLoc{owner.id, site_++, loop_path};
    }
  }

  void declare_local(const Stmt& s) {
    if (vars_.count(s.name)) error("'" + s.name + "' is a var and cannot be redeclared", s.line, s.column);
    declared_.insert(s.name);
  }

  void block(Block& b, bool prologue) {
    for (auto& s : b) stmt(s, prologue);
  }

  void stmt(Stmt& s, bool prologue) {
    site_ = 0;
    switch (s.kind) {
      case StmtKind::kVarDecl:
        expr(*s.value, s, s.loop_path);
        if (declared_.count(s.name)) error("duplicate declaration of '" + s.name + "'", s.line, s.column);
        declared_.insert(s.name);
        vars_.insert(s.name);
        break;
      case StmtKind::kLet:
        expr(*s.value, s, s.loop_path);
        declare_local(s);
        break;
      case StmtKind::kAssign:
        expr(*s.value, s, s.loop_path);
        if (!declared_.count(s.name)) error("assignment to undeclared name '" + s.name + "'", s.line, s.column);
        if (vars_.count(s.name)) {
          s.assigns_var = true;
          s.assign_loc = SourceLoc{s.id, site_++, s.loop_path};
        }
        break;
      case StmtKind::kPrint:
      case StmtKind::kExpr:
        expr(*s.value, s, s.loop_path);
        break;
      case StmtKind::kIf:
        for (auto& c : s.conds) expr(*c, s, s.loop_path);
        for (auto& b : s.blocks) block(b, prologue);
        break;
      case StmtKind::kWhile: {
        auto inner = s.loop_path;
        inner.push_back(s.loop_id);
        expr(*s.conds[0], s, inner);
        block(s.blocks[0], prologue);
        break;
      }
      case StmtKind::kFor:
        expr(*s.value, s, s.loop_path);
        declare_local(s);
        block(s.blocks[0], prologue);
        break;
    }
    (void)prologue;
  }
};

}  // namespace detail

inline Program parse(std::string_view source) {
  detail::Parser parser(tokenize(source));
  Program prog = parser.parse_program();
  detail::Resolver().run(prog);
  return prog;
}

// ---------------------------------------------------------------------------
// Pretty-printer. Binary expressions are fully parenthesized so printing and
// re-parsing reproduces the same tree.

namespace detail {

inline std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    if (c == '\t') {
      out += "\\t";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

inline std::string print_args(const std::vector<ExprPtr>& args);

inline std::string print_expr(const Expr& e) {
  switch (e.kind) {
    case ExprKind::kNumber: {
      std::string s = format_number(e.number);
      return s;
    }
    case ExprKind::kString: return quote(e.text);
    case ExprKind::kBool: return e.boolean ? "true" : "false";
    case ExprKind::kList: {
      std::string out = "[";
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i) out += ", ";
        out += print_expr(*e.args[i]);
      }
      return out + "]";
    }
    case ExprKind::kIdent: return e.text;
    case ExprKind::kOpCall: return std::string(find_op_syntax(e.op)->name) + print_args(e.args);
    case ExprKind::kInput: {
      std::string out = "input(" + quote(e.text);
      if (!e.args.empty()) out += ", " + print_expr(*e.args[0]);
      return out + ")";
    }
    case ExprKind::kNative: return "native " + e.text + print_args(e.args);
    case ExprKind::kItem: return "item(" + print_expr(*e.args[0]) + ")";
    case ExprKind::kBinary:
      return "(" + print_expr(*e.args[0]) + " " + e.text + " " + print_expr(*e.args[1]) + ")";
    case ExprKind::kUnary:
      return e.text == "not" ? "(not " + print_expr(*e.args[0]) + ")" : "(-" + print_expr(*e.args[0]) + ")";
  }
  return "";
}

inline std::string print_args(const std::vector<ExprPtr>& args) {
  std::string out = "(";
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i) out += ", ";
    out += print_expr(*args[i]);
  }
  return out + ")";
}

inline void print_block(const Block& b, int indent, std::string& out);

inline void print_stmt(const Stmt& s, int indent, std::string& out) {
  std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  switch (s.kind) {
    case StmtKind::kVarDecl: out += pad + "var " + s.name + " = " + print_expr(*s.value) + "\n"; break;
    case StmtKind::kLet: out += pad + "let " + s.name + " = " + print_expr(*s.value) + "\n"; break;
    case StmtKind::kAssign: out += pad + s.name + " = " + print_expr(*s.value) + "\n"; break;
    case StmtKind::kPrint: out += pad + "print(" + print_expr(*s.value) + ")\n"; break;
    case StmtKind::kExpr: out += pad + print_expr(*s.value) + "\n"; break;
    case StmtKind::kIf: {
      for (std::size_t i = 0; i < s.conds.size(); ++i) {
        out += pad + (i == 0 ? "if " : "elif ") + print_expr(*s.conds[i]) + " {\n";
        print_block(s.blocks[i], indent + 1, out);
        out += pad + "}\n";
      }
      if (s.has_else) {
        out += pad + "else {\n";
        print_block(s.blocks.back(), indent + 1, out);
        out += pad + "}\n";
      }
      break;
    }
    case StmtKind::kWhile:
      out += pad + "while " + print_expr(*s.conds[0]) + " {\n";
      print_block(s.blocks[0], indent + 1, out);
      out += pad + "}\n";
      break;
    case StmtKind::kFor:
      out += pad + "for " + s.name + " in range(" + print_expr(*s.value) + ") {\n";
      print_block(s.blocks[0], indent + 1, out);
      out += pad + "}\n";
      break;
  }
}

inline void print_block(const Block& b, int indent, std::string& out) {
  for (const auto& s : b) print_stmt(s, indent, out);
}

inline bool same_expr(const Expr& a, const Expr& b) {
  if (a.kind != b.kind || a.text != b.text || a.is_var != b.is_var || !(a.loc == b.loc) ||
      a.args.size() != b.args.size()) {
    return false;
  }
  if (a.kind == ExprKind::kNumber && std::bit_cast<std::uint64_t>(a.number) != std::bit_cast<std::uint64_t>(b.number))
    return false;
  if (a.kind == ExprKind::kBool && a.boolean != b.boolean) return false;
  if (a.kind == ExprKind::kOpCall && a.op != b.op) return false;
  for (std::size_t i = 0; i < a.args.size(); ++i) {
    if (!same_expr(*a.args[i], *b.args[i])) return false;
  }
  return true;
}

inline bool same_block(const Block& a, const Block& b);

inline bool same_stmt(const Stmt& a, const Stmt& b) {
  if (a.kind != b.kind || a.id != b.id || a.name != b.name || a.has_else != b.has_else || a.loop_id != b.loop_id ||
      a.loop_path != b.loop_path || a.assigns_var != b.assigns_var || !(a.assign_loc == b.assign_loc) ||
      a.conds.size() != b.conds.size() || a.blocks.size() != b.blocks.size() || bool(a.value) != bool(b.value)) {
    return false;
  }
  if (a.value && !same_expr(*a.value, *b.value)) return false;
  for (std::size_t i = 0; i < a.conds.size(); ++i) {
    if (!same_expr(*a.conds[i], *b.conds[i])) return false;
  }
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    if (!same_block(a.blocks[i], b.blocks[i])) return false;
  }
  return true;
}

inline bool same_block(const Block& a, const Block& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!same_stmt(a[i], b[i])) return false;
  }
  return true;
}

}  // namespace detail

inline std::string pretty_print(const Program& prog) {
  std::string out;
  detail::print_block(prog.prologue, 0, out);
  out += "steps " + std::to_string(prog.step_count) + " {\n";
  detail::print_block(prog.body, 1, out);
  out += "}\n";
  return out;
}

// Structural equality ignoring source positions.
inline bool same_ast(const Program& a, const Program& b) {
  return a.step_count == b.step_count && a.var_names == b.var_names && a.num_stmts == b.num_stmts &&
         a.num_loops == b.num_loops && detail::same_block(a.prologue, b.prologue) &&
         detail::same_block(a.body, b.body);
}

}  // namespace duet
