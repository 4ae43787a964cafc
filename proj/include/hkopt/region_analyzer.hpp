/* Copyright 2026 The hkopt Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Statement-level analysis of kernel sources and candidate code regions per
// optimization kind.
//
// The grammar is deliberately small: one statement per logical line
// (bracketed expressions and backslashes may continue a line), assignments,
// calls, returns, and indentation-delimited `for`/`while` bodies. A loop
// header absorbs its whole body into a single statement. Other block headers
// (`def`, `if`, `with`, ...) are one-line statements and their bodies are
// analyzed as ordinary statements. Comments and blank lines belong to no
// statement but still count in line numbering.

#ifndef HKOPT_REGION_ANALYZER_HPP_
#define HKOPT_REGION_ANALYZER_HPP_

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "hkopt/core_model.hpp"
#include "hkopt/error.hpp"
#include "hkopt/util.hpp"

namespace hkopt {

enum class StatementKind { Assign, LoopHeader, Call, Return, Other };

inline std::string_view statement_kind_name(StatementKind k) {
  switch (k) {
    case StatementKind::Assign: return "ASSIGN";
    case StatementKind::LoopHeader: return "LOOP_HEADER";
    case StatementKind::Call: return "CALL";
    case StatementKind::Return: return "RETURN";
    case StatementKind::Other: return "OTHER";
  }
  return "OTHER";
}

struct Statement {
  CodeRegion line_span;
  StatementKind kind = StatementKind::Other;
  std::set<std::string> defs;
  std::set<std::string> uses;
  bool has_call = false;    // any call expression inside the span
  int loop_headers = 0;     // loop headers inside the span, nested included
  std::vector<std::string> callees;
};

namespace analysis {

struct Token {
  enum class Type { Name, Number, String, Op };
  Type type;
  std::string text;
};

struct LogicalLine {
  int start_line;
  int end_line;
  int indent;
  std::string text;
  std::vector<Token> tokens;
};

inline bool is_ident_start(unsigned char c) {
  return std::isalpha(c) || c == '_' || c >= 0x80;
}
inline bool is_ident_char(unsigned char c) {
  return std::isalnum(c) || c == '_' || c >= 0x80;
}

inline const std::set<std::string, std::less<>>& keywords() {
  static const std::set<std::string, std::less<>> kw{
      "and",   "or",     "not",     "in",       "is",     "if",
      "else",  "elif",   "for",     "while",    "lambda", "None",
      "True",  "False",  "await",   "yield",    "async",  "from",
      "as",    "return", "def",     "class",    "with",   "try",
      "except", "finally", "import", "pass",    "break",  "continue",
      "raise", "assert", "del",     "global",   "nonlocal"};
  return kw;
}

/// Module-like names that are never treated as data uses.
inline const std::set<std::string, std::less<>>& default_modules() {
  static const std::set<std::string, std::less<>> m{"torch", "nn", "F", "tl",
                                                    "triton", "math", "np"};
  return m;
}

inline bool is_open(char c) { return c == '(' || c == '[' || c == '{'; }
inline bool is_close(char c) { return c == ')' || c == ']' || c == '}'; }

/// Groups physical lines into logical lines, dropping comments and blanks.
inline std::vector<LogicalLine> group_lines(std::string_view text) {
  auto lines = split_lines(text);
  std::vector<LogicalLine> out;
  std::optional<LogicalLine> cur;
  int depth = 0;
  std::string triple;  // open triple-quote delimiter, if any

  for (std::size_t li = 0; li < lines.size(); ++li) {
    const int lineno = static_cast<int>(li) + 1;
    std::string_view line = lines[li];
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    std::string kept;
    bool backslash = false;
    std::size_t i = 0;
    while (i < line.size()) {
      char c = line[i];
      if (!triple.empty()) {
        if (line.compare(i, 3, triple) == 0) {
          kept += triple;
          triple.clear();
          i += 3;
        } else {
          kept += c;
          ++i;
        }
        continue;
      }
      if (c == '#') break;
      if (c == '"' || c == '\'') {
        std::string q3(3, c);
        if (line.compare(i, 3, q3) == 0) {
          triple = q3;
          kept += q3;
          i += 3;
          continue;
        }
        std::size_t j = i + 1;
        while (j < line.size() && line[j] != c) j += (line[j] == '\\') ? 2 : 1;
        if (j >= line.size())
          throw AnalysisError(lineno, "unterminated string literal");
        kept.append(line.substr(i, j - i + 1));
        i = j + 1;
        continue;
      }
      if (is_open(c)) ++depth;
      if (is_close(c)) {
        if (--depth < 0) throw AnalysisError(lineno, "unbalanced bracket");
      }
      kept += c;
      ++i;
    }
    std::string_view body = trim(kept);
    if (triple.empty() && !body.empty() && body.back() == '\\') {
      backslash = true;
      body.remove_suffix(1);
    }

    if (!cur) {
      if (body.empty() && triple.empty()) continue;
      int indent = 0;
      for (char c : line) {
        if (c == ' ') ++indent;
        else if (c == '\t') indent = (indent / 8 + 1) * 8;
        else break;
      }
      cur = LogicalLine{lineno, lineno, indent, std::string(body), {}};
    } else {
      if (!body.empty()) {
        if (!cur->text.empty()) cur->text += triple.empty() ? " " : "\n";
        cur->text += body;
      }
      if (!body.empty() || !triple.empty()) cur->end_line = lineno;
    }
    if (depth == 0 && triple.empty() && !backslash) {
      cur->end_line = std::max(cur->end_line, lineno);
      out.push_back(std::move(*cur));
      cur.reset();
    }
  }
  if (cur) {
    throw AnalysisError(cur->start_line, triple.empty()
                                             ? "unclosed bracket"
                                             : "unterminated string literal");
  }
  return out;
}

inline std::vector<Token> tokenize(const std::string& s, int lineno) {
  static const std::vector<std::string> kOps{
      "**=", "//=", ">>=", "<<=", "...", "==", "!=", "<=", ">=", "+=", "-=",
      "*=",  "/=",  "%=",  "@=",  "&=",  "|=", "^=", "->", "**", "//", "<<",
      ">>",  ":=",  "+",   "-",   "*",   "/",  "%",  "@",  "&",  "|",  "^",
      "~",   "<",   ">",   "=",   ".",   ",",  ":",  "(",  ")",  "[",  "]",
      "{",   "}"};
  std::vector<Token> toks;
  std::size_t i = 0;
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (is_ident_start(c)) {
      std::size_t j = i;
      while (j < s.size() && is_ident_char(static_cast<unsigned char>(s[j])))
        ++j;
      // String prefixes such as f"..." or rb'...'.
      if (j < s.size() && (s[j] == '"' || s[j] == '\'') && j - i <= 2) {
        i = j;
        continue;
      }
      toks.push_back({Token::Type::Name, s.substr(i, j - i)});
      i = j;
      continue;
    }
    if (std::isdigit(c) || (c == '.' && i + 1 < s.size() &&
                            std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
      std::size_t j = i;
      while (j < s.size() &&
             (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '.' ||
              s[j] == '_' ||
              ((s[j] == '+' || s[j] == '-') &&
               (s[j - 1] == 'e' || s[j - 1] == 'E'))))
        ++j;
      toks.push_back({Token::Type::Number, s.substr(i, j - i)});
      i = j;
      continue;
    }
    if (c == '"' || c == '\'') {
      std::string q3(3, static_cast<char>(c));
      std::size_t j;
      if (s.compare(i, 3, q3) == 0) {
        j = s.find(q3, i + 3);
        if (j == std::string::npos)
          throw AnalysisError(lineno, "unterminated string literal");
        j += 3;
      } else {
        j = i + 1;
        while (j < s.size() && s[j] != static_cast<char>(c))
          j += (s[j] == '\\') ? 2 : 1;
        if (j >= s.size())
          throw AnalysisError(lineno, "unterminated string literal");
        ++j;
      }
      toks.push_back({Token::Type::String, s.substr(i, j - i)});
      i = j;
      continue;
    }
    bool matched = false;
    for (const auto& op : kOps) {
      if (s.compare(i, op.size(), op) == 0) {
        toks.push_back({Token::Type::Op, op});
        i += op.size();
        matched = true;
        break;
      }
    }
    if (!matched)
      throw AnalysisError(lineno,
                          std::string("unexpected character '") +
                              static_cast<char>(c) + "'");
  }
  return toks;
}

inline bool is_op(const Token& t, std::string_view op) {
  return t.type == Token::Type::Op && t.text == op;
}
inline bool is_name(const Token& t, std::string_view name) {
  return t.type == Token::Type::Name && t.text == name;
}

struct ExprInfo {
  std::set<std::string> uses;
  std::vector<std::string> callees;
  bool has_call = false;
};

/// Identifiers read by an expression. Single-name callees, attribute names,
/// keyword-argument names, keywords and module names are not reads; the root
/// of a method call (`x.view(...)`) is.
inline void collect_uses(const std::vector<Token>& t, std::size_t begin,
                         std::size_t end,
                         const std::set<std::string, std::less<>>& modules,
                         ExprInfo& info) {
  int depth = 0;
  for (std::size_t i = begin; i < end; ++i) {
    const Token& tok = t[i];
    if (tok.type == Token::Type::Op) {
      if (tok.text.size() == 1 && is_open(tok.text[0])) {
        if (tok.text == "(" && i > begin &&
            ((t[i - 1].type == Token::Type::Name &&
              !keywords().contains(t[i - 1].text)) ||
             is_op(t[i - 1], ")") || is_op(t[i - 1], "]")))
          info.has_call = true;
        ++depth;
      } else if (tok.text.size() == 1 && is_close(tok.text[0])) {
        --depth;
      }
      continue;
    }
    if (tok.type != Token::Type::Name) continue;
    if (keywords().contains(tok.text)) continue;
    if (i > begin && is_op(t[i - 1], ".")) continue;
    if (depth > 0 && i + 1 < end && is_op(t[i + 1], "=")) continue;

    std::size_t j = i;
    while (j + 2 < end && is_op(t[j + 1], ".") &&
           t[j + 2].type == Token::Type::Name)
      j += 2;
    const bool call = j + 1 < end && is_op(t[j + 1], "(");
    if (call) {
      info.callees.push_back(t[j].text);
      if (j == i) continue;  // plain function name
    }
    if (!modules.contains(tok.text)) info.uses.insert(tok.text);
  }
}

/// Root names bound by an assignment target list, plus names read inside
/// subscripts or attribute chains of the targets.
inline void collect_targets(const std::vector<Token>& t, std::size_t begin,
                            std::size_t end,
                            const std::set<std::string, std::less<>>& modules,
                            std::set<std::string>& defs, ExprInfo& info,
                            int lineno) {
  int depth = 0;
  bool expect_root = true;
  for (std::size_t i = begin; i < end; ++i) {
    const Token& tok = t[i];
    if (depth == 0 && expect_root) {
      if (is_op(tok, "(") || is_op(tok, "[") || is_op(tok, "*")) {
        if (!is_op(tok, "*")) {
          // Tuple/list unpacking: every bare name at this level is a target.
          std::size_t j = i + 1;
          int d = 1;
          for (; j < end && d > 0; ++j) {
            if (t[j].type == Token::Type::Op && t[j].text.size() == 1) {
              if (is_open(t[j].text[0])) ++d;
              if (is_close(t[j].text[0])) --d;
            }
            if (d == 1 && t[j].type == Token::Type::Name &&
                !is_op(t[j - 1], "."))
              defs.insert(t[j].text);
          }
          i = j - 1;
          expect_root = false;
        }
        continue;
      }
      if (tok.type != Token::Type::Name || keywords().contains(tok.text))
        throw AnalysisError(lineno, "invalid assignment target");
      defs.insert(tok.text);
      expect_root = false;
      continue;
    }
    if (tok.type == Token::Type::Op && tok.text.size() == 1) {
      if (is_open(tok.text[0])) {
        // Subscript or call inside a target: everything inside is read.
        std::size_t j = i + 1;
        int d = 1;
        for (; j < end && d > 0; ++j)
          if (t[j].type == Token::Type::Op && t[j].text.size() == 1) {
            if (is_open(t[j].text[0])) ++d;
            if (is_close(t[j].text[0])) --d;
          }
        collect_uses(t, i + 1, j - 1, modules, info);
        i = j - 1;
        continue;
      }
      if (tok.text == ",") {
        expect_root = true;
        continue;
      }
    }
  }
  if (defs.empty()) throw AnalysisError(lineno, "assignment without target");
}

/// Index of the first top-level token satisfying `pred`, or npos.
template <typename Pred>
std::size_t find_top_level(const std::vector<Token>& t, std::size_t begin,
                           std::size_t end, Pred pred) {
  int depth = 0;
  for (std::size_t i = begin; i < end; ++i) {
    if (t[i].type == Token::Type::Op && t[i].text.size() == 1) {
      if (is_open(t[i].text[0])) ++depth;
      else if (is_close(t[i].text[0])) --depth;
    }
    if (depth == 0 && pred(t[i])) return i;
  }
  return std::string::npos;
}

inline bool is_augmented(const Token& t) {
  static const std::set<std::string, std::less<>> aug{
      "+=", "-=", "*=", "/=", "//=", "%=", "@=", "&=", "|=", "^=", ">>=",
      "<<=", "**="};
  return t.type == Token::Type::Op && aug.contains(t.text);
}

inline const std::set<std::string, std::less<>>& block_keywords() {
  static const std::set<std::string, std::less<>> kw{
      "for", "while", "if", "elif", "else", "def", "class",
      "with", "try", "except", "finally", "async"};
  return kw;
}

/// Classifies one logical line. Loop statements come back with only the
/// header's defs/uses; the caller folds the body in.
inline Statement classify(const LogicalLine& ll,
                          const std::set<std::string, std::less<>>& modules) {
  const auto& t = ll.tokens;
  const std::size_t n = t.size();
  const int lineno = ll.start_line;
  Statement st{CodeRegion(ll.start_line, ll.end_line)};
  ExprInfo info;
  auto finish = [&](StatementKind kind) {
    st.kind = kind;
    st.uses.insert(info.uses.begin(), info.uses.end());
    st.has_call = info.has_call;
    st.callees = info.callees;
    if (kind == StatementKind::LoopHeader) st.loop_headers = 1;
    return st;
  };

  const bool header = n > 0 && is_op(t.back(), ":");
  const std::string& first =
      t[0].type == Token::Type::Name ? t[0].text : std::string();

  if (is_op(t[0], "@")) return finish(StatementKind::Other);

  std::size_t k = 0;
  if (first == "async" && n > 1) k = 1;
  const std::string& kw = t[k].type == Token::Type::Name ? t[k].text : first;

  if (block_keywords().contains(kw)) {
    if (!header)
      throw AnalysisError(lineno, "compound statement must end with ':'");
    const std::size_t body_end = n - 1;
    if (kw == "for") {
      auto in = find_top_level(t, k + 1, body_end,
                               [](const Token& x) { return is_name(x, "in"); });
      if (in == std::string::npos)
        throw AnalysisError(lineno, "for loop without 'in'");
      for (std::size_t i = k + 1; i < in; ++i)
        if (t[i].type == Token::Type::Name) st.defs.insert(t[i].text);
      if (st.defs.empty()) throw AnalysisError(lineno, "for loop without target");
      collect_uses(t, in + 1, body_end, modules, info);
      return finish(StatementKind::LoopHeader);
    }
    if (kw == "while") {
      collect_uses(t, k + 1, body_end, modules, info);
      return finish(StatementKind::LoopHeader);
    }
    if (kw == "def" || kw == "class") return finish(StatementKind::Other);
    if (kw == "with" || kw == "except") {
      // `expr as name` items: the name is bound, the expression is read.
      std::vector<Token> items;
      for (std::size_t i = k + 1; i < body_end; ++i) {
        if (is_name(t[i], "as") && i + 1 < body_end &&
            t[i + 1].type == Token::Type::Name) {
          st.defs.insert(t[i + 1].text);
          ++i;
          continue;
        }
        items.push_back(t[i]);
      }
      collect_uses(items, 0, items.size(), modules, info);
      return finish(StatementKind::Other);
    }
    collect_uses(t, k + 1, body_end, modules, info);
    return finish(StatementKind::Other);
  }

  if (first == "return") {
    collect_uses(t, 1, n, modules, info);
    return finish(StatementKind::Return);
  }
  if (first == "import" || first == "from" || first == "pass" ||
      first == "break" || first == "continue" || first == "global" ||
      first == "nonlocal")
    return finish(StatementKind::Other);
  if (first == "raise" || first == "assert" || first == "del" ||
      first == "yield" || first == "await") {
    collect_uses(t, 1, n, modules, info);
    if (first == "await" && info.has_call) return finish(StatementKind::Call);
    return finish(StatementKind::Other);
  }
  if (header) throw AnalysisError(lineno, "unsupported block header");

  auto aug = find_top_level(t, 0, n, is_augmented);
  if (aug != std::string::npos) {
    collect_targets(t, 0, aug, modules, st.defs, info, lineno);
    for (const auto& d : st.defs) info.uses.insert(d);
    collect_uses(t, aug + 1, n, modules, info);
    return finish(StatementKind::Assign);
  }

  std::vector<std::size_t> eqs;
  {
    int depth = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (t[i].type == Token::Type::Op && t[i].text.size() == 1) {
        if (is_open(t[i].text[0])) ++depth;
        else if (is_close(t[i].text[0])) --depth;
      }
      if (depth == 0 && is_op(t[i], "=")) eqs.push_back(i);
    }
  }
  if (!eqs.empty()) {
    std::size_t seg = 0;
    for (auto e : eqs) {
      // Annotated target `x: T = ...` binds only the name before ':'.
      auto colon = find_top_level(t, seg, e,
                                  [](const Token& x) { return is_op(x, ":"); });
      collect_targets(t, seg, colon == std::string::npos ? e : colon, modules,
                      st.defs, info, lineno);
      seg = e + 1;
    }
    if (seg >= n) throw AnalysisError(lineno, "assignment without value");
    collect_uses(t, seg, n, modules, info);
    return finish(StatementKind::Assign);
  }

  if (n == 1 && t[0].type == Token::Type::String)
    return finish(StatementKind::Other);
  if (find_top_level(t, 0, n, [](const Token& x) { return is_op(x, ":"); }) !=
      std::string::npos)
    return finish(StatementKind::Other);  // bare annotation `x: int`

  // Expression statement: only calls are accepted.
  if (t[0].type == Token::Type::Name && is_op(t.back(), ")")) {
    collect_uses(t, 0, n, modules, info);
    if (info.has_call) return finish(StatementKind::Call);
  }
  throw AnalysisError(lineno, "unsupported statement");
}

inline std::set<std::string, std::less<>> imported_names(
    const std::vector<LogicalLine>& lines) {
  auto names = default_modules();
  for (const auto& ll : lines) {
    const auto& t = ll.tokens;
    if (t.empty() || t[0].type != Token::Type::Name) continue;
    if (t[0].text != "import" && t[0].text != "from") continue;
    std::size_t start = 1;
    if (t[0].text == "from") {
      for (std::size_t i = 1; i < t.size(); ++i)
        if (is_name(t[i], "import")) start = i + 1;
    }
    // Each comma-separated item binds its alias or its first name.
    std::size_t i = start;
    while (i < t.size()) {
      std::size_t j = i;
      while (j < t.size() && !is_op(t[j], ",")) ++j;
      std::string bound;
      for (std::size_t m = i; m < j; ++m) {
        if (is_name(t[m], "as") && m + 1 < j) bound = t[m + 1].text;
      }
      if (bound.empty()) {
        for (std::size_t m = i; m < j; ++m)
          if (t[m].type == Token::Type::Name) {
            bound = t[m].text;
            break;
          }
      }
      if (!bound.empty()) names.insert(bound);
      i = j + 1;
    }
  }
  return names;
}

/// First and last non-blank, non-comment line, used as the degraded region.
inline std::optional<CodeRegion> whole_body(const KernelSource& source) {
  auto lines = split_lines(source.text());
  int first = 0, last = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto s = trim(lines[i]);
    if (s.empty() || s.front() == '#') continue;
    if (first == 0) first = static_cast<int>(i) + 1;
    last = static_cast<int>(i) + 1;
  }
  if (first == 0) return std::nullopt;
  return CodeRegion(first, last, "whole body");
}

}  // namespace analysis

/// Splits a source into statements ordered by start line. Throws
/// AnalysisError carrying the offending line number when a line falls
/// outside the supported grammar.
inline std::vector<Statement> extract_statements(const KernelSource& source) {
  using namespace analysis;
  auto lines = group_lines(source.text());
  for (auto& ll : lines) ll.tokens = tokenize(ll.text, ll.start_line);
  std::erase_if(lines, [](const LogicalLine& ll) { return ll.tokens.empty(); });
  const auto modules = imported_names(lines);

  // Indentation structure.
  std::vector<int> stack{0};
  bool expect_indent = false;
  for (const auto& ll : lines) {
    if (expect_indent) {
      if (ll.indent <= stack.back())
        throw AnalysisError(ll.start_line, "expected an indented block");
      stack.push_back(ll.indent);
      expect_indent = false;
    } else if (ll.indent > stack.back()) {
      throw AnalysisError(ll.start_line, "unexpected indent");
    } else {
      while (ll.indent < stack.back()) stack.pop_back();
      if (ll.indent != stack.back())
        throw AnalysisError(ll.start_line, "inconsistent dedent");
    }
    expect_indent = is_op(ll.tokens.back(), ":");
  }
  if (expect_indent)
    throw AnalysisError(lines.back().start_line, "expected an indented block");

  std::vector<Statement> out;
  for (std::size_t i = 0; i < lines.size();) {
    Statement st = classify(lines[i], modules);
    std::size_t j = i + 1;
    if (st.kind == StatementKind::LoopHeader) {
      int end_line = lines[i].end_line;
      while (j < lines.size() && lines[j].indent > lines[i].indent) {
        Statement inner = classify(lines[j], modules);
        st.defs.insert(inner.defs.begin(), inner.defs.end());
        st.uses.insert(inner.uses.begin(), inner.uses.end());
        st.has_call = st.has_call || inner.has_call;
        st.loop_headers += inner.loop_headers;
        st.callees.insert(st.callees.end(), inner.callees.begin(),
                          inner.callees.end());
        end_line = lines[j].end_line;
        ++j;
      }
      st.line_span = CodeRegion(lines[i].start_line, end_line);
    }
    out.push_back(std::move(st));
    i = j;
  }
  return out;
}

namespace analysis {

inline std::string join_callees(const std::vector<std::string>& callees,
                                std::string_view fallback) {
  std::string label;
  for (const auto& c : callees) {
    if (c == "range") continue;
    if (label.find(c) != std::string::npos) continue;
    if (!label.empty()) label += '+';
    label += c;
  }
  return label.empty() ? std::string(fallback) : label;
}

}  // namespace analysis

/// Candidate regions for one optimization kind, sorted by start line and
/// deduplicated. Falls back to a single whole-body region (none for
/// reordering) when the source is outside the analyzable grammar.
inline std::vector<CodeRegion> extract_regions(const KernelSource& source,
                                               ActionKind kind) {
  if (kind == ActionKind::Stop) return {};
  std::vector<Statement> stmts;
  try {
    stmts = extract_statements(source);
  } catch (const AnalysisError&) {
    if (kind == ActionKind::Reordering) return {};
    auto body = analysis::whole_body(source);
    if (!body) return {};
    return {*body};
  }

  std::vector<CodeRegion> regions;
  switch (kind) {
    case ActionKind::Fusion:
      for (std::size_t i = 0; i + 1 < stmts.size(); ++i) {
        const auto& a = stmts[i];
        const auto& b = stmts[i + 1];
        bool linked = std::any_of(a.defs.begin(), a.defs.end(),
                                  [&](const auto& d) { return b.uses.contains(d); });
        if (!linked) continue;
        std::vector<std::string> callees = a.callees;
        callees.insert(callees.end(), b.callees.begin(), b.callees.end());
        regions.emplace_back(a.line_span.start_line(), b.line_span.end_line(),
                             analysis::join_callees(callees, "producer+consumer"));
      }
      break;
    case ActionKind::Tiling:
    case ActionKind::Pipeline:
      for (const auto& s : stmts)
        if (s.kind == StatementKind::LoopHeader || s.kind == StatementKind::Call ||
            s.has_call)
          regions.emplace_back(
              s.line_span.start_line(), s.line_span.end_line(),
              analysis::join_callees(s.callees,
                                     s.kind == StatementKind::LoopHeader
                                         ? "loop"
                                         : "call"));
      break;
    case ActionKind::Reordering:
      for (std::size_t i = 0; i < stmts.size(); ++i) {
        const auto& s = stmts[i];
        if (s.kind != StatementKind::LoopHeader) continue;
        if (s.loop_headers >= 2)
          regions.emplace_back(s.line_span.start_line(), s.line_span.end_line(),
                               "loop nest");
        if (i + 1 < stmts.size() &&
            stmts[i + 1].kind == StatementKind::LoopHeader)
          regions.emplace_back(s.line_span.start_line(),
                               stmts[i + 1].line_span.end_line(),
                               "adjacent loops");
      }
      break;
    case ActionKind::Stop:
      break;
  }

  std::sort(regions.begin(), regions.end(),
            [](const CodeRegion& a, const CodeRegion& b) {
              return std::pair(a.start_line(), a.end_line()) <
                     std::pair(b.start_line(), b.end_line());
            });
  regions.erase(std::unique(regions.begin(), regions.end(),
                            [](const CodeRegion& a, const CodeRegion& b) {
                              return a.same_lines(b);
                            }),
                regions.end());
  return regions;
}

/// True iff `region` lies within the source and starts and ends on statement
/// boundaries. For sources outside the grammar only the whole-body region is
/// valid.
inline bool validate_region(const KernelSource& source,
                            const CodeRegion& region) {
  if (region.start_line() < 1 || region.start_line() > region.end_line() ||
      region.end_line() > source.line_count())
    return false;
  std::vector<Statement> stmts;
  try {
    stmts = extract_statements(source);
  } catch (const AnalysisError&) {
    auto body = analysis::whole_body(source);
    return body && body->same_lines(region);
  }
  bool starts = false, ends = false;
  for (const auto& s : stmts) {
    starts = starts || s.line_span.start_line() == region.start_line();
    ends = ends || s.line_span.end_line() == region.end_line();
  }
  return starts && ends;
}

/// Overload taking raw bounds so that inverted pairs can be checked without
/// constructing an invalid CodeRegion.
inline bool validate_region(const KernelSource& source, int start_line,
                            int end_line) {
  if (start_line < 1 || start_line > end_line) return false;
  return validate_region(source, CodeRegion(start_line, end_line));
}

}  // namespace hkopt

#endif  // HKOPT_REGION_ANALYZER_HPP_
