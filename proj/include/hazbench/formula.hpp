#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "common.hpp"

namespace hazbench {

class FormulaError : public InputError {
 public:
  FormulaError(const std::string& message, std::size_t offset)
      : InputError(message + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Parsed `Surv(time, event) ~ terms` model specification.
struct ModelFormula {
  std::string time_col;
  std::string event_col;
  std::vector<std::string> ph_terms;
  std::vector<std::string> nph_terms;

  bool operator==(const ModelFormula&) const = default;
};

namespace detail {

class FormulaParser {
 public:
  explicit FormulaParser(std::string_view text) : text_(text) {}

  ModelFormula parse() {
    ModelFormula f;
    expect_word("Surv");
    expect('(');
    f.time_col = response_ident();
    expect(',');
    f.event_col = response_ident();
    expect(')');
    expect('~');
    do {
      term(f);
    } while (accept('+'));
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected character '" + std::string(1, text_[pos_]) + "'");
    return f;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw FormulaError("formula syntax error: " + msg, pos_); }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  void expect_word(std::string_view w) {
    skip_ws();
    if (text_.substr(pos_, w.size()) != w) fail("expected '" + std::string(w) + "'");
    pos_ += w.size();
  }

  static bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
  static bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  }

  std::string ident() {
    skip_ws();
    if (pos_ >= text_.size()) fail("expected a term, found end of input");
    if (!ident_start(text_[pos_])) fail("expected identifier");
    const std::size_t start = pos_;
    while (pos_ < text_.size() && ident_char(text_[pos_])) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  std::string response_ident() {
    skip_ws();
    if (pos_ < text_.size() && (text_[pos_] == ',' || text_[pos_] == ')')) fail("empty response");
    return ident();
  }

  void add(std::vector<std::string>& into, const ModelFormula& f, std::string name, std::size_t at) {
    auto dup = [&](const std::vector<std::string>& v) { return std::find(v.begin(), v.end(), name) != v.end(); };
    if (dup(f.ph_terms) || dup(f.nph_terms)) throw FormulaError("duplicate term '" + name + "'", at);
    into.push_back(std::move(name));
  }

  void term(ModelFormula& f) {
    skip_ws();
    const std::size_t at = pos_;
    std::string name = ident();
    skip_ws();
    if ((name == "nph" || name == "const") && pos_ < text_.size() && text_[pos_] == '(') {
      ++pos_;
      std::string inner = ident();
      expect(')');
      add(name == "nph" ? f.nph_terms : f.ph_terms, f, std::move(inner), at);
    } else {
      add(f.ph_terms, f, std::move(name), at);
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parse a model formula.
///
///   model := "Surv(" ident "," ident ")" "~" term ("+" term)*
///   term  := ident | "nph(" ident ")" | "const(" ident ")"
///
/// Bare and `const()` terms are proportional-hazards covariates; `nph()` terms
/// are non-proportional. Whitespace is insignificant.
inline ModelFormula parse_formula(std::string_view text) { return detail::FormulaParser(text).parse(); }

/// Canonical text form: PH terms bare, then NPH terms wrapped in nph().
inline std::string render_formula(const ModelFormula& f) {
  std::string out = "Surv(" + f.time_col + ", " + f.event_col + ") ~ ";
  bool first = true;
  for (const auto& t : f.ph_terms) {
    out += (first ? "" : " + ") + t;
    first = false;
  }
  for (const auto& t : f.nph_terms) {
    out += (first ? "" : " + ") + ("nph(" + t + ")");
    first = false;
  }
  return out;
}

}  // namespace hazbench
