#include <cctype>
#include <charconv>
#include <optional>

#include "hmlab/error.hpp"
#include "hmlab/expr.hpp"

namespace hmlab {

namespace {

// Recursive-descent parser for
//   expr  := term (("+"|"-") term)*
//   term  := unary (("*"|"/") unary)*
//   unary := "-" unary | power
//   power := atom ("^" signed_rational)*      (right-associative)
//   atom  := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")"
class Parser {
 public:
  Parser(std::string_view text, std::span<const std::string> coords, std::span<const std::string> params)
      : text_(text), coords_(coords), params_(params) {}

  Expression parse() {
    Expression e = expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { fail_at(what, pos_); }
  [[noreturn]] void fail_at(const std::string& what, std::size_t at) const {
    throw ParseError("expr", "syntax error at byte " + std::to_string(at) + ": " + what, at);
  }

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
    if (!accept(c)) {
      if (pos_ >= text_.size()) fail(std::string("expected '") + c + "' before end of input");
      fail(std::string("expected '") + c + "'");
    }
  }

  Expression expr() {
    Expression lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = make_binary(Op::Add, lhs, term());
      } else if (accept('-')) {
        lhs = make_binary(Op::Sub, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  Expression term() {
    Expression lhs = unary();
    for (;;) {
      if (accept('*')) {
        lhs = make_binary(Op::Mul, lhs, unary());
      } else if (accept('/')) {
        lhs = make_binary(Op::Div, lhs, unary());
      } else {
        return lhs;
      }
    }
  }

  Expression unary() {
    if (accept('-')) return make_unary(Op::Negate, unary());
    return power();
  }

  Expression power() {
    Expression base = atom();
    skip_ws();
    if (!accept('^')) return base;
    return make_pow(base, exponent_chain());
  }

  // signed_rational ("^" signed_rational)*, folded right to left.
  Rational exponent_chain() {
    const std::size_t at = pos_;
    Rational r = signed_rational();
    if (!accept('^')) return r;
    const Rational rest = exponent_chain();
    if (!rest.is_integer()) fail_at("exponent of an exponent must be an integer", at);
    return rational_power(r, rest.num(), at);
  }

  Rational rational_power(Rational base, std::int64_t k, std::size_t at) const {
    if (k < 0) {
      if (base.num() == 0) fail_at("zero raised to a negative power", at);
      base = Rational(1) / base;
      k = -k;
    }
    if (k > 62) fail_at("exponent too large", at);
    Rational out(1);
    for (std::int64_t i = 0; i < k; ++i) out = out * base;
    return out;
  }

  Rational signed_rational() {
    if (accept('(')) {
      Rational r = signed_rational();
      expect(')');
      return r;
    }
    bool negative = false;
    if (accept('-')) {
      negative = true;
    } else {
      accept('+');
    }
    std::int64_t num = integer();
    std::int64_t den = 1;
    // "/" continues the exponent only when an integer follows; otherwise it
    // is a division at term level ("x^2/y").
    if (slash_then_digit()) {
      accept('/');
      const std::size_t at = pos_;
      den = integer();
      if (den == 0) fail_at("zero denominator in exponent", at);
    }
    return Rational(negative ? -num : num, den);
  }

  bool slash_then_digit() {
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != '/') return false;
    std::size_t p = pos_ + 1;
    while (p < text_.size() && std::isspace(static_cast<unsigned char>(text_[p]))) ++p;
    return p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]));
  }

  std::int64_t integer() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (start == pos_) fail("expected an integer exponent");
    std::int64_t v = 0;
    auto res = std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (res.ec != std::errc()) fail_at("integer out of range", start);
    return v;
  }

  Expression atom() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      Expression e = expr();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    fail("unexpected '" + std::string(1, c) + "'");
  }

  Expression number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
        ++n;
      }
      return n;
    };
    std::size_t n = digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      n += digits();
    }
    if (n == 0) fail_at("malformed number", start);
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t save = pos_;
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (digits() == 0) pos_ = save;
    }
    double v = 0.0;
    auto res = std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (res.ec != std::errc() || res.ptr != text_.data() + pos_) fail_at("malformed number", start);
    return constant(v);
  }

  Expression identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    const std::string token(text_.substr(start, pos_ - start));
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == '(') {
      std::optional<Op> fn;
      if (token == "sin") fn = Op::Sin;
      if (token == "cos") fn = Op::Cos;
      if (token == "exp") fn = Op::Exp;
      if (token == "log") fn = Op::Log;
      if (token == "sqrt") fn = Op::Sqrt;
      if (!fn) throw UnknownIdentifierError(token, start);
      ++pos_;
      Expression arg = expr();
      expect(')');
      return make_unary(*fn, arg);
    }
    for (std::size_t i = 0; i < coords_.size(); ++i) {
      if (coords_[i] == token) return variable(token, static_cast<int>(i));
    }
    for (const auto& p : params_) {
      if (p == token) return parameter(token);
    }
    throw UnknownIdentifierError(token, start);
  }

  std::string_view text_;
  std::span<const std::string> coords_;
  std::span<const std::string> params_;
  std::size_t pos_ = 0;
};

}  // namespace

Expression parse_expr(std::string_view text, std::span<const std::string> coords,
                      std::span<const std::string> params) {
  return Parser(text, coords, params).parse();
}

}  // namespace hmlab
