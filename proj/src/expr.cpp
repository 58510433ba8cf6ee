#include "hmlab/expr.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <numeric>

#include "expr_node.hpp"
#include "hmlab/error.hpp"

namespace hmlab {

Rational::Rational(std::int64_t num, std::int64_t den) {
  if (den == 0) throw DomainError("expr", "rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
  num_ = g == 0 ? 0 : num / g;
  den_ = g == 0 ? 1 : den / g;
}

std::string Rational::str() const {
  return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_);
}

Rational operator+(Rational a, Rational b) { return {a.num_ * b.den_ + b.num_ * a.den_, a.den_ * b.den_}; }
Rational operator-(Rational a, Rational b) { return {a.num_ * b.den_ - b.num_ * a.den_, a.den_ * b.den_}; }
Rational operator*(Rational a, Rational b) { return {a.num_ * b.num_, a.den_ * b.den_}; }
Rational operator/(Rational a, Rational b) { return {a.num_ * b.den_, a.den_ * b.num_}; }

const char* op_name(Op op) noexcept {
  switch (op) {
    case Op::Constant: return "const";
    case Op::Parameter: return "param";
    case Op::Variable: return "var";
    case Op::Negate: return "neg";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sqrt: return "sqrt";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Pow: return "pow";
  }
  return "?";
}

bool rational_pow(double base, const Rational& r, double& out) noexcept {
  if (r.is_integer()) {
    if (base == 0.0 && r.num() < 0) return false;
    out = std::pow(base, static_cast<double>(r.num()));
    return true;
  }
  if (base > 0.0) {
    out = std::pow(base, r.to_double());
    return true;
  }
  if (base == 0.0) {
    if (r.num() < 0) return false;
    out = 0.0;
    return true;
  }
  if (r.den() % 2 == 0) return false;
  const double mag = std::pow(-base, r.to_double());
  out = (r.num() % 2 == 0) ? mag : -mag;
  return true;
}

namespace detail {

namespace {

std::size_t mix(std::size_t seed, std::size_t v) {
  return seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}

}  // namespace

std::shared_ptr<const Node> make_node(Node n) {
  std::size_t h = std::hash<int>{}(static_cast<int>(n.op));
  switch (n.op) {
    case Op::Constant: h = mix(h, std::hash<double>{}(n.value)); break;
    case Op::Parameter: h = mix(h, std::hash<std::string>{}(n.name)); break;
    case Op::Variable:
      h = mix(h, std::hash<std::string>{}(n.name));
      h = mix(h, static_cast<std::size_t>(n.index));
      break;
    case Op::Pow:
      h = mix(h, static_cast<std::size_t>(n.exponent.num()));
      h = mix(h, static_cast<std::size_t>(n.exponent.den()));
      break;
    default: break;
  }
  if (n.lhs) h = mix(h, n.lhs->hash);
  if (n.rhs) h = mix(h, n.rhs->hash);
  n.hash = h;
  return std::make_shared<const Node>(std::move(n));
}

}  // namespace detail

using detail::make_node;
using detail::Node;

namespace {

const std::shared_ptr<const Node>& zero_node() {
  static const auto z = [] {
    Node n;
    n.op = Op::Constant;
    n.value = 0.0;
    return make_node(std::move(n));
  }();
  return z;
}

// Folds a unary function of a constant; returns false if the result is not
// finite (left unevaluated so the domain error surfaces at evaluation).
bool fold_unary(Op op, double x, double& out) {
  switch (op) {
    case Op::Negate: out = -x; break;
    case Op::Sin: out = std::sin(x); break;
    case Op::Cos: out = std::cos(x); break;
    case Op::Exp: out = std::exp(x); break;
    case Op::Log:
      if (x <= 0.0) return false;
      out = std::log(x);
      break;
    case Op::Sqrt:
      if (x < 0.0) return false;
      out = std::sqrt(x);
      break;
    default: return false;
  }
  return std::isfinite(out);
}

}  // namespace

Expression::Expression() : node_(zero_node()) {}
Expression::Expression(double value) : Expression(constant(value)) {}

Op Expression::op() const noexcept { return node_->op; }
double Expression::constant_value() const noexcept { return node_->value; }
const std::string& Expression::name() const noexcept { return node_->name; }
int Expression::variable_index() const noexcept { return node_->index; }
const Rational& Expression::exponent() const noexcept { return node_->exponent; }
std::size_t Expression::structural_hash() const noexcept { return node_->hash; }

int Expression::arity() const noexcept {
  if (node_->rhs) return 2;
  if (node_->lhs) return 1;
  return 0;
}

Expression Expression::operand(int i) const { return Expression(i == 0 ? node_->lhs : node_->rhs); }

Expression constant(double value) {
  if (value == 0.0 && !std::signbit(value)) return Expression(zero_node());
  Node n;
  n.op = Op::Constant;
  n.value = value;
  return Expression(make_node(std::move(n)));
}

Expression variable(std::string name, int index) {
  Node n;
  n.op = Op::Variable;
  n.name = std::move(name);
  n.index = index;
  return Expression(make_node(std::move(n)));
}

Expression parameter(std::string name) {
  Node n;
  n.op = Op::Parameter;
  n.name = std::move(name);
  return Expression(make_node(std::move(n)));
}

Expression make_unary(Op op, const Expression& a) {
  Node n;
  n.op = op;
  n.lhs = a.node();
  return Expression(make_node(std::move(n)));
}

Expression make_binary(Op op, const Expression& a, const Expression& b) {
  Node n;
  n.op = op;
  n.lhs = a.node();
  n.rhs = b.node();
  return Expression(make_node(std::move(n)));
}

Expression make_pow(const Expression& base, Rational exponent) {
  Node n;
  n.op = Op::Pow;
  n.lhs = base.node();
  n.exponent = exponent;
  return Expression(make_node(std::move(n)));
}

Expression operator+(const Expression& a, const Expression& b) {
  if (a.is_constant() && b.is_constant()) return constant(a.constant_value() + b.constant_value());
  if (a.is_constant(0.0)) return b;
  if (b.is_constant(0.0)) return a;
  if (b.op() == Op::Negate) return a - b.operand(0);
  return make_binary(Op::Add, a, b);
}

Expression operator-(const Expression& a, const Expression& b) {
  if (a.is_constant() && b.is_constant()) return constant(a.constant_value() - b.constant_value());
  if (b.is_constant(0.0)) return a;
  if (a.is_constant(0.0)) return -b;
  if (a.id() == b.id()) return constant(0.0);
  if (b.op() == Op::Negate) return a + b.operand(0);
  return make_binary(Op::Sub, a, b);
}

Expression operator-(const Expression& a) {
  if (a.is_constant()) return constant(-a.constant_value());
  if (a.op() == Op::Negate) return a.operand(0);
  return make_unary(Op::Negate, a);
}

Expression operator*(const Expression& a, const Expression& b) {
  if (a.is_constant() && b.is_constant()) return constant(a.constant_value() * b.constant_value());
  // Constants go on the left.
  if (b.is_constant()) return b * a;
  if (a.is_constant()) {
    const double c = a.constant_value();
    if (c == 0.0) return constant(0.0);
    if (c == 1.0) return b;
    if (c == -1.0) return -b;
    if (b.op() == Op::Mul && b.operand(0).is_constant())
      return constant(c * b.operand(0).constant_value()) * b.operand(1);
    if (b.op() == Op::Negate) return constant(-c) * b.operand(0);
  }
  if (a.op() == Op::Negate && b.op() == Op::Negate) return a.operand(0) * b.operand(0);
  if (a.op() == Op::Negate) return -(a.operand(0) * b);
  if (b.op() == Op::Negate) return -(a * b.operand(0));
  if (a.op() == Op::Mul && a.operand(0).is_constant())
    return a.operand(0) * (a.operand(1) * b);
  if (b.op() == Op::Mul && b.operand(0).is_constant())
    return b.operand(0) * (a * b.operand(1));
  return make_binary(Op::Mul, a, b);
}

Expression operator/(const Expression& a, const Expression& b) {
  if (a.is_constant() && b.is_constant() && b.constant_value() != 0.0)
    return constant(a.constant_value() / b.constant_value());
  if (a.is_constant(0.0) && !b.is_constant()) return constant(0.0);
  if (b.is_constant(1.0)) return a;
  if (b.is_constant(-1.0)) return -a;
  if (a.id() == b.id() && !a.is_constant()) return constant(1.0);
  if (a.op() == Op::Negate) return -(a.operand(0) / b);
  if (b.op() == Op::Negate) return -(a / b.operand(0));
  return make_binary(Op::Div, a, b);
}

Expression pow(const Expression& base, Rational exponent) {
  if (exponent == Rational(0)) return constant(1.0);
  if (exponent == Rational(1)) return base;
  if (base.is_constant()) {
    double out = 0.0;
    if (rational_pow(base.constant_value(), exponent, out) && std::isfinite(out)) return constant(out);
  }
  return make_pow(base, exponent);
}

namespace {

Expression unary_fold(Op op, const Expression& a) {
  if (a.is_constant()) {
    double out = 0.0;
    if (fold_unary(op, a.constant_value(), out)) return constant(out);
  }
  return make_unary(op, a);
}

}  // namespace

Expression sin(const Expression& a) { return unary_fold(Op::Sin, a); }
Expression cos(const Expression& a) { return unary_fold(Op::Cos, a); }
Expression exp(const Expression& a) { return unary_fold(Op::Exp, a); }
Expression log(const Expression& a) { return unary_fold(Op::Log, a); }
Expression sqrt(const Expression& a) { return unary_fold(Op::Sqrt, a); }

Expression sum(std::span<const Expression> terms) {
  Expression acc = constant(0.0);
  for (const auto& t : terms) acc = acc + t;
  return acc;
}

namespace {

template <typename Fn>
Expression rebuild(const Expression& e, std::unordered_map<const Node*, Expression>& memo, Fn&& leaf) {
  if (auto it = memo.find(e.id()); it != memo.end()) return it->second;
  Expression out;
  switch (e.op()) {
    case Op::Constant:
    case Op::Parameter:
    case Op::Variable: out = leaf(e); break;
    case Op::Negate: out = -rebuild(e.operand(0), memo, leaf); break;
    case Op::Sin: out = sin(rebuild(e.operand(0), memo, leaf)); break;
    case Op::Cos: out = cos(rebuild(e.operand(0), memo, leaf)); break;
    case Op::Exp: out = exp(rebuild(e.operand(0), memo, leaf)); break;
    case Op::Log: out = log(rebuild(e.operand(0), memo, leaf)); break;
    case Op::Sqrt: out = sqrt(rebuild(e.operand(0), memo, leaf)); break;
    case Op::Pow: out = pow(rebuild(e.operand(0), memo, leaf), e.exponent()); break;
    case Op::Add: out = rebuild(e.operand(0), memo, leaf) + rebuild(e.operand(1), memo, leaf); break;
    case Op::Sub: out = rebuild(e.operand(0), memo, leaf) - rebuild(e.operand(1), memo, leaf); break;
    case Op::Mul: out = rebuild(e.operand(0), memo, leaf) * rebuild(e.operand(1), memo, leaf); break;
    case Op::Div: out = rebuild(e.operand(0), memo, leaf) / rebuild(e.operand(1), memo, leaf); break;
  }
  memo.emplace(e.id(), out);
  return out;
}

template <typename Fn>
void visit_nodes(const Expression& e, std::unordered_map<const Node*, bool>& seen, Fn&& fn) {
  if (!seen.emplace(e.id(), true).second) return;
  fn(e);
  for (int i = 0; i < e.arity(); ++i) visit_nodes(e.operand(i), seen, fn);
}

}  // namespace

Expression simplify(const Expression& e) {
  std::unordered_map<const Node*, Expression> memo;
  return rebuild(e, memo, [](const Expression& leaf) { return leaf; });
}

Expression substitute(const Expression& e,
                      const std::map<std::string, Expression, std::less<>>& replacements) {
  std::unordered_map<const Node*, Expression> memo;
  return rebuild(e, memo, [&](const Expression& leaf) {
    if (leaf.op() == Op::Variable) {
      if (auto it = replacements.find(leaf.name()); it != replacements.end()) return it->second;
    }
    return leaf;
  });
}

Expression Substituter::operator()(const Expression& e) {
  sources_.push_back(e);
  return rebuild(e, memo_, [&](const Expression& leaf) {
    if (leaf.op() == Op::Variable) {
      if (auto it = replacements_.find(leaf.name()); it != replacements_.end()) return it->second;
    }
    return leaf;
  });
}

Expression bind_parameters(const Expression& e, const ParamEnv& env) {
  std::unordered_map<const Node*, Expression> memo;
  return rebuild(e, memo, [&](const Expression& leaf) {
    if (leaf.op() == Op::Parameter) {
      if (auto it = env.find(leaf.name()); it != env.end()) return constant(it->second);
    }
    return leaf;
  });
}

std::set<std::string> variables_of(const Expression& e) {
  std::set<std::string> out;
  std::unordered_map<const Node*, bool> seen;
  visit_nodes(e, seen, [&](const Expression& n) {
    if (n.op() == Op::Variable) out.insert(n.name());
  });
  return out;
}

std::set<std::string> parameters_of(const Expression& e) {
  std::set<std::string> out;
  std::unordered_map<const Node*, bool> seen;
  visit_nodes(e, seen, [&](const Expression& n) {
    if (n.op() == Op::Parameter) out.insert(n.name());
  });
  return out;
}

std::size_t node_count(const Expression& e) {
  std::unordered_map<const Node*, bool> seen;
  visit_nodes(e, seen, [](const Expression&) {});
  return seen.size();
}

// ---------------------------------------------------------------------------
// Differentiation

Expression differentiate(const Expression& e, std::string_view var) {
  Differentiator d;
  return d(e, var);
}

Expression Differentiator::operator()(const Expression& e, std::span<const std::string> vars) {
  Expression out = e;
  for (const auto& v : vars) out = (*this)(out, v);
  return out;
}

Expression Differentiator::operator()(const Expression& e, std::string_view var) {
  auto memo_it = memo_.find(var);
  if (memo_it == memo_.end()) memo_it = memo_.emplace(std::string(var), decltype(memo_)::mapped_type{}).first;
  auto& memo = memo_it->second;

  std::function<Expression(const Expression&)> d = [&](const Expression& x) -> Expression {
    if (auto it = memo.find(x.id()); it != memo.end()) return it->second.derivative;
    Expression out;
    switch (x.op()) {
      case Op::Constant:
      case Op::Parameter: out = constant(0.0); break;
      case Op::Variable: out = constant(x.name() == var ? 1.0 : 0.0); break;
      case Op::Negate: out = -d(x.operand(0)); break;
      case Op::Sin: out = cos(x.operand(0)) * d(x.operand(0)); break;
      case Op::Cos: out = -(sin(x.operand(0)) * d(x.operand(0))); break;
      case Op::Exp: out = x * d(x.operand(0)); break;
      case Op::Log: out = d(x.operand(0)) / x.operand(0); break;
      case Op::Sqrt: out = d(x.operand(0)) / (constant(2.0) * x); break;
      case Op::Add: out = d(x.operand(0)) + d(x.operand(1)); break;
      case Op::Sub: out = d(x.operand(0)) - d(x.operand(1)); break;
      case Op::Mul: {
        const Expression a = x.operand(0), b = x.operand(1);
        out = d(a) * b + a * d(b);
        break;
      }
      case Op::Div: {
        const Expression a = x.operand(0), b = x.operand(1);
        const Expression db = d(b);
        if (db.is_constant(0.0)) {
          out = d(a) / b;
        } else {
          out = d(a) / b - (a * db) / pow(b, Rational(2));
        }
        break;
      }
      case Op::Pow: {
        const Rational r = x.exponent();
        const Expression da = d(x.operand(0));
        if (da.is_constant(0.0)) {
          out = constant(0.0);
        } else {
          out = constant(r.to_double()) * pow(x.operand(0), r - Rational(1)) * da;
        }
        break;
      }
    }
    memo.emplace(x.id(), Entry{x, out});
    return out;
  };
  return d(e);
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

int precedence(const Expression& e) {
  switch (e.op()) {
    case Op::Add:
    case Op::Sub: return 1;
    case Op::Mul:
    case Op::Div: return 2;
    case Op::Negate: return 3;
    case Op::Pow: return 4;
    case Op::Constant: return e.constant_value() < 0.0 || std::signbit(e.constant_value()) ? 3 : 5;
    default: return 5;
  }
}

std::string number_text(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void render_into(const Expression& e, std::string& out);

void render_operand(const Expression& e, bool parens, std::string& out) {
  if (parens) out += '(';
  render_into(e, out);
  if (parens) out += ')';
}

void render_into(const Expression& e, std::string& out) {
  switch (e.op()) {
    case Op::Constant: {
      const double v = e.constant_value();
      if (std::signbit(v)) {
        out += "(-";
        out += number_text(-v);
        out += ')';
      } else {
        out += number_text(v);
      }
      return;
    }
    case Op::Parameter:
    case Op::Variable: out += e.name(); return;
    case Op::Negate:
      out += '-';
      render_operand(e.operand(0), precedence(e.operand(0)) < 3, out);
      return;
    case Op::Sin:
    case Op::Cos:
    case Op::Exp:
    case Op::Log:
    case Op::Sqrt:
      out += op_name(e.op());
      out += '(';
      render_into(e.operand(0), out);
      out += ')';
      return;
    case Op::Pow: {
      const Expression base = e.operand(0);
      const bool atom = precedence(base) == 5 && base.op() != Op::Pow;
      render_operand(base, !atom, out);
      out += '^';
      const Rational r = e.exponent();
      if (r.is_integer() && r.num() >= 0) {
        out += r.str();
      } else {
        out += '(';
        out += r.str();
        out += ')';
      }
      return;
    }
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: {
      const int p = precedence(e);
      const char sym = e.op() == Op::Add ? '+' : e.op() == Op::Sub ? '-' : e.op() == Op::Mul ? '*' : '/';
      render_operand(e.operand(0), precedence(e.operand(0)) < p, out);
      out += ' ';
      out += sym;
      out += ' ';
      // Right operands at equal precedence keep their parentheses so the
      // association (and hence floating-point result) is preserved.
      const int rp = precedence(e.operand(1));
      render_operand(e.operand(1), rp <= p, out);
      return;
    }
  }
}

}  // namespace

std::string render(const Expression& e) {
  std::string out;
  render_into(e, out);
  return out;
}

}  // namespace hmlab
