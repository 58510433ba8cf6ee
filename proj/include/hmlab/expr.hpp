#pragma once

// Closed-form scalar expressions over chart coordinates: parsing, exact
// symbolic differentiation, conservative simplification and evaluation.
//
// Expressions are immutable DAGs of reference-counted nodes; subtrees are
// shared freely, so all operations here are safe for concurrent use.

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace hmlab {

// Exact rational number, always normalized (gcd 1, positive denominator).
class Rational {
 public:
  Rational(std::int64_t num = 0, std::int64_t den = 1);

  std::int64_t num() const noexcept { return num_; }
  std::int64_t den() const noexcept { return den_; }
  bool is_integer() const noexcept { return den_ == 1; }
  double to_double() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }
  std::string str() const;

  friend Rational operator+(Rational a, Rational b);
  friend Rational operator-(Rational a, Rational b);
  friend Rational operator*(Rational a, Rational b);
  friend Rational operator/(Rational a, Rational b);
  Rational operator-() const { return Rational(-num_, den_); }
  friend bool operator==(const Rational&, const Rational&) = default;

 private:
  std::int64_t num_;
  std::int64_t den_;
};

enum class Op : std::uint8_t {
  Constant,
  Parameter,
  Variable,
  Negate,
  Sin,
  Cos,
  Exp,
  Log,
  Sqrt,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
};

const char* op_name(Op op) noexcept;

namespace detail {
struct Node;
}

class Expression {
 public:
  // The constant 0.
  Expression();
  // Implicit so that numeric literals mix with expressions in arithmetic.
  Expression(double value);  // NOLINT(google-explicit-constructor)

  Op op() const noexcept;
  double constant_value() const noexcept;
  const std::string& name() const noexcept;
  // Position of a variable in the point vector it is evaluated against.
  int variable_index() const noexcept;
  const Rational& exponent() const noexcept;
  int arity() const noexcept;
  Expression operand(int i) const;

  bool is_constant() const noexcept { return op() == Op::Constant; }
  bool is_constant(double v) const noexcept { return is_constant() && constant_value() == v; }

  // Identity of the underlying node; equal ids imply equal expressions.
  const detail::Node* id() const noexcept { return node_.get(); }
  std::size_t structural_hash() const noexcept;

  explicit Expression(std::shared_ptr<const detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<const detail::Node>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<const detail::Node> node_;
};

using ParamEnv = std::map<std::string, double, std::less<>>;

// Leaf constructors.
Expression constant(double value);
Expression variable(std::string name, int index);
Expression parameter(std::string name);

// Simplifying constructors: constant folding, 0/1 identities, double
// negation and merging of constant factors. Nothing more aggressive.
Expression operator+(const Expression& a, const Expression& b);
Expression operator-(const Expression& a, const Expression& b);
Expression operator*(const Expression& a, const Expression& b);
Expression operator/(const Expression& a, const Expression& b);
Expression operator-(const Expression& a);
Expression pow(const Expression& base, Rational exponent);
Expression sin(const Expression& a);
Expression cos(const Expression& a);
Expression exp(const Expression& a);
Expression log(const Expression& a);
Expression sqrt(const Expression& a);

// Non-simplifying constructors used by the parser so that parse results are
// exactly the grammar's AST.
Expression make_unary(Op op, const Expression& a);
Expression make_binary(Op op, const Expression& a, const Expression& b);
Expression make_pow(const Expression& base, Rational exponent);

// Rebuilds `e` bottom-up through the simplifying constructors.
Expression simplify(const Expression& e);

// Sum / product helpers that skip zeros and ones.
Expression sum(std::span<const Expression> terms);

// Parses `text` per the expression grammar. Identifiers resolve first against
// `coords` (becoming variables indexed by position) and then `params`.
// Throws ParseError (with byte offset) or UnknownIdentifierError.
Expression parse_expr(std::string_view text, std::span<const std::string> coords,
                      std::span<const std::string> params = {});

// Canonical printer; parse_expr(render(e)) evaluates identically to e.
std::string render(const Expression& e);

// d e / d var. Differentiation is total on the node set.
Expression differentiate(const Expression& e, std::string_view var);

// Memoizing differentiator. Derivatives of shared subexpressions are computed
// once and shared, which keeps repeated (4th order) differentiation linear in
// DAG size. Not thread-safe; use one per building thread.
class Differentiator {
 public:
  Expression operator()(const Expression& e, std::string_view var);
  Expression operator()(const Expression& e, std::span<const std::string> vars);

 private:
  struct Entry {
    Expression source;
    Expression derivative;
  };
  std::map<std::string, std::unordered_map<const detail::Node*, Entry>, std::less<>> memo_;
};

// Replaces variables by name. Variables not in `replacements` are kept.
Expression substitute(const Expression& e,
                      const std::map<std::string, Expression, std::less<>>& replacements);

// substitute() with a memo that persists across calls, so that many
// expressions sharing subterms map to shared results.
class Substituter {
 public:
  explicit Substituter(std::map<std::string, Expression, std::less<>> replacements)
      : replacements_(std::move(replacements)) {}
  Expression operator()(const Expression& e);

 private:
  std::map<std::string, Expression, std::less<>> replacements_;
  std::unordered_map<const detail::Node*, Expression> memo_;
  std::vector<Expression> sources_;  // keeps memo keys alive
};

// Replaces parameter references by their constant values (unbound ones kept).
Expression bind_parameters(const Expression& e, const ParamEnv& env);

std::set<std::string> variables_of(const Expression& e);
std::set<std::string> parameters_of(const Expression& e);
// Number of distinct nodes in the DAG.
std::size_t node_count(const Expression& e);

// Evaluates at `point` (indexed by variable_index()). Throws DomainError
// naming the offending subexpression.
double evaluate(const Expression& e, std::span<const double> point, const ParamEnv& env = {});

// Several expressions compiled into a flat instruction list with common
// subexpressions merged. Compile once, evaluate at many points; evaluation
// is const and may run concurrently.
class Tape {
 public:
  Tape() = default;
  explicit Tape(std::span<const Expression> roots);

  std::size_t output_count() const noexcept { return outputs_.size(); }
  std::size_t instruction_count() const noexcept { return code_.size(); }

  std::vector<double> evaluate(std::span<const double> point, const ParamEnv& env = {}) const;
  // Variant reusing caller-owned scratch storage.
  void evaluate(std::span<const double> point, const ParamEnv& env, std::vector<double>& scratch,
                std::span<double> out) const;

 private:
  struct Instr {
    Op op;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    int index = -1;
    double value = 0.0;
    Rational exponent;
    const detail::Node* node = nullptr;
  };
  std::vector<Instr> code_;
  std::vector<std::uint32_t> outputs_;
  std::vector<std::pair<std::uint32_t, std::string>> params_;
  std::vector<Expression> keep_alive_;
};

// x^r for a rational r, with real odd roots of negative bases. Returns false
// when undefined.
bool rational_pow(double base, const Rational& r, double& out) noexcept;

}  // namespace hmlab
