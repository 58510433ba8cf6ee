#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "hmlab/error.hpp"
#include "hmlab/expr.hpp"
#include "support/random_expr.hpp"

namespace hmlab {
namespace {

const std::vector<std::string> kXY = {"x1", "x2"};

double central_fd(const Expression& e, int var, std::vector<double> p, double h, const ParamEnv& env = {}) {
  const double x0 = p[static_cast<std::size_t>(var)];
  p[static_cast<std::size_t>(var)] = x0 + h;
  const double fp = evaluate(e, p, env);
  p[static_cast<std::size_t>(var)] = x0 - h;
  const double fm = evaluate(e, p, env);
  return (fp - fm) / (2.0 * h);
}

TEST(Parse, SumOfPowerAndSine) {
  const Expression e = parse_expr("x1^2 + sin(x2)", kXY);
  ASSERT_EQ(e.op(), Op::Add);
  const Expression lhs = e.operand(0);
  ASSERT_EQ(lhs.op(), Op::Pow);
  EXPECT_EQ(lhs.exponent(), Rational(2));
  EXPECT_EQ(lhs.operand(0).op(), Op::Variable);
  EXPECT_EQ(lhs.operand(0).name(), "x1");
  ASSERT_EQ(e.operand(1).op(), Op::Sin);
  EXPECT_EQ(e.operand(1).operand(0).name(), "x2");
}

TEST(Parse, ParameterInsideExponential) {
  const std::vector<std::string> params = {"R"};
  const Expression e = parse_expr("exp(-x2/R)", kXY, params);
  ASSERT_EQ(e.op(), Op::Exp);
  const Expression q = e.operand(0);
  ASSERT_EQ(q.op(), Op::Div);
  ASSERT_EQ(q.operand(0).op(), Op::Negate);
  EXPECT_EQ(q.operand(0).operand(0).name(), "x2");
  EXPECT_EQ(q.operand(1).op(), Op::Parameter);
  EXPECT_EQ(q.operand(1).name(), "R");
}

TEST(Parse, Quotient) {
  const Expression e = parse_expr("x1/(x1^2+x2^2)", kXY);
  ASSERT_EQ(e.op(), Op::Div);
  EXPECT_EQ(e.operand(0).name(), "x1");
  const Expression den = e.operand(1);
  ASSERT_EQ(den.op(), Op::Add);
  EXPECT_EQ(den.operand(0).op(), Op::Pow);
  EXPECT_EQ(den.operand(1).op(), Op::Pow);
}

TEST(Parse, Precedence) {
  // pow binds tighter than unary minus, which binds tighter than mul.
  const Expression e = parse_expr("-x1^2*x2", kXY);
  ASSERT_EQ(e.op(), Op::Mul);
  ASSERT_EQ(e.operand(0).op(), Op::Negate);
  EXPECT_EQ(e.operand(0).operand(0).op(), Op::Pow);
  // Left-associative subtraction.
  const Expression s = parse_expr("x1 - x2 - 1", kXY);
  ASSERT_EQ(s.op(), Op::Sub);
  EXPECT_EQ(s.operand(0).op(), Op::Sub);
}

TEST(Parse, RationalExponents) {
  EXPECT_EQ(parse_expr("x1^(5/3)", kXY).exponent(), Rational(5, 3));
  EXPECT_EQ(parse_expr("x1^-2", kXY).exponent(), Rational(-2));
  EXPECT_EQ(parse_expr("x1^(-8/5)", kXY).exponent(), Rational(-8, 5));
  EXPECT_EQ(parse_expr("x1^2/3", kXY).exponent(), Rational(2, 3));
  // Right-associative chain folds exactly.
  EXPECT_EQ(parse_expr("x1^2^3", kXY).exponent(), Rational(8));
  // A slash followed by a non-integer is a division.
  EXPECT_EQ(parse_expr("x1^2/x2", kXY).op(), Op::Div);
  // m/(m-2) stays exact for every m >= 3.
  for (int m = 3; m <= 12; ++m) {
    const Rational r(m, m - 2);
    const Expression e = parse_expr("x1^(" + r.str() + ")", kXY);
    EXPECT_EQ(e.exponent(), r);
  }
}

TEST(Parse, SyntaxErrorsCarryByteOffsets) {
  try {
    parse_expr("x1 + * x2", kXY);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 5u);
    EXPECT_EQ(e.module(), "expr");
  }
  try {
    parse_expr("(x1 + x2", kXY);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 8u);
  }
  EXPECT_THROW(parse_expr("x1^y", kXY), ParseError);
  EXPECT_THROW(parse_expr("x1^(1/0)", kXY), ParseError);
}

TEST(Parse, UnknownIdentifiersAreNamed) {
  try {
    parse_expr("x1 + foo", kXY);
    FAIL();
  } catch (const UnknownIdentifierError& e) {
    EXPECT_EQ(e.token(), "foo");
    EXPECT_EQ(e.offset(), 5u);
  }
  EXPECT_THROW(parse_expr("tan(x1)", kXY), UnknownIdentifierError);
  EXPECT_THROW(parse_expr("R * x1", kXY), UnknownIdentifierError);
}

TEST(Differentiate, SineTerm) {
  const Expression d = differentiate(parse_expr("x1^2 + sin(x2)", kXY), "x2");
  EXPECT_EQ(render(d), "cos(x2)");
}

TEST(Differentiate, QuotientAgainstFiniteDifference) {
  const Expression e = parse_expr("x1/(x1^2+x2^2)", kXY);
  const std::vector<double> p = {1.0, 1.0};
  const double fd = central_fd(e, 0, p, 1e-5);
  EXPECT_NEAR(fd, 0.0, 1e-9);
  EXPECT_NEAR(evaluate(differentiate(e, "x1"), p), fd, 1e-9);
}

TEST(Differentiate, FourthDerivativeOfQuartic) {
  Expression e = parse_expr("x1^4", kXY);
  for (int k = 0; k < 4; ++k) e = differentiate(e, "x1");
  ASSERT_TRUE(e.is_constant());
  EXPECT_EQ(e.constant_value(), 24.0);
}

TEST(Differentiate, HighOrderStaysCompact) {
  const Expression e = parse_expr("x1/(x1^2+x2^2)^2 + exp(-x2)*sin(x1*x2)", kXY);
  Differentiator d;
  Expression cur = e;
  for (const char* v : {"x1", "x2", "x1", "x2"}) cur = d(cur, v);
  EXPECT_LT(node_count(cur), 2000u);
}

TEST(Differentiate, OtherVariableIsZero) {
  EXPECT_TRUE(differentiate(parse_expr("sin(x1)", kXY), "x2").is_constant(0.0));
}

TEST(Evaluate, Examples) {
  EXPECT_DOUBLE_EQ(evaluate(parse_expr("x1^2 + sin(x2)", kXY), std::vector<double>{2.0, 0.0}), 4.0);
  const std::vector<std::string> params = {"R"};
  EXPECT_DOUBLE_EQ(evaluate(parse_expr("exp(-x2/R)", kXY, params), std::vector<double>{0.0, 1.0}, {{"R", 1.0}}),
                   0.36787944117144233);
  const std::vector<std::string> x4 = {"x1", "x2", "x3", "x4"};
  EXPECT_DOUBLE_EQ(evaluate(parse_expr("(x1^2+x2^2+x3^2+x4^2)^2", x4), std::vector<double>{1, 0, 0, 0}), 1.0);
}

TEST(Evaluate, DomainErrorsNameTheNode) {
  const std::vector<double> p = {-1.0, 0.0};
  try {
    evaluate(parse_expr("1 + log(x1)", kXY), p);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("log(x1)"), std::string::npos);
  }
  EXPECT_THROW(evaluate(parse_expr("sqrt(x1)", kXY), p), DomainError);
  EXPECT_THROW(evaluate(parse_expr("1/x2", kXY), p), DomainError);
  EXPECT_THROW(evaluate(parse_expr("x1^(1/2)", kXY), p), DomainError);
  const std::vector<std::string> params = {"R"};
  EXPECT_THROW(evaluate(parse_expr("R*x1", kXY, params), p), DomainError);
}

TEST(Evaluate, OddRootsOfNegativeBases) {
  const std::vector<double> p = {-8.0, 0.0};
  EXPECT_NEAR(evaluate(parse_expr("x1^(1/3)", kXY), p), -2.0, 1e-14);
  EXPECT_NEAR(evaluate(parse_expr("x1^(2/3)", kXY), p), 4.0, 1e-14);
}

TEST(Simplify, ConservativeRules) {
  const Expression x = variable("x1", 0);
  EXPECT_EQ((x * 1.0).id(), x.id());
  EXPECT_TRUE((x * 0.0).is_constant(0.0));
  EXPECT_EQ((x + 0.0).id(), x.id());
  EXPECT_EQ((-(-x)).id(), x.id());
  EXPECT_TRUE((x - x).is_constant(0.0));
  EXPECT_EQ(pow(x, Rational(1)).id(), x.id());
  EXPECT_TRUE(pow(x, Rational(0)).is_constant(1.0));
  const Expression folded = constant(2.0) * (constant(3.0) * x);
  ASSERT_EQ(folded.op(), Op::Mul);
  EXPECT_TRUE(folded.operand(0).is_constant(6.0));
  EXPECT_TRUE((constant(2.0) + constant(3.0)).is_constant(5.0));
}

TEST(Tape, MatchesTreeEvaluationAndMergesCommonSubexpressions) {
  const Expression a = parse_expr("sin(x1*x2) + (x1*x2)^2", kXY);
  const Expression b = parse_expr("exp(x1*x2)", kXY);
  const std::vector<Expression> roots = {a, b};
  const Tape tape(roots);
  const std::vector<double> p = {0.3, -1.2};
  const auto out = tape.evaluate(p);
  EXPECT_DOUBLE_EQ(out[0], evaluate(a, p));
  EXPECT_DOUBLE_EQ(out[1], evaluate(b, p));
  // x1, x2, x1*x2, sin, pow, add, exp: parsed twice but stored once.
  EXPECT_EQ(tape.instruction_count(), 7u);
}

TEST(Tape, ParametersAreLookedUpPerCall) {
  const std::vector<std::string> params = {"R"};
  const std::vector<Expression> roots = {parse_expr("x1/R", kXY, params)};
  const Tape tape(roots);
  const std::vector<double> p = {3.0, 0.0};
  EXPECT_DOUBLE_EQ(tape.evaluate(p, {{"R", 2.0}})[0], 1.5);
  EXPECT_DOUBLE_EQ(tape.evaluate(p, {{"R", 3.0}})[0], 1.0);
  EXPECT_THROW(tape.evaluate(p), DomainError);
}

TEST(Substitute, ComposesAndBindsParameters) {
  const std::vector<std::string> y = {"y1"};
  const Expression h = parse_expr("1/y1^2", y);
  const Expression phi = parse_expr("exp(x1)", kXY);
  const Expression composed = substitute(h, {{"y1", phi}});
  const std::vector<double> p = {0.5, 0.0};
  EXPECT_NEAR(evaluate(composed, p), std::exp(-1.0), 1e-15);
  const std::vector<std::string> params = {"R"};
  const Expression bound = bind_parameters(parse_expr("R*x1", kXY, params), {{"R", 4.0}});
  EXPECT_TRUE(parameters_of(bound).empty());
  EXPECT_DOUBLE_EQ(evaluate(bound, p), 2.0);
}

// 1000 random (expression, point, variable) triples: symbolic derivative vs
// central difference with h = 1e-5.
TEST(Property, DerivativeMatchesFiniteDifference) {
  testing::RandomExpr gen(20240601u);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Expression e = gen(3);
    const auto p = gen.point();
    const int v = gen.pick(3);
    const double fd = central_fd(e, v, p, 1e-5);
    const double sym = evaluate(differentiate(e, gen.coords()[static_cast<std::size_t>(v)]), p);
    ASSERT_LE(std::abs(sym - fd), 1e-6 * std::max(1.0, std::abs(fd)))
        << "e = " << render(e) << " var " << v << " sym " << sym << " fd " << fd;
    ++checked;
  }
  EXPECT_EQ(checked, 1000);
}

TEST(Property, MixedPartialsCommute) {
  testing::RandomExpr gen(77u);
  for (int trial = 0; trial < 300; ++trial) {
    const Expression e = gen(3);
    const auto p = gen.point();
    const double a = evaluate(differentiate(differentiate(e, "x1"), "x2"), p);
    const double b = evaluate(differentiate(differentiate(e, "x2"), "x1"), p);
    ASSERT_LE(std::abs(a - b), 1e-12 * std::max(1.0, std::abs(a))) << render(e);
  }
}

TEST(Property, RenderRoundTrips) {
  testing::RandomExpr gen(4242u);
  for (int trial = 0; trial < 500; ++trial) {
    const Expression e = gen(4);
    const Expression back = parse_expr(render(e), gen.coords());
    const auto p = gen.point();
    const double a = evaluate(e, p);
    const double b = evaluate(back, p);
    ASSERT_LE(std::abs(a - b), 1e-15 * std::max(1.0, std::abs(a))) << render(e);
  }
}

}  // namespace
}  // namespace hmlab
