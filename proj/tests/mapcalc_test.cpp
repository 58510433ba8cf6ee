#include <gtest/gtest.h>

#include <cmath>

#include "hmlab/error.hpp"
#include "hmlab/mapcalc.hpp"

using namespace hmlab;

namespace {

using Names = std::vector<std::string>;

std::vector<Expression> parse_all(std::initializer_list<const char*> texts, const Names& coords,
                                  const Names& params = {}) {
  std::vector<Expression> out;
  for (const char* t : texts) out.push_back(parse_expr(t, coords, params));
  return out;
}

MapProblem cylinder(bool conformal_domain, const char* weight = "1") {
  Names c{"x", "y"};
  Names p{"R"};
  auto dom = conformal_domain ? ChartManifold::conformal(c, parse_expr("exp(y/R)", c, p)) : ChartManifold::euclidean(c);
  dom = dom.with_region({{{-3, 3}, {-1, 2}}, std::nullopt});
  auto tgt = ChartManifold::euclidean({"a", "b", "c"});
  return make_problem("cylinder", dom, tgt, parse_all({"R*cos(x/R)", "R*sin(x/R)", "y"}, c, p),
                      parse_expr(weight, c, p), {{"R", 1.0}}, CurvatureSign::Flat);
}

std::string radius2(int m) {
  std::string s;
  for (int i = 1; i <= m; ++i) s += (i > 1 ? "+x" : "x") + std::to_string(i) + "^2";
  return "(" + s + ")";
}

Names coords_x(int m) {
  Names c;
  for (int i = 1; i <= m; ++i) c.push_back("x" + std::to_string(i));
  return c;
}

MapProblem inversion(int m, const std::string& metric_factor, const std::string& weight) {
  const Names c = coords_x(m);
  const std::string r2 = radius2(m);
  std::vector<Interval> box(static_cast<std::size_t>(m), Interval{-2, 2});
  SamplingRegion region{box, RadialShell{std::vector<double>(static_cast<std::size_t>(m), 0.0), 0.5, 2.0}};
  auto dom = metric_factor.empty() ? ChartManifold::euclidean(c) : ChartManifold::conformal(c, parse_expr(metric_factor, c));
  dom = dom.with_region(region);
  std::vector<Expression> map;
  for (int i = 1; i <= m; ++i) map.push_back(parse_expr("x" + std::to_string(i) + "/" + r2, c));
  Names t;
  for (int i = 1; i <= m; ++i) t.push_back("y" + std::to_string(i));
  return make_problem("inversion", dom, ChartManifold::euclidean(t), map, parse_expr(weight, c), {}, CurvatureSign::Flat);
}

MapProblem scalar(const char* u, const char* f) {
  Names c{"x"};
  auto dom = ChartManifold::euclidean(c).with_region({{{0.5, 2}}, std::nullopt});
  return make_problem("scalar", dom, ChartManifold::euclidean({"t"}), parse_all({u}, c), parse_expr(f, c), {},
                      CurvatureSign::Flat);
}

// A non-trivial map from a curved 2d chart into the hyperbolic half-plane.
MapProblem hyperbolic_target() {
  Names c{"x", "y"};
  auto dom = ChartManifold::from_matrix(c, {{parse_expr("2 + sin(x)*y", c), parse_expr("0.3*cos(y)", c)},
                                            {parse_expr("0.3*cos(y)", c), parse_expr("1.5 + 0.25*x^2", c)}})
                 .with_region({{{-1, 1}, {-1, 1}}, std::nullopt});
  Names t{"u", "v"};
  auto tgt = ChartManifold::conformal(t, parse_expr("v^(-2)", t));
  return make_problem("hyp", dom, tgt, parse_all({"x + 0.3*sin(y)", "1.5 + 0.2*cos(x) + 0.1*y"}, c),
                      parse_expr("1.2 + 0.5*sin(x - y)", c), {}, CurvatureSign::Negative);
}

void expect_section(const SectionValue& v, std::initializer_list<double> want, double tol) {
  ASSERT_EQ(v.v.size(), want.size());
  std::size_t i = 0;
  for (double w : want) EXPECT_NEAR(v.v[i++], w, tol) << "component " << i - 1;
}

}  // namespace

TEST(Mapcalc, DifferentialFixtures) {
  const auto P = cylinder(false);
  std::vector<double> o{0, 0};
  auto D = differential(P, o);
  EXPECT_NEAR(D(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(D(1, 0), 1.0, 1e-15);
  EXPECT_NEAR(D(2, 1), 1.0, 1e-15);
  EXPECT_NEAR(D.energy_density, 2.0, 1e-15);

  Names c{"x1", "x2", "x3"};
  auto E3 = ChartManifold::euclidean(c);
  auto id = make_problem("id", E3, ChartManifold::euclidean({"y1", "y2", "y3"}), parse_all({"x1", "x2", "x3"}, c));
  std::vector<double> p{0.3, 1.0, -2.0};
  auto Di = differential(id, p);
  for (int a = 0; a < 3; ++a)
    for (int i = 0; i < 3; ++i) EXPECT_EQ(Di(a, i), a == i ? 1.0 : 0.0);
  EXPECT_EQ(Di.energy_density, 3.0);

  auto k = make_problem("const", E3, ChartManifold::euclidean({"y1", "y2"}), parse_all({"2", "-1"}, c));
  for (double v : differential(k, p).values) EXPECT_EQ(v, 0.0);
}

TEST(Mapcalc, TensionFixtures) {
  std::vector<double> o{0, 0};
  expect_section(tension(cylinder(false), o), {-1, 0, 0}, 1e-14);
  std::vector<double> e1{1, 0, 0, 0};
  expect_section(tension(inversion(4, "", "1"), e1), {-4, 0, 0, 0}, 1e-13);

  Names c{"x1", "x2"};
  auto hyp = ChartManifold::conformal(c, parse_expr("x2^(-2)", c)).with_region({{{-1, 1}, {0.5, 2}}, std::nullopt});
  auto id = make_problem("id-hyp", hyp, hyp, parse_all({"x1", "x2"}, c));
  std::vector<double> p{0.3, 1.2};
  expect_section(tension(id, p), {0, 0}, 1e-14);
}

TEST(Mapcalc, InversionTensionMatchesRadialFormula) {
  for (int m : {3, 4, 5}) {
    auto P = inversion(m, "", "1");
    OperatorEvaluator tau(P, Operator::Tension);
    for (const auto& x : sample_points(P.domain, 20, 1)) {
      double r2 = 0;
      for (double xi : x) r2 += xi * xi;
      auto v = tau(x);
      for (int i = 0; i < m; ++i)
        EXPECT_NEAR(v.v[static_cast<std::size_t>(i)], -2.0 * (m - 2) * x[static_cast<std::size_t>(i)] / (r2 * r2), 1e-11);
    }
  }
}

TEST(Mapcalc, FTensionFixtures) {
  std::vector<double> o{0, 0};
  expect_section(f_tension(cylinder(false), o), {-1, 0, 0}, 1e-14);
  expect_section(f_tension(cylinder(false, "exp(-y)"), o), {-1, 0, -1}, 1e-14);
  std::vector<double> one{1.0};
  expect_section(f_tension(scalar("x^2", "x"), one), {4}, 1e-14);
}

TEST(Mapcalc, PullbackDerivative) {
  Names c{"x1", "x2"};
  auto E2 = ChartManifold::euclidean(c);
  auto P = make_problem("p", E2, ChartManifold::euclidean({"a", "b"}), parse_all({"x1*x2", "x2"}, c));
  std::vector<double> x{3, 0.5};
  expect_section(pullback_derivative(P, parse_all({"x1^2", "0"}, c), 0, x), {6, 0}, 1e-14);
  expect_section(pullback_derivative(P, parse_all({"2", "-7"}, c), 1, x), {0, 0}, 0.0);

  auto hyp = ChartManifold::conformal(c, parse_expr("x2^(-2)", c)).with_region({{{-1, 1}, {0.5, 2}}, std::nullopt});
  auto id = make_problem("id-hyp", hyp, hyp, parse_all({"x1", "x2"}, c));
  std::vector<double> p{0.3, 1.2};
  const auto G = christoffel(hyp, p);
  for (int j = 0; j < 2; ++j) {
    SectionField V{constant(j == 0 ? 1.0 : 0.0), constant(j == 1 ? 1.0 : 0.0)};  // dphi(d_j)
    for (int i = 0; i < 2; ++i) {
      auto v = pullback_derivative(id, V, i, p);
      for (int a = 0; a < 2; ++a) EXPECT_NEAR(v.v[static_cast<std::size_t>(a)], G(a, i, j), 1e-12);
    }
  }
}

TEST(Mapcalc, RoughLaplacian) {
  Names c{"x1", "x2"};
  auto P = make_problem("p", ChartManifold::euclidean(c), ChartManifold::euclidean({"a", "b", "c"}),
                        parse_all({"x1", "x2", "x1*x2"}, c));
  std::vector<double> x{1.0, 0.4};
  expect_section(rough_laplacian(P, parse_all({"x1^4", "0", "0"}, c), x), {12, 0, 0}, 1e-13);

  auto curved = ChartManifold::conformal(c, parse_expr("exp(x1*x2)", c));
  auto Q = make_problem("q", curved, ChartManifold::euclidean({"a", "b"}), parse_all({"x1", "x2^2"}, c));
  expect_section(rough_laplacian(Q, parse_all({"3", "-1"}, c), x), {0, 0}, 0.0);
}

// Delta^phi V = g^{ij}(nabla_i W_j - Gamma^k_ij W_k), W_j = nabla_j V, with the
// outer derivative taken by central differences of the compiled W_j.
TEST(Mapcalc, RoughLaplacianMatchesDifferencedPullbackDerivative) {
  const auto P = hyperbolic_target();
  MapCalculus C(P);
  const SectionField V = parse_all({"x*y + 0.5", "sin(x) + y^2"}, P.domain.coords());
  std::vector<SectionField> W{C.covariant(V, 0), C.covariant(V, 1)};
  const CompiledFields Wc(W);
  const SectionField lap = C.rough_laplacian(V);
  const double h = 1e-5;
  for (const auto& x : sample_points(P.domain, 20, 8)) {
    MetricJet J(P.domain, x, 1);
    std::vector<double> y{evaluate(P.map[0], x), evaluate(P.map[1], x)};
    const auto Gt = christoffel(P.target, y);
    const auto D = differential(P, x);
    const auto w = Wc.evaluate(x);
    std::vector<double> expect(2, 0.0);
    for (int i = 0; i < 2; ++i) {
      auto xp = x, xm = x;
      xp[static_cast<std::size_t>(i)] += h;
      xm[static_cast<std::size_t>(i)] -= h;
      const auto wp = Wc.evaluate(xp), wm = Wc.evaluate(xm);
      for (int j = 0; j < 2; ++j) {
        const double gij = J.ginv()(i, j);
        for (int a = 0; a < 2; ++a) {
          double nab = (wp[static_cast<std::size_t>(2 * j + a)] - wm[static_cast<std::size_t>(2 * j + a)]) / (2 * h);
          for (int b = 0; b < 2; ++b)
            for (int cc = 0; cc < 2; ++cc) nab += Gt(a, b, cc) * D(b, i) * w[static_cast<std::size_t>(2 * j + cc)];
          for (int k = 0; k < 2; ++k) nab -= J.gamma(k, i, j) * w[static_cast<std::size_t>(2 * k + a)];
          expect[static_cast<std::size_t>(a)] += gij * nab;
        }
      }
    }
    const auto got = evaluate_section(lap, x).v;
    for (int a = 0; a < 2; ++a) {
      const double e = expect[static_cast<std::size_t>(a)];
      EXPECT_NEAR(got[static_cast<std::size_t>(a)], e, 1e-6 * std::max(1.0, std::abs(e)));
    }
  }
}

TEST(Mapcalc, JacobiFixtures) {
  Names c{"x1", "x2"};
  auto P = make_problem("p", ChartManifold::euclidean(c), ChartManifold::euclidean({"a", "b"}), parse_all({"x1", "x2"}, c));
  std::vector<double> x{0.7, -0.2};
  expect_section(jacobi(P, parse_all({"x1^2", "0"}, c), x), {-2, 0}, 1e-14);
  expect_section(jacobi(P, parse_all({"0", "0"}, c), x), {0, 0}, 0.0);
  expect_section(bitension(P, x), {0, 0}, 0.0);
}

TEST(Mapcalc, BitensionIsMinusJacobiOfTension) {
  const auto P = hyperbolic_target();
  MapCalculus C(P);
  const SectionField tau = C.tension();
  const std::vector<SectionField> fields{C.bitension(), C.jacobi(tau)};
  const CompiledFields F(fields);
  for (const auto& x : sample_points(P.domain, 50, 3)) {
    const auto v = F.evaluate(x);
    for (int a = 0; a < 2; ++a) {
      const double b = v[static_cast<std::size_t>(a)];
      EXPECT_NEAR(b, -v[static_cast<std::size_t>(2 + a)], 1e-12 * std::max(1.0, std::abs(b)));
    }
  }
}

TEST(Mapcalc, CylinderIsProperBiharmonicOnConformalDomain) {
  const auto P = cylinder(true);
  OperatorEvaluator t2(P, Operator::Bitension), t(P, Operator::Tension);
  for (const auto& x : sample_points(P.domain, 50, 21)) {
    EXPECT_LE(t2(x).max_abs(), 1e-9);
    EXPECT_GT(section_norm(P, t(x)), 0.1);
  }
}

TEST(Mapcalc, ScalarBitension) {
  std::vector<double> one{1.0};
  expect_section(bitension(scalar("x^4", "1"), one), {24}, 1e-12);
}

TEST(Mapcalc, CylinderIsProperFBiharmonic) {
  const auto P = cylinder(false, "exp(-y)");
  OperatorEvaluator tf2(P, Operator::FBitension), t(P, Operator::Tension);
  for (const auto& x : sample_points(P.domain, 50, 22)) {
    EXPECT_LE(tf2(x).max_abs(), 1e-9);
    EXPECT_NEAR(section_norm(P, t(x)), 1.0, 1e-14);
  }
}

TEST(Mapcalc, InversionIsProperFBiharmonic) {
  for (int m : {3, 4, 5}) {
    const auto P = inversion(m, "", radius2(m) + "^2");
    MapCalculus C(P);
    const std::vector<SectionField> fields{C.f_bitension(P.weight), P.weight * C.bitension(), C.tension()};
    const CompiledFields F(fields);
    for (const auto& x : sample_points(P.domain, 20, 5)) {
      const auto v = F.evaluate(x);
      double res = 0, scale = 1, tau = 0;
      for (int a = 0; a < m; ++a) {
        res = std::max(res, std::abs(v[F.offset(0) + static_cast<std::size_t>(a)]));
        scale = std::max(scale, std::abs(v[F.offset(1) + static_cast<std::size_t>(a)]));
        tau = std::max(tau, std::abs(v[F.offset(2) + static_cast<std::size_t>(a)]));
      }
      EXPECT_LE(res, 1e-8 * scale) << "m=" << m;
      EXPECT_GT(tau, 0.05);
    }
  }
}

TEST(Mapcalc, InversionIsBiFHarmonicOnConformalDomain) {
  // m = 4: metric |x|^{-2} delta, f = |x|^2
  const auto P = inversion(4, radius2(4) + "^(-1)", radius2(4));
  MapCalculus C(P);
  const std::vector<SectionField> fields{C.bi_f_tension(P.weight), P.weight * C.jacobi(C.f_tension(P.weight))};
  const CompiledFields F(fields);
  for (const auto& x : sample_points(P.domain, 20, 6)) {
    const auto v = F.evaluate(x);
    double res = 0, scale = 1;
    for (int a = 0; a < 4; ++a) {
      res = std::max(res, std::abs(v[static_cast<std::size_t>(a)]));
      scale = std::max(scale, std::abs(v[static_cast<std::size_t>(4 + a)]));
    }
    EXPECT_LE(res, 1e-8 * scale);
  }
}

TEST(Mapcalc, UnitWeightReducesToUnweightedOperators) {
  const auto P = with_weight(hyperbolic_target(), constant(1.0));
  MapCalculus C(P);
  const Expression one = constant(1.0);
  const std::vector<SectionField> fields{C.tension(),        C.f_tension(one),   C.bitension(),
                                         C.f_bitension(one), C.bi_f_tension(one), C.f_bitension_divergence_form(one)};
  const CompiledFields F(fields);
  for (const auto& x : sample_points(P.domain, 30, 4)) {
    const auto v = F.evaluate(x);
    for (int a = 0; a < 2; ++a) {
      auto at = [&](std::size_t k) { return v[F.offset(k) + static_cast<std::size_t>(a)]; };
      EXPECT_NEAR(at(1), at(0), 1e-14 * std::max(1.0, std::abs(at(0))));
      for (std::size_t k : {3u, 4u, 5u}) EXPECT_NEAR(at(k), at(2), 1e-12 * std::max(1.0, std::abs(at(2))));
    }
  }
}

TEST(Mapcalc, FBitensionFormsAgree) {
  const auto P = hyperbolic_target();
  MapCalculus C(P);
  const std::vector<SectionField> fields{C.f_bitension(P.weight), C.f_bitension_divergence_form(P.weight)};
  const CompiledFields F(fields);
  for (const auto& x : sample_points(P.domain, 50, 7)) {
    const auto v = F.evaluate(x);
    for (int a = 0; a < 2; ++a) {
      const double l = v[static_cast<std::size_t>(a)], r = v[static_cast<std::size_t>(2 + a)];
      EXPECT_NEAR(l, r, 1e-10 * std::max({1.0, std::abs(l), std::abs(r)}));
    }
  }
}

TEST(Mapcalc, ScalarBiFTensionIsBiFLaplacian) {
  // With tau_{2,f} = -f J(tau_f) + nabla_{grad f} tau_f the scalar reduction
  // is +Delta_f^2 u (u = x, f = 1 + x^2: Delta_f u = 2x, Delta_f^2 u = 4 at x = 1).
  std::vector<double> one{1.0};
  const auto P = scalar("x", "1 + x^2");
  expect_section(bi_f_tension(P, one), {4}, 1e-12);
  EXPECT_NEAR(bi_f_laplacian(P.domain, P.weight, P.map[0], one), 4.0, 1e-12);
}

TEST(Mapcalc, WeightedLaplacianFixtures) {
  Names c{"x"};
  auto R1 = ChartManifold::euclidean(c);
  std::vector<double> one{1.0};
  EXPECT_NEAR(f_laplacian(R1, parse_expr("x", c), parse_expr("x^2", c), one), 4.0, 1e-12);
  EXPECT_NEAR(f_bi_laplacian(R1, parse_expr("x^2", c), parse_expr("x^4", c), one), 144.0, 1e-12);

  const auto P = hyperbolic_target();
  MetricCalculus M(P.domain);
  const Expression u = parse_expr("x^3*y + cos(y)", P.domain.coords());
  const Expression f1 = constant(1.0);
  const Expression lap = M.laplacian(u), lap2 = M.laplacian(lap);
  for (const auto& x : sample_points(P.domain, 20, 2)) {
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
    EXPECT_LE(rel(f_laplacian(P.domain, f1, u, x), evaluate(lap, x)), 1e-12);
    EXPECT_LE(rel(bi_f_laplacian(P.domain, f1, u, x), evaluate(lap2, x)), 1e-12);
    EXPECT_LE(rel(f_bi_laplacian(P.domain, f1, u, x), evaluate(lap2, x)), 1e-12);
  }
}

TEST(Mapcalc, F2LaplacianIsLaplacianOfFLaplacian) {
  const auto P = hyperbolic_target();
  MetricCalculus M(P.domain);
  const Expression u = parse_expr("x^2*y - sin(x*y)", P.domain.coords());
  const Expression& f = P.weight;
  const Expression direct = M.laplacian(f * M.laplacian(u));
  const Expression expanded = f_bi_laplacian(M, f, u);
  for (const auto& x : sample_points(P.domain, 30, 12)) {
    const double a = evaluate(direct, x);
    EXPECT_NEAR(evaluate(expanded, x), a, 1e-10 * std::max(1.0, std::abs(a)));
  }
}

TEST(Mapcalc, ProblemValidation) {
  Names c{"x"};
  auto R1 = ChartManifold::euclidean(c);
  EXPECT_THROW(make_problem("bad", R1, ChartManifold::euclidean({"a", "b"}), parse_all({"x"}, c)), ValidationError);
  EXPECT_THROW(make_problem("bad", R1, ChartManifold::euclidean({"a"}), {variable("z", 0)}), ValidationError);
  EXPECT_THROW(make_problem("bad", R1, ChartManifold::euclidean({"a"}), {parameter("k")}), ValidationError);
  EXPECT_NO_THROW(make_problem("ok", R1, ChartManifold::euclidean({"a"}), {parameter("k")}, constant(1.0), {{"k", 2.0}}));
}
