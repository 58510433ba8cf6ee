#pragma once

// Coordinate-chart Riemannian geometry. Metrics are matrices of Expressions;
// quantities at a point come from a MetricJet (numeric derivatives of the
// metric up to order 3), while MetricCalculus builds the same quantities as
// Expressions for operators that must differentiate them again.

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hmlab/expr.hpp"

namespace hmlab {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Spherical shell r_inner <= |x - center| <= r_outer intersected with the box.
struct RadialShell {
  std::vector<double> center;
  double r_inner = 0.0;
  double r_outer = 0.0;
};

struct SamplingRegion {
  std::vector<Interval> box;
  std::optional<RadialShell> shell;

  bool bounded() const;
  bool contains(std::span<const double> x) const;
};

// Points with |expr| < margin are never sampled.
struct SingularGuard {
  Expression expr;
  double margin = 1e-3;
};

enum class MetricForm { Euclidean, Conformal, Diagonal, General };

class ChartManifold {
 public:
  ChartManifold() = default;

  static ChartManifold euclidean(std::vector<std::string> coords);
  // lambda * delta_ij
  static ChartManifold conformal(std::vector<std::string> coords, Expression lambda);
  // Symmetric matrix; only the upper triangle of `g` is read.
  static ChartManifold from_matrix(std::vector<std::string> coords, std::vector<std::vector<Expression>> g);

  int dim() const noexcept { return static_cast<int>(coords_.size()); }
  const std::vector<std::string>& coords() const noexcept { return coords_; }
  const Expression& metric(int i, int j) const { return metric_[static_cast<std::size_t>(i * dim() + j)]; }
  MetricForm form() const noexcept { return form_; }
  // Conformal factor lambda for Euclidean (1) and Conformal metrics.
  const Expression& conformal_factor() const noexcept { return lambda_; }

  const SamplingRegion& region() const noexcept { return region_; }
  const std::optional<SingularGuard>& guard() const noexcept { return guard_; }
  const ParamEnv& params() const noexcept { return params_; }

  ChartManifold with_region(SamplingRegion region) const;
  ChartManifold with_guard(std::optional<SingularGuard> guard) const;
  ChartManifold with_params(ParamEnv params) const;

  // True when x lies inside the guard's exclusion margin.
  bool guarded(std::span<const double> x) const;
  // All leading principal minors of g(x) positive.
  bool positive_definite_at(std::span<const double> x) const;

  // Compiled metric derivatives; built on first use, shared between copies.
  struct JetTapes;
  const JetTapes& jet_tapes(int order) const;

 private:
  std::vector<std::string> coords_;
  std::vector<Expression> metric_;
  MetricForm form_ = MetricForm::Euclidean;
  Expression lambda_ = constant(1.0);
  SamplingRegion region_;
  std::optional<SingularGuard> guard_;
  ParamEnv params_;
  std::shared_ptr<struct JetCache> cache_;
};

// Metric data at a point: g, its partials to order 3 (order permitting),
// inverse, Christoffel symbols and their first partials, volume density.
class MetricJet {
 public:
  MetricJet(const ChartManifold& M, std::span<const double> x, int order = 2);

  int dim() const noexcept { return m_; }
  int order() const noexcept { return order_; }
  const Eigen::MatrixXd& g() const noexcept { return g_; }
  const Eigen::MatrixXd& ginv() const noexcept { return ginv_; }
  double dg(int k, int i, int j) const { return dg_[idx3(k, i, j)]; }
  double d2g(int k, int l, int i, int j) const { return d2g_[idx4(k, l, i, j)]; }
  double d3g(int k, int l, int n, int i, int j) const;
  // Gamma^k_ij
  double gamma(int k, int i, int j) const { return gamma_[idx3(k, i, j)]; }
  // d_l Gamma^k_ij
  double dgamma(int l, int k, int i, int j) const { return dgamma_[idx4(l, k, i, j)]; }
  double volume_density() const noexcept { return sqrt_det_; }

 private:
  std::size_t idx3(int a, int b, int c) const {
    return static_cast<std::size_t>((a * m_ + b) * m_ + c);
  }
  std::size_t idx4(int a, int b, int c, int d) const {
    return static_cast<std::size_t>(((a * m_ + b) * m_ + c) * m_ + d);
  }

  int m_;
  int order_;
  Eigen::MatrixXd g_;
  Eigen::MatrixXd ginv_;
  std::vector<double> dg_;
  std::vector<double> d2g_;
  std::vector<double> d3g_;
  std::vector<double> gamma_;
  std::vector<double> dgamma_;
  double sqrt_det_ = 0.0;
};

struct Christoffel {
  int m = 0;
  std::vector<double> values;  // [k][i][j]
  double operator()(int k, int i, int j) const { return values[static_cast<std::size_t>((k * m + i) * m + j)]; }
};

// R^a_{bcd} with R(d_c, d_d) d_b = R^a_{bcd} d_a, where
// R(X,Y)Z = [nabla_X, nabla_Y]Z - nabla_[X,Y] Z; lowered R_{abcd} = g_ae R^e_{bcd}.
struct CurvatureValue {
  int m = 0;
  std::vector<double> up;
  std::vector<double> down;
  double operator()(int a, int b, int c, int d) const { return up[index(a, b, c, d)]; }
  double lowered(int a, int b, int c, int d) const { return down[index(a, b, c, d)]; }
  std::size_t index(int a, int b, int c, int d) const {
    return static_cast<std::size_t>(((a * m + b) * m + c) * m + d);
  }
};

Christoffel christoffel(const ChartManifold& M, std::span<const double> x);
CurvatureValue riemann(const ChartManifold& M, std::span<const double> x);
// K(d_i, d_j) = R_{ijij} / (g_ii g_jj - g_ij^2).
double sectional_curvature(const ChartManifold& M, std::span<const double> x, int i, int j);
std::vector<double> grad(const ChartManifold& M, const Expression& u, std::span<const double> x);
double laplace_beltrami(const ChartManifold& M, const Expression& u, std::span<const double> x);
double volume_density(const ChartManifold& M, std::span<const double> x);

// Metric F^{-2} g with the same region, guard and parameters. F must be
// positive: checked on 64 deterministic samples of a bounded region.
ChartManifold conformal_rescale(const ChartManifold& M, const Expression& F);

// `count` points drawn uniformly from the region, rejecting the guard zone.
// Deterministic in `seed`.
std::vector<std::vector<double>> sample_points(const ChartManifold& M, std::size_t count, std::uint64_t seed);

// Deterministic uniform [0,1) stream used for all sampling.
class UniformStream {
 public:
  explicit UniformStream(std::uint64_t seed) : state_(seed) {}
  double next();

 private:
  std::uint64_t state_;
};

// Symbolic metric quantities over one chart. Expressions are built lazily
// and cached; not thread-safe while building, but every Expression handed out
// is immutable.
class MetricCalculus {
 public:
  explicit MetricCalculus(const ChartManifold& M);

  const ChartManifold& manifold() const noexcept { return M_; }
  int dim() const noexcept { return m_; }

  const Expression& g(int i, int j) const { return g_[idx(i, j)]; }
  const Expression& ginv(int i, int j) const { return ginv_[idx(i, j)]; }
  const Expression& volume_density() const noexcept { return sqrt_det_; }
  // Gamma^k_ij
  const Expression& christoffel(int k, int i, int j);
  // g^{ij} Gamma^k_ij
  const Expression& christoffel_trace(int k);
  // R^a_{bcd}, same convention as riemann().
  const Expression& riemann(int a, int b, int c, int d);

  Expression partial(const Expression& u, int i);
  std::vector<Expression> gradient(const Expression& u);
  Expression laplacian(const Expression& u);
  // g^{ij} a_i b_j for covectors a, b.
  Expression inner_covectors(std::span<const Expression> a, std::span<const Expression> b);
  // (1/sqrt g) d_i (sqrt g Y^i)
  Expression divergence(std::span<const Expression> Y);

  Differentiator& differentiator() noexcept { return d_; }

 private:
  std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i * m_ + j); }
  void build_christoffel();

  ChartManifold M_;
  int m_;
  Differentiator d_;
  std::vector<Expression> g_;
  std::vector<Expression> ginv_;
  Expression sqrt_det_;
  std::vector<Expression> gamma_;
  std::vector<Expression> gamma_trace_;
  std::vector<std::optional<Expression>> riemann_;
  bool christoffel_built_ = false;
};

}  // namespace hmlab
