#include "hmlab/geometry.hpp"

#include <array>
#include <cmath>
#include <mutex>

#include "hmlab/error.hpp"

namespace hmlab {

// ---------------------------------------------------------------------------
// Regions and sampling

bool SamplingRegion::bounded() const {
  if (box.empty()) return false;
  for (const auto& iv : box) {
    if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi)) return false;
  }
  return true;
}

bool SamplingRegion::contains(std::span<const double> x) const {
  for (std::size_t i = 0; i < box.size() && i < x.size(); ++i) {
    if (x[i] < box[i].lo || x[i] > box[i].hi) return false;
  }
  if (shell) {
    double r2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double c = i < shell->center.size() ? shell->center[i] : 0.0;
      r2 += (x[i] - c) * (x[i] - c);
    }
    const double r = std::sqrt(r2);
    if (r < shell->r_inner || r > shell->r_outer) return false;
  }
  return true;
}

double UniformStream::next() {
  // splitmix64
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return static_cast<double>(z >> 11) * 0x1.0p-53;
}

std::vector<std::vector<double>> sample_points(const ChartManifold& M, std::size_t count, std::uint64_t seed) {
  const auto& region = M.region();
  if (!region.bounded() || static_cast<int>(region.box.size()) != M.dim())
    throw ValidationError("geometry", "sampling needs a bounded box with one interval per coordinate");
  UniformStream u(seed);
  std::vector<std::vector<double>> out;
  out.reserve(count);
  const std::size_t max_attempts = 1000 * count + 10000;
  std::size_t attempts = 0;
  std::vector<double> x(static_cast<std::size_t>(M.dim()));
  while (out.size() < count) {
    if (++attempts > max_attempts)
      throw ValidationError("geometry", "sampling region is (almost) entirely excluded by shell/guard");
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto& iv = region.box[i];
      x[i] = iv.lo + (iv.hi - iv.lo) * u.next();
    }
    if (!region.contains(x) || M.guarded(x)) continue;
    out.push_back(x);
  }
  return out;
}

// ---------------------------------------------------------------------------
// ChartManifold

struct ChartManifold::JetTapes {
  Tape tape;
  int order = 0;
};

struct JetCache {
  std::array<std::once_flag, 4> once;
  std::array<std::unique_ptr<ChartManifold::JetTapes>, 4> tapes;
};

namespace {

ChartManifold::JetTapes build_jet_tapes(const ChartManifold& M, int order) {
  const int m = M.dim();
  const auto& coords = M.coords();
  Differentiator d;
  std::vector<Expression> roots;
  for (int i = 0; i < m; ++i)
    for (int j = i; j < m; ++j) roots.push_back(M.metric(i, j));
  if (order >= 1) {
    for (int k = 0; k < m; ++k)
      for (int i = 0; i < m; ++i)
        for (int j = i; j < m; ++j) roots.push_back(d(M.metric(i, j), coords[static_cast<std::size_t>(k)]));
  }
  if (order >= 2) {
    for (int k = 0; k < m; ++k)
      for (int l = k; l < m; ++l)
        for (int i = 0; i < m; ++i)
          for (int j = i; j < m; ++j) {
            const Expression dk = d(M.metric(i, j), coords[static_cast<std::size_t>(k)]);
            roots.push_back(d(dk, coords[static_cast<std::size_t>(l)]));
          }
  }
  if (order >= 3) {
    for (int k = 0; k < m; ++k)
      for (int l = k; l < m; ++l)
        for (int n = l; n < m; ++n)
          for (int i = 0; i < m; ++i)
            for (int j = i; j < m; ++j) {
              const Expression dk = d(M.metric(i, j), coords[static_cast<std::size_t>(k)]);
              const Expression dkl = d(dk, coords[static_cast<std::size_t>(l)]);
              roots.push_back(d(dkl, coords[static_cast<std::size_t>(n)]));
            }
  }
  ChartManifold::JetTapes t;
  t.tape = Tape(roots);
  t.order = order;
  return t;
}

std::vector<std::string> checked_coords(std::vector<std::string> coords) {
  if (coords.empty()) throw ValidationError("geometry", "a chart needs at least one coordinate");
  for (std::size_t i = 0; i < coords.size(); ++i)
    for (std::size_t j = i + 1; j < coords.size(); ++j)
      if (coords[i] == coords[j]) throw ValidationError("geometry", "duplicate coordinate '" + coords[i] + "'");
  return coords;
}

}  // namespace

ChartManifold ChartManifold::euclidean(std::vector<std::string> coords) {
  ChartManifold M;
  M.coords_ = checked_coords(std::move(coords));
  const int m = M.dim();
  M.metric_.assign(static_cast<std::size_t>(m * m), constant(0.0));
  for (int i = 0; i < m; ++i) M.metric_[static_cast<std::size_t>(i * m + i)] = constant(1.0);
  M.form_ = MetricForm::Euclidean;
  M.lambda_ = constant(1.0);
  M.cache_ = std::make_shared<JetCache>();
  return M;
}

ChartManifold ChartManifold::conformal(std::vector<std::string> coords, Expression lambda) {
  ChartManifold M;
  M.coords_ = checked_coords(std::move(coords));
  const int m = M.dim();
  M.metric_.assign(static_cast<std::size_t>(m * m), constant(0.0));
  for (int i = 0; i < m; ++i) M.metric_[static_cast<std::size_t>(i * m + i)] = lambda;
  M.form_ = lambda.is_constant(1.0) ? MetricForm::Euclidean : MetricForm::Conformal;
  M.lambda_ = std::move(lambda);
  M.cache_ = std::make_shared<JetCache>();
  return M;
}

ChartManifold ChartManifold::from_matrix(std::vector<std::string> coords, std::vector<std::vector<Expression>> g) {
  ChartManifold M;
  M.coords_ = checked_coords(std::move(coords));
  const int m = M.dim();
  if (static_cast<int>(g.size()) != m)
    throw ValidationError("geometry", "metric matrix has " + std::to_string(g.size()) + " rows, expected " +
                                          std::to_string(m));
  M.metric_.assign(static_cast<std::size_t>(m * m), constant(0.0));
  bool diagonal = true;
  for (int i = 0; i < m; ++i) {
    if (static_cast<int>(g[static_cast<std::size_t>(i)].size()) != m)
      throw ValidationError("geometry", "metric matrix row " + std::to_string(i + 1) + " has wrong length");
    for (int j = i; j < m; ++j) {
      const Expression& e = g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      M.metric_[static_cast<std::size_t>(i * m + j)] = e;
      M.metric_[static_cast<std::size_t>(j * m + i)] = e;
      if (i != j && !e.is_constant(0.0)) diagonal = false;
    }
  }
  M.form_ = diagonal ? MetricForm::Diagonal : MetricForm::General;
  M.cache_ = std::make_shared<JetCache>();
  return M;
}

ChartManifold ChartManifold::with_region(SamplingRegion region) const {
  ChartManifold M = *this;
  M.region_ = std::move(region);
  return M;
}

ChartManifold ChartManifold::with_guard(std::optional<SingularGuard> guard) const {
  ChartManifold M = *this;
  M.guard_ = std::move(guard);
  return M;
}

ChartManifold ChartManifold::with_params(ParamEnv params) const {
  ChartManifold M = *this;
  M.params_ = std::move(params);
  M.cache_ = std::make_shared<JetCache>();
  return M;
}

bool ChartManifold::guarded(std::span<const double> x) const {
  if (!guard_) return false;
  double s = 0.0;
  try {
    s = evaluate(guard_->expr, x, params_);
  } catch (const DomainError&) {
    return true;
  }
  return !(std::abs(s) >= guard_->margin);
}

bool ChartManifold::positive_definite_at(std::span<const double> x) const {
  const int m = dim();
  Eigen::MatrixXd g(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) g(i, j) = evaluate(metric(i, j), x, params_);
  for (int k = 1; k <= m; ++k) {
    if (!(g.topLeftCorner(k, k).determinant() > 0.0)) return false;
  }
  return true;
}

const ChartManifold::JetTapes& ChartManifold::jet_tapes(int order) const {
  if (order < 0 || order > 3) throw ValidationError("geometry", "jet order must be 0..3");
  auto& cache = *cache_;
  std::call_once(cache.once[static_cast<std::size_t>(order)], [&] {
    cache.tapes[static_cast<std::size_t>(order)] = std::make_unique<JetTapes>(build_jet_tapes(*this, order));
  });
  return *cache.tapes[static_cast<std::size_t>(order)];
}

// ---------------------------------------------------------------------------
// MetricJet

MetricJet::MetricJet(const ChartManifold& M, std::span<const double> x, int order)
    : m_(M.dim()), order_(order) {
  if (static_cast<int>(x.size()) != m_)
    throw ValidationError("geometry", "point has dimension " + std::to_string(x.size()) + ", chart has " +
                                          std::to_string(m_));
  const auto& tapes = M.jet_tapes(std::max(order, 1));
  const std::vector<double> v = tapes.tape.evaluate(x, M.params());
  const int m = m_;
  std::size_t pos = 0;
  g_.resize(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = i; j < m; ++j) g_(i, j) = g_(j, i) = v[pos++];

  dg_.assign(static_cast<std::size_t>(m * m * m), 0.0);
  for (int k = 0; k < m; ++k)
    for (int i = 0; i < m; ++i)
      for (int j = i; j < m; ++j) dg_[idx3(k, i, j)] = dg_[idx3(k, j, i)] = v[pos++];

  d2g_.assign(static_cast<std::size_t>(m * m * m * m), 0.0);
  if (tapes.order >= 2) {
    for (int k = 0; k < m; ++k)
      for (int l = k; l < m; ++l)
        for (int i = 0; i < m; ++i)
          for (int j = i; j < m; ++j) {
            const double val = v[pos++];
            d2g_[idx4(k, l, i, j)] = d2g_[idx4(k, l, j, i)] = val;
            d2g_[idx4(l, k, i, j)] = d2g_[idx4(l, k, j, i)] = val;
          }
  }
  if (tapes.order >= 3) {
    d3g_.assign(static_cast<std::size_t>(m * m * m * m * m), 0.0);
    for (int k = 0; k < m; ++k)
      for (int l = k; l < m; ++l)
        for (int n = l; n < m; ++n)
          for (int i = 0; i < m; ++i)
            for (int j = i; j < m; ++j) {
              const double val = v[pos++];
              const std::array<std::array<int, 3>, 6> perms = {
                  {{k, l, n}, {k, n, l}, {l, k, n}, {l, n, k}, {n, k, l}, {n, l, k}}};
              for (const auto& p : perms) {
                d3g_[static_cast<std::size_t>((((p[0] * m + p[1]) * m + p[2]) * m + i) * m + j)] = val;
                d3g_[static_cast<std::size_t>((((p[0] * m + p[1]) * m + p[2]) * m + j) * m + i)] = val;
              }
            }
  }

  const double det = g_.determinant();
  if (!(det > 1e-14))
    throw SingularMetricError("geometry", "metric determinant " + std::to_string(det) + " <= 1e-14 at point");
  ginv_ = g_.inverse();
  sqrt_det_ = std::sqrt(det);

  gamma_.assign(static_cast<std::size_t>(m * m * m), 0.0);
  for (int k = 0; k < m; ++k)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        double s = 0.0;
        for (int l = 0; l < m; ++l) s += ginv_(k, l) * (dg(i, j, l) + dg(j, i, l) - dg(l, i, j));
        gamma_[idx3(k, i, j)] = 0.5 * s;
      }

  dgamma_.assign(static_cast<std::size_t>(m * m * m * m), 0.0);
  if (tapes.order >= 2) {
    // d_n g^{kl} = -g^{ka} d_n g_ab g^{bl}
    std::vector<Eigen::MatrixXd> dginv(static_cast<std::size_t>(m));
    for (int n = 0; n < m; ++n) {
      Eigen::MatrixXd dgn(m, m);
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) dgn(a, b) = dg(n, a, b);
      dginv[static_cast<std::size_t>(n)] = -ginv_ * dgn * ginv_;
    }
    for (int n = 0; n < m; ++n)
      for (int k = 0; k < m; ++k)
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < m; ++j) {
            double s = 0.0;
            for (int l = 0; l < m; ++l) {
              const double first = dg(i, j, l) + dg(j, i, l) - dg(l, i, j);
              const double second = d2g(n, i, j, l) + d2g(n, j, i, l) - d2g(n, l, i, j);
              s += dginv[static_cast<std::size_t>(n)](k, l) * first + ginv_(k, l) * second;
            }
            dgamma_[idx4(n, k, i, j)] = 0.5 * s;
          }
  }
}

double MetricJet::d3g(int k, int l, int n, int i, int j) const {
  if (order_ < 3) throw ValidationError("geometry", "third metric derivatives need a jet of order 3");
  const int m = m_;
  return d3g_[static_cast<std::size_t>((((k * m + l) * m + n) * m + i) * m + j)];
}

// ---------------------------------------------------------------------------
// Pointwise operations

Christoffel christoffel(const ChartManifold& M, std::span<const double> x) {
  const MetricJet jet(M, x, 1);
  Christoffel out;
  out.m = M.dim();
  out.values.resize(static_cast<std::size_t>(out.m * out.m * out.m));
  for (int k = 0; k < out.m; ++k)
    for (int i = 0; i < out.m; ++i)
      for (int j = 0; j < out.m; ++j) out.values[static_cast<std::size_t>((k * out.m + i) * out.m + j)] = jet.gamma(k, i, j);
  return out;
}

CurvatureValue riemann(const ChartManifold& M, std::span<const double> x) {
  const MetricJet jet(M, x, 2);
  const int m = M.dim();
  CurvatureValue R;
  R.m = m;
  R.up.assign(static_cast<std::size_t>(m * m * m * m), 0.0);
  R.down.assign(R.up.size(), 0.0);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      for (int c = 0; c < m; ++c)
        for (int d = 0; d < m; ++d) {
          double v = jet.dgamma(c, a, d, b) - jet.dgamma(d, a, c, b);
          for (int e = 0; e < m; ++e) v += jet.gamma(a, c, e) * jet.gamma(e, d, b) - jet.gamma(a, d, e) * jet.gamma(e, c, b);
          R.up[R.index(a, b, c, d)] = v;
        }
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      for (int c = 0; c < m; ++c)
        for (int d = 0; d < m; ++d) {
          double v = 0.0;
          for (int e = 0; e < m; ++e) v += jet.g()(a, e) * R.up[R.index(e, b, c, d)];
          R.down[R.index(a, b, c, d)] = v;
        }
  return R;
}

double sectional_curvature(const ChartManifold& M, std::span<const double> x, int i, int j) {
  const CurvatureValue R = riemann(M, x);
  const MetricJet jet(M, x, 0);
  const auto& g = jet.g();
  return R.lowered(i, j, i, j) / (g(i, i) * g(j, j) - g(i, j) * g(i, j));
}

std::vector<double> grad(const ChartManifold& M, const Expression& u, std::span<const double> x) {
  const MetricJet jet(M, x, 0);
  const int m = M.dim();
  std::vector<double> du(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i)
    du[static_cast<std::size_t>(i)] = evaluate(differentiate(u, M.coords()[static_cast<std::size_t>(i)]), x, M.params());
  std::vector<double> out(static_cast<std::size_t>(m), 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) out[static_cast<std::size_t>(i)] += jet.ginv()(i, j) * du[static_cast<std::size_t>(j)];
  return out;
}

double laplace_beltrami(const ChartManifold& M, const Expression& u, std::span<const double> x) {
  const MetricJet jet(M, x, 1);
  const int m = M.dim();
  Differentiator d;
  const auto& coords = M.coords();
  std::vector<Expression> du;
  for (int i = 0; i < m; ++i) du.push_back(d(u, coords[static_cast<std::size_t>(i)]));
  double out = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      const double gij = jet.ginv()(i, j);
      if (gij == 0.0) continue;
      double hess = evaluate(d(du[static_cast<std::size_t>(i)], coords[static_cast<std::size_t>(j)]), x, M.params());
      for (int k = 0; k < m; ++k) hess -= jet.gamma(k, i, j) * evaluate(du[static_cast<std::size_t>(k)], x, M.params());
      out += gij * hess;
    }
  return out;
}

double volume_density(const ChartManifold& M, std::span<const double> x) {
  return MetricJet(M, x, 0).volume_density();
}

ChartManifold conformal_rescale(const ChartManifold& M, const Expression& F) {
  if (M.region().bounded() && static_cast<int>(M.region().box.size()) == M.dim()) {
    for (const auto& x : sample_points(M, 64, 0x5eedULL)) {
      double v = 0.0;
      try {
        v = evaluate(F, x, M.params());
      } catch (const DomainError& e) {
        throw ValidationError("geometry", std::string("conformal factor undefined on region: ") + e.what());
      }
      if (!(v > 0.0)) throw ValidationError("geometry", "conformal factor is not positive on the region");
    }
  }
  const Expression scale = pow(F, Rational(-2));
  ChartManifold out;
  if (M.form() == MetricForm::Euclidean || M.form() == MetricForm::Conformal) {
    out = ChartManifold::conformal(M.coords(), scale * M.conformal_factor());
  } else {
    const int m = M.dim();
    std::vector<std::vector<Expression>> g(static_cast<std::size_t>(m), std::vector<Expression>(static_cast<std::size_t>(m)));
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = scale * M.metric(i, j);
    out = ChartManifold::from_matrix(M.coords(), std::move(g));
  }
  return out.with_region(M.region()).with_guard(M.guard()).with_params(M.params());
}

}  // namespace hmlab
