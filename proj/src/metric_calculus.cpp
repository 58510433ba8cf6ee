#include <functional>

#include "hmlab/error.hpp"
#include "hmlab/geometry.hpp"

namespace hmlab {

namespace {

// Cofactor expansion; only used for general (non-diagonal) metrics, which are
// small in practice.
Expression symbolic_det(const std::vector<Expression>& a, int n) {
  if (n == 1) return a[0];
  if (n == 2) return a[0] * a[3] - a[1] * a[2];
  Expression out = constant(0.0);
  for (int c = 0; c < n; ++c) {
    const Expression& pivot = a[static_cast<std::size_t>(c)];
    if (pivot.is_constant(0.0)) continue;
    std::vector<Expression> minor;
    minor.reserve(static_cast<std::size_t>((n - 1) * (n - 1)));
    for (int r = 1; r < n; ++r)
      for (int k = 0; k < n; ++k)
        if (k != c) minor.push_back(a[static_cast<std::size_t>(r * n + k)]);
    const Expression term = pivot * symbolic_det(minor, n - 1);
    out = (c % 2 == 0) ? out + term : out - term;
  }
  return out;
}

std::vector<Expression> minor_of(const std::vector<Expression>& a, int n, int row, int col) {
  std::vector<Expression> out;
  for (int r = 0; r < n; ++r) {
    if (r == row) continue;
    for (int c = 0; c < n; ++c)
      if (c != col) out.push_back(a[static_cast<std::size_t>(r * n + c)]);
  }
  return out;
}

}  // namespace

MetricCalculus::MetricCalculus(const ChartManifold& M) : M_(M), m_(M.dim()) {
  const int m = m_;
  g_.resize(static_cast<std::size_t>(m * m));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) g_[idx(i, j)] = bind_parameters(M.metric(i, j), M.params());

  ginv_.assign(static_cast<std::size_t>(m * m), constant(0.0));
  switch (M.form()) {
    case MetricForm::Euclidean:
      for (int i = 0; i < m; ++i) ginv_[idx(i, i)] = constant(1.0);
      sqrt_det_ = constant(1.0);
      break;
    case MetricForm::Conformal: {
      const Expression lambda = bind_parameters(M.conformal_factor(), M.params());
      const Expression inv = constant(1.0) / lambda;
      for (int i = 0; i < m; ++i) ginv_[idx(i, i)] = inv;
      sqrt_det_ = m % 2 == 0 ? pow(lambda, Rational(m / 2)) : pow(lambda, Rational(m, 2));
      break;
    }
    case MetricForm::Diagonal: {
      Expression det = constant(1.0);
      for (int i = 0; i < m; ++i) {
        ginv_[idx(i, i)] = constant(1.0) / g_[idx(i, i)];
        det = det * g_[idx(i, i)];
      }
      sqrt_det_ = sqrt(det);
      break;
    }
    case MetricForm::General: {
      const Expression det = symbolic_det(g_, m);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
          // inverse = adj / det, adj_ij = (-1)^{i+j} M_ji
          const Expression cof = m == 1 ? constant(1.0) : symbolic_det(minor_of(g_, m, j, i), m - 1);
          ginv_[idx(i, j)] = ((i + j) % 2 == 0 ? cof : -cof) / det;
        }
      sqrt_det_ = sqrt(det);
      break;
    }
  }
}

void MetricCalculus::build_christoffel() {
  if (christoffel_built_) return;
  const int m = m_;
  const auto& coords = M_.coords();
  gamma_.assign(static_cast<std::size_t>(m * m * m), constant(0.0));
  if (M_.form() == MetricForm::Conformal) {
    // Gamma^k_ij = (delta_jk d_i l + delta_ik d_j l - delta_ij d_k l) / (2 lambda)
    const Expression& lambda = g_[idx(0, 0)];
    std::vector<Expression> half_dlog(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i)
      half_dlog[static_cast<std::size_t>(i)] = d_(lambda, coords[static_cast<std::size_t>(i)]) / (constant(2.0) * lambda);
    for (int k = 0; k < m; ++k)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
          Expression v = constant(0.0);
          if (j == k) v = v + half_dlog[static_cast<std::size_t>(i)];
          if (i == k) v = v + half_dlog[static_cast<std::size_t>(j)];
          if (i == j) v = v - half_dlog[static_cast<std::size_t>(k)];
          gamma_[static_cast<std::size_t>((k * m + i) * m + j)] = v;
        }
  } else if (M_.form() != MetricForm::Euclidean) {
    std::vector<Expression> dg(static_cast<std::size_t>(m * m * m));
    for (int k = 0; k < m; ++k)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
          dg[static_cast<std::size_t>((k * m + i) * m + j)] = d_(g_[idx(i, j)], coords[static_cast<std::size_t>(k)]);
    auto D = [&](int k, int i, int j) -> const Expression& { return dg[static_cast<std::size_t>((k * m + i) * m + j)]; };
    for (int k = 0; k < m; ++k)
      for (int i = 0; i < m; ++i)
        for (int j = i; j < m; ++j) {
          std::vector<Expression> terms;
          for (int l = 0; l < m; ++l) {
            if (ginv_[idx(k, l)].is_constant(0.0)) continue;
            const Expression s = D(i, j, l) + D(j, i, l) - D(l, i, j);
            terms.push_back(ginv_[idx(k, l)] * s);
          }
          const Expression v = constant(0.5) * sum(terms);
          gamma_[static_cast<std::size_t>((k * m + i) * m + j)] = v;
          gamma_[static_cast<std::size_t>((k * m + j) * m + i)] = v;
        }
  }
  gamma_trace_.assign(static_cast<std::size_t>(m), constant(0.0));
  for (int k = 0; k < m; ++k) {
    std::vector<Expression> terms;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        if (ginv_[idx(i, j)].is_constant(0.0)) continue;
        terms.push_back(ginv_[idx(i, j)] * gamma_[static_cast<std::size_t>((k * m + i) * m + j)]);
      }
    gamma_trace_[static_cast<std::size_t>(k)] = sum(terms);
  }
  riemann_.assign(static_cast<std::size_t>(m * m * m * m), std::nullopt);
  christoffel_built_ = true;
}

const Expression& MetricCalculus::christoffel(int k, int i, int j) {
  build_christoffel();
  return gamma_[static_cast<std::size_t>((k * m_ + i) * m_ + j)];
}

const Expression& MetricCalculus::christoffel_trace(int k) {
  build_christoffel();
  return gamma_trace_[static_cast<std::size_t>(k)];
}

const Expression& MetricCalculus::riemann(int a, int b, int c, int d) {
  build_christoffel();
  const int m = m_;
  auto& slot = riemann_[static_cast<std::size_t>(((a * m + b) * m + c) * m + d)];
  if (slot) return *slot;
  const auto& coords = M_.coords();
  std::vector<Expression> terms;
  terms.push_back(d_(christoffel(a, d, b), coords[static_cast<std::size_t>(c)]));
  terms.push_back(-d_(christoffel(a, c, b), coords[static_cast<std::size_t>(d)]));
  for (int e = 0; e < m; ++e) {
    terms.push_back(christoffel(a, c, e) * christoffel(e, d, b));
    terms.push_back(-(christoffel(a, d, e) * christoffel(e, c, b)));
  }
  slot = sum(terms);
  return *slot;
}

Expression MetricCalculus::partial(const Expression& u, int i) {
  return d_(u, M_.coords()[static_cast<std::size_t>(i)]);
}

std::vector<Expression> MetricCalculus::gradient(const Expression& u) {
  std::vector<Expression> du(static_cast<std::size_t>(m_));
  for (int i = 0; i < m_; ++i) du[static_cast<std::size_t>(i)] = partial(u, i);
  std::vector<Expression> out(static_cast<std::size_t>(m_));
  for (int i = 0; i < m_; ++i) {
    std::vector<Expression> terms;
    for (int j = 0; j < m_; ++j) {
      if (ginv_[idx(i, j)].is_constant(0.0)) continue;
      terms.push_back(ginv_[idx(i, j)] * du[static_cast<std::size_t>(j)]);
    }
    out[static_cast<std::size_t>(i)] = sum(terms);
  }
  return out;
}

Expression MetricCalculus::laplacian(const Expression& u) {
  build_christoffel();
  std::vector<Expression> du(static_cast<std::size_t>(m_));
  for (int i = 0; i < m_; ++i) du[static_cast<std::size_t>(i)] = partial(u, i);
  std::vector<Expression> terms;
  for (int i = 0; i < m_; ++i)
    for (int j = 0; j < m_; ++j) {
      if (ginv_[idx(i, j)].is_constant(0.0)) continue;
      terms.push_back(ginv_[idx(i, j)] * partial(du[static_cast<std::size_t>(i)], j));
    }
  for (int k = 0; k < m_; ++k) {
    if (gamma_trace_[static_cast<std::size_t>(k)].is_constant(0.0)) continue;
    terms.push_back(-(gamma_trace_[static_cast<std::size_t>(k)] * du[static_cast<std::size_t>(k)]));
  }
  return sum(terms);
}

Expression MetricCalculus::inner_covectors(std::span<const Expression> a, std::span<const Expression> b) {
  std::vector<Expression> terms;
  for (int i = 0; i < m_; ++i)
    for (int j = 0; j < m_; ++j) {
      if (ginv_[idx(i, j)].is_constant(0.0)) continue;
      terms.push_back(ginv_[idx(i, j)] * a[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(j)]);
    }
  return sum(terms);
}

Expression MetricCalculus::divergence(std::span<const Expression> Y) {
  std::vector<Expression> terms;
  for (int i = 0; i < m_; ++i) terms.push_back(partial(sqrt_det_ * Y[static_cast<std::size_t>(i)], i));
  return sum(terms) / sqrt_det_;
}

}  // namespace hmlab
