#include "hmlab/mapcalc.hpp"

#include <algorithm>
#include <cmath>

#include "hmlab/error.hpp"

namespace hmlab {

std::string curvature_sign_name(CurvatureSign s) {
  switch (s) {
    case CurvatureSign::Flat: return "flat";
    case CurvatureSign::Nonpositive: return "nonpositive";
    case CurvatureSign::Negative: return "negative";
    case CurvatureSign::Unknown: break;
  }
  return "unknown";
}

namespace {

void check_vars(const Expression& e, const std::vector<std::string>& coords, const std::string& what) {
  for (const auto& v : variables_of(e)) {
    if (std::find(coords.begin(), coords.end(), v) == coords.end())
      throw ValidationError("mapcalc", what + " references '" + v + "', which is not a domain coordinate");
  }
  const auto params = parameters_of(e);
  if (!params.empty()) throw ValidationError("mapcalc", what + " references unbound parameter '" + *params.begin() + "'");
}

}  // namespace

MapProblem make_problem(std::string name, ChartManifold domain, ChartManifold target, std::vector<Expression> map,
                        Expression weight, ParamEnv params, CurvatureSign target_curvature) {
  if (static_cast<int>(map.size()) != target.dim())
    throw ValidationError("mapcalc", "map has " + std::to_string(map.size()) + " components but the target has dimension " +
                                         std::to_string(target.dim()));
  MapProblem P;
  P.name = std::move(name);
  P.domain = domain.with_params(params);
  P.target = target.with_params(params);
  for (auto& e : map) {
    e = bind_parameters(e, params);
    check_vars(e, P.domain.coords(), "map component");
  }
  P.map = std::move(map);
  P.weight = bind_parameters(weight, params);
  check_vars(P.weight, P.domain.coords(), "weight");
  P.params = std::move(params);
  P.target_curvature = target_curvature;
  return P;
}

MapProblem with_domain(const MapProblem& P, ChartManifold domain) {
  if (domain.dim() != P.m()) throw ValidationError("mapcalc", "replacement domain has a different dimension");
  MapProblem out = P;
  out.domain = domain.with_params(P.params);
  return out;
}

MapProblem with_weight(const MapProblem& P, Expression weight) {
  MapProblem out = P;
  out.weight = bind_parameters(weight, P.params);
  check_vars(out.weight, out.domain.coords(), "weight");
  return out;
}

double SectionValue::max_abs() const {
  double m = 0.0;
  for (double c : v) m = std::max(m, std::abs(c));
  return m;
}

SectionField operator+(const SectionField& a, const SectionField& b) {
  SectionField out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

SectionField operator-(const SectionField& a, const SectionField& b) {
  SectionField out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

SectionField operator-(const SectionField& a) {
  SectionField out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = -a[i];
  return out;
}

SectionField operator*(const Expression& s, const SectionField& a) {
  SectionField out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i];
  return out;
}

// ---------------------------------------------------------------------------

MapCalculus::MapCalculus(const MapProblem& P)
    : P_(P), m_(P.m()), n_(P.n()), dom_(P.domain), tgt_(P.target) {
  for (int a = 0; a < n_; ++a) to_phi_.emplace(P.target.coords()[static_cast<std::size_t>(a)], P.map[static_cast<std::size_t>(a)]);
  subst_ = std::make_unique<Substituter>(to_phi_);
  dphi_.resize(static_cast<std::size_t>(n_ * m_));
  for (int a = 0; a < n_; ++a)
    for (int i = 0; i < m_; ++i) dphi_[static_cast<std::size_t>(a * m_ + i)] = dom_.partial(P.map[static_cast<std::size_t>(a)], i);
  h_.assign(static_cast<std::size_t>(n_ * n_), std::nullopt);
  gamma_.assign(static_cast<std::size_t>(n_ * n_ * n_), std::nullopt);
  riemann_.assign(static_cast<std::size_t>(n_ * n_ * n_ * n_), std::nullopt);
}

const Expression& MapCalculus::dphi(int a, int i) { return dphi_[static_cast<std::size_t>(a * m_ + i)]; }

const Expression& MapCalculus::h(int a, int b) {
  auto& slot = h_[static_cast<std::size_t>(a * n_ + b)];
  if (!slot) slot = (*subst_)(tgt_.g(a, b));
  return *slot;
}

const Expression& MapCalculus::target_christoffel(int a, int b, int c) {
  auto& slot = gamma_[static_cast<std::size_t>((a * n_ + b) * n_ + c)];
  if (!slot) {
    const Expression& G = tgt_.christoffel(a, b, c);
    slot = G.is_constant(0.0) ? G : (*subst_)(G);
  }
  return *slot;
}

const Expression& MapCalculus::target_riemann(int a, int b, int c, int d) {
  auto& slot = riemann_[static_cast<std::size_t>(((a * n_ + b) * n_ + c) * n_ + d)];
  if (!slot) {
    if (P_.target.form() == MetricForm::Euclidean) {
      slot = constant(0.0);
    } else {
      const Expression& R = tgt_.riemann(a, b, c, d);
      slot = R.is_constant(0.0) ? R : (*subst_)(R);
    }
  }
  return *slot;
}

Expression MapCalculus::energy_density() {
  std::vector<Expression> terms;
  for (int i = 0; i < m_; ++i)
    for (int j = 0; j < m_; ++j) {
      const Expression& gij = dom_.ginv(i, j);
      if (gij.is_constant(0.0)) continue;
      for (int a = 0; a < n_; ++a)
        for (int b = 0; b < n_; ++b) {
          const Expression& hab = h(a, b);
          if (hab.is_constant(0.0)) continue;
          terms.push_back(gij * hab * dphi(a, i) * dphi(b, j));
        }
    }
  return sum(terms);
}

Expression MapCalculus::inner(const SectionField& V, const SectionField& W) {
  std::vector<Expression> terms;
  for (int a = 0; a < n_; ++a)
    for (int b = 0; b < n_; ++b) {
      const Expression& hab = h(a, b);
      if (hab.is_constant(0.0)) continue;
      terms.push_back(hab * V[static_cast<std::size_t>(a)] * W[static_cast<std::size_t>(b)]);
    }
  return sum(terms);
}

SectionField MapCalculus::tension() {
  if (tension_) return *tension_;
  SectionField tau(static_cast<std::size_t>(n_));
  for (int a = 0; a < n_; ++a) {
    std::vector<Expression> terms;
    for (int i = 0; i < m_; ++i)
      for (int j = 0; j < m_; ++j) {
        const Expression& gij = dom_.ginv(i, j);
        if (gij.is_constant(0.0)) continue;
        std::vector<Expression> inner_terms{dom_.partial(dphi(a, i), j)};
        for (int b = 0; b < n_; ++b)
          for (int c = 0; c < n_; ++c) {
            const Expression& G = target_christoffel(a, b, c);
            if (G.is_constant(0.0)) continue;
            inner_terms.push_back(G * dphi(b, i) * dphi(c, j));
          }
        terms.push_back(gij * sum(inner_terms));
      }
    for (int k = 0; k < m_; ++k) {
      const Expression& tr = dom_.christoffel_trace(k);
      if (tr.is_constant(0.0)) continue;
      terms.push_back(-(tr * dphi(a, k)));
    }
    tau[static_cast<std::size_t>(a)] = sum(terms);
  }
  tension_ = tau;
  return tau;
}

SectionField MapCalculus::push_forward(std::span<const Expression> X) {
  SectionField out(static_cast<std::size_t>(n_));
  for (int a = 0; a < n_; ++a) {
    std::vector<Expression> terms;
    for (int i = 0; i < m_; ++i) terms.push_back(dphi(a, i) * X[static_cast<std::size_t>(i)]);
    out[static_cast<std::size_t>(a)] = sum(terms);
  }
  return out;
}

SectionField MapCalculus::f_tension(const Expression& f) {
  const auto grad_f = dom_.gradient(f);
  return f * tension() + push_forward(grad_f);
}

SectionField MapCalculus::covariant(const SectionField& V, int i) {
  SectionField out(static_cast<std::size_t>(n_));
  for (int a = 0; a < n_; ++a) {
    std::vector<Expression> terms{dom_.partial(V[static_cast<std::size_t>(a)], i)};
    for (int b = 0; b < n_; ++b)
      for (int c = 0; c < n_; ++c) {
        const Expression& G = target_christoffel(a, b, c);
        if (G.is_constant(0.0)) continue;
        terms.push_back(G * dphi(b, i) * V[static_cast<std::size_t>(c)]);
      }
    out[static_cast<std::size_t>(a)] = sum(terms);
  }
  return out;
}

SectionField MapCalculus::covariant_along(const SectionField& V, std::span<const Expression> X) {
  SectionField out(static_cast<std::size_t>(n_), constant(0.0));
  for (int i = 0; i < m_; ++i) {
    const Expression& Xi = X[static_cast<std::size_t>(i)];
    if (Xi.is_constant(0.0)) continue;
    out = out + Xi * covariant(V, i);
  }
  return out;
}

SectionField MapCalculus::rough_laplacian(const SectionField& V) {
  std::vector<SectionField> W;
  W.reserve(static_cast<std::size_t>(m_));
  for (int k = 0; k < m_; ++k) W.push_back(covariant(V, k));
  SectionField out(static_cast<std::size_t>(n_));
  std::vector<std::vector<Expression>> terms(static_cast<std::size_t>(n_));
  for (int i = 0; i < m_; ++i)
    for (int j = 0; j < m_; ++j) {
      const Expression& gij = dom_.ginv(i, j);
      if (gij.is_constant(0.0)) continue;
      const SectionField second = covariant(W[static_cast<std::size_t>(j)], i);
      for (int a = 0; a < n_; ++a) terms[static_cast<std::size_t>(a)].push_back(gij * second[static_cast<std::size_t>(a)]);
    }
  for (int k = 0; k < m_; ++k) {
    const Expression& tr = dom_.christoffel_trace(k);
    if (tr.is_constant(0.0)) continue;
    for (int a = 0; a < n_; ++a)
      terms[static_cast<std::size_t>(a)].push_back(-(tr * W[static_cast<std::size_t>(k)][static_cast<std::size_t>(a)]));
  }
  for (int a = 0; a < n_; ++a) out[static_cast<std::size_t>(a)] = sum(terms[static_cast<std::size_t>(a)]);
  return out;
}

SectionField MapCalculus::curvature_trace(const SectionField& V) {
  // g^{ij} R^a_{bcd} dphi^b_j dphi^c_i V^d, i.e. (R(dphi_i, V) dphi_j)^a
  SectionField out(static_cast<std::size_t>(n_), constant(0.0));
  if (P_.target.form() == MetricForm::Euclidean) return out;
  for (int a = 0; a < n_; ++a) {
    std::vector<Expression> terms;
    for (int b = 0; b < n_; ++b)
      for (int c = 0; c < n_; ++c)
        for (int d = 0; d < n_; ++d) {
          const Expression& R = target_riemann(a, b, c, d);
          if (R.is_constant(0.0)) continue;
          std::vector<Expression> metric_terms;
          for (int i = 0; i < m_; ++i)
            for (int j = 0; j < m_; ++j) {
              const Expression& gij = dom_.ginv(i, j);
              if (gij.is_constant(0.0)) continue;
              metric_terms.push_back(gij * dphi(b, j) * dphi(c, i));
            }
          terms.push_back(R * sum(metric_terms) * V[static_cast<std::size_t>(d)]);
        }
    out[static_cast<std::size_t>(a)] = sum(terms);
  }
  return out;
}

SectionField MapCalculus::jacobi(const SectionField& V) { return -rough_laplacian(V) + curvature_trace(V); }

SectionField MapCalculus::bitension() {
  const SectionField tau = tension();
  return rough_laplacian(tau) - curvature_trace(tau);
}

SectionField MapCalculus::f_bitension(const Expression& f) {
  const SectionField tau = tension();
  const auto grad_f = dom_.gradient(f);
  return f * bitension() + dom_.laplacian(f) * tau + constant(2.0) * covariant_along(tau, grad_f);
}

SectionField MapCalculus::f_bitension_divergence_form(const Expression& f) {
  const SectionField W = f * tension();
  return rough_laplacian(W) - curvature_trace(W);
}

SectionField MapCalculus::bi_f_tension(const Expression& f) {
  const SectionField tf = f_tension(f);
  const auto grad_f = dom_.gradient(f);
  return -(f * jacobi(tf)) + covariant_along(tf, grad_f);
}

Expression MapCalculus::f_laplacian(const Expression& f, const Expression& u) { return hmlab::f_laplacian(dom_, f, u); }
Expression MapCalculus::bi_f_laplacian(const Expression& f, const Expression& u) { return hmlab::bi_f_laplacian(dom_, f, u); }
Expression MapCalculus::f_bi_laplacian(const Expression& f, const Expression& u) { return hmlab::f_bi_laplacian(dom_, f, u); }

// ---------------------------------------------------------------------------

namespace {

std::vector<Expression> partials(MetricCalculus& C, const Expression& u) {
  std::vector<Expression> out;
  for (int i = 0; i < C.dim(); ++i) out.push_back(C.partial(u, i));
  return out;
}

}  // namespace

Expression f_laplacian(MetricCalculus& C, const Expression& f, const Expression& u) {
  return f * C.laplacian(u) + C.inner_covectors(partials(C, f), partials(C, u));
}

Expression bi_f_laplacian(MetricCalculus& C, const Expression& f, const Expression& u) {
  return f_laplacian(C, f, f_laplacian(C, f, u));
}

Expression f_bi_laplacian(MetricCalculus& C, const Expression& f, const Expression& u) {
  const Expression lap_u = C.laplacian(u);
  return f * C.laplacian(lap_u) + C.laplacian(f) * lap_u +
         constant(2.0) * C.inner_covectors(partials(C, f), partials(C, lap_u));
}

CompiledFields::CompiledFields(std::span<const SectionField> fields, std::span<const Expression> scalars) {
  std::vector<Expression> roots;
  for (const auto& F : fields) {
    offsets_.push_back(roots.size());
    sizes_.push_back(F.size());
    roots.insert(roots.end(), F.begin(), F.end());
  }
  scalar_offset_ = roots.size();
  roots.insert(roots.end(), scalars.begin(), scalars.end());
  tape_ = Tape(roots);
}

std::vector<double> CompiledFields::evaluate(std::span<const double> x) const { return tape_.evaluate(x); }

// ---------------------------------------------------------------------------

std::string operator_name(Operator op) {
  switch (op) {
    case Operator::Tension: return "tension";
    case Operator::FTension: return "f_tension";
    case Operator::Bitension: return "bitension";
    case Operator::FBitension: return "f_bitension";
    case Operator::FBitensionDivergence: return "f_bitension_divergence_form";
    case Operator::BiFTension: return "bi_f_tension";
  }
  return "?";
}

Operator operator_from_name(std::string_view name) {
  for (Operator op : {Operator::Tension, Operator::FTension, Operator::Bitension, Operator::FBitension,
                      Operator::FBitensionDivergence, Operator::BiFTension}) {
    if (operator_name(op) == name) return op;
  }
  throw ValidationError("mapcalc", "unknown operator '" + std::string(name) + "'");
}

namespace {

SectionField build_operator(MapCalculus& C, Operator op) {
  const Expression& f = C.problem().weight;
  switch (op) {
    case Operator::Tension: return C.tension();
    case Operator::FTension: return C.f_tension(f);
    case Operator::Bitension: return C.bitension();
    case Operator::FBitension: return C.f_bitension(f);
    case Operator::FBitensionDivergence: return C.f_bitension_divergence_form(f);
    case Operator::BiFTension: return C.bi_f_tension(f);
  }
  return {};
}

SectionValue value_at(const CompiledFields& c, std::span<const double> x) {
  SectionValue out;
  out.x.assign(x.begin(), x.end());
  out.v = c.evaluate(x);
  out.v.resize(c.size(0));
  return out;
}

void check_point(const MapProblem& P, std::span<const double> x) {
  if (static_cast<int>(x.size()) != P.m())
    throw ValidationError("mapcalc", "point has dimension " + std::to_string(x.size()) + ", domain has " +
                                         std::to_string(P.m()));
}

}  // namespace

OperatorEvaluator::OperatorEvaluator(const MapProblem& P, Operator op) : P_(P) {
  MapCalculus C(P_);
  field_ = build_operator(C, op);
  const std::vector<SectionField> fields{field_};
  compiled_ = CompiledFields(fields);
}

SectionValue OperatorEvaluator::operator()(std::span<const double> x) const {
  check_point(P_, x);
  return value_at(compiled_, x);
}

Differential differential(const MapProblem& P, std::span<const double> x) {
  check_point(P, x);
  MapCalculus C(P);
  std::vector<Expression> roots;
  for (int a = 0; a < P.n(); ++a)
    for (int i = 0; i < P.m(); ++i) roots.push_back(C.dphi(a, i));
  roots.push_back(C.energy_density());
  const auto v = Tape(roots).evaluate(x);
  Differential D;
  D.n = P.n();
  D.m = P.m();
  D.values.assign(v.begin(), v.end() - 1);
  D.energy_density = v.back();
  return D;
}

SectionValue tension(const MapProblem& P, std::span<const double> x) { return OperatorEvaluator(P, Operator::Tension)(x); }
SectionValue f_tension(const MapProblem& P, std::span<const double> x) { return OperatorEvaluator(P, Operator::FTension)(x); }
SectionValue bitension(const MapProblem& P, std::span<const double> x) { return OperatorEvaluator(P, Operator::Bitension)(x); }
SectionValue f_bitension(const MapProblem& P, std::span<const double> x) {
  return OperatorEvaluator(P, Operator::FBitension)(x);
}
SectionValue f_bitension_divergence_form(const MapProblem& P, std::span<const double> x) {
  return OperatorEvaluator(P, Operator::FBitensionDivergence)(x);
}
SectionValue bi_f_tension(const MapProblem& P, std::span<const double> x) {
  return OperatorEvaluator(P, Operator::BiFTension)(x);
}

SectionValue pullback_derivative(const MapProblem& P, const SectionField& V, int i, std::span<const double> x) {
  check_point(P, x);
  if (i < 0 || i >= P.m()) throw ValidationError("mapcalc", "direction index out of range");
  MapCalculus C(P);
  return evaluate_section(C.covariant(V, i), x);
}

SectionValue rough_laplacian(const MapProblem& P, const SectionField& V, std::span<const double> x) {
  check_point(P, x);
  MapCalculus C(P);
  return evaluate_section(C.rough_laplacian(V), x);
}

SectionValue jacobi(const MapProblem& P, const SectionField& V, std::span<const double> x) {
  check_point(P, x);
  MapCalculus C(P);
  return evaluate_section(C.jacobi(V), x);
}

SectionValue evaluate_section(const SectionField& V, std::span<const double> x) {
  SectionValue out;
  out.x.assign(x.begin(), x.end());
  for (const auto& e : V) out.v.push_back(evaluate(e, x));
  return out;
}

double section_norm(const MapProblem& P, const SectionValue& V) {
  std::vector<double> y(static_cast<std::size_t>(P.n()));
  for (int a = 0; a < P.n(); ++a) y[static_cast<std::size_t>(a)] = evaluate(P.map[static_cast<std::size_t>(a)], V.x);
  double s = 0.0;
  for (int a = 0; a < P.n(); ++a)
    for (int b = 0; b < P.n(); ++b)
      s += evaluate(P.target.metric(a, b), y, P.target.params()) * V.v[static_cast<std::size_t>(a)] *
           V.v[static_cast<std::size_t>(b)];
  return std::sqrt(std::max(0.0, s));
}

double f_laplacian(const ChartManifold& M, const Expression& f, const Expression& u, std::span<const double> x) {
  MetricCalculus C(M);
  return evaluate(f_laplacian(C, bind_parameters(f, M.params()), bind_parameters(u, M.params())), x);
}

double bi_f_laplacian(const ChartManifold& M, const Expression& f, const Expression& u, std::span<const double> x) {
  MetricCalculus C(M);
  return evaluate(bi_f_laplacian(C, bind_parameters(f, M.params()), bind_parameters(u, M.params())), x);
}

double f_bi_laplacian(const ChartManifold& M, const Expression& f, const Expression& u, std::span<const double> x) {
  MetricCalculus C(M);
  return evaluate(f_bi_laplacian(C, bind_parameters(f, M.params()), bind_parameters(u, M.params())), x);
}

}  // namespace hmlab
