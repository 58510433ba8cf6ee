#include "hmlab/identities.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include "hmlab/error.hpp"

namespace hmlab {

namespace {

const char* const kConformalIds[] = {"THM1", "CONF-TENSION", "CONF-FTENSION", "JAC-CONF", "COR1", "PROP2"};

bool needs_m_not_2(std::string_view id) {
  return std::find(std::begin(kConformalIds), std::end(kConformalIds), id) != std::end(kConformalIds);
}

bool npc_flagged(const MapProblem& P) {
  return P.target_curvature == CurvatureSign::Flat || P.target_curvature == CurvatureSign::Nonpositive ||
         P.target_curvature == CurvatureSign::Negative;
}

}  // namespace

const std::vector<IdentityInfo>& identity_catalogue() {
  static const std::vector<IdentityInfo> catalogue = {
      {"THM1", IdentityKind::Equality, "tau_{2,f}(phi, g) = f^{m/(m-2)} tau_{f^{m/(m-2)},2}(phi, gbar), gbar = f^{2/(m-2)} g"},
      {"CONF-TENSION", IdentityKind::Equality, "tau(phi, F^-2 g) = F^2 (tau(phi, g) - (m-2) dphi(grad ln F)), F = f"},
      {"CONF-FTENSION", IdentityKind::Equality, "tau_f(phi, g) = f^{m/(m-2)} tau(phi, gbar)"},
      {"JAC-CONF", IdentityKind::Equality, "J_g(X) = f^{2/(m-2)} J_gbar(X) + f^-1 nabla_{grad f} X"},
      {"JAC-PRODUCT", IdentityKind::Equality, "J(f X) = f J(X) - (Delta f) X - 2 nabla_{grad f} X"},
      {"COR1", IdentityKind::Equality,
       "tau_{2,f}(phi, g) = f' (f' tau_2(phi, gbar) + (Delta_gbar f') tau(phi, gbar) + 2 nabla_{grad_gbar f'} tau(phi, gbar)), "
       "f' = f^{m/(m-2)}"},
      {"PROP2", IdentityKind::Equality, "Delta_f^2 u = f' Delta-bar_{f',2} u on gbar, u = phi^1"},
      {"WEITZENBOCK", IdentityKind::Equality, "1/2 Delta |V|^2 = |nabla V|^2 + <Delta^phi V, V>, V = tau_f"},
      {"DIV-OMEGA", IdentityKind::Equality, "div Y = |tau_f|^2 + <f dphi, nabla tau_f>, Y dual to <f dphi(.), tau_f>"},
      {"EPS-REG", IdentityKind::Equality,
       "Delta (|V|^2+e)^{1/2} = (|V|^2+e)^{-3/2} (1/2 (|V|^2+e) Delta|V|^2 - 1/4 |grad |V|^2|^2), e in {1, 1e-2, 1e-4}"},
      {"NPC-INEQ", IdentityKind::Inequality, "|nabla tau_f|^2 - sum R^N(dphi_i, tau_f, dphi_i, tau_f) >= 0"},
      {"GD31-INEQ", IdentityKind::Inequality, "Delta |tau_f| + <grad |tau_f|, grad ln f> >= 0 (bi-f-harmonic, NPC target)"},
  };
  return catalogue;
}

const IdentityInfo& identity_info(std::string_view id) {
  for (const auto& e : identity_catalogue())
    if (e.id == id) return e;
  throw ValidationError("identities", "unknown identity '" + std::string(id) + "'");
}

std::optional<std::string> inapplicable_reason(std::string_view id, const MapProblem& P) {
  identity_info(id);
  if (needs_m_not_2(id) && P.m() == 2) return "requires domain dimension m != 2 (conformal change)";
  if ((id == "NPC-INEQ" || id == "GD31-INEQ") && !npc_flagged(P))
    return "requires a target flagged flat or nonpositively curved (flag is '" +
           curvature_sign_name(P.target_curvature) + "')";
  return std::nullopt;
}

nlohmann::json VerificationReport::to_json() const {
  nlohmann::json j;
  j["identity_id"] = identity_id;
  j["problem_name"] = problem_name;
  j["seed"] = seed;
  j["sample_count"] = sample_count;
  auto residuals = nlohmann::json::array();
  for (double r : per_sample_residuals) residuals.push_back(std::isfinite(r) ? nlohmann::json(r) : nlohmann::json());
  j["per_sample_residuals"] = residuals;
  j["max_absolute_residual"] = std::isfinite(max_absolute_residual) ? nlohmann::json(max_absolute_residual) : nlohmann::json();
  j["max_relative_residual"] = std::isfinite(max_relative_residual) ? nlohmann::json(max_relative_residual) : nlohmann::json();
  j["tolerance"] = tolerance;
  j["verdict"] = pass ? "pass" : "fail";
  j["wall_time"] = wall_time ? nlohmann::json(*wall_time) : nlohmann::json();
  if (!notes.empty()) j["notes"] = notes;
  return j;
}

// ---------------------------------------------------------------------------

namespace {

struct Recipe {
  // Equality: lhs[k] against rhs[k]. Inequality: lhs[0] is a 1-component value.
  std::vector<SectionField> lhs;
  std::vector<SectionField> rhs;
  // Samples are only taken where this scalar exceeds the gate threshold.
  std::optional<Expression> gate;
  double gate_threshold = 0.0;
  // Fields that must vanish for the entry to apply (GD31: tau_{2,f}), with a scale field.
  std::optional<SectionField> must_vanish;
  std::optional<SectionField> vanish_scale;
};

Expression rational_power(const Expression& f, std::int64_t num, std::int64_t den) {
  return pow(f, Rational(num, den));
}

// Exponents used by the conformal entries: gbar = f^{2/(m-2)} g = F^{-2} g with
// F = f^{-1/(m-2)}, and f' = f^{m/(m-2)}.
struct ConformalData {
  MapProblem bar;
  Expression f_prime;
};

ConformalData conformal_data(const MapProblem& P) {
  const int m = P.m();
  const Expression F = rational_power(P.weight, -1, m - 2);
  ConformalData d{with_domain(P, conformal_rescale(P.domain, F)), rational_power(P.weight, m, m - 2)};
  return d;
}

// Fixed smooth probe section for the Jacobi-operator entries.
SectionField probe_section(const MapProblem& P) {
  const auto& c = P.domain.coords();
  const int m = P.m();
  SectionField X;
  for (int a = 0; a < P.n(); ++a) {
    const Expression x0 = variable(c[0], 0);
    const Expression xa = variable(c[static_cast<std::size_t>(a % m)], a % m);
    X.push_back(cos(constant(0.7) * x0 + constant(0.3 * a)) * P.map[static_cast<std::size_t>(a)] +
                constant(0.5) * xa * xa);
  }
  return X;
}

SectionField scalar_field(const Expression& e) { return SectionField{e}; }

// g^{ij} h(A_i, B_j) for families of sections indexed by domain direction.
Expression pair_families(MapCalculus& C, const std::vector<SectionField>& A, const std::vector<SectionField>& B) {
  std::vector<Expression> terms;
  for (int i = 0; i < C.m(); ++i)
    for (int j = 0; j < C.m(); ++j) {
      const Expression& gij = C.domain().ginv(i, j);
      if (gij.is_constant(0.0)) continue;
      terms.push_back(gij * C.inner(A[static_cast<std::size_t>(i)], B[static_cast<std::size_t>(j)]));
    }
  return sum(terms);
}

std::vector<SectionField> covariant_family(MapCalculus& C, const SectionField& V) {
  std::vector<SectionField> out;
  for (int i = 0; i < C.m(); ++i) out.push_back(C.covariant(V, i));
  return out;
}

Recipe build_recipe(std::string_view id, const MapProblem& P) {
  Recipe r;
  const Expression& f = P.weight;
  const int m = P.m();
  if (id == "THM1") {
    MapCalculus C(P);
    r.lhs.push_back(C.bi_f_tension(f));
    const auto d = conformal_data(P);
    MapCalculus Cb(d.bar);
    r.rhs.push_back(d.f_prime * Cb.f_bitension(d.f_prime));
  } else if (id == "CONF-TENSION") {
    const Expression& F = f;
    MapCalculus C(P);
    MapCalculus Cb(with_domain(P, conformal_rescale(P.domain, F)));
    r.lhs.push_back(Cb.tension());
    const auto grad_log = C.domain().gradient(log(F));
    r.rhs.push_back((F * F) * (C.tension() - constant(static_cast<double>(m - 2)) * C.push_forward(grad_log)));
  } else if (id == "CONF-FTENSION") {
    MapCalculus C(P);
    r.lhs.push_back(C.f_tension(f));
    const auto d = conformal_data(P);
    MapCalculus Cb(d.bar);
    r.rhs.push_back(d.f_prime * Cb.tension());
  } else if (id == "JAC-CONF") {
    const SectionField X = probe_section(P);
    MapCalculus C(P);
    r.lhs.push_back(C.jacobi(X));
    const auto d = conformal_data(P);
    MapCalculus Cb(d.bar);
    const auto grad_f = C.domain().gradient(f);
    r.rhs.push_back(rational_power(f, 2, m - 2) * Cb.jacobi(X) + (constant(1.0) / f) * C.covariant_along(X, grad_f));
  } else if (id == "JAC-PRODUCT") {
    const SectionField X = probe_section(P);
    MapCalculus C(P);
    r.lhs.push_back(C.jacobi(f * X));
    const auto grad_f = C.domain().gradient(f);
    r.rhs.push_back(f * C.jacobi(X) - C.domain().laplacian(f) * X - constant(2.0) * C.covariant_along(X, grad_f));
  } else if (id == "COR1") {
    MapCalculus C(P);
    r.lhs.push_back(C.bi_f_tension(f));
    const auto d = conformal_data(P);
    MapCalculus Cb(d.bar);
    const SectionField tau = Cb.tension();
    const auto grad_fp = Cb.domain().gradient(d.f_prime);
    const SectionField inner = d.f_prime * (-Cb.jacobi(tau)) + Cb.domain().laplacian(d.f_prime) * tau +
                               constant(2.0) * Cb.covariant_along(tau, grad_fp);
    r.rhs.push_back(d.f_prime * inner);
  } else if (id == "PROP2") {
    const Expression& u = P.map[0];
    MetricCalculus G(P.domain);
    r.lhs.push_back(scalar_field(bi_f_laplacian(G, f, u)));
    const auto d = conformal_data(P);
    MetricCalculus Gb(d.bar.domain);
    r.rhs.push_back(scalar_field(d.f_prime * f_bi_laplacian(Gb, d.f_prime, u)));
  } else if (id == "WEITZENBOCK") {
    MapCalculus C(P);
    const SectionField V = C.f_tension(f);
    r.lhs.push_back(scalar_field(constant(0.5) * C.domain().laplacian(C.norm2(V))));
    const auto DV = covariant_family(C, V);
    r.rhs.push_back(scalar_field(pair_families(C, DV, DV) + C.inner(C.rough_laplacian(V), V)));
  } else if (id == "DIV-OMEGA") {
    MapCalculus C(P);
    const SectionField V = C.f_tension(f);
    // omega_j = f h(d_j phi, tau_f), Y^i = g^{ij} omega_j
    std::vector<Expression> omega;
    std::vector<SectionField> dphi_family;
    for (int j = 0; j < m; ++j) {
      SectionField col;
      for (int a = 0; a < P.n(); ++a) col.push_back(C.dphi(a, j));
      dphi_family.push_back(col);
      omega.push_back(f * C.inner(col, V));
    }
    std::vector<Expression> Y;
    for (int i = 0; i < m; ++i) {
      std::vector<Expression> terms;
      for (int j = 0; j < m; ++j) {
        const Expression& gij = C.domain().ginv(i, j);
        if (gij.is_constant(0.0)) continue;
        terms.push_back(gij * omega[static_cast<std::size_t>(j)]);
      }
      Y.push_back(sum(terms));
    }
    r.lhs.push_back(scalar_field(C.domain().divergence(Y)));
    std::vector<SectionField> f_dphi;
    for (const auto& col : dphi_family) f_dphi.push_back(f * col);
    r.rhs.push_back(scalar_field(C.norm2(V) + pair_families(C, f_dphi, covariant_family(C, V))));
  } else if (id == "EPS-REG") {
    MapCalculus C(P);
    const SectionField V = C.f_tension(f);
    const Expression n2 = C.norm2(V);
    const Expression lap_n2 = C.domain().laplacian(n2);
    std::vector<Expression> dn2;
    for (int i = 0; i < m; ++i) dn2.push_back(C.domain().partial(n2, i));
    const Expression grad_sq = C.domain().inner_covectors(dn2, dn2);
    for (double eps : {1.0, 1e-2, 1e-4}) {
      const Expression s = n2 + constant(eps);
      r.lhs.push_back(scalar_field(C.domain().laplacian(sqrt(s))));
      r.rhs.push_back(scalar_field(pow(s, Rational(-3, 2)) *
                                   (constant(0.5) * s * lap_n2 - constant(0.25) * grad_sq)));
    }
  } else if (id == "NPC-INEQ") {
    MapCalculus C(P);
    const SectionField V = C.f_tension(f);
    const auto DV = covariant_family(C, V);
    r.lhs.push_back(scalar_field(pair_families(C, DV, DV) + C.inner(C.curvature_trace(V), V)));
  } else if (id == "GD31-INEQ") {
    MapCalculus C(P);
    const SectionField V = C.f_tension(f);
    const Expression n2 = C.norm2(V);
    const Expression norm = sqrt(n2);
    std::vector<Expression> dn, dlogf;
    for (int i = 0; i < m; ++i) {
      dn.push_back(C.domain().partial(norm, i));
      dlogf.push_back(C.domain().partial(log(f), i));
    }
    r.lhs.push_back(scalar_field(C.domain().laplacian(norm) + C.domain().inner_covectors(dn, dlogf)));
    r.gate = norm;
    r.gate_threshold = kRegularizationThreshold;
    r.must_vanish = C.bi_f_tension(f);
    r.vanish_scale = f * C.jacobi(V);
  } else {
    throw ValidationError("identities", "unknown identity '" + std::string(id) + "'");
  }
  return r;
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

VerificationReport verify(std::string_view id, const MapProblem& P, std::size_t samples, std::uint64_t seed, double tol,
                          const VerifyOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const IdentityInfo& info = identity_info(id);
  if (samples == 0) throw ValidationError("identities", "samples must be >= 1");
  if (!(tol > 0.0)) throw ValidationError("identities", "tolerance must be > 0");
  if (auto why = inapplicable_reason(id, P))
    throw InapplicableError("identities", info.id + " is not applicable to '" + P.name + "': " + *why);

  const Recipe recipe = build_recipe(id, P);
  std::vector<SectionField> fields = recipe.lhs;
  fields.insert(fields.end(), recipe.rhs.begin(), recipe.rhs.end());
  const std::size_t vanish_index = fields.size();
  if (recipe.must_vanish) {
    fields.push_back(*recipe.must_vanish);
    fields.push_back(*recipe.vanish_scale);
  }
  std::vector<Expression> scalars;
  if (recipe.gate) scalars.push_back(*recipe.gate);
  const CompiledFields compiled(fields, scalars);

  VerificationReport report;
  report.identity_id = info.id;
  report.problem_name = P.name;
  report.seed = seed;
  report.sample_count = samples;
  report.tolerance = info.kind == IdentityKind::Inequality ? kInequalityFloor : tol;

  // Sample selection (serial, deterministic).
  std::vector<std::vector<double>> points;
  if (!recipe.gate) {
    points = sample_points(P.domain, samples, seed);
  } else {
    const Tape gate_tape(scalars);
    std::uint64_t round_seed = seed;
    for (int round = 0; round < 16 && points.size() < samples; ++round, round_seed += 0x9e3779b97f4a7c15ULL) {
      for (auto& x : sample_points(P.domain, 4 * samples, round_seed)) {
        double g = 0.0;
        try {
          g = gate_tape.evaluate(x)[0];
        } catch (const DomainError&) {
          continue;
        }
        if (g > recipe.gate_threshold) points.push_back(std::move(x));
        if (points.size() == samples) break;
      }
    }
    if (points.size() < samples)
      throw InapplicableError("identities", info.id + " on '" + P.name + "': |tau_f| <= " +
                                                std::to_string(recipe.gate_threshold) + " almost everywhere");
    report.notes.push_back("samples restricted to |tau_f| > " + std::to_string(recipe.gate_threshold));
  }

  // Concurrent evaluation; results land by sample index.
  std::vector<std::vector<double>> values(points.size());
  std::vector<std::string> errors(points.size());
  unsigned threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, points.size()));
  auto work = [&](unsigned t) {
    for (std::size_t k = t; k < points.size(); k += threads) {
      try {
        values[k] = compiled.evaluate(points[k]);
      } catch (const Error& e) {
        errors[k] = e.what();
      }
    }
  };
  if (threads <= 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  bool any_error = false;
  double max_abs = 0.0, max_rel = 0.0;
  double vanish_worst = 0.0;
  std::string first_error;
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (!errors[k].empty()) {
      any_error = true;
      if (first_error.empty()) first_error = errors[k];
      report.per_sample_residuals.push_back(nan);
      continue;
    }
    const auto& v = values[k];
    auto field = [&](std::size_t idx) {
      return std::span<const double>(v.data() + compiled.offset(idx), compiled.size(idx));
    };
    if (info.kind == IdentityKind::Equality) {
      double abs_k = 0.0, rel_k = 0.0;
      for (std::size_t p = 0; p < recipe.lhs.size(); ++p) {
        const auto L = field(p);
        const auto R = field(recipe.lhs.size() + p);
        std::vector<double> diff(L.size());
        for (std::size_t a = 0; a < L.size(); ++a) diff[a] = L[a] - R[a];
        const double d = norm2(diff);
        abs_k = std::max(abs_k, d);
        rel_k = std::max(rel_k, d / std::max({1.0, norm2(L), norm2(R)}));
      }
      if (!std::isfinite(abs_k)) any_error = true;
      report.per_sample_residuals.push_back(abs_k);
      max_abs = std::max(max_abs, abs_k);
      max_rel = std::max(max_rel, rel_k);
    } else {
      const double value = field(0)[0];
      if (!std::isfinite(value)) any_error = true;
      report.per_sample_residuals.push_back(value);
      const double violation = std::max(0.0, -value);
      max_abs = std::max(max_abs, violation);
      max_rel = std::max(max_rel, violation / std::max(1.0, std::abs(value)));
      if (recipe.must_vanish) {
        const double r = norm2(field(vanish_index)) / std::max(1.0, norm2(field(vanish_index + 1)));
        vanish_worst = std::max(vanish_worst, r);
      }
    }
  }
  if (recipe.must_vanish && vanish_worst > 1e-8)
    throw InapplicableError("identities", info.id + " requires a bi-f-harmonic map; '" + P.name +
                                              "' has relative |tau_{2,f}| up to " + std::to_string(vanish_worst));
  if (any_error) {
    max_abs = max_rel = std::numeric_limits<double>::infinity();
    report.notes.push_back("evaluation failed at some samples: " + first_error);
  }
  report.max_absolute_residual = max_abs;
  report.max_relative_residual = max_rel;
  if (info.kind == IdentityKind::Equality) {
    report.pass = !any_error && max_rel <= tol;
  } else {
    double min_value = std::numeric_limits<double>::infinity();
    for (double r : report.per_sample_residuals) min_value = std::min(min_value, r);
    report.pass = !any_error && min_value >= -kInequalityFloor;
  }
  if (options.record_wall_time)
    report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

// ---------------------------------------------------------------------------

FdQuantity fd_quantity_from_name(std::string_view name) {
  if (name == "tension") return FdQuantity::Tension;
  if (name == "f_tension") return FdQuantity::FTension;
  if (name == "laplace_beltrami") return FdQuantity::LaplaceBeltrami;
  if (name == "pullback_derivative") return FdQuantity::PullbackDerivative;
  throw ValidationError("identities", "the finite-difference oracle does not support '" + std::string(name) + "'");
}

namespace {

class FdEval {
 public:
  FdEval(double step, const ParamEnv& env) : h_(step), s_(std::sqrt(step)), env_(env) {}

  double at(const Expression& e, std::span<const double> x) const { return evaluate(e, x, env_); }

  double d1(const Expression& e, std::span<const double> x, int i) const {
    std::vector<double> p(x.begin(), x.end()), q(x.begin(), x.end());
    p[static_cast<std::size_t>(i)] += h_;
    q[static_cast<std::size_t>(i)] -= h_;
    return (at(e, p) - at(e, q)) / (2.0 * h_);
  }

  double d2(const Expression& e, std::span<const double> x, int i, int j) const {
    return (4.0 * raw_d2(e, x, i, j, 0.5 * s_) - raw_d2(e, x, i, j, s_)) / 3.0;
  }

 private:
  double raw_d2(const Expression& e, std::span<const double> x, int i, int j, double s) const {
    auto shifted = [&](double di, double dj) {
      std::vector<double> p(x.begin(), x.end());
      p[static_cast<std::size_t>(i)] += di;
      p[static_cast<std::size_t>(j)] += dj;
      return at(e, p);
    };
    if (i == j) return (shifted(s, 0) - 2.0 * at(e, x) + shifted(-s, 0)) / (s * s);
    return (shifted(s, s) - shifted(s, -s) - shifted(-s, s) + shifted(-s, -s)) / (4.0 * s * s);
  }

  double h_;
  double s_;
  const ParamEnv& env_;
};

struct FdGeometry {
  Eigen::MatrixXd ginv;
  std::vector<double> gamma;  // [k][i][j]
};

FdGeometry fd_geometry(const ChartManifold& M, std::span<const double> x, double step) {
  const int m = M.dim();
  const FdEval D(step, M.params());
  Eigen::MatrixXd g(m, m);
  std::vector<double> dg(static_cast<std::size_t>(m * m * m));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      g(i, j) = D.at(M.metric(i, j), x);
      for (int k = 0; k < m; ++k) dg[static_cast<std::size_t>((k * m + i) * m + j)] = D.d1(M.metric(i, j), x, k);
    }
  FdGeometry out;
  out.ginv = g.inverse();
  out.gamma.assign(static_cast<std::size_t>(m * m * m), 0.0);
  auto DG = [&](int k, int i, int j) { return dg[static_cast<std::size_t>((k * m + i) * m + j)]; };
  for (int k = 0; k < m; ++k)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        double s = 0.0;
        for (int l = 0; l < m; ++l) s += out.ginv(k, l) * (DG(i, j, l) + DG(j, i, l) - DG(l, i, j));
        out.gamma[static_cast<std::size_t>((k * m + i) * m + j)] = 0.5 * s;
      }
  return out;
}

}  // namespace

FdResult fd_oracle(const MapProblem& P, std::span<const double> x, const FdRequest& request) {
  if (!(request.step > 0.0)) throw ValidationError("identities", "finite-difference step must be > 0");
  FdResult out;
  if (request.step < 1e-8)
    out.warning = "step " + std::to_string(request.step) + " < 1e-8: round-off will dominate";
  const int m = P.m(), n = P.n();
  const FdEval D(request.step, P.params);
  const FdGeometry dom = fd_geometry(P.domain, x, request.step);
  auto G = [&](int k, int i, int j) { return dom.gamma[static_cast<std::size_t>((k * m + i) * m + j)]; };

  if (request.quantity == FdQuantity::LaplaceBeltrami) {
    const Expression u = request.scalar ? bind_parameters(*request.scalar, P.params) : P.weight;
    double lap = 0.0;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        double hess = D.d2(u, x, i, j);
        for (int k = 0; k < m; ++k) hess -= G(k, i, j) * D.d1(u, x, k);
        lap += dom.ginv(i, j) * hess;
      }
    out.values = {lap};
    return out;
  }

  std::vector<double> y(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) y[static_cast<std::size_t>(a)] = D.at(P.map[static_cast<std::size_t>(a)], x);
  const FdGeometry tgt = fd_geometry(P.target, y, request.step);
  auto Gt = [&](int a, int b, int c) { return tgt.gamma[static_cast<std::size_t>((a * n + b) * n + c)]; };
  std::vector<double> dphi(static_cast<std::size_t>(n * m));
  for (int a = 0; a < n; ++a)
    for (int i = 0; i < m; ++i) dphi[static_cast<std::size_t>(a * m + i)] = D.d1(P.map[static_cast<std::size_t>(a)], x, i);
  auto dP = [&](int a, int i) { return dphi[static_cast<std::size_t>(a * m + i)]; };

  if (request.quantity == FdQuantity::PullbackDerivative) {
    const int i = request.direction;
    if (i < 0 || i >= m) throw ValidationError("identities", "direction index out of range");
    if (static_cast<int>(request.section.size()) != n) throw ValidationError("identities", "section has wrong size");
    out.values.assign(static_cast<std::size_t>(n), 0.0);
    for (int a = 0; a < n; ++a) {
      const Expression Va = bind_parameters(request.section[static_cast<std::size_t>(a)], P.params);
      double v = D.d1(Va, x, i);
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c)
          v += Gt(a, b, c) * dP(b, i) * D.at(bind_parameters(request.section[static_cast<std::size_t>(c)], P.params), x);
      out.values[static_cast<std::size_t>(a)] = v;
    }
    return out;
  }

  std::vector<double> tau(static_cast<std::size_t>(n), 0.0);
  for (int a = 0; a < n; ++a) {
    const Expression& phi = P.map[static_cast<std::size_t>(a)];
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        if (dom.ginv(i, j) == 0.0) continue;
        double v = D.d2(phi, x, i, j);
        for (int k = 0; k < m; ++k) v -= G(k, i, j) * dP(a, k);
        for (int b = 0; b < n; ++b)
          for (int c = 0; c < n; ++c) v += Gt(a, b, c) * dP(b, i) * dP(c, j);
        tau[static_cast<std::size_t>(a)] += dom.ginv(i, j) * v;
      }
  }
  if (request.quantity == FdQuantity::Tension) {
    out.values = tau;
    return out;
  }
  const double f = D.at(P.weight, x);
  std::vector<double> df(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) df[static_cast<std::size_t>(j)] = D.d1(P.weight, x, j);
  out.values.assign(static_cast<std::size_t>(n), 0.0);
  for (int a = 0; a < n; ++a) {
    double v = f * tau[static_cast<std::size_t>(a)];
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) v += dP(a, i) * dom.ginv(i, j) * df[static_cast<std::size_t>(j)];
    out.values[static_cast<std::size_t>(a)] = v;
  }
  return out;
}

}  // namespace hmlab
