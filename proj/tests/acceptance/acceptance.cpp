// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "hmlab/error.hpp"
#include "hmlab/identities.hpp"
#include "hmlab/problems.hpp"
#include "hmlab/quadrature.hpp"

using namespace hmlab;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
  std::vector<std::string> extra;  // printed indented under the line
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

// Per-sample values of `scalars` at `count` sampled points.
std::vector<std::vector<double>> sample_scalars(const MapProblem& P, const std::vector<Expression>& scalars,
                                                std::size_t count, std::uint64_t seed) {
  const Tape tape(scalars);
  std::vector<std::vector<double>> rows;
  for (const auto& x : sample_points(P.domain, count, seed)) rows.push_back(tape.evaluate(x));
  return rows;
}

std::vector<MapProblem> random_suite(int m, int count, std::uint64_t base) {
  std::vector<MapProblem> out;
  for (int k = 0; k < count; ++k) {
    RandomProblemOptions o;
    o.m = m;
    out.push_back(random_problem(base + static_cast<std::uint64_t>(k), o));
  }
  return out;
}

const std::vector<MapProblem>& random_problems() {
  static const std::vector<MapProblem> all = [] {
    std::vector<MapProblem> v;
    for (int m : {3, 4, 5})
      for (auto& P : random_suite(m, 20, 5000 + 100 * static_cast<std::uint64_t>(m))) v.push_back(std::move(P));
    return v;
  }();
  return all;
}

// --- 1 ------------------------------------------------------------------------------

Outcome cylinder_fixtures() {
  Outcome o;
  double worst_tension = 0.0;
  for (const char* name : {"cylinder-f-biharmonic", "cylinder-biharmonic"}) {
    const auto t = tension(gallery_get(name).problem(), std::vector<double>{0.0, 0.0});
    const double d = std::hypot(t.v[0] + 1.0, t.v[1], t.v[2]);
    worst_tension = std::max(worst_tension, d);
  }
  const MapProblem flat = gallery_get("cylinder-f-biharmonic").problem();
  MapCalculus C(flat);
  double worst_energy = 0.0;
  for (const auto& row : sample_scalars(flat, {C.energy_density()}, 200, 11))
    worst_energy = std::max(worst_energy, std::abs(row[0] - 2.0));
  o.pass = worst_tension <= 1e-12 && worst_energy <= 1e-12;
  o.detail = "|tau(0,0) - (-1,0,0)| = " + sci(worst_tension) + ", max ||dphi|^2 - 2| = " + sci(worst_energy);
  return o;
}

// --- 2 ------------------------------------------------------------------------------

Outcome proper_biharmonic() {
  const MapProblem P = gallery_get("cylinder-biharmonic").problem();
  MapCalculus C(P);
  double max_t2 = 0.0, min_t = INFINITY;
  for (const auto& row : sample_scalars(P, {C.norm2(C.bitension()), C.norm2(C.tension())}, 200, 21)) {
    max_t2 = std::max(max_t2, std::sqrt(row[0]));
    min_t = std::min(min_t, std::sqrt(row[1]));
  }
  return {max_t2 <= 1e-9 && min_t >= 0.1, "max |tau_2| = " + sci(max_t2) + ", min |tau| = " + sci(min_t), {}};
}

// --- 3 ------------------------------------------------------------------------------

Outcome proper_f_biharmonic() {
  Outcome o;
  for (const char* name : {"cylinder-f-biharmonic", "inversion-f-biharmonic-m3", "inversion-f-biharmonic-m4",
                           "inversion-f-biharmonic-m5"}) {
    const MapProblem P = gallery_get(name).problem();
    MapCalculus C(P);
    const Expression& f = P.weight;
    // Scale: the leading term f tau_2.
    const auto rows = sample_scalars(P, {C.norm2(C.f_bitension(f)), C.norm2(f * C.bitension()), C.norm2(C.tension())},
                                     200, 31);
    double rel = 0.0, min_t = INFINITY;
    for (const auto& r : rows) {
      rel = std::max(rel, std::sqrt(r[0]) / std::max(1.0, std::sqrt(r[1])));
      min_t = std::min(min_t, std::sqrt(r[2]));
    }
    const bool ok = rel <= 1e-8 && min_t >= 1e-3;
    o.pass = o.pass && ok;
    o.extra.push_back(std::string(ok ? "ok   " : "bad  ") + name + ": rel |tau_f2| = " + sci(rel) +
                      ", min |tau| = " + sci(min_t));
  }
  o.detail = "cylinder with f = e^-y and inversions m = 3, 4, 5 with f = |x|^4";
  return o;
}

// --- 4 ------------------------------------------------------------------------------

MapProblem explicit_m4_bi_f() {
  std::vector<std::string> xs{"x1", "x2", "x3", "x4"}, ys{"y1", "y2", "y3", "y4"};
  const Expression r2 = parse_expr("x1^2 + x2^2 + x3^2 + x4^2", xs);
  ChartManifold domain = ChartManifold::conformal(xs, pow(r2, Rational(-1)));
  SamplingRegion region;
  region.box.assign(4, Interval{-2, 2});
  region.shell = RadialShell{{0, 0, 0, 0}, 0.5, 2.0};
  domain = domain.with_region(region);
  std::vector<Expression> map;
  for (std::size_t i = 0; i < 4; ++i) map.push_back(parse_expr(xs[i], xs) / r2);
  return make_problem("inversion-m4-explicit", domain, ChartManifold::euclidean(ys), map, r2);
}

Outcome proper_bi_f_harmonic() {
  Outcome o;
  std::vector<MapProblem> problems;
  for (const char* name : {"inversion-bi-f-harmonic-m3", "inversion-bi-f-harmonic-m4", "inversion-bi-f-harmonic-m5"})
    problems.push_back(gallery_get(name).problem());
  problems.push_back(explicit_m4_bi_f());
  for (const auto& P : problems) {
    MapCalculus C(P);
    const Expression& f = P.weight;
    const SectionField tf = C.f_tension(f);
    const auto rows = sample_scalars(P, {C.norm2(C.bi_f_tension(f)), C.norm2(f * C.jacobi(tf)), C.norm2(tf)}, 200, 41);
    double rel = 0.0, min_tf = INFINITY;
    for (const auto& r : rows) {
      rel = std::max(rel, std::sqrt(r[0]) / std::max(1.0, std::sqrt(r[1])));
      min_tf = std::min(min_tf, std::sqrt(r[2]));
    }
    const bool ok = rel <= 1e-8 && min_tf >= 1e-3;
    o.pass = o.pass && ok;
    o.extra.push_back(std::string(ok ? "ok   " : "bad  ") + P.name + ": rel |tau_2f| = " + sci(rel) +
                      ", min |tau_f| = " + sci(min_tf));
  }
  o.detail = "inversions on |x|^(-8/m) delta with f = |x|^(4(m-2)/m), m = 3, 4, 5, plus explicit m = 4";
  return o;
}

// --- 5, 6 -----------------------------------------------------------------------------

struct IdentityTally {
  int runs = 0;
  int failures = 0;
  double worst = 0.0;
  std::string first_failure;

  void add(const VerificationReport& r) {
    ++runs;
    worst = std::max(worst, r.max_relative_residual);
    if (!r.pass) {
      ++failures;
      if (first_failure.empty()) first_failure = r.identity_id + " on " + r.problem_name;
    }
  }
  bool pass() const { return runs > 0 && failures == 0; }
  std::string text() const {
    return std::to_string(runs) + " runs, " + std::to_string(failures) + " failed, worst rel " + sci(worst) +
           (first_failure.empty() ? "" : ", first failure " + first_failure);
  }
};

Outcome conformal_identity() {
  Outcome o;
  IdentityTally gallery, random;
  for (const auto& name : gallery_list()) {
    const MapProblem P = gallery_get(name).problem();
    if (inapplicable_reason("THM1", P)) continue;
    gallery.add(verify("THM1", P, 200, 42, 1e-8));
  }
  for (const auto& P : random_problems()) random.add(verify("THM1", P, 200, 43, 1e-8));
  o.pass = gallery.pass() && random.pass() && random.runs == 60;
  o.detail = "gallery: " + gallery.text() + "; random m = 3, 4, 5: " + random.text();
  return o;
}

Outcome proof_steps() {
  Outcome o;
  for (const char* id : {"CONF-TENSION", "CONF-FTENSION", "JAC-CONF", "JAC-PRODUCT", "COR1", "PROP2"}) {
    IdentityTally t;
    for (const auto& P : random_problems()) t.add(verify(id, P, 200, 44, 1e-8));
    o.pass = o.pass && t.pass();
    o.extra.push_back(std::string(t.pass() ? "ok   " : "bad  ") + id + ": " + t.text());
  }
  o.detail = "six proof-step identities on the 60-problem random suite";
  return o;
}

// --- 7 ------------------------------------------------------------------------------

Outcome scalar_reduction() {
  Outcome o;
  double literal = 0.0, corrected = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    RandomProblemOptions opt;
    opt.m = 1 + static_cast<int>(seed % 3);
    opt.scalar = true;
    const MapProblem P = random_problem(7000 + seed, opt);
    const OperatorEvaluator ev(P, Operator::BiFTension);
    for (const auto& x : sample_points(P.domain, 3, seed)) {
      const double tau = ev(x).v[0];
      const double d2 = bi_f_laplacian(P.domain, P.weight, P.map[0], x);
      const double scale = std::max({1.0, std::abs(tau), std::abs(d2)});
      literal = std::max(literal, std::abs(tau - (-d2)) / scale);
      corrected = std::max(corrected, std::abs(tau - d2) / scale);
    }
  }
  const ChartManifold line = ChartManifold::euclidean({"x"});
  const std::vector<std::string> xs{"x"};
  const std::vector<double> one{1.0};
  const double fix1 = f_laplacian(line, parse_expr("x", xs), parse_expr("x^2", xs), one);
  const double fix2 = f_bi_laplacian(line, parse_expr("x^2", xs), parse_expr("x^4", xs), one);
  const bool fixtures = std::abs(fix1 - 4.0) <= 1e-12 && std::abs(fix2 - 144.0) <= 1e-12;

  o.pass = literal <= 1e-10 && fixtures;
  o.detail = "tau_2f(u) = -Delta_f^2 u: worst rel " + sci(literal) + "; fixtures 4 and 144: " +
             (fixtures ? "exact" : "off (" + sci(fix1 - 4) + ", " + sci(fix2 - 144) + ")");
  o.extra.push_back("sign-corrected tau_2f(u) = +Delta_f^2 u: worst rel " + sci(corrected) +
                    (corrected <= 1e-10 ? " (holds)" : " (fails)"));
  o.extra.push_back("the -f J(tau_f) + nabla_{grad f} tau_f definition gives the + sign for scalar maps");
  return o;
}

// --- 8 ------------------------------------------------------------------------------

Outcome liouville_identities() {
  Outcome o;
  // Hyperbolic targets first: K = -1 on every coordinate plane.
  double k_err = 0.0;
  for (const auto& name : gallery_list()) {
    const MapProblem P = gallery_get(name).problem();
    if (P.target_curvature != CurvatureSign::Negative) continue;
    for (const auto& x : sample_points(P.domain, 20, 5)) {
      std::vector<double> y;
      for (const auto& phi : P.map) y.push_back(evaluate(phi, x));
      for (int i = 0; i < P.n(); ++i)
        for (int j = i + 1; j < P.n(); ++j) k_err = std::max(k_err, std::abs(sectional_curvature(P.target, y, i, j) + 1.0));
    }
  }
  IdentityTally eq, npc, gd31;
  bool gd31_flat = false, gd31_hyp = false;
  for (const auto& name : gallery_list()) {
    const MapProblem P = gallery_get(name).problem();
    for (const char* id : {"WEITZENBOCK", "DIV-OMEGA", "EPS-REG"}) eq.add(verify(id, P, 100, 45, 1e-8));
    if (!inapplicable_reason("NPC-INEQ", P)) npc.add(verify("NPC-INEQ", P, 100, 46, 1e-8));
    if (!inapplicable_reason("GD31-INEQ", P)) {
      try {
        gd31.add(verify("GD31-INEQ", P, 100, 47, 1e-8));
        (P.target_curvature == CurvatureSign::Flat ? gd31_flat : gd31_hyp) = true;
      } catch (const InapplicableError&) {
      }
    }
  }
  o.pass = k_err <= 1e-10 && eq.pass() && npc.pass() && gd31.pass() && gd31_flat && gd31_hyp;
  o.detail = "max |K + 1| = " + sci(k_err);
  o.extra.push_back("WEITZENBOCK, DIV-OMEGA, EPS-REG: " + eq.text());
  o.extra.push_back("NPC-INEQ: " + npc.text());
  o.extra.push_back("GD31-INEQ: " + gd31.text() + (gd31_flat ? ", flat target covered" : ", NO flat target") +
                    (gd31_hyp ? ", hyperbolic target covered" : ", NO hyperbolic target"));
  return o;
}

// --- 9 ------------------------------------------------------------------------------

Outcome f_bitension_forms() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    RandomProblemOptions opt;
    opt.m = 2 + static_cast<int>(seed % 3);
    const MapProblem P = random_problem(9000 + seed, opt);
    const OperatorEvaluator a(P, Operator::FBitension), b(P, Operator::FBitensionDivergence);
    for (const auto& x : sample_points(P.domain, 3, seed)) {
      const auto u = a(x), v = b(x);
      double d = 0.0;
      for (std::size_t c = 0; c < u.v.size(); ++c) d = std::max(d, std::abs(u.v[c] - v.v[c]));
      worst = std::max(worst, d / std::max({1.0, u.max_abs(), v.max_abs()}));
    }
  }
  return {worst <= 1e-10, "200 random problems, worst rel " + sci(worst), {}};
}

// --- 10, 11 ----------------------------------------------------------------------------

Outcome quadrature_fixtures() {
  constexpr double pi = std::numbers::pi;
  const MapProblem P = gallery_get("cylinder-f-biharmonic").problem();
  const Region box = Region::make_box({{0.0, 2 * pi}, {0.0, 1.0}});
  QuadratureOptions q;
  q.resolution = 256;
  const double e = energy(EnergyKind::E, P, box, q).value;
  const double ef2 = energy(EnergyKind::Ef2, P, box, q).value;
  const double ratio = refinement_ratio(EnergyKind::Ef2, P, box, 64);
  Outcome o;
  o.pass = std::abs(e - 2 * pi) <= 1e-4 && std::abs(ef2 - pi * (1 - std::exp(-1.0))) <= 1e-4 && ratio >= 3.5 &&
           ratio <= 4.5;
  o.detail = "E - 2pi = " + sci(e - 2 * pi) + ", E_f2 - pi(1 - 1/e) = " + sci(ef2 - pi * (1 - std::exp(-1.0))) +
             ", refinement ratio " + std::to_string(ratio);
  o.extra.push_back("ratio measured on E_f2: the E integrand is constant, so the midpoint rule is exact there");
  return o;
}

Outcome growth_profiles() {
  const MapProblem P = gallery_get("cylinder-f-biharmonic").problem();
  const auto sup = growth_profile(P, {1, 2, 4});
  double sup_err = 0.0;
  for (const auto& r : sup.rows) sup_err = std::max(sup_err, std::abs(r.sup_f - std::exp(r.radius)));
  const auto g = growth_profile(P, {2, 4, 8});
  const auto& r = g.rows;
  const bool increasing = r[1].integral_f_tau_f2 > r[0].integral_f_tau_f2 && r[2].integral_f_tau_f2 > r[1].integral_f_tau_f2;
  // Increments do not shrink: no Cauchy tail.
  const bool no_tail = r[2].integral_f_tau_f2 - r[1].integral_f_tau_f2 >= r[1].integral_f_tau_f2 - r[0].integral_f_tau_f2;
  Outcome o;
  o.pass = sup_err <= 1e-3 && increasing && no_tail;
  o.detail = "max |sup e^-y - e^r| = " + sci(sup_err) + "; int f|tau_f|^2 over B_2, B_4, B_8 = " +
             sci(r[0].integral_f_tau_f2) + ", " + sci(r[1].integral_f_tau_f2) + ", " + sci(r[2].integral_f_tau_f2);
  return o;
}

// --- 12 -----------------------------------------------------------------------------

Outcome oracle_agreement() {
  double worst = 0.0;
  std::string where;
  auto track = [&](std::span<const double> fd, std::span<const double> sym, const std::string& what) {
    double d = 0.0, s = 0.0;
    for (std::size_t c = 0; c < fd.size(); ++c) {
      d = std::max(d, std::abs(fd[c] - sym[c]));
      s = std::max(s, std::abs(sym[c]));
    }
    const double rel = d / std::max(1.0, s);
    if (rel > worst) {
      worst = rel;
      where = what;
    }
  };
  for (const auto& name : gallery_list()) {
    const MapProblem P = gallery_get(name).problem();
    const OperatorEvaluator t(P, Operator::Tension), tf(P, Operator::FTension);
    for (const auto& x : sample_points(P.domain, 50, 12)) {
      FdRequest req;
      req.quantity = FdQuantity::Tension;
      track(fd_oracle(P, x, req).values, t(x).v, name + " tension");
      req.quantity = FdQuantity::FTension;
      track(fd_oracle(P, x, req).values, tf(x).v, name + " f_tension");
      req.quantity = FdQuantity::LaplaceBeltrami;
      for (const Expression& u : {P.weight, P.map[0]}) {
        req.scalar = u;
        const std::vector<double> sym{laplace_beltrami(P.domain, u, x)};
        track(fd_oracle(P, x, req).values, sym, name + " laplacian");
      }
    }
  }
  return {worst <= 1e-6, "every gallery problem, 50 points, worst rel " + sci(worst) + " (" + where + ")", {}};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"cylinder fixtures", cylinder_fixtures},
      {"proper biharmonicity", proper_biharmonic},
      {"proper f-biharmonicity", proper_f_biharmonic},
      {"proper bi-f-harmonicity", proper_bi_f_harmonic},
      {"conformal identity THM1", conformal_identity},
      {"proof-step identities", proof_steps},
      {"scalar reduction", scalar_reduction},
      {"Liouville-proof identities", liouville_identities},
      {"f-bitension equivalence", f_bitension_forms},
      {"quadrature fixtures", quadrature_fixtures},
      {"growth profiles", growth_profiles},
      {"oracle agreement", oracle_agreement},
  };
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::printf("%s %2zu %-28s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(),
                o.detail.c_str(), secs);
    for (const auto& line : o.extra) std::printf("        %s\n", line.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
