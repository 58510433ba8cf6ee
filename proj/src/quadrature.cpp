#include "hmlab/quadrature.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <thread>

#include "hmlab/error.hpp"

namespace hmlab {

std::string energy_kind_name(EnergyKind kind) {
  switch (kind) {
    case EnergyKind::E: return "E";
    case EnergyKind::Ef: return "E_f";
    case EnergyKind::E2: return "E_2";
    case EnergyKind::Ef2: return "E_f2";
    case EnergyKind::E2f: return "E_2f";
  }
  return "?";
}

EnergyKind energy_kind_from_name(std::string_view name) {
  if (name == "E") return EnergyKind::E;
  if (name == "E_f") return EnergyKind::Ef;
  if (name == "E_2") return EnergyKind::E2;
  if (name == "E_f2" || name == "E_{f,2}") return EnergyKind::Ef2;
  if (name == "E_2f" || name == "E_{2,f}") return EnergyKind::E2f;
  throw ValidationError("quadrature", "unknown functional '" + std::string(name) + "' (E, E_f, E_2, E_f2, E_2f)");
}

// --- Regions -----------------------------------------------------------------

Region Region::make_box(std::vector<Interval> box) {
  if (box.empty()) throw ValidationError("quadrature", "box region needs at least one interval");
  for (const auto& iv : box)
    if (!(iv.hi > iv.lo) || !std::isfinite(iv.lo) || !std::isfinite(iv.hi))
      throw ValidationError("quadrature", "box intervals need finite lo < hi");
  Region r;
  r.kind = Kind::Box;
  r.box = std::move(box);
  return r;
}

Region Region::make_ball(std::vector<double> center, double radius) {
  if (center.empty()) throw ValidationError("quadrature", "ball needs a center");
  if (!(radius > 0.0) || !std::isfinite(radius)) throw ValidationError("quadrature", "ball radius must be > 0");
  Region r;
  r.kind = Kind::Ball;
  r.center = std::move(center);
  r.r_outer = radius;
  return r;
}

Region Region::make_annulus(std::vector<double> center, double r_inner, double r_outer) {
  if (center.empty()) throw ValidationError("quadrature", "annulus needs a center");
  if (!(r_inner >= 0.0) || !(r_outer > r_inner) || !std::isfinite(r_outer))
    throw ValidationError("quadrature", "annulus needs 0 <= r_inner < r_outer");
  Region r;
  r.kind = Kind::Annulus;
  r.center = std::move(center);
  r.r_inner = r_inner;
  r.r_outer = r_outer;
  return r;
}

int Region::dim() const { return static_cast<int>(kind == Kind::Box ? box.size() : center.size()); }

std::vector<Interval> Region::bounding_box() const {
  if (kind == Kind::Box) return box;
  std::vector<Interval> b;
  for (double c : center) b.push_back({c - r_outer, c + r_outer});
  return b;
}

bool Region::contains(std::span<const double> x) const {
  if (kind == Kind::Box) {
    for (std::size_t i = 0; i < box.size(); ++i)
      if (x[i] < box[i].lo || x[i] > box[i].hi) return false;
    return true;
  }
  double r2 = 0.0;
  for (std::size_t i = 0; i < center.size(); ++i) r2 += (x[i] - center[i]) * (x[i] - center[i]);
  return r2 <= r_outer * r_outer && r2 >= r_inner * r_inner;
}

nlohmann::json Region::to_json() const {
  nlohmann::json j;
  switch (kind) {
    case Kind::Box: {
      j["kind"] = "box";
      auto& b = j["box"] = nlohmann::json::array();
      for (const auto& iv : box) b.push_back({iv.lo, iv.hi});
      break;
    }
    case Kind::Ball:
      j["kind"] = "ball";
      j["center"] = center;
      j["radius"] = r_outer;
      break;
    case Kind::Annulus:
      j["kind"] = "annulus";
      j["center"] = center;
      j["r_inner"] = r_inner;
      j["r_outer"] = r_outer;
      break;
  }
  return j;
}

namespace {

double to_number(std::string_view s, std::string_view what) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ValidationError("quadrature", std::string(what) + ": '" + std::string(s) + "' is not a number");
  return v;
}

std::vector<std::string_view> split_view(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

Region parse_region(std::string_view text, int m) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw ValidationError("quadrature", "region must start with box:, ball: or annulus:");
  const std::string_view kind = text.substr(0, colon);
  std::string_view rest = text.substr(colon + 1);

  if (kind == "box") {
    std::vector<Interval> box;
    for (auto part : split_view(rest, ',')) {
      auto ends = split_view(part, ':');
      if (ends.size() != 2) throw ValidationError("quadrature", "box interval must be lo:hi, got '" + std::string(part) + "'");
      box.push_back({to_number(ends[0], "box"), to_number(ends[1], "box")});
    }
    if (static_cast<int>(box.size()) != m)
      throw ValidationError("quadrature", "box needs " + std::to_string(m) + " intervals, got " + std::to_string(box.size()));
    return Region::make_box(std::move(box));
  }

  std::vector<double> center(static_cast<std::size_t>(m), 0.0);
  if (auto at = rest.find('@'); at != std::string_view::npos) {
    auto parts = split_view(rest.substr(at + 1), ',');
    if (static_cast<int>(parts.size()) != m)
      throw ValidationError("quadrature", "center needs " + std::to_string(m) + " coordinates");
    for (int i = 0; i < m; ++i) center[static_cast<std::size_t>(i)] = to_number(parts[static_cast<std::size_t>(i)], "center");
    rest = rest.substr(0, at);
  }
  auto radii = split_view(rest, ':');
  if (kind == "ball") {
    if (radii.size() != 1) throw ValidationError("quadrature", "ball region is ball:r[@center]");
    return Region::make_ball(std::move(center), to_number(radii[0], "radius"));
  }
  if (kind == "annulus") {
    if (radii.size() != 2) throw ValidationError("quadrature", "annulus region is annulus:r_inner:r_outer[@center]");
    return Region::make_annulus(std::move(center), to_number(radii[0], "r_inner"), to_number(radii[1], "r_outer"));
  }
  throw ValidationError("quadrature", "unknown region kind '" + std::string(kind) + "'");
}

int default_resolution(int m) {
  if (m <= 2) return 128;
  if (m == 3) return 48;
  return 16;
}

// --- Grid integration ----------------------------------------------------------

namespace {

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

struct GridSums {
  std::vector<double> sums;  // one per tape output
  std::size_t excluded = 0;
};

// Midpoint rule for every output of `tape` over the cells of the region's
// bounding box whose centers lie in the region and outside the guard margin.
// Cells are summed in fixed-size chunks, so the result does not depend on the
// thread count.
GridSums integrate(const Tape& tape, const ChartManifold& domain, const Region& region, int N, unsigned threads) {
  const int m = region.dim();
  const auto bb = region.bounding_box();
  const std::size_t K = tape.output_count();
  std::size_t cells = 1;
  for (int i = 0; i < m; ++i) {
    cells *= static_cast<std::size_t>(N);
    if (cells > (std::size_t{1} << 34)) throw ValidationError("quadrature", "grid too large; lower the resolution");
  }
  std::vector<double> h(static_cast<std::size_t>(m));
  double cell_volume = 1.0;
  for (int i = 0; i < m; ++i) {
    h[static_cast<std::size_t>(i)] = (bb[static_cast<std::size_t>(i)].hi - bb[static_cast<std::size_t>(i)].lo) / N;
    cell_volume *= h[static_cast<std::size_t>(i)];
  }

  constexpr std::size_t kChunk = 4096;
  const std::size_t chunks = (cells + kChunk - 1) / kChunk;
  std::vector<double> chunk_sums(chunks * K, 0.0);
  std::vector<std::size_t> chunk_excluded(chunks, 0);
  std::vector<std::string> chunk_error(chunks);

  auto work = [&](unsigned t, unsigned T) {
    std::vector<double> x(static_cast<std::size_t>(m)), scratch, out(K);
    std::vector<double> cell_values(kChunk * K);
    std::vector<double> column(kChunk);
    for (std::size_t c = t; c < chunks; c += T) {
      const std::size_t begin = c * kChunk, end = std::min(cells, begin + kChunk);
      std::fill(cell_values.begin(), cell_values.end(), 0.0);
      for (std::size_t idx = begin; idx < end; ++idx) {
        std::size_t rem = idx;
        for (int i = m - 1; i >= 0; --i) {
          const auto k = rem % static_cast<std::size_t>(N);
          rem /= static_cast<std::size_t>(N);
          x[static_cast<std::size_t>(i)] =
              bb[static_cast<std::size_t>(i)].lo + (static_cast<double>(k) + 0.5) * h[static_cast<std::size_t>(i)];
        }
        if (!region.contains(x)) continue;
        if (domain.guarded(x)) {
          ++chunk_excluded[c];
          continue;
        }
        try {
          tape.evaluate(x, {}, scratch, out);
        } catch (const DomainError& e) {
          if (chunk_error[c].empty()) chunk_error[c] = e.what();
          continue;
        }
        for (std::size_t k = 0; k < K; ++k) {
          if (!std::isfinite(out[k]) && chunk_error[c].empty()) chunk_error[c] = "non-finite integrand";
          cell_values[(idx - begin) * K + k] = out[k];
        }
        if (!chunk_error[c].empty()) {
          std::string at = " at (";
          for (int i = 0; i < m; ++i) at += (i ? ", " : "") + std::to_string(x[static_cast<std::size_t>(i)]);
          chunk_error[c] += at + ")";
        }
      }
      for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t j = 0; j < end - begin; ++j) column[j] = cell_values[j * K + k];
        chunk_sums[c * K + k] = pairwise_sum(std::span<const double>(column.data(), end - begin));
      }
    }
  };
  unsigned T = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  T = static_cast<unsigned>(std::min<std::size_t>(T, chunks));
  if (T <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < T; ++t) pool.emplace_back(work, t, T);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : chunk_error)
    if (!e.empty())
      throw ValidationError("quadrature", "region meets a singularity of the integrand: " + e +
                                              "; shrink the region or add a guard");

  GridSums r;
  r.sums.resize(K);
  std::vector<double> column(chunks);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t c = 0; c < chunks; ++c) column[c] = chunk_sums[c * K + k];
    r.sums[k] = pairwise_sum(column) * cell_volume;
  }
  for (auto n : chunk_excluded) r.excluded += n;
  return r;
}

void check_region(const MapProblem& P, const Region& region) {
  if (region.dim() != P.m())
    throw ValidationError("quadrature", "region has dimension " + std::to_string(region.dim()) + " but the domain has " +
                                            std::to_string(P.m()));
  if (region.kind == Region::Kind::Annulus && region.r_inner == 0.0 && P.domain.guard() &&
      P.domain.guarded(region.center))
    throw ValidationError("quadrature", "annulus around a guarded center needs r_inner > 0");
}

std::vector<std::string> region_notes(const MapProblem& P, const Region& region, std::size_t excluded) {
  std::vector<std::string> notes;
  if (excluded > 0)
    notes.push_back("excluded " + std::to_string(excluded) + " cells within the guard margin " +
                    std::to_string(P.domain.guard()->margin));
  const auto& dbox = P.domain.region().box;
  if (!dbox.empty()) {
    const auto bb = region.bounding_box();
    for (std::size_t i = 0; i < bb.size(); ++i)
      if (bb[i].lo < dbox[i].lo || bb[i].hi > dbox[i].hi) {
        notes.push_back("region extends beyond the problem's sampling region");
        break;
      }
  }
  return notes;
}

Expression energy_integrand(EnergyKind kind, const MapProblem& P) {
  MapCalculus C(P);
  const Expression half = constant(0.5);
  const Expression& f = P.weight;
  Expression density;
  switch (kind) {
    case EnergyKind::E: density = half * C.energy_density(); break;
    case EnergyKind::Ef: density = half * f * C.energy_density(); break;
    case EnergyKind::E2: density = half * C.norm2(C.tension()); break;
    case EnergyKind::Ef2: density = half * f * C.norm2(C.tension()); break;
    case EnergyKind::E2f: density = half * C.norm2(C.f_tension(f)); break;
  }
  return density * C.domain().volume_density();
}

unsigned thread_count(const QuadratureOptions& o) {
  return o.threads ? o.threads : std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace

nlohmann::json EnergyResult::to_json() const {
  nlohmann::json j;
  j["kind"] = energy_kind_name(kind);
  j["region"] = region.to_json();
  j["resolution"] = resolution;
  j["value"] = value;
  j["refinement_estimate"] = refinement_estimate ? nlohmann::json(*refinement_estimate) : nlohmann::json(nullptr);
  j["excluded_cells"] = excluded_cells;
  j["notes"] = notes;
  return j;
}

EnergyResult energy(EnergyKind kind, const MapProblem& P, const Region& region, const QuadratureOptions& options) {
  check_region(P, region);
  const int N = options.resolution ? options.resolution : default_resolution(P.m());
  if (N < 2) throw ValidationError("quadrature", "resolution must be >= 2");
  const std::vector<Expression> roots{energy_integrand(kind, P)};
  const Tape tape(roots);

  EnergyResult r;
  r.kind = kind;
  r.region = region;
  r.resolution = N;
  const GridSums fine = integrate(tape, P.domain, region, N, thread_count(options));
  r.value = fine.sums[0];
  r.excluded_cells = fine.excluded;
  if (options.refinement_estimate && N % 2 == 0) {
    const GridSums coarse = integrate(tape, P.domain, region, N / 2, thread_count(options));
    r.refinement_estimate = std::abs(fine.sums[0] - coarse.sums[0]) / 3.0;
  }
  r.notes = region_notes(P, region, fine.excluded);
  return r;
}

double refinement_ratio(EnergyKind kind, const MapProblem& P, const Region& region, int resolution) {
  check_region(P, region);
  if (resolution < 4 || resolution % 2) throw ValidationError("quadrature", "refinement needs an even resolution >= 4");
  const std::vector<Expression> roots{energy_integrand(kind, P)};
  const Tape tape(roots);
  const unsigned T = std::max(1u, std::thread::hardware_concurrency());
  const double q1 = integrate(tape, P.domain, region, resolution / 2, T).sums[0];
  const double q2 = integrate(tape, P.domain, region, resolution, T).sums[0];
  const double q4 = integrate(tape, P.domain, region, resolution * 2, T).sums[0];
  return (q1 - q2) / (q2 - q4);
}

// --- Growth profiles -------------------------------------------------------------

namespace {

struct Sup {
  double value = -std::numeric_limits<double>::infinity();
  std::vector<double> at;
};

// Largest f over the ball: grid cell centers, their radial projections onto
// the sphere, then a compass search from the best candidate.
Sup ball_sup(const Tape& f, const ChartManifold& domain, std::span<const double> center, double r, int N) {
  const int m = static_cast<int>(center.size());
  const double h = 2.0 * r / N;
  std::vector<double> scratch, out(1);
  auto value = [&](std::span<const double> x, double& v) {
    if (domain.guarded(x)) return false;
    try {
      f.evaluate(x, {}, scratch, out);
    } catch (const DomainError&) {
      return false;
    }
    v = out[0];
    return std::isfinite(v);
  };
  auto project = [&](std::vector<double>& x) {
    double d2 = 0.0;
    for (int i = 0; i < m; ++i) d2 += (x[static_cast<std::size_t>(i)] - center[static_cast<std::size_t>(i)]) * (x[static_cast<std::size_t>(i)] - center[static_cast<std::size_t>(i)]);
    const double d = std::sqrt(d2);
    if (d > r)
      for (int i = 0; i < m; ++i)
        x[static_cast<std::size_t>(i)] = center[static_cast<std::size_t>(i)] + (x[static_cast<std::size_t>(i)] - center[static_cast<std::size_t>(i)]) * (r / d);
    return d;
  };

  Sup best;
  auto consider = [&](const std::vector<double>& x) {
    double v = 0.0;
    if (value(x, v) && v > best.value) {
      best.value = v;
      best.at = x;
    }
  };
  std::size_t cells = 1;
  for (int i = 0; i < m; ++i) cells *= static_cast<std::size_t>(N);
  std::vector<double> x(static_cast<std::size_t>(m));
  for (std::size_t idx = 0; idx < cells; ++idx) {
    std::size_t rem = idx;
    for (int i = m - 1; i >= 0; --i) {
      x[static_cast<std::size_t>(i)] = center[static_cast<std::size_t>(i)] - r + (static_cast<double>(rem % static_cast<std::size_t>(N)) + 0.5) * h;
      rem /= static_cast<std::size_t>(N);
    }
    double d2 = 0.0;
    for (int i = 0; i < m; ++i) d2 += (x[static_cast<std::size_t>(i)] - center[static_cast<std::size_t>(i)]) * (x[static_cast<std::size_t>(i)] - center[static_cast<std::size_t>(i)]);
    if (d2 > r * r) continue;
    consider(x);
    // Cells next to the sphere also contribute their radial projection.
    if (std::sqrt(d2) > r - h * std::sqrt(static_cast<double>(m)) && d2 > 0.0) {
      std::vector<double> s = x;
      const double d = std::sqrt(d2);
      for (int i = 0; i < m; ++i)
        s[static_cast<std::size_t>(i)] = center[static_cast<std::size_t>(i)] + (x[static_cast<std::size_t>(i)] - center[static_cast<std::size_t>(i)]) * (r / d);
      consider(s);
    }
  }
  if (best.at.empty()) return best;

  double step = h;
  std::vector<double> trial;
  while (step > 1e-12 * std::max(1.0, r)) {
    bool improved = false;
    for (int i = 0; i < m && !improved; ++i)
      for (double sign : {1.0, -1.0}) {
        trial = best.at;
        trial[static_cast<std::size_t>(i)] += sign * step;
        project(trial);
        double v = 0.0;
        if (value(trial, v) && v > best.value) {
          best.value = v;
          best.at = trial;
          improved = true;
          break;
        }
      }
    if (!improved) step *= 0.5;
  }
  return best;
}

}  // namespace

nlohmann::json GrowthProfile::to_json() const {
  nlohmann::json j;
  j["problem"] = problem_name;
  j["center"] = center;
  j["resolution"] = resolution;
  auto& rs = j["rows"] = nlohmann::json::array();
  for (const auto& r : rows)
    rs.push_back({{"radius", r.radius},
                  {"sup_f", r.sup_f},
                  {"sup_ratio", r.sup_ratio},
                  {"integral_f_tau_f2", r.integral_f_tau_f2},
                  {"weighted_volume", r.weighted_volume}});
  j["notes"] = notes;
  return j;
}

GrowthProfile growth_profile(const MapProblem& P, std::vector<double> radii, const QuadratureOptions& options,
                             std::vector<double> center) {
  const int m = P.m();
  if (center.empty()) center.assign(static_cast<std::size_t>(m), 0.0);
  if (static_cast<int>(center.size()) != m) throw ValidationError("quadrature", "center has the wrong dimension");
  if (radii.empty()) throw ValidationError("quadrature", "growth profile needs at least one radius");
  for (std::size_t i = 0; i < radii.size(); ++i)
    if (!(radii[i] > 0.0) || (i > 0 && !(radii[i] > radii[i - 1])))
      throw ValidationError("quadrature", "radii must be positive and strictly increasing");
  const int N = options.resolution ? options.resolution : default_resolution(m);
  if (N < 2) throw ValidationError("quadrature", "resolution must be >= 2");

  MapCalculus C(P);
  const Expression vol = C.domain().volume_density();
  const std::vector<Expression> roots{P.weight * C.norm2(C.f_tension(P.weight)) * vol, P.weight * vol};
  const Tape integrands(roots);
  const std::vector<Expression> f_root{P.weight};
  const Tape f_tape(f_root);

  GrowthProfile g;
  g.problem_name = P.name;
  g.center = center;
  g.resolution = N;
  if (P.domain.form() != MetricForm::Euclidean)
    g.notes.push_back("curved domain metric: coordinate balls stand in for geodesic balls");
  std::size_t excluded = 0;
  double running_sup = -std::numeric_limits<double>::infinity();
  bool outside = false;
  for (double r : radii) {
    const Region ball = Region::make_ball(center, r);
    const GridSums s = integrate(integrands, P.domain, ball, N, thread_count(options));
    excluded += s.excluded;
    for (const auto& n : region_notes(P, ball, 0)) outside = outside || !n.empty();
    const Sup sup = ball_sup(f_tape, P.domain, center, r, N);
    running_sup = std::max(running_sup, sup.value);
    GrowthRow row;
    row.radius = r;
    row.sup_f = running_sup;
    row.sup_ratio = running_sup / (r * r);
    row.integral_f_tau_f2 = s.sums[0];
    row.weighted_volume = s.sums[1];
    g.rows.push_back(row);
  }
  if (excluded > 0)
    g.notes.push_back("excluded " + std::to_string(excluded) + " cells within the guard margin " +
                      std::to_string(P.domain.guard()->margin));
  if (outside) g.notes.push_back("balls extend beyond the problem's sampling region");
  return g;
}

}  // namespace hmlab
