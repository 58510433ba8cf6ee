#pragma once

// Midpoint-rule integration of the energy functionals over boxes, balls and
// annuli in the domain chart, and growth profiles over concentric balls.

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

#include "hmlab/mapcalc.hpp"

namespace hmlab {

enum class EnergyKind { E, Ef, E2, Ef2, E2f };
std::string energy_kind_name(EnergyKind kind);           // "E", "E_f", "E_2", "E_f2", "E_2f"
EnergyKind energy_kind_from_name(std::string_view name);  // also accepts "E_{f,2}", "E_{2,f}"

struct Region {
  enum class Kind { Box, Annulus, Ball };
  Kind kind = Kind::Box;
  std::vector<Interval> box;   // Box
  std::vector<double> center;  // Annulus, Ball
  double r_inner = 0.0;        // Annulus
  double r_outer = 0.0;        // Annulus, Ball

  static Region make_box(std::vector<Interval> box);
  static Region make_ball(std::vector<double> center, double r);
  static Region make_annulus(std::vector<double> center, double r_inner, double r_outer);

  int dim() const;
  // Tensor grid support.
  std::vector<Interval> bounding_box() const;
  bool contains(std::span<const double> x) const;
  nlohmann::json to_json() const;
};

// "box:lo:hi,lo:hi,...", "ball:r" or "ball:r@c1,c2,..", "annulus:ri:ro" or
// "annulus:ri:ro@c1,c2,..". Centers default to the origin.
Region parse_region(std::string_view text, int m);

// Per-axis cell count used when none is given.
int default_resolution(int m);

struct QuadratureOptions {
  int resolution = 0;  // 0: default_resolution(m)
  unsigned threads = 0;
  // Also integrate at resolution / 2 and report |Q_N - Q_{N/2}| / 3.
  bool refinement_estimate = true;
};

struct EnergyResult {
  EnergyKind kind = EnergyKind::E;
  Region region;
  int resolution = 0;
  double value = 0.0;
  std::optional<double> refinement_estimate;
  std::size_t excluded_cells = 0;
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
};

// Throws ValidationError when the region is malformed, does not match the
// domain dimension, or meets a point where the integrand is undefined.
EnergyResult energy(EnergyKind kind, const MapProblem& P, const Region& region, const QuadratureOptions& options = {});

// (Q_{N/2} - Q_N) / (Q_N - Q_{2N}); about 4 for a smooth integrand on a box.
double refinement_ratio(EnergyKind kind, const MapProblem& P, const Region& region, int resolution);

struct GrowthRow {
  double radius = 0.0;
  double sup_f = 0.0;
  double sup_ratio = 0.0;          // sup_f / r^2
  double integral_f_tau_f2 = 0.0;  // int_{B_r} f |tau_f|^2 dv_g
  double weighted_volume = 0.0;    // int_{B_r} f dv_g
};

struct GrowthProfile {
  std::string problem_name;
  std::vector<double> center;
  int resolution = 0;
  std::vector<GrowthRow> rows;
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
};

// Balls are coordinate balls around `center` (origin by default); these are
// geodesic balls only for a euclidean domain metric, otherwise a note says so.
GrowthProfile growth_profile(const MapProblem& P, std::vector<double> radii, const QuadratureOptions& options = {},
                             std::vector<double> center = {});

}  // namespace hmlab
