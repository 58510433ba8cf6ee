#pragma once

// Catalogue of pointwise identities and inequalities between the map
// operators, checked by sampling; plus a finite-difference oracle built from
// raw expression evaluations only.

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hmlab/mapcalc.hpp"

namespace hmlab {

enum class IdentityKind { Equality, Inequality };

struct IdentityInfo {
  std::string id;
  IdentityKind kind;
  std::string summary;
};

const std::vector<IdentityInfo>& identity_catalogue();
const IdentityInfo& identity_info(std::string_view id);  // throws ValidationError

// Reason the entry does not apply to P, or nullopt when it does. Entries whose
// applicability also depends on sampled values (GD31-INEQ) check the rest
// inside verify().
std::optional<std::string> inapplicable_reason(std::string_view id, const MapProblem& P);

struct VerificationReport {
  std::string identity_id;
  std::string problem_name;
  std::uint64_t seed = 0;
  std::size_t sample_count = 0;
  // Equality: |LHS - RHS| per sample. Inequality: the sampled value.
  // NaN marks a sample whose evaluation failed.
  std::vector<double> per_sample_residuals;
  double max_absolute_residual = 0.0;
  double max_relative_residual = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::optional<double> wall_time;
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
};

struct VerifyOptions {
  unsigned threads = 0;  // 0: hardware concurrency
  bool record_wall_time = true;
};

// Inequality entries ignore `tol` and use this floor.
inline constexpr double kInequalityFloor = 1e-10;
// GD31-INEQ only samples points with |tau_f| above this.
inline constexpr double kRegularizationThreshold = 1e-6;

VerificationReport verify(std::string_view id, const MapProblem& P, std::size_t samples, std::uint64_t seed,
                          double tol, const VerifyOptions& options = {});

// ---------------------------------------------------------------------------

enum class FdQuantity { Tension, FTension, LaplaceBeltrami, PullbackDerivative };
FdQuantity fd_quantity_from_name(std::string_view name);

struct FdRequest {
  FdQuantity quantity = FdQuantity::Tension;
  double step = 1e-5;
  // LaplaceBeltrami: the function (defaults to the weight f).
  std::optional<Expression> scalar;
  // PullbackDerivative: section and direction.
  SectionField section;
  int direction = 0;
};

struct FdResult {
  std::vector<double> values;
  std::optional<std::string> warning;
};

// First derivatives by central differences at `step`; second derivatives by
// Richardson-extrapolated central differences at sqrt(step), which keeps the
// cancellation error of the second difference near the first's.
FdResult fd_oracle(const MapProblem& P, std::span<const double> x, const FdRequest& request);

}  // namespace hmlab
