#pragma once

// Problem documents (sectioned key = value text), the built-in gallery and a
// seeded generator of random smooth problems.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hmlab/mapcalc.hpp"

namespace hmlab {

// Parses and validates a problem document. Throws ParseError (message
// prefixed with "line N:"), ValidationError or UnknownIdentifierError.
MapProblem load_problem(std::string_view text);
MapProblem load_problem_file(const std::string& path);

struct ExpectedFlags {
  std::optional<bool> harmonic;
  std::optional<bool> f_harmonic;
  std::optional<bool> biharmonic;
  std::optional<bool> f_biharmonic;
  std::optional<bool> bi_f_harmonic;
};

struct Fixture {
  Operator op;
  std::vector<double> point;
  std::vector<double> expected;
  double tolerance;
};

struct GalleryEntry {
  std::string name;
  std::string description;
  std::string document;
  ExpectedFlags flags;
  std::vector<Fixture> fixtures;

  MapProblem problem() const { return load_problem(document); }
};

std::vector<std::string> gallery_list();
const GalleryEntry& gallery_get(std::string_view name);  // throws ValidationError

// Operator that vanishes for a flag ("harmonic" -> tension, ...).
std::vector<std::pair<std::string, Operator>> flag_operators();
std::optional<bool> flag_value(const ExpectedFlags& flags, std::string_view flag);

enum class RandomTarget { Flat, Hyperbolic, Any };

struct RandomProblemOptions {
  int m = 3;
  RandomTarget target = RandomTarget::Any;
  // n = 1 flat target, the map is a single scalar function u.
  bool scalar = false;
};

// Smooth polynomial/trigonometric problem on [-1, 1]^m with a positive-definite
// metric (conformal, diagonal or, for m <= 3, general), positive weight and a
// map landing inside the target's region. Deterministic in the seed.
MapProblem random_problem(std::uint64_t seed, const RandomProblemOptions& options);

}  // namespace hmlab
