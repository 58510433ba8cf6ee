#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "hmlab/error.hpp"
#include "hmlab/geometry.hpp"
#include "hmlab/problems.hpp"

namespace hmlab {

namespace detail {
const std::map<std::string, std::string>& gallery_documents();
}

namespace {

const std::string& document(const std::string& name) {
  const auto& docs = detail::gallery_documents();
  auto it = docs.find(name);
  if (it == docs.end()) throw ValidationError("problems", "gallery document missing for " + name);
  return it->second;
}

GalleryEntry entry(std::string name, std::string description, ExpectedFlags flags, std::vector<Fixture> fixtures = {}) {
  GalleryEntry e;
  e.document = document(name);
  e.name = std::move(name);
  e.description = std::move(description);
  e.flags = flags;
  e.fixtures = std::move(fixtures);
  return e;
}

std::vector<GalleryEntry> build_gallery() {
  std::vector<GalleryEntry> g;
  ExpectedFlags all_true{true, true, true, true, true};
  g.push_back(entry("identity-flat-3", "identity map of euclidean 3-space", all_true));
  g.push_back(entry("identity-hyperbolic", "identity of the hyperbolic half-plane", all_true));
  g.push_back(entry("constant-map", "constant map with a non-constant weight", all_true));

  for (int m : {3, 4, 5}) {
    const std::string ms = std::to_string(m);
    ExpectedFlags f;
    f.harmonic = false;
    f.f_biharmonic = true;
    f.biharmonic = (m == 4);
    std::vector<Fixture> fx;
    if (m == 4) fx.push_back({Operator::Tension, {1, 0, 0, 0}, {-4, 0, 0, 0}, 1e-12});
    g.push_back(entry("inversion-f-biharmonic-m" + ms, "inversion of R^" + ms + " minus 0, flat, f = |x|^4", f, fx));

    ExpectedFlags b;
    b.f_harmonic = false;
    b.bi_f_harmonic = true;
    g.push_back(entry("inversion-bi-f-harmonic-m" + ms,
                      "inversion on a conformally flat R^" + ms + " minus 0, bi-f-harmonic", b));
  }

  ExpectedFlags cyl;
  cyl.harmonic = false;
  cyl.f_harmonic = false;
  cyl.biharmonic = true;
  cyl.f_biharmonic = true;
  cyl.bi_f_harmonic = true;
  g.push_back(entry("cylinder-biharmonic", "cylinder on the conformal plane e^(y/R)(dx^2 + dy^2), f = 1", cyl,
                    {{Operator::Tension, {0, 0}, {-1, 0, 0}, 1e-12}}));

  ExpectedFlags cylf;
  cylf.harmonic = false;
  cylf.f_harmonic = false;
  cylf.biharmonic = false;
  cylf.f_biharmonic = true;
  g.push_back(entry("cylinder-f-biharmonic", "cylinder on the flat plane with f = e^(-y/R)", cylf,
                    {{Operator::FTension, {0, 0}, {-1, 0, -1}, 1e-12}}));

  g.push_back(entry("scalar-f-laplace", "u = x^2, f = x", {},
                    {{Operator::FTension, {1}, {4}, 1e-12}}));
  g.push_back(entry("scalar-f-bi-laplace", "u = x^4, f = x^2", {},
                    {{Operator::FBitension, {1}, {144}, 1e-9}}));
  g.push_back(entry("scalar-bi-f-laplace", "u = x, f = 1 + x^2", {},
                    {{Operator::BiFTension, {1}, {4}, 1e-12}}));

  g.push_back(entry("hyperbolic-target-map-a", "curved plane into the hyperbolic half-plane", {}));
  g.push_back(entry("hyperbolic-target-map-b", "euclidean 3-space into hyperbolic half-space", {}));

  ExpectedFlags hb;
  hb.harmonic = false;
  hb.f_harmonic = false;
  hb.bi_f_harmonic = true;
  g.push_back(entry("hyperbolic-bi-f-harmonic", "geodesic composed with a bi-f-harmonic function, f = x1", hb));
  return g;
}

const std::vector<GalleryEntry>& gallery() {
  static const std::vector<GalleryEntry> g = build_gallery();
  return g;
}

}  // namespace

std::vector<std::string> gallery_list() {
  std::vector<std::string> names;
  for (const auto& e : gallery()) names.push_back(e.name);
  return names;
}

const GalleryEntry& gallery_get(std::string_view name) {
  for (const auto& e : gallery())
    if (e.name == name) return e;
  throw ValidationError("problems", "unknown gallery entry '" + std::string(name) + "'");
}

std::vector<std::pair<std::string, Operator>> flag_operators() {
  return {{"harmonic", Operator::Tension},
          {"f_harmonic", Operator::FTension},
          {"biharmonic", Operator::Bitension},
          {"f_biharmonic", Operator::FBitension},
          {"bi_f_harmonic", Operator::BiFTension}};
}

std::optional<bool> flag_value(const ExpectedFlags& flags, std::string_view flag) {
  if (flag == "harmonic") return flags.harmonic;
  if (flag == "f_harmonic") return flags.f_harmonic;
  if (flag == "biharmonic") return flags.biharmonic;
  if (flag == "f_biharmonic") return flags.f_biharmonic;
  if (flag == "bi_f_harmonic") return flags.bi_f_harmonic;
  throw ValidationError("problems", "unknown flag '" + std::string(flag) + "'");
}

// ---------------------------------------------------------------------------
// Random problems. The generator writes a problem document and loads it, so
// every random problem can be printed and reloaded verbatim.

namespace {

class Gen {
 public:
  Gen(std::uint64_t seed, int m) : rng_(seed), m_(m) {}

  double uniform() { return rng_.next(); }
  int pick(int n) { return std::min(n - 1, static_cast<int>(uniform() * n)); }
  // Coefficient in [lo, hi] rounded to 3 decimals.
  double coef(double lo, double hi) { return std::round((lo + (hi - lo) * uniform()) * 1000.0) / 1000.0; }
  std::string x() { return "x" + std::to_string(pick(m_) + 1); }

  static std::string num(double v) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, r.ptr);
    return v < 0 ? "(" + s + ")" : s;
  }

  // Term bounded by 1 in absolute value on [-1, 1]^m.
  std::string bounded_term() {
    switch (pick(5)) {
      case 0: return x();
      case 1: return x() + "*" + x();
      case 2: return "sin(" + num(coef(0.5, 2)) + "*" + x() + ")";
      case 3: return "cos(" + x() + " + " + x() + ")";
      default: return x() + "^2";
    }
  }

  std::string smooth_term() {
    switch (pick(7)) {
      case 0: return x();
      case 1: return x() + "*" + x();
      case 2: return x() + "^2";
      case 3: return "sin(" + x() + ")";
      case 4: return "cos(" + x() + " + " + x() + ")";
      case 5: return "exp(0.5*" + x() + ")";
      default: return x() + "^3";
    }
  }

  std::string map_component() {
    std::string s = num(coef(-1, 1));
    for (int k = 0; k < 3; ++k) s += " + " + num(coef(-0.8, 0.8)) + "*" + smooth_term();
    return s;
  }

  // Positive on the box: base minus at most the sum of amplitudes.
  std::string positive(double base, int terms, double amplitude) {
    std::string s = num(base);
    for (int k = 0; k < terms; ++k) s += " + " + num(coef(-amplitude, amplitude)) + "*" + bounded_term();
    return s;
  }

  std::string weight() {
    if (pick(2) == 0) return "exp(" + num(coef(-0.5, 0.5)) + "*" + x() + " + " + num(coef(-0.5, 0.5)) + "*" + x() + ")";
    return "1.5 + 0.5*sin(" + x() + " - " + x() + ")";
  }

 private:
  UniformStream rng_;
  int m_;
};

}  // namespace

MapProblem random_problem(std::uint64_t seed, const RandomProblemOptions& options) {
  const int m = options.m;
  if (m < 1 || m > 6) throw ValidationError("problems", "random problems need 1 <= m <= 6");
  Gen gen(seed, m);
  std::ostringstream doc;

  RandomTarget target = options.target;
  if (options.scalar) target = RandomTarget::Flat;
  if (target == RandomTarget::Any) target = gen.pick(2) == 0 ? RandomTarget::Flat : RandomTarget::Hyperbolic;
  const int n = options.scalar ? 1 : 2 + gen.pick(2);

  doc << "[problem]\nname = random-m" << m << "-s" << seed << "\nm = " << m << "\nn = " << n << "\n\n";

  doc << "[domain]\ncoords = ";
  for (int i = 1; i <= m; ++i) doc << (i > 1 ? ", " : "") << "x" << i;
  doc << "\n";
  const double kind = gen.uniform();
  if (m <= 3 && kind < 0.3) {
    // Diagonally dominant: diagonal >= 1.7, each off-diagonal <= 0.25.
    doc << "metric = matrix:\n";
    for (int i = 1; i <= m; ++i)
      for (int j = i; j <= m; ++j) {
        doc << "g" << i << j << " = ";
        if (i == j)
          doc << gen.positive(2.0, 1, 0.3) << "\n";
        else
          doc << Gen::num(gen.coef(-0.25, 0.25)) << "*cos(" << gen.x() << ")\n";
      }
  } else if (kind < 0.65) {
    doc << "metric = conformal: " << gen.positive(1.5, 2, 0.35) << "\n";
  } else {
    doc << "metric = matrix:\n";
    for (int i = 1; i <= m; ++i)
      for (int j = i; j <= m; ++j) doc << "g" << i << j << " = " << (i == j ? gen.positive(1.0, 1, 0.2) : "0") << "\n";
  }
  doc << "region = ";
  for (int i = 0; i < m; ++i) doc << (i ? ", " : "") << "-1:1";
  doc << "\n\n";

  doc << "[target]\n";
  std::vector<std::string> tc;
  if (options.scalar) {
    tc = {"t"};
  } else {
    for (int a = 1; a <= n; ++a) tc.push_back("y" + std::to_string(a));
  }
  doc << "coords = ";
  for (std::size_t a = 0; a < tc.size(); ++a) doc << (a ? ", " : "") << tc[a];
  doc << "\n";
  if (target == RandomTarget::Hyperbolic) {
    doc << "metric = conformal: " << tc.back() << "^(-2)\nregion = ";
    for (int a = 0; a + 1 < n; ++a) doc << "-100:100, ";
    doc << "0.01:100\ncurvature = negative\n\n";
  } else {
    doc << "metric = euclidean\n\n";
  }

  doc << "[map]\n";
  for (int a = 0; a < n; ++a) {
    doc << tc[static_cast<std::size_t>(a)] << " = ";
    // The height coordinate stays in [1.1, 2.9].
    if (target == RandomTarget::Hyperbolic && a == n - 1)
      doc << gen.positive(2.0, 3, 0.3);
    else
      doc << gen.map_component();
    doc << "\n";
  }
  doc << "\n[weight]\nf = " << gen.weight() << "\n";
  return load_problem(doc.str());
}

}  // namespace hmlab
