#include "hmlab/problems.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "hmlab/error.hpp"

namespace hmlab {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

struct Entry {
  std::string value;
  int line = 0;
};

using Section = std::map<std::string, Entry, std::less<>>;

[[noreturn]] void fail_line(int line, const std::string& what) {
  throw ParseError("problems", "line " + std::to_string(line) + ": " + what, static_cast<std::size_t>(line));
}

class Document {
 public:
  explicit Document(std::string_view text) {
    static const std::vector<std::string> known{"problem", "params", "domain", "target", "map", "weight"};
    std::istringstream in{std::string(text)};
    std::string raw;
    int line = 0;
    Section* current = nullptr;
    while (std::getline(in, raw)) {
      ++line;
      if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
      const std::string s = trim(raw);
      if (s.empty()) continue;
      if (s.front() == '[') {
        if (s.back() != ']') fail_line(line, "malformed section header '" + s + "'");
        const std::string name = trim(std::string_view(s).substr(1, s.size() - 2));
        if (std::find(known.begin(), known.end(), name) == known.end()) fail_line(line, "unknown section [" + name + "]");
        if (sections_.count(name)) fail_line(line, "duplicate section [" + name + "]");
        current = &sections_[name];
        section_lines_[name] = line;
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string::npos) fail_line(line, "expected 'key = value', got '" + s + "'");
      if (!current) fail_line(line, "key outside of any section");
      const std::string key = trim(std::string_view(s).substr(0, eq));
      const std::string value = trim(std::string_view(s).substr(eq + 1));
      if (key.empty()) fail_line(line, "empty key");
      if (current->count(key)) fail_line(line, "duplicate key '" + key + "'");
      (*current)[key] = Entry{value, line};
    }
  }

  const Section* section(std::string_view name) const {
    auto it = sections_.find(name);
    return it == sections_.end() ? nullptr : &it->second;
  }

  const Section& require(std::string_view name) const {
    const Section* s = section(name);
    if (!s) throw ValidationError("problems", "missing section [" + std::string(name) + "]");
    return *s;
  }

  int line_of(std::string_view name) const {
    auto it = section_lines_.find(name);
    return it == section_lines_.end() ? 0 : it->second;
  }

 private:
  std::map<std::string, Section, std::less<>> sections_;
  std::map<std::string, int, std::less<>> section_lines_;
};

const Entry& require_key(const Section& s, std::string_view section, std::string_view key) {
  auto it = s.find(key);
  if (it == s.end())
    throw ValidationError("problems", "section [" + std::string(section) + "] is missing '" + std::string(key) + "'");
  return it->second;
}

const Entry* find_key(const Section& s, std::string_view key) {
  auto it = s.find(key);
  return it == s.end() ? nullptr : &it->second;
}

double parse_number(const Entry& e, const std::string& what) {
  double v = 0.0;
  const std::string& s = e.value;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    fail_line(e.line, what + ": '" + s + "' is not a number");
  return v;
}

int parse_int(const Entry& e, const std::string& what) {
  int v = 0;
  const std::string& s = e.value;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || v < 1)
    fail_line(e.line, what + ": '" + s + "' is not a positive integer");
  return v;
}

Interval parse_interval(const std::string& text, int line) {
  const auto parts = split(text, ':');
  if (parts.size() != 2) fail_line(line, "interval '" + text + "' must be lo:hi");
  Interval iv;
  for (int k = 0; k < 2; ++k) {
    const std::string& p = parts[static_cast<std::size_t>(k)];
    double v = 0.0;
    auto res = std::from_chars(p.data(), p.data() + p.size(), v);
    if (res.ec != std::errc() || res.ptr != p.data() + p.size()) fail_line(line, "bad interval bound '" + p + "'");
    (k == 0 ? iv.lo : iv.hi) = v;
  }
  if (!(iv.lo < iv.hi)) fail_line(line, "interval '" + text + "' is empty");
  return iv;
}

class ExprContext {
 public:
  ExprContext(std::vector<std::string> coords, std::vector<std::string> params)
      : coords_(std::move(coords)), params_(std::move(params)) {}

  Expression parse(const Entry& e, std::string_view text) const {
    try {
      return parse_expr(text, coords_, params_);
    } catch (const ParseError& err) {
      // keeps the byte offset within the expression
      throw ParseError("problems", "line " + std::to_string(e.line) + ": " + err.what(), err.offset());
    }
  }
  Expression parse(const Entry& e) const { return parse(e, e.value); }

 private:
  std::vector<std::string> coords_;
  std::vector<std::string> params_;
};

std::vector<std::string> parse_coords(const Section& s, std::string_view section, int dim) {
  const Entry& e = require_key(s, section, "coords");
  auto names = split(e.value, ',');
  if (static_cast<int>(names.size()) != dim)
    fail_line(e.line, "[" + std::string(section) + "] declares " + std::to_string(names.size()) + " coordinates, expected " +
                          std::to_string(dim));
  for (const auto& n : names) {
    if (n.empty() || !(std::isalpha(static_cast<unsigned char>(n[0])) || n[0] == '_'))
      fail_line(e.line, "bad coordinate name '" + n + "'");
  }
  return names;
}

ChartManifold parse_chart(const Section& s, std::string_view section, int dim, const std::vector<std::string>& params) {
  const auto coords = parse_coords(s, section, dim);
  const ExprContext ctx(coords, params);
  const Entry& metric = require_key(s, section, "metric");
  ChartManifold M;
  const std::string& spec = metric.value;
  if (spec == "euclidean") {
    M = ChartManifold::euclidean(coords);
  } else if (spec.rfind("conformal:", 0) == 0) {
    const std::string body = trim(std::string_view(spec).substr(10));
    if (body.empty()) fail_line(metric.line, "conformal metric needs a factor expression");
    M = ChartManifold::conformal(coords, ctx.parse(metric, body));
  } else if (spec == "matrix:") {
    std::vector<std::vector<Expression>> g(static_cast<std::size_t>(dim),
                                           std::vector<Expression>(static_cast<std::size_t>(dim), constant(0.0)));
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) {
        const std::string key = "g" + std::to_string(i + 1) + std::to_string(j + 1);
        const Entry* e = find_key(s, key);
        if (j < i) {
          if (e) fail_line(e->line, "give only the upper triangle (g" + std::to_string(j + 1) + std::to_string(i + 1) + ")");
          continue;
        }
        if (!e) {
          if (i == j) throw ValidationError("problems", "[" + std::string(section) + "] matrix metric is missing " + key);
          continue;
        }
        g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = ctx.parse(*e);
        g[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      }
    M = ChartManifold::from_matrix(coords, std::move(g));
  } else {
    fail_line(metric.line, "metric must be 'euclidean', 'conformal: <expr>' or 'matrix:'");
  }
  for (const auto& [key, e] : s) {
    static const std::vector<std::string> allowed{"coords", "metric", "region", "annulus", "annulus_center",
                                                  "guard", "guard_margin", "curvature"};
    const bool gkey = key.size() == 3 && key[0] == 'g' && spec == "matrix:";
    if (!gkey && std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      fail_line(e.line, "unknown key '" + key + "' in [" + std::string(section) + "]");
    if (key == "curvature" && section != "target") fail_line(e.line, "'curvature' belongs in [target]");
  }

  SamplingRegion region;
  if (const Entry* r = find_key(s, "region")) {
    const auto parts = split(r->value, ',');
    if (static_cast<int>(parts.size()) != dim)
      fail_line(r->line, "region needs " + std::to_string(dim) + " intervals, got " + std::to_string(parts.size()));
    for (const auto& p : parts) region.box.push_back(parse_interval(p, r->line));
  }
  if (const Entry* a = find_key(s, "annulus")) {
    const Interval iv = parse_interval(a->value, a->line);
    RadialShell shell{std::vector<double>(static_cast<std::size_t>(dim), 0.0), iv.lo, iv.hi};
    if (const Entry* c = find_key(s, "annulus_center")) {
      const auto parts = split(c->value, ',');
      if (static_cast<int>(parts.size()) != dim) fail_line(c->line, "annulus_center needs " + std::to_string(dim) + " values");
      for (int i = 0; i < dim; ++i) shell.center[static_cast<std::size_t>(i)] = parse_number(Entry{parts[static_cast<std::size_t>(i)], c->line}, "annulus_center");
    }
    if (iv.lo < 0.0) fail_line(a->line, "annulus radii must be nonnegative");
    region.shell = shell;
  }
  M = M.with_region(region);
  if (const Entry* g = find_key(s, "guard")) {
    SingularGuard guard{ctx.parse(*g), 1e-3};
    if (const Entry* gm = find_key(s, "guard_margin")) {
      guard.margin = parse_number(*gm, "guard_margin");
      if (!(guard.margin > 0.0)) fail_line(gm->line, "guard_margin must be > 0");
    }
    M = M.with_guard(guard);
  }
  return M;
}

CurvatureSign parse_curvature(const Section& s, const ChartManifold& target) {
  const Entry* e = find_key(s, "curvature");
  if (!e) return target.form() == MetricForm::Euclidean ? CurvatureSign::Flat : CurvatureSign::Unknown;
  if (e->value == "flat") return CurvatureSign::Flat;
  if (e->value == "nonpositive") return CurvatureSign::Nonpositive;
  if (e->value == "negative") return CurvatureSign::Negative;
  if (e->value == "unknown") return CurvatureSign::Unknown;
  fail_line(e->line, "curvature must be flat, nonpositive, negative or unknown");
}

std::string point_text(std::span<const double> x) {
  std::string s = "(";
  for (std::size_t i = 0; i < x.size(); ++i) s += (i ? ", " : "") + std::to_string(x[i]);
  return s + ")";
}

void validate_samples(const MapProblem& P) {
  const auto points = sample_points(P.domain, 64, 0xC0FFEE);
  for (const auto& x : points) {
    if (!P.domain.positive_definite_at(x))
      throw ValidationError("problems", "domain metric is not positive definite at " + point_text(x));
    double f = 0.0;
    try {
      f = evaluate(P.weight, x);
    } catch (const DomainError& e) {
      throw ValidationError("problems", std::string("weight undefined at ") + point_text(x) + ": " + e.what());
    }
    if (!(f > 0.0)) throw ValidationError("problems", "weight f is not positive at " + point_text(x));
    std::vector<double> y;
    for (const auto& phi : P.map) {
      try {
        y.push_back(evaluate(phi, x));
      } catch (const DomainError& e) {
        throw ValidationError("problems", std::string("map undefined at ") + point_text(x) + ": " + e.what());
      }
    }
    if (!P.target.region().box.empty() && !P.target.region().contains(y))
      throw ValidationError("problems", "map sends " + point_text(x) + " to " + point_text(y) + ", outside the target region");
    if (!P.target.positive_definite_at(y))
      throw ValidationError("problems", "target metric is not positive definite at " + point_text(y));
  }
}

}  // namespace

MapProblem load_problem(std::string_view text) {
  const Document doc(text);
  const Section& prob = doc.require("problem");
  const std::string name = require_key(prob, "problem", "name").value;
  const int m = parse_int(require_key(prob, "problem", "m"), "m");
  const int n = parse_int(require_key(prob, "problem", "n"), "n");
  for (const auto& [key, e] : prob)
    if (key != "name" && key != "m" && key != "n") fail_line(e.line, "unknown key '" + key + "' in [problem]");

  ParamEnv params;
  std::vector<std::string> param_names;
  if (const Section* ps = doc.section("params")) {
    for (const auto& [key, e] : *ps) {
      params[key] = parse_number(e, "parameter " + key);
      param_names.push_back(key);
    }
  }

  ChartManifold domain = parse_chart(doc.require("domain"), "domain", m, param_names);
  if (!domain.region().bounded())
    throw ValidationError("problems", "[domain] needs a bounded region (one lo:hi interval per coordinate)");
  const Section& tsec = doc.require("target");
  ChartManifold target = parse_chart(tsec, "target", n, param_names);
  const CurvatureSign curvature = parse_curvature(tsec, target);

  const ExprContext dctx(domain.coords(), param_names);
  const Section& msec = doc.require("map");
  std::vector<Expression> map;
  for (const auto& tc : target.coords()) {
    const Entry* e = find_key(msec, tc);
    if (!e) throw ValidationError("problems", "[map] has no component for target coordinate '" + tc + "'");
    map.push_back(dctx.parse(*e));
  }
  for (const auto& [key, e] : msec)
    if (std::find(target.coords().begin(), target.coords().end(), key) == target.coords().end())
      fail_line(e.line, "[map] key '" + key + "' is not a target coordinate");

  Expression weight = constant(1.0);
  if (const Section* w = doc.section("weight")) {
    const Entry& f = require_key(*w, "weight", "f");
    weight = dctx.parse(f);
    for (const auto& [key, e] : *w)
      if (key != "f") fail_line(e.line, "unknown key '" + key + "' in [weight]");
  }

  MapProblem P = make_problem(name, domain, target, std::move(map), weight, params, curvature);
  validate_samples(P);
  return P;
}

MapProblem load_problem_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("problems", "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_problem(ss.str());
}

}  // namespace hmlab
