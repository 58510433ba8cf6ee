#include "hmlab/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hmlab/error.hpp"
#include "hmlab/identities.hpp"
#include "hmlab/problems.hpp"
#include "hmlab/quadrature.hpp"

namespace hmlab {

namespace {

using nlohmann::json;

struct Source {
  std::string problem;
  std::string gallery;

  void add(CLI::App* cmd) {
    auto* p = cmd->add_option("--problem", problem, "problem document path");
    auto* g = cmd->add_option("--gallery", gallery, "gallery entry name");
    p->excludes(g);
    g->excludes(p);
  }

  MapProblem load() const {
    if (problem.empty() == gallery.empty())
      throw ValidationError("cli", "give exactly one of --problem <path> or --gallery <name>");
    return problem.empty() ? gallery_get(gallery).problem() : load_problem_file(problem);
  }
};

struct Output {
  std::string out;
  std::string format = "text";

  void add(CLI::App* cmd) {
    cmd->add_option("--out", out, "write the report to this file instead of stdout");
    cmd->add_option("--format", format, "json or text")->check(CLI::IsMember({"json", "text"}));
  }

  bool json_mode() const { return format == "json"; }

  void emit(std::ostream& stdout_stream, const std::string& text) const {
    if (out.empty()) {
      stdout_stream << text;
      return;
    }
    std::ofstream f(out);
    if (!f) throw ValidationError("cli", "cannot write '" + out + "'");
    f << text;
  }
};

std::string num(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  if (v == 0.0) v = 0.0;  // drop the sign of -0
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string vec_text(std::span<const double> v) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
  return s + ")";
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(' '), e = item.find_last_not_of(' ');
    if (b == std::string::npos) throw ValidationError("cli", what + ": empty entry in '" + text + "'");
    item = item.substr(b, e - b + 1);
    double x = 0.0;
    auto res = std::from_chars(item.data(), item.data() + item.size(), x);
    if (res.ec != std::errc() || res.ptr != item.data() + item.size())
      throw ValidationError("cli", what + ": '" + item + "' is not a number");
    v.push_back(x);
  }
  return v;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(); }

// --- eval ------------------------------------------------------------------------

struct EvalArgs {
  Source source;
  Output output;
  std::string op = "tension";
  std::string point;
  std::string method = "symbolic";
  double step = 1e-5;
  std::size_t samples = 1;
  std::uint64_t seed = 42;
};

int do_eval(const EvalArgs& a, std::ostream& out) {
  const MapProblem P = a.source.load();
  std::vector<std::vector<double>> points;
  if (!a.point.empty()) {
    points.push_back(parse_list(a.point, "--point"));
    if (static_cast<int>(points[0].size()) != P.m())
      throw ValidationError("cli", "--point needs " + std::to_string(P.m()) + " coordinates");
  } else {
    points = sample_points(P.domain, a.samples, a.seed);
  }

  std::vector<std::vector<double>> values;
  std::vector<std::string> warnings;
  if (a.method == "fd") {
    FdRequest req;
    req.quantity = fd_quantity_from_name(a.op);
    req.step = a.step;
    for (const auto& x : points) {
      auto r = fd_oracle(P, x, req);
      if (r.warning) warnings.push_back(*r.warning);
      values.push_back(std::move(r.values));
    }
  } else if (a.op == "laplace_beltrami") {
    for (const auto& x : points) values.push_back({laplace_beltrami(P.domain, P.weight, x)});
  } else {
    const OperatorEvaluator ev(P, operator_from_name(a.op));
    for (const auto& x : points) values.push_back(ev(x).v);
  }

  if (a.output.json_mode()) {
    json j;
    j["problem"] = P.name;
    j["operator"] = a.op;
    j["method"] = a.method;
    auto& rows = j["values"] = json::array();
    for (std::size_t k = 0; k < points.size(); ++k) {
      json v = json::array();
      for (double c : values[k]) v.push_back(finite_or_null(c));
      rows.push_back({{"point", points[k]}, {"value", v}});
    }
    if (!warnings.empty()) j["warnings"] = warnings;
    a.output.emit(out, j.dump(2) + "\n");
  } else {
    std::string text;
    for (const auto& w : warnings) text += "warning: " + w + "\n";
    for (std::size_t k = 0; k < points.size(); ++k)
      text += (points.size() > 1 ? vec_text(points[k]) + " -> " : "") + vec_text(values[k]) + "\n";
    a.output.emit(out, text);
  }
  return 0;
}

// --- verify ----------------------------------------------------------------------

struct VerifyArgs {
  Source source;
  Output output;
  std::string identity;
  std::size_t samples = 100;
  std::uint64_t seed = 42;
  double tol = 1e-8;
  unsigned threads = 0;
};

std::string report_text(const VerificationReport& r) {
  std::ostringstream s;
  s << r.identity_id << " on " << r.problem_name << ": " << (r.pass ? "pass" : "FAIL") << "\n"
    << "  samples              " << r.sample_count << " (seed " << r.seed << ")\n"
    << "  max abs residual     " << num(r.max_absolute_residual) << "\n"
    << "  max rel residual     " << num(r.max_relative_residual) << "\n"
    << "  tolerance            " << num(r.tolerance) << "\n";
  if (r.wall_time) s << "  wall time            " << num(*r.wall_time) << " s\n";
  for (const auto& n : r.notes) s << "  note: " << n << "\n";
  return s.str();
}

int do_verify(const VerifyArgs& a, std::ostream& out) {
  const MapProblem P = a.source.load();
  const auto r = verify(a.identity, P, a.samples, a.seed, a.tol, VerifyOptions{a.threads, true});
  a.output.emit(out, a.output.json_mode() ? r.to_json().dump(2) + "\n" : report_text(r));
  return r.pass ? 0 : 1;
}

// --- energy / growth -----------------------------------------------------------------

struct EnergyArgs {
  Source source;
  Output output;
  std::string functional = "E";
  std::string region;
  int resolution = 0;
  unsigned threads = 0;
};

Region default_region(const MapProblem& P) {
  const auto& reg = P.domain.region();
  if (reg.shell) return Region::make_annulus(reg.shell->center, reg.shell->r_inner, reg.shell->r_outer);
  return Region::make_box(reg.box);
}

int do_energy(const EnergyArgs& a, std::ostream& out) {
  const MapProblem P = a.source.load();
  const Region region = a.region.empty() ? default_region(P) : parse_region(a.region, P.m());
  QuadratureOptions o;
  o.resolution = a.resolution;
  o.threads = a.threads;
  const auto r = energy(energy_kind_from_name(a.functional), P, region, o);
  if (a.output.json_mode()) {
    json j = r.to_json();
    j["problem"] = P.name;
    a.output.emit(out, j.dump(2) + "\n");
  } else {
    std::ostringstream s;
    s << energy_kind_name(r.kind) << "(" << P.name << ") = " << num(r.value) << "\n"
      << "  region       " << r.region.to_json().dump() << "\n"
      << "  resolution   " << r.resolution << "\n";
    if (r.refinement_estimate) s << "  refinement   " << num(*r.refinement_estimate) << "\n";
    for (const auto& n : r.notes) s << "  note: " << n << "\n";
    a.output.emit(out, s.str());
  }
  return 0;
}

struct GrowthArgs {
  Source source;
  Output output;
  std::string radii = "1,2,4";
  std::string center;
  int resolution = 0;
  unsigned threads = 0;
};

int do_growth(const GrowthArgs& a, std::ostream& out) {
  const MapProblem P = a.source.load();
  QuadratureOptions o;
  o.resolution = a.resolution;
  o.threads = a.threads;
  const auto g = growth_profile(P, parse_list(a.radii, "--radii"), o,
                                a.center.empty() ? std::vector<double>{} : parse_list(a.center, "--center"));
  if (a.output.json_mode()) {
    a.output.emit(out, g.to_json().dump(2) + "\n");
  } else {
    std::ostringstream s;
    s << "growth profile of " << g.problem_name << " around " << vec_text(g.center) << ", resolution " << g.resolution
      << "\n";
    s << "  radius        sup f         sup f / r^2   int f|tau_f|^2   int f\n";
    char line[160];
    for (const auto& r : g.rows) {
      std::snprintf(line, sizeof line, "  %-12.6g  %-12.6g  %-12.6g  %-15.6g  %-12.6g\n", r.radius, r.sup_f, r.sup_ratio,
                    r.integral_f_tau_f2, r.weighted_volume);
      s << line;
    }
    for (const auto& n : g.notes) s << "  note: " << n << "\n";
    a.output.emit(out, s.str());
  }
  return 0;
}

// --- gallery -----------------------------------------------------------------------------

struct GalleryArgs {
  Output output;
  std::string name;
};

json flags_json(const ExpectedFlags& flags) {
  json j = json::object();
  for (const auto& [flag, op] : flag_operators())
    if (auto v = flag_value(flags, flag)) j[flag] = *v;
  return j;
}

int do_gallery_list(const GalleryArgs& a, std::ostream& out) {
  if (a.output.json_mode()) {
    json j = json::array();
    for (const auto& name : gallery_list()) j.push_back({{"name", name}, {"description", gallery_get(name).description}});
    a.output.emit(out, j.dump(2) + "\n");
  } else {
    std::string s;
    for (const auto& name : gallery_list()) {
      char line[256];
      std::snprintf(line, sizeof line, "%-30s %s\n", name.c_str(), gallery_get(name).description.c_str());
      s += line;
    }
    a.output.emit(out, s);
  }
  return 0;
}

int do_gallery_show(const GalleryArgs& a, std::ostream& out) {
  const auto& e = gallery_get(a.name);
  if (a.output.json_mode()) {
    json fx = json::array();
    for (const auto& f : e.fixtures)
      fx.push_back({{"operator", operator_name(f.op)}, {"point", f.point}, {"expected", f.expected}, {"tolerance", f.tolerance}});
    json j{{"name", e.name}, {"description", e.description}, {"flags", flags_json(e.flags)}, {"fixtures", fx},
           {"document", e.document}};
    a.output.emit(out, j.dump(2) + "\n");
  } else {
    std::ostringstream s;
    s << e.name << ": " << e.description << "\n";
    for (const auto& [flag, v] : flags_json(e.flags).items()) s << "  " << flag << " = " << (v.get<bool>() ? "yes" : "no") << "\n";
    for (const auto& f : e.fixtures)
      s << "  fixture " << operator_name(f.op) << vec_text(f.point) << " = " << vec_text(f.expected) << "\n";
    s << "\n" << e.document;
    a.output.emit(out, s.str());
  }
  return 0;
}

int do_gallery_export(const GalleryArgs& a, std::ostream& out) {
  a.output.emit(out, gallery_get(a.name).document);
  return 0;
}

// --- suite -------------------------------------------------------------------------------

struct SuiteArgs {
  Output output;
  std::size_t samples = 50;
  std::uint64_t seed = 42;
  double tol = 1e-8;
  unsigned threads = 0;
};

// Flag checks: vanishing operators stay below this, non-vanishing ones exceed
// kFlagNonzero somewhere.
constexpr double kFlagZero = 1e-8;
constexpr double kFlagNonzero = 1e-6;

int do_suite(const SuiteArgs& a, std::ostream& out) {
  json results = json::array();
  int passed = 0, failed = 0, skipped = 0;
  auto record = [&](json r) {
    const std::string status = r["status"];
    if (status == "pass") ++passed;
    else if (status == "fail") ++failed;
    else ++skipped;
    results.push_back(std::move(r));
  };

  for (const auto& name : gallery_list()) {
    const auto& entry = gallery_get(name);
    const MapProblem P = entry.problem();

    for (const auto& f : entry.fixtures) {
      const auto v = OperatorEvaluator(P, f.op)(f.point);
      double worst = 0.0;
      for (std::size_t c = 0; c < f.expected.size(); ++c) worst = std::max(worst, std::abs(v.v[c] - f.expected[c]));
      record({{"problem", name}, {"check", "fixture"}, {"operator", operator_name(f.op)}, {"point", f.point},
              {"residual", finite_or_null(worst)}, {"tolerance", f.tolerance},
              {"status", worst <= f.tolerance ? "pass" : "fail"}});
    }

    const auto points = sample_points(P.domain, a.samples, a.seed);
    for (const auto& [flag, op] : flag_operators()) {
      const auto expected = flag_value(entry.flags, flag);
      if (!expected) continue;
      const OperatorEvaluator ev(P, op);
      double worst = 0.0;
      for (const auto& x : points) worst = std::max(worst, ev(x).max_abs());
      const bool ok = *expected ? worst <= kFlagZero : worst > kFlagNonzero;
      record({{"problem", name}, {"check", "flag"}, {"flag", flag}, {"expected", *expected},
              {"max_norm", finite_or_null(worst)}, {"status", ok ? "pass" : "fail"}});
    }

    for (const auto& info : identity_catalogue()) {
      if (inapplicable_reason(info.id, P)) continue;
      try {
        const auto r = verify(info.id, P, a.samples, a.seed, a.tol, VerifyOptions{a.threads, false});
        json j = r.to_json();
        j["problem"] = name;
        j["check"] = "identity";
        j["status"] = r.pass ? "pass" : "fail";
        record(std::move(j));
      } catch (const InapplicableError& e) {
        record({{"problem", name}, {"check", "identity"}, {"identity_id", info.id}, {"status", "skipped"},
                {"reason", e.what()}});
      }
    }
  }

  if (a.output.json_mode()) {
    json j{{"seed", a.seed}, {"samples", a.samples}, {"tol", a.tol}, {"passed", passed}, {"failed", failed},
           {"skipped", skipped}, {"wall_time", nullptr}, {"results", results}};
    a.output.emit(out, j.dump(2) + "\n");
  } else {
    std::ostringstream s;
    char line[256];
    for (const auto& r : results) {
      std::string what = r["check"].get<std::string>();
      if (r.contains("identity_id")) what += " " + r["identity_id"].get<std::string>();
      if (r.contains("flag")) what += " " + r["flag"].get<std::string>();
      if (r.contains("operator")) what += " " + r["operator"].get<std::string>();
      std::snprintf(line, sizeof line, "%-8s %-30s %s\n", r["status"].get<std::string>().c_str(),
                    r["problem"].get<std::string>().c_str(), what.c_str());
      s << line;
    }
    s << passed << " passed, " << failed << " failed, " << skipped << " skipped\n";
    a.output.emit(out, s.str());
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Harmonic-map operator lab: tension fields, conformal identities, energies."};
  app.name("hmlab");
  app.require_subcommand(1);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "evaluate an operator at a point or at sampled points");
  ea.source.add(eval);
  ea.output.add(eval);
  eval->add_option("--op", ea.op,
                   "tension, f_tension, bitension, f_bitension, f_bitension_divergence_form, bi_f_tension, "
                   "laplace_beltrami");
  eval->add_option("--point", ea.point, "comma-separated domain point");
  eval->add_option("--samples", ea.samples, "number of sampled points when --point is absent")->check(CLI::PositiveNumber);
  eval->add_option("--seed", ea.seed, "sampling seed");
  eval->add_option("--method", ea.method, "symbolic or fd")->check(CLI::IsMember({"symbolic", "fd"}));
  eval->add_option("--step", ea.step, "finite-difference step");

  VerifyArgs va;
  auto* ver = app.add_subcommand("verify", "check a catalogue identity at sampled points");
  va.source.add(ver);
  va.output.add(ver);
  ver->add_option("--identity", va.identity, "catalogue id")->required();
  ver->add_option("--samples", va.samples)->check(CLI::PositiveNumber);
  ver->add_option("--seed", va.seed);
  ver->add_option("--tol", va.tol)->check(CLI::PositiveNumber);
  ver->add_option("--threads", va.threads);

  EnergyArgs na;
  auto* en = app.add_subcommand("energy", "integrate an energy functional");
  na.source.add(en);
  na.output.add(en);
  en->add_option("--functional", na.functional, "E, E_f, E_2, E_f2, E_2f");
  en->add_option("--region", na.region, "box:lo:hi,..., ball:r[@c,..] or annulus:ri:ro[@c,..]");
  en->add_option("--resolution", na.resolution, "cells per axis");
  en->add_option("--threads", na.threads);

  GrowthArgs ga;
  auto* gr = app.add_subcommand("growth", "growth profile over concentric balls");
  ga.source.add(gr);
  ga.output.add(gr);
  gr->add_option("--radii", ga.radii, "comma-separated increasing radii");
  gr->add_option("--center", ga.center, "comma-separated center (default origin)");
  gr->add_option("--resolution", ga.resolution, "cells per axis");
  gr->add_option("--threads", ga.threads);

  GalleryArgs la;
  auto* gal = app.add_subcommand("gallery", "list, show or export built-in problems");
  gal->require_subcommand(1);
  auto* gl = gal->add_subcommand("list", "list gallery entries");
  la.output.add(gl);
  auto* gs = gal->add_subcommand("show", "show an entry with its flags and fixtures");
  gs->add_option("name", la.name)->required();
  la.output.add(gs);
  auto* gx = gal->add_subcommand("export", "print an entry's problem document");
  gx->add_option("name", la.name)->required();
  gx->add_option("--out", la.output.out, "write to this file");

  SuiteArgs sa;
  auto* su = app.add_subcommand("suite", "run fixtures, flags and identities over the whole gallery");
  sa.output.add(su);
  su->add_option("--samples", sa.samples)->check(CLI::PositiveNumber);
  su->add_option("--seed", sa.seed);
  su->add_option("--tol", sa.tol)->check(CLI::PositiveNumber);
  su->add_option("--threads", sa.threads);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error [cli] " << e.what() << "\n";
    for (auto* sub : app.get_subcommands()) err << sub->help();
    return 2;
  }

  try {
    if (eval->parsed()) return do_eval(ea, out);
    if (ver->parsed()) return do_verify(va, out);
    if (en->parsed()) return do_energy(na, out);
    if (gr->parsed()) return do_growth(ga, out);
    if (gl->parsed()) return do_gallery_list(la, out);
    if (gs->parsed()) return do_gallery_show(la, out);
    if (gx->parsed()) return do_gallery_export(la, out);
    if (su->parsed()) return do_suite(sa, out);
  } catch (const ParseError& e) {
    err << "error " << e.what();
    if (e.module() == "expr") err << " (byte offset " << e.offset() << ")";
    err << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error [cli] " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace hmlab
