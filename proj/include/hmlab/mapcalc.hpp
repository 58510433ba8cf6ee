#pragma once

// Calculus of maps phi: (M, g) -> (N, h) between charts. Everything that is
// differentiated again (tension, f-tension, ...) is built as Expressions in
// the domain coordinates; MapCalculus is the symbolic builder and the free
// functions at the bottom evaluate compiled versions at points.

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hmlab/expr.hpp"
#include "hmlab/geometry.hpp"

namespace hmlab {

enum class CurvatureSign { Unknown, Flat, Nonpositive, Negative };

std::string curvature_sign_name(CurvatureSign s);

struct MapProblem {
  std::string name;
  ChartManifold domain;
  ChartManifold target;
  std::vector<Expression> map;  // phi^a in domain coordinates
  Expression weight = constant(1.0);
  ParamEnv params;
  CurvatureSign target_curvature = CurvatureSign::Unknown;

  int m() const noexcept { return domain.dim(); }
  int n() const noexcept { return target.dim(); }
};

// Binds params into every expression, attaches them to both charts and checks
// dimensions. Throws ValidationError.
MapProblem make_problem(std::string name, ChartManifold domain, ChartManifold target, std::vector<Expression> map,
                        Expression weight = constant(1.0), ParamEnv params = {},
                        CurvatureSign target_curvature = CurvatureSign::Unknown);

// Same problem on a different domain chart (e.g. after conformal_rescale).
MapProblem with_domain(const MapProblem& P, ChartManifold domain);
MapProblem with_weight(const MapProblem& P, Expression weight);

// A section along phi: n component Expressions in domain coordinates.
using SectionField = std::vector<Expression>;

struct SectionValue {
  std::vector<double> x;
  std::vector<double> v;

  double max_abs() const;
};

SectionField operator+(const SectionField& a, const SectionField& b);
SectionField operator-(const SectionField& a, const SectionField& b);
SectionField operator-(const SectionField& a);
SectionField operator*(const Expression& s, const SectionField& a);

class MapCalculus {
 public:
  explicit MapCalculus(const MapProblem& P);

  const MapProblem& problem() const noexcept { return P_; }
  int m() const noexcept { return m_; }
  int n() const noexcept { return n_; }
  MetricCalculus& domain() noexcept { return dom_; }
  MetricCalculus& target() noexcept { return tgt_; }

  // d_i phi^a
  const Expression& dphi(int a, int i);
  // Target quantities composed with phi.
  const Expression& h(int a, int b);
  const Expression& target_christoffel(int a, int b, int c);
  const Expression& target_riemann(int a, int b, int c, int d);

  // g^{ij} h_ab d_i phi^a d_j phi^b
  Expression energy_density();
  // h(V, W) at phi
  Expression inner(const SectionField& V, const SectionField& W);
  Expression norm2(const SectionField& V) { return inner(V, V); }

  SectionField tension();
  SectionField f_tension(const Expression& f);
  // dphi(X) for a domain vector field X^i
  SectionField push_forward(std::span<const Expression> X);

  // nabla^phi_{d_i} V
  SectionField covariant(const SectionField& V, int i);
  // nabla^phi_X V = X^i nabla^phi_{d_i} V
  SectionField covariant_along(const SectionField& V, std::span<const Expression> X);
  SectionField rough_laplacian(const SectionField& V);
  // g^{ij} R^N(dphi_i, V) dphi_j
  SectionField curvature_trace(const SectionField& V);
  SectionField jacobi(const SectionField& V);

  SectionField bitension();
  // f tau_2 + (Delta f) tau + 2 nabla_{grad f} tau
  SectionField f_bitension(const Expression& f);
  // Delta^phi(f tau) - g^{ij} R^N(dphi_i, f tau) dphi_j
  SectionField f_bitension_divergence_form(const Expression& f);
  // -f J(tau_f) + nabla_{grad f} tau_f
  SectionField bi_f_tension(const Expression& f);

  // Weighted scalar Laplacians on the domain.
  Expression f_laplacian(const Expression& f, const Expression& u);
  Expression bi_f_laplacian(const Expression& f, const Expression& u);
  Expression f_bi_laplacian(const Expression& f, const Expression& u);

 private:
  MapProblem P_;
  int m_;
  int n_;
  MetricCalculus dom_;
  MetricCalculus tgt_;
  std::map<std::string, Expression, std::less<>> to_phi_;
  std::unique_ptr<Substituter> subst_;
  std::vector<Expression> dphi_;
  std::vector<std::optional<Expression>> h_;
  std::vector<std::optional<Expression>> gamma_;
  std::vector<std::optional<Expression>> riemann_;
  std::optional<SectionField> tension_;
};

// Symbolic weighted Laplacians on a bare chart.
Expression f_laplacian(MetricCalculus& C, const Expression& f, const Expression& u);
Expression bi_f_laplacian(MetricCalculus& C, const Expression& f, const Expression& u);
Expression f_bi_laplacian(MetricCalculus& C, const Expression& f, const Expression& u);

// A list of SectionFields / scalars compiled for repeated point evaluation.
class CompiledFields {
 public:
  CompiledFields() = default;
  CompiledFields(std::span<const SectionField> fields, std::span<const Expression> scalars = {});

  std::size_t field_count() const noexcept { return sizes_.size(); }
  // Evaluates everything at x; field k occupies out[offset(k) .. offset(k)+size(k)).
  std::vector<double> evaluate(std::span<const double> x) const;
  std::size_t offset(std::size_t k) const { return offsets_[k]; }
  std::size_t size(std::size_t k) const { return sizes_[k]; }
  std::size_t scalar_offset() const noexcept { return scalar_offset_; }

 private:
  Tape tape_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> sizes_;
  std::size_t scalar_offset_ = 0;
};

// --- Pointwise evaluation ---------------------------------------------------
// Each call builds and evaluates the operator from scratch; use
// OperatorEvaluator for many points.

struct Differential {
  int n = 0;
  int m = 0;
  std::vector<double> values;  // [a][i]
  double energy_density = 0.0;
  double operator()(int a, int i) const { return values[static_cast<std::size_t>(a * m + i)]; }
};

Differential differential(const MapProblem& P, std::span<const double> x);
SectionValue tension(const MapProblem& P, std::span<const double> x);
SectionValue f_tension(const MapProblem& P, std::span<const double> x);
SectionValue pullback_derivative(const MapProblem& P, const SectionField& V, int i, std::span<const double> x);
SectionValue rough_laplacian(const MapProblem& P, const SectionField& V, std::span<const double> x);
SectionValue jacobi(const MapProblem& P, const SectionField& V, std::span<const double> x);
SectionValue bitension(const MapProblem& P, std::span<const double> x);
SectionValue f_bitension(const MapProblem& P, std::span<const double> x);
SectionValue f_bitension_divergence_form(const MapProblem& P, std::span<const double> x);
SectionValue bi_f_tension(const MapProblem& P, std::span<const double> x);
// |V|_h at phi(x)
double section_norm(const MapProblem& P, const SectionValue& V);
// Evaluates an arbitrary section (tree walk, no compilation).
SectionValue evaluate_section(const SectionField& V, std::span<const double> x);

double f_laplacian(const ChartManifold& M, const Expression& f, const Expression& u, std::span<const double> x);
double bi_f_laplacian(const ChartManifold& M, const Expression& f, const Expression& u, std::span<const double> x);
double f_bi_laplacian(const ChartManifold& M, const Expression& f, const Expression& u, std::span<const double> x);

// Named operator evaluators, compiled once and reusable from many threads.
enum class Operator { Tension, FTension, Bitension, FBitension, FBitensionDivergence, BiFTension };
std::string operator_name(Operator op);
Operator operator_from_name(std::string_view name);

class OperatorEvaluator {
 public:
  OperatorEvaluator(const MapProblem& P, Operator op);
  SectionValue operator()(std::span<const double> x) const;
  const SectionField& field() const noexcept { return field_; }

 private:
  MapProblem P_;
  SectionField field_;
  CompiledFields compiled_;
};

}  // namespace hmlab
