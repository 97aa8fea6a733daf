#pragma once

// Manufactured exact solutions with analytically derived sources and
// interface corrections, error norms, and the convergence-rate studies
// (mesh refinement, time-step refinement, near-incompressibility sweep).

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "biotstokes/forms.hpp"
#include "biotstokes/system.hpp"

namespace bstok {

// ============================================================================
// Manufactured case
// ============================================================================

using TensorFn = std::function<std::array<Vec2, 2>(Vec2, double)>;

// Closed-form exact fields on the square two-layer domain
//   fluid (-1,1)x(0,2), porous (-1,1)x(-2,0), interface y = 0:
//   u   = sin(t) (-cos(pi x) sin(pi y), sin(pi x) cos(pi y))
//   p_F = sin(t) cos(pi x) cos(pi y)
//   d   = cos(t) (pi x cos(pi x y), -pi y cos(pi x y))   (a curl, div d = 0)
//   p_P = cos(t) sin(pi x) sin(pi y)
//   phi = alpha p_P  (identically, because div d = 0)
// plus every source and interface correction the discrete scheme needs so
// that this quintet solves the coupled problem exactly.  The corrections
// m1..m4 are the interface defects of the exact fields (mass, traction,
// normal stress balance, tangential slip); they enter the right-hand side
// functionals on the interface.
//
// None of the closures depends on lambda: div d = 0 removes it from the
// porous stress, which is the manufactured side of the locking-free claim.
struct ManufacturedCase {
  MaterialParams params;  // kappa left empty; bind with params_for(mesh)
  double kappa = 0.0;     // uniform permeability used inside the closures
  bool transient = false; // sources include fluid acceleration + convection

  VectorFn u, d, dt_d;
  ScalarFn p_f, p_p, phi;
  VectorFn grad_p_p;
  TensorFn grad_u, grad_d;   // row i is the gradient of component i
  TensorFn sigma_f, sigma_p;

  VectorFn f_fluid;   // fluid momentum source
  VectorFn f_porous;  // porous momentum source
  ScalarFn s_mass;    // porous mass source

  InterfaceScalarFn m1, m3, m4;
  InterfaceVectorFn m2;

  // params with the uniform permeability bound to a concrete mesh
  MaterialParams params_for(const Mesh& mesh) const;
};

// base carries the physical constants (its kappa vector is ignored in the
// closures; the scalar kappa argument is the uniform value used instead)
ManufacturedCase manufactured_case(const MaterialParams& base, double kappa,
                                   bool transient = false);

// parameters of the convergence benchmark: lambda 1000, mu_s 1, mu_f 0.1,
// alpha 1, gamma 1, c0 0.01, rho_f 1, rho_s 1.2, kappa 0.001, g = 0
MaterialParams benchmark_params();
constexpr double benchmark_kappa = 1e-3;

// Boundary split of the manufactured run on the generated two-layer mesh:
//   top:          essential velocity
//   fluid sides:  natural fluid traction
//   porous sides: essential displacement + natural porous flux
//   bottom:       essential porous pressure + natural porous traction
BcSpec manufactured_bcs(const ManufacturedCase& c);
FunctionalExtras manufactured_extras(const ManufacturedCase& c);

// ============================================================================
// Error norms
// ============================================================================

struct FieldErrors {
  double e_u = 0.0;    // H1
  double e_p_f = 0.0;  // L2
  double e_d = 0.0;    // H1
  double e_p_p = 0.0;  // H1
  double e_phi = 0.0;  // L2

  std::array<double, 5> as_array() const {
    return {e_u, e_p_f, e_d, e_p_p, e_phi};
  }
};

// Elementwise quadrature of (numeric - exact) at degree 6, which satisfies
// the 2*degree + 2 exactness demand for every implemented element.
FieldErrors error_norms(const SolutionState& state, const ManufacturedCase& c,
                        const ProblemSpaces& spaces, double t);

// ============================================================================
// Rate tables
// ============================================================================

struct RateRow {
  int dof = 0;
  double h = 0.0;  // mesh size for spatial studies, dt for temporal ones
  std::array<double, 5> e{};     // u, p_F, d, p_P, phi
  std::array<double, 5> rate{};  // NaN on the first row (no coarser run)
};

struct RateTable {
  std::vector<RateRow> rows;
  // average Newton iterations per step for each row; empty for
  // quasi-static studies
  std::vector<double> newton_avg;

  // header dof,h,e_u,rate_u,e_pF,rate_pF,e_d,rate_d,e_pP,rate_pP,e_phi,rate_phi
  // with empty cells for missing rates
  std::string csv() const;
};

// fills rate[k] = log2(e_prev/e_cur) for consecutive rows
void compute_rates(RateTable& table);

// ============================================================================
// Studies
// ============================================================================

struct StudyOptions {
  int levels = 5;
  double dt = 0.01;
  int steps = 3;  // spatial studies run to t = steps*dt
  ElementFamily family = ElementFamily::taylor_hood;
  // defaulted by family when unset (p2 for taylor_hood, p1 for mini)
  std::optional<ElementKind> porous_pressure_kind;
  bool transient = false;
  double lambda = 1000.0;
  // called once per finished level with the freshly computed row
  std::function<void(const RateRow&)> on_row;
};

// the generated two-layer benchmark mesh of one refinement level (1-based;
// level 1 is the 2x4 quad grid split into triangles)
Mesh benchmark_mesh(int level);

// mesh refinement study at fixed dt; errors at the final step
RateTable spatial_study(const StudyOptions& opt);

// time-step study on the fixed level: accumulated space-time errors
//   e_hat = (sum_n dt |s(t_n) - s_h^n|^2)^(1/2)  over (0, t_final]
RateTable temporal_study(const std::vector<double>& dts, int level,
                         double t_final, const StudyOptions& opt);

struct LambdaRow {
  double lambda = 0.0;
  FieldErrors errors;
};

// final-step errors of the spatial setup at one level, swept over lambda
std::vector<LambdaRow> lambda_robustness(const std::vector<double>& lambdas,
                                         int level, const StudyOptions& opt);

}  // namespace bstok
