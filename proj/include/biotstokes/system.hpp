#pragma once

// Fully discrete coupled system: discrete space bundles, initial data
// construction, the backward Euler time stepper (with an optional Newton
// loop for the transient Navier-Stokes variant), and energy diagnostics.

#include <array>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "biotstokes/forms.hpp"
#include "biotstokes/linalg.hpp"
#include "biotstokes/mesh.hpp"
#include "biotstokes/spaces.hpp"
#include "biotstokes/types.hpp"

namespace bstok {

class SystemError : public std::runtime_error {
 public:
  explicit SystemError(const std::string& what) : std::runtime_error(what) {}
};

// ============================================================================
// Discrete spaces
// ============================================================================

// The two inf-sup stable velocity/pressure pairs offered by the solver.
// taylor_hood: P2 velocity and displacement, P1 fluid pressure.
// mini:        P1+bubble velocity and displacement, P1 fluid pressure.
// Other degrees are rejected rather than inferred.
enum class ElementFamily { taylor_hood, mini };

// All five discrete spaces over one two-subdomain mesh, plus the block
// layout of the monolithic index space in field order (u, p_F, d, p_P, phi).
struct ProblemSpaces {
  const Mesh* mesh = nullptr;
  ElementFamily family = ElementFamily::taylor_hood;
  Space v;    // fluid velocity (vector, fluid subdomain)
  Space q_f;  // fluid pressure (scalar, fluid subdomain)
  Space w;    // displacement (vector, porous subdomain)
  Space q_p;  // porous pressure (scalar, porous subdomain)
  Space z;    // total pressure (scalar, porous subdomain)
  BlockLayout layout;

  const Space& space(Field f) const;
};

// The porous pressure defaults to P2 for taylor_hood and P1 for mini; the
// explicit overload lets a scenario lower taylor_hood runs to P1.  Bubble
// enrichment of the porous pressure is rejected.
ProblemSpaces build_problem_spaces(const Mesh& mesh, ElementFamily family);
ProblemSpaces build_problem_spaces(const Mesh& mesh, ElementFamily family,
                                   ElementKind porous_pressure_kind);

// ============================================================================
// Boundary conditions
// ============================================================================

// Essential conditions are sampled at the end of each step and imposed by
// symmetric elimination after the monolithic matrix is assembled.  Natural
// conditions (tractions, fluxes, manufactured interface corrections) travel
// separately in FunctionalExtras.

struct VectorDirichletBc {
  int marker = 0;
  std::array<bool, 2> mask{true, true};  // which components are constrained
  VectorFn value;
};

struct ScalarDirichletBc {
  int marker = 0;
  ScalarFn value;
};

// Weak velocity inlet; penalty is the literal coefficient of the 1/h term.
struct NitscheVelocityBc {
  int marker = 0;
  VectorFn value;
  double penalty = 1.0;
};

struct BcSpec {
  std::vector<VectorDirichletBc> velocity;      // on the fluid boundary
  std::vector<VectorDirichletBc> displacement;  // on the porous boundary
  std::vector<ScalarDirichletBc> porous_pressure;
  std::vector<NitscheVelocityBc> nitsche_velocity;
};

// ============================================================================
// Solution state
// ============================================================================

// One time level plus the previous-level fields the scheme differences
// against.  dt_last is the step that produced this state (0 for initial
// data); it is what energy() uses to reconstruct the discrete d_t d.
struct SolutionState {
  double t = 0.0;
  double dt_last = 0.0;
  std::vector<double> u;
  std::vector<double> p_f;
  std::vector<double> d;
  std::vector<double> p_p;
  std::vector<double> phi;
  std::vector<double> d_prev;
  std::vector<double> p_p_prev;
  std::vector<double> phi_prev;
};

// ============================================================================
// Initial data
// ============================================================================

// Builds a discretely compatible initial state from an initial porous
// pressure alone:
//   p_P,0   L2 projection onto the porous pressure space,
//   phi_0   alpha p_P,0 minus lambda div d_0 through the total pressure row,
//   u_0     Stokes solve with the interface terms evaluated at p_P,0,
//   d_0     elasticity saddle with the interface terms from p_P,0 and u_0.
// Essential values and functional data are sampled at t = 0.
SolutionState construct_initial_state(const ScalarFn& p_p0,
                                      const ProblemSpaces& spaces,
                                      const MaterialParams& params,
                                      const BcSpec& bcs,
                                      const FunctionalExtras& extras = {},
                                      GeomMode mode = GeomMode::cartesian);

// ============================================================================
// Time stepping
// ============================================================================

// Backward Euler stepper for the five-field system.  The monolithic matrix
// depends on dt but not on t, so its factorization is cached and reused
// across steps of equal size; only the right-hand side is rebuilt.
class TimeStepper {
 public:
  TimeStepper(const ProblemSpaces& spaces, MaterialParams params, BcSpec bcs,
              FunctionalExtras extras = {}, GeomMode mode = GeomMode::cartesian);
  ~TimeStepper();
  TimeStepper(TimeStepper&&) noexcept;
  TimeStepper& operator=(TimeStepper&&) noexcept;

  // One quasi-static step (fluid inertia and convection dropped).  Throws
  // SolverFailure on a singular or diverged solve and SystemError when the
  // result violates the discrete divergence or total pressure identities.
  SolutionState step(const SolutionState& state, double dt);

  struct NewtonResult {
    SolutionState state;
    int iterations = 0;               // linear solves performed
    std::vector<double> residuals;    // euclidean residual after each update
  };

  // One transient Navier-Stokes step: adds rho_f/dt fluid mass and the
  // convective term, solved by Newton iteration on the exact Jacobian.
  // The iterate starts from the previous velocity with essential values
  // imposed, so every correction is homogeneous on the constrained DOFs.
  NewtonResult step_navier_stokes(const SolutionState& state, double dt,
                                  double tol = 1e-8, int max_iterations = 20);

  // Monolithic quasi-static operator for the given step size after Dirichlet
  // elimination, factorizing it if no cached factorization matches.  The
  // reference stays valid until the next call that changes dt.
  const SparseMatrix& system_matrix(double dt);

  const ProblemSpaces& spaces() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// ============================================================================
// Energy diagnostics
// ============================================================================

// Stored energy and dissipation rates of one state, integrated directly
// from the coefficient vectors (the assembled fluid matrix mixes volume and
// interface contributions, so it cannot provide this split).
struct EnergyReport {
  double elastic = 0.0;         // mu_s |eps(d)|^2
  double storage = 0.0;         // c0/2 |p_P|^2
  double total_pressure = 0.0;  // 1/(2 lambda) |alpha p_P - phi|^2
  double d_viscous = 0.0;       // 2 mu_f |eps(u)|^2
  double d_darcy = 0.0;         // 1/mu_f |kappa^{1/2} grad p_P|^2
  double d_bjs = 0.0;           // gamma mu_f |kappa^{-1/4} (u - d_t d).t|^2 on the interface

  double energy() const { return elastic + storage + total_pressure; }
  double dissipation() const { return d_viscous + d_darcy + d_bjs; }
};

// d_t d is the backward difference over state.dt_last, or zero for initial
// data.  Heterogeneous lambda enters the total pressure term cell by cell.
EnergyReport energy(const SolutionState& state, const ProblemSpaces& spaces,
                    const MaterialParams& params,
                    GeomMode mode = GeomMode::cartesian);

}  // namespace bstok
