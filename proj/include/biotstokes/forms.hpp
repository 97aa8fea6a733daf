#pragma once

#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "biotstokes/linalg.hpp"
#include "biotstokes/spaces.hpp"
#include "biotstokes/types.hpp"

namespace bstok {

struct FormError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ============================================================================
// Material data
// ============================================================================

struct MaterialParams {
  double lambda = 1.0;  // ignored on cells covered by lambda_cells
  double mu_s = 1.0;
  double mu_f = 1.0;
  double alpha = 1.0;
  double gamma = 1.0;
  double c0 = 0.0;
  double rho_f = 1.0;
  double rho_s = 1.0;
  Vec2 g{0.0, 0.0};

  // per-cell fields indexed by global cell id; kappa is required wherever a
  // porous form needs it, lambda_cells is an optional heterogeneous override
  std::vector<double> kappa;
  std::vector<double> lambda_cells;

  double kappa_on(int cell) const;
  double lambda_on(int cell) const;
  void set_uniform_kappa(const Mesh& mesh, double value);
  void validate() const;
};

// ============================================================================
// Form catalog
// ============================================================================

// One id per bilinear or trilinear form of the coupled operator.
enum class FormId {
  a1f,    // rho_f (u, v)_F                                   fluid mass
  a2f,    // 2 mu_f (eps(u), eps(v))_F + BJS tangential term  fluid stiffness
  cf,     // rho_f ((u.grad)w, v)_F                           convection
  b1f,    // -(q_F, div v)_F
  b1p,    // -(psi, div w)_P
  b2sig,  // <q_P, v.n> on the interface
  b3sig,  // -<(gamma mu_f/sqrt(kappa)) v.t, w.t> on the interface
  b4sig,  // -<q_P, w.n> on the interface
  a1p,    // 2 mu_s (eps(d), eps(w))_P
  a2sig,  // <(gamma mu_f/sqrt(kappa)) d.t, w.t> on the interface
  a3p,    // (C0 + alpha^2/lambda) (p_P, q_P)_P
  a4p,    // (kappa/mu_f) (grad p_P, grad q_P)_P
  b2p,    // (alpha/lambda) (psi, q_P)_P
  a5p,    // (1/lambda) (phi, psi)_P
};

enum class FunctionalId { ff, fp, g };

enum class GeomMode { cartesian, axisym };

// ============================================================================
// Data closures
// ============================================================================

// Boundary data receives the outward unit normal of the facet.
using BoundaryVectorFn = std::function<Vec2(Vec2, double, Vec2)>;
using BoundaryScalarFn = std::function<double(Vec2, double, Vec2)>;
// Interface data receives the interface unit normal (fluid side to porous
// side) and the unit tangent.
using InterfaceVectorFn = std::function<Vec2(Vec2, double, Vec2, Vec2)>;
using InterfaceScalarFn = std::function<double(Vec2, double, Vec2, Vec2)>;

// Optional right-hand-side pieces beyond gravity.
struct FunctionalExtras {
  // volume loads (unscaled integrands, typically manufactured sources)
  std::optional<VectorFn> fluid_source;   // adds (fluid_source, v)_F to FF
  std::optional<VectorFn> porous_source;  // adds (porous_source, w)_P to FP
  std::optional<ScalarFn> mass_source;    // adds (mass_source, q_P)_P to G

  // body acceleration f of the porous skeleton: FP includes rho_s (f, w)_P
  std::optional<VectorFn> porous_body_accel;

  // manufactured interface corrections; FF needs m3 and m4, FP needs m2, m3
  // and m4, G needs m1
  std::optional<InterfaceScalarFn> m1;
  std::optional<InterfaceVectorFn> m2;
  std::optional<InterfaceScalarFn> m3;
  std::optional<InterfaceScalarFn> m4;

  // natural boundary data by marker
  std::map<int, BoundaryVectorFn> fluid_traction;   // FF: <traction, v>
  std::map<int, BoundaryVectorFn> porous_traction;  // FP: <traction, w>
  std::map<int, BoundaryScalarFn> porous_flux;      // G:  <flux, q_P>
};

// ============================================================================
// Assembly
// ============================================================================

// Matrix of size test_dofs x trial_dofs.  The velocity-like and scalar slots
// of mixed forms are identified by space shape, so swapping trial and test
// yields the transpose.  Axisym mode weights every integrand by r, adds the
// 2 mu (1/r) u_r v_r terms to a2f and a1p, and extends div by u_r/r.
SparseMatrix assemble(FormId form, const Space& trial, const Space& test,
                      const MaterialParams& params,
                      GeomMode mode = GeomMode::cartesian);

std::vector<double> assemble_functional(FunctionalId f, const Space& test,
                                        const MaterialParams& params,
                                        double time,
                                        const FunctionalExtras& extras,
                                        GeomMode mode = GeomMode::cartesian);

// Symmetric interior-penalty imposition of u = u_in on marked fluid facets:
// consistency, symmetry and (penalty/h_facet) <u, v> terms, with the matching
// right-hand side for the boundary datum.
std::pair<SparseMatrix, std::vector<double>> assemble_nitsche_velocity(
    const Space& v, int marker, const VectorFn& u_in, double penalty,
    const MaterialParams& params, double time,
    GeomMode mode = GeomMode::cartesian);

// Linearized convection around u_lin: c assembles c^F(u_lin, ., .) and
// jacobian_extra assembles c^F(., u_lin, .), so a Newton step uses their sum.
struct ConvectivePair {
  SparseMatrix c;
  SparseMatrix jacobian_extra;
};

ConvectivePair assemble_convective(const std::vector<double>& u_lin,
                                   const Space& v, double rho_f,
                                   GeomMode mode = GeomMode::cartesian);

namespace detail {
// Test hook: axisym assembly with the r-weight forced to 1 and the 1/r
// additions dropped; must reproduce cartesian assembly entrywise.
SparseMatrix assemble_axisym_unit_weight(FormId form, const Space& trial,
                                         const Space& test,
                                         const MaterialParams& params);
}  // namespace detail

}  // namespace bstok
