#include "biotstokes/forms.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace bstok {

// ============================================================================
// MaterialParams
// ============================================================================

double MaterialParams::kappa_on(int cell) const {
  if (kappa.empty())
    throw FormError("permeability field is missing");
  if (cell < 0 || cell >= static_cast<int>(kappa.size()))
    throw FormError("permeability field does not cover cell " +
                    std::to_string(cell));
  const double k = kappa[static_cast<size_t>(cell)];
  if (!(k > 0.0))
    throw FormError("non-positive permeability on cell " +
                    std::to_string(cell));
  return k;
}

double MaterialParams::lambda_on(int cell) const {
  if (lambda_cells.empty()) return lambda;
  if (cell < 0 || cell >= static_cast<int>(lambda_cells.size()))
    throw FormError("cell-wise lambda does not cover cell " +
                    std::to_string(cell));
  const double l = lambda_cells[static_cast<size_t>(cell)];
  if (!(l > 0.0))
    throw FormError("non-positive lambda on cell " + std::to_string(cell));
  return l;
}

void MaterialParams::set_uniform_kappa(const Mesh& mesh, double value) {
  kappa.assign(static_cast<size_t>(mesh.num_cells()), value);
}

void MaterialParams::validate() const {
  if (!(lambda > 0.0) && lambda_cells.empty())
    throw FormError("lambda must be positive");
  if (!(mu_s > 0.0)) throw FormError("mu_s must be positive");
  if (!(mu_f > 0.0)) throw FormError("mu_f must be positive");
  if (!(alpha > 0.0) || alpha > 1.0)
    throw FormError("alpha must lie in (0, 1]");
  if (!(gamma > 0.0)) throw FormError("gamma must be positive");
  if (c0 < 0.0) throw FormError("C0 must be nonnegative");
  if (!(rho_f > 0.0)) throw FormError("rho_f must be positive");
  if (!(rho_s > 0.0)) throw FormError("rho_s must be positive");
}

// ============================================================================
// Assembly plumbing
// ============================================================================

namespace {

struct AsmOpts {
  bool axisym = false;
  bool unit_weight = false;  // test hook, see forms.hpp

  double weight(Vec2 x) const {
    return (axisym && !unit_weight) ? x.x : 1.0;
  }
  bool radial_extras() const { return axisym && !unit_weight; }
  int degree(int cartesian_degree) const {
    // P1/P1 stiffness kernels come in as degree 0; rules start at 1
    return std::clamp(cartesian_degree + (axisym ? 1 : 0), 1, 6);
  }
};

void check_axisym_geometry(const Mesh& mesh, const AsmOpts& opt) {
  if (!opt.axisym) return;
  for (const Vec2& v : mesh.vertices)
    if (v.x < -1e-14)
      throw FormError("axisym mode requires nonnegative r coordinates");
}

void require_shape(const Space& s, int subdomain, int components,
                   const char* what) {
  if (s.subdomain != subdomain || s.components != components)
    throw FormError(std::string("space/form mismatch: expected ") + what);
}

void require_same_mesh(const Space& a, const Space& b) {
  if (a.mesh != b.mesh)
    throw FormError("trial and test spaces must share a mesh");
}

// Volume assembly over the (shared) subdomain of both spaces.  at_point is
// called once per quadrature point with physical-gradient basis evaluations
// and the combined weight, and adds entries via
//   add(trial_node, trial_comp, test_node, test_comp, value).
template <typename PointKernel>
SparseMatrix assemble_volume(const Space& trial, const Space& test,
                             int cartesian_degree, const AsmOpts& opt,
                             PointKernel&& at_point) {
  require_same_mesh(trial, test);
  if (trial.subdomain != test.subdomain)
    throw FormError("volume forms need spaces on the same subdomain");
  const Mesh& mesh = *test.mesh;
  check_axisym_geometry(mesh, opt);
  const QuadRule rule =
      quadrature(QuadDomain::triangle, opt.degree(cartesian_degree));

  std::vector<Triplet> triplets;
  for (size_t ltc = 0; ltc < test.cells.size(); ++ltc) {
    const int gc = test.cells[ltc];
    const int ltr = trial.cell_local[gc];
    const auto& cv = mesh.cells[gc];
    const AffineMap map = affine_map(mesh.vertices[cv[0]], mesh.vertices[cv[1]],
                                     mesh.vertices[cv[2]]);
    const auto add = [&](int a, int i, int b, int j, double v) {
      triplets.push_back({test.dof(test.cell_nodes[ltc][b], j),
                          trial.dof(trial.cell_nodes[static_cast<size_t>(ltr)][a], i),
                          v});
    };
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const Vec2 x = map.apply(rule.points[q]);
      const BasisEval tr =
          push_gradients(map, eval_basis(trial.kind, rule.points[q]));
      const BasisEval te =
          push_gradients(map, eval_basis(test.kind, rule.points[q]));
      const double w = rule.weights[q] * map.det * opt.weight(x);
      at_point(gc, x, tr, te, w, add);
    }
  }
  return SparseMatrix::from_triplets(test.n_dofs(), trial.n_dofs(),
                                     std::move(triplets));
}

// Side of the interface a space integrates on.
int interface_cell(const Space& s, const InterfaceFacet& f) {
  return s.subdomain == subdomain::fluid ? f.fluid_cell : f.porous_cell;
}

// Interface assembly; bases are evaluated as traces from each space's own
// side.  Gradients are not pushed (no interface kernel needs them).
template <typename PointKernel>
SparseMatrix assemble_interface(const Space& trial, const Space& test,
                                int cartesian_degree, const AsmOpts& opt,
                                PointKernel&& at_point) {
  require_same_mesh(trial, test);
  const Mesh& mesh = *test.mesh;
  check_axisym_geometry(mesh, opt);
  if (mesh.interface.empty())
    throw FormError("interface form on a mesh without interface facets");
  const QuadRule rule =
      quadrature(QuadDomain::edge, opt.degree(cartesian_degree));

  std::vector<Triplet> triplets;
  for (const InterfaceFacet& f : mesh.interface) {
    const FacetFrame frame = interface_frame(mesh, f);
    const Vec2 pa = mesh.vertices[f.v0], pb = mesh.vertices[f.v1];
    const int tr_cell = interface_cell(trial, f);
    const int te_cell = interface_cell(test, f);
    const int ltr = trial.cell_local[tr_cell];
    const int lte = test.cell_local[te_cell];
    const auto& tr_cv = mesh.cells[tr_cell];
    const auto& te_cv = mesh.cells[te_cell];
    const AffineMap tr_map =
        affine_map(mesh.vertices[tr_cv[0]], mesh.vertices[tr_cv[1]],
                   mesh.vertices[tr_cv[2]]);
    const AffineMap te_map =
        affine_map(mesh.vertices[te_cv[0]], mesh.vertices[te_cv[1]],
                   mesh.vertices[te_cv[2]]);
    const auto add = [&](int a, int i, int b, int j, double v) {
      triplets.push_back(
          {test.dof(test.cell_nodes[static_cast<size_t>(lte)][b], j),
           trial.dof(trial.cell_nodes[static_cast<size_t>(ltr)][a], i), v});
    };
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const double s = rule.points[q].x;
      const Vec2 x = pa + s * (pb - pa);
      const BasisEval tr = eval_basis(trial.kind, tr_map.pull_back(x));
      const BasisEval te = eval_basis(test.kind, te_map.pull_back(x));
      const double w = rule.weights[q] * frame.length * opt.weight(x);
      at_point(f, x, frame, tr, te, w, add);
    }
  }
  return SparseMatrix::from_triplets(test.n_dofs(), trial.n_dofs(),
                                     std::move(triplets));
}

// symmetric gradient pairing: 2 mu eps(Na e_i) : eps(Nb e_j)
double eps_eps(double mu, const BasisEval& tr, const BasisEval& te, int a,
               int i, int b, int j) {
  const double grad_dot =
      tr.grad[a].x * te.grad[b].x + tr.grad[a].y * te.grad[b].y;
  const double tr_j = j == 0 ? tr.grad[a].x : tr.grad[a].y;
  const double te_i = i == 0 ? te.grad[b].x : te.grad[b].y;
  return mu * ((i == j ? grad_dot : 0.0) + tr_j * te_i);
}

double comp(Vec2 v, int i) { return i == 0 ? v.x : v.y; }

}  // namespace

// ============================================================================
// assemble
// ============================================================================

namespace {

SparseMatrix assemble_impl(FormId form, const Space& trial, const Space& test,
                           const MaterialParams& params, const AsmOpts& opt) {
  params.validate();
  const int d_tr = element_degree(trial.kind);
  const int d_te = element_degree(test.kind);

  switch (form) {
    case FormId::a1f: {
      require_shape(trial, subdomain::fluid, 2, "fluid velocity trial space");
      require_shape(test, subdomain::fluid, 2, "fluid velocity test space");
      return assemble_volume(
          trial, test, d_tr + d_te, opt,
          [&](int, Vec2, const BasisEval& tr, const BasisEval& te, double w,
              const auto& add) {
            for (int a = 0; a < tr.n; ++a)
              for (int b = 0; b < te.n; ++b) {
                const double m = params.rho_f * tr.value[a] * te.value[b] * w;
                add(a, 0, b, 0, m);
                add(a, 1, b, 1, m);
              }
          });
    }

    case FormId::a2f: {
      require_shape(trial, subdomain::fluid, 2, "fluid velocity trial space");
      require_shape(test, subdomain::fluid, 2, "fluid velocity test space");
      SparseMatrix vol = assemble_volume(
          trial, test, (d_tr - 1) + (d_te - 1), opt,
          [&](int, Vec2 x, const BasisEval& tr, const BasisEval& te, double w,
              const auto& add) {
            for (int a = 0; a < tr.n; ++a)
              for (int b = 0; b < te.n; ++b) {
                for (int i = 0; i < 2; ++i)
                  for (int j = 0; j < 2; ++j)
                    add(a, i, b, j,
                        w * eps_eps(params.mu_f, tr, te, a, i, b, j));
                if (opt.radial_extras())
                  add(a, 0, b, 0,
                      2.0 * params.mu_f * tr.value[a] * te.value[b] / x.x *
                          (w / opt.weight(x)));
              }
          });
      if (test.mesh->interface.empty()) return vol;
      SparseMatrix bjs = assemble_interface(
          trial, test, d_tr + d_te + 1, opt,
          [&](const InterfaceFacet& f, Vec2, const FacetFrame& fr,
              const BasisEval& tr, const BasisEval& te, double w,
              const auto& add) {
            const double coef =
                params.gamma * params.mu_f /
                std::sqrt(params.kappa_on(f.porous_cell));
            for (int a = 0; a < tr.n; ++a)
              for (int b = 0; b < te.n; ++b)
                for (int i = 0; i < 2; ++i)
                  for (int j = 0; j < 2; ++j)
                    add(a, i, b, j,
                        w * coef * tr.value[a] * comp(fr.t, i) * te.value[b] *
                            comp(fr.t, j));
          });
      return add(vol, bjs);
    }

    case FormId::cf:
      throw FormError(
          "the convective form needs a linearization point; use "
          "assemble_convective");

    case FormId::b1f:
    case FormId::b1p: {
      const int sub =
          form == FormId::b1f ? subdomain::fluid : subdomain::porous;
      // the vector slot carries the divergence; spaces may come in either
      // order so the result is always test-rows by trial-cols
      const bool trial_is_vector = trial.components == 2;
      const Space& vec = trial_is_vector ? trial : test;
      const Space& sca = trial_is_vector ? test : trial;
      require_shape(vec, sub, 2, "vector space on the owning subdomain");
      require_shape(sca, sub, 1, "scalar space on the owning subdomain");
      const int deg = (element_degree(vec.kind) - 1) + element_degree(sca.kind);
      return assemble_volume(
          trial, test, deg, opt,
          [&](int, Vec2 x, const BasisEval& tr, const BasisEval& te, double w,
              const auto& add) {
            const BasisEval& v = trial_is_vector ? tr : te;
            const BasisEval& q = trial_is_vector ? te : tr;
            for (int av = 0; av < v.n; ++av)
              for (int bq = 0; bq < q.n; ++bq) {
                const double base = -q.value[bq] * w;
                const double div_x = comp(v.grad[av], 0);
                const double div_y = comp(v.grad[av], 1);
                // axisym divergence carries u_r/r; the 1/r cancels the
                // r-weight so the extra runs on the unweighted measure
                double extra = 0.0;
                if (opt.radial_extras())
                  extra = -q.value[bq] * v.value[av] * (w / opt.weight(x));
                if (trial_is_vector) {
                  add(av, 0, bq, 0, base * div_x + extra);
                  add(av, 1, bq, 0, base * div_y);
                } else {
                  add(bq, 0, av, 0, base * div_x + extra);
                  add(bq, 0, av, 1, base * div_y);
                }
              }
          });
    }

    case FormId::b2sig:
    case FormId::b4sig: {
      // <q_P, v.n> with v fluid for b2sig; -<q_P, w.n> with w porous for b4sig
      const int vec_sub =
          form == FormId::b2sig ? subdomain::fluid : subdomain::porous;
      const double sign = form == FormId::b2sig ? 1.0 : -1.0;
      const bool trial_is_vector = trial.components == 2;
      const Space& vec = trial_is_vector ? trial : test;
      const Space& sca = trial_is_vector ? test : trial;
      require_shape(vec, vec_sub, 2, "vector space for the interface pairing");
      require_shape(sca, subdomain::porous, 1, "porous pressure space");
      return assemble_interface(
          trial, test, d_tr + d_te + 1, opt,
          [&](const InterfaceFacet&, Vec2, const FacetFrame& fr,
              const BasisEval& tr, const BasisEval& te, double w,
              const auto& add) {
            const BasisEval& v = trial_is_vector ? tr : te;
            const BasisEval& q = trial_is_vector ? te : tr;
            for (int av = 0; av < v.n; ++av)
              for (int bq = 0; bq < q.n; ++bq)
                for (int i = 0; i < 2; ++i) {
                  const double val =
                      sign * q.value[bq] * v.value[av] * comp(fr.n, i) * w;
                  if (trial_is_vector)
                    add(av, i, bq, 0, val);
                  else
                    add(bq, 0, av, i, val);
                }
          });
    }

    case FormId::b3sig: {
      const bool trial_is_fluid = trial.subdomain == subdomain::fluid;
      const Space& v = trial_is_fluid ? trial : test;
      const Space& wsp = trial_is_fluid ? test : trial;
      require_shape(v, subdomain::fluid, 2, "fluid velocity space");
      require_shape(wsp, subdomain::porous, 2, "displacement space");
      return assemble_interface(
          trial, test, d_tr + d_te + 1, opt,
          [&](const InterfaceFacet& f, Vec2, const FacetFrame& fr,
              const BasisEval& tr, const BasisEval& te, double w,
              const auto& add) {
            const double coef =
                params.gamma * params.mu_f /
                std::sqrt(params.kappa_on(f.porous_cell));
            for (int a = 0; a < tr.n; ++a)
              for (int b = 0; b < te.n; ++b)
                for (int i = 0; i < 2; ++i)
                  for (int j = 0; j < 2; ++j)
                    add(a, i, b, j,
                        -w * coef * tr.value[a] * comp(fr.t, i) *
                            te.value[b] * comp(fr.t, j));
          });
    }

    case FormId::a1p: {
      require_shape(trial, subdomain::porous, 2, "displacement trial space");
      require_shape(test, subdomain::porous, 2, "displacement test space");
      return assemble_volume(
          trial, test, (d_tr - 1) + (d_te - 1), opt,
          [&](int, Vec2 x, const BasisEval& tr, const BasisEval& te, double w,
              const auto& add) {
            for (int a = 0; a < tr.n; ++a)
              for (int b = 0; b < te.n; ++b) {
                for (int i = 0; i < 2; ++i)
                  for (int j = 0; j < 2; ++j)
                    add(a, i, b, j,
                        w * eps_eps(params.mu_s, tr, te, a, i, b, j));
                if (opt.radial_extras())
                  add(a, 0, b, 0,
                      2.0 * params.mu_s * tr.value[a] * te.value[b] / x.x *
                          (w / opt.weight(x)));
              }
          });
    }

    case FormId::a2sig: {
      require_shape(trial, subdomain::porous, 2, "displacement trial space");
      require_shape(test, subdomain::porous, 2, "displacement test space");
      return assemble_interface(
          trial, test, d_tr + d_te + 1, opt,
          [&](const InterfaceFacet& f, Vec2, const FacetFrame& fr,
              const BasisEval& tr, const BasisEval& te, double w,
              const auto& add) {
            const double coef =
                params.gamma * params.mu_f /
                std::sqrt(params.kappa_on(f.porous_cell));
            for (int a = 0; a < tr.n; ++a)
              for (int b = 0; b < te.n; ++b)
                for (int i = 0; i < 2; ++i)
                  for (int j = 0; j < 2; ++j)
                    add(a, i, b, j,
                        w * coef * tr.value[a] * comp(fr.t, i) * te.value[b] *
                            comp(fr.t, j));
          });
    }

    case FormId::a3p: {
      require_shape(trial, subdomain::porous, 1, "porous pressure trial space");
      require_shape(test, subdomain::porous, 1, "porous pressure test space");
      return assemble_volume(
          trial, test, d_tr + d_te, opt,
          [&](int gc, Vec2, const BasisEval& tr, const BasisEval& te, double w,
              const auto& add) {
            const double coef =
                params.c0 +
                params.alpha * params.alpha / params.lambda_on(gc);
            for (int a = 0; a < tr.n; ++a)
              for (int b = 0; b < te.n; ++b)
                add(a, 0, b, 0, coef * tr.value[a] * te.value[b] * w);
          });
    }

    case FormId::a4p: {
      require_shape(trial, subdomain::porous, 1, "porous pressure trial space");
      require_shape(test, subdomain::porous, 1, "porous pressure test space");
      return assemble_volume(
          trial, test, (d_tr - 1) + (d_te - 1), opt,
          [&](int gc, Vec2, const BasisEval& tr, const BasisEval& te, double w,
              const auto& add) {
            const double coef = params.kappa_on(gc) / params.mu_f;
            for (int a = 0; a < tr.n; ++a)
              for (int b = 0; b < te.n; ++b)
                add(a, 0, b, 0,
                    coef * w *
                        (tr.grad[a].x * te.grad[b].x +
                         tr.grad[a].y * te.grad[b].y));
          });
    }

    case FormId::b2p: {
      require_shape(trial, subdomain::porous, 1, "scalar porous trial space");
      require_shape(test, subdomain::porous, 1, "scalar porous test space");
      return assemble_volume(
          trial, test, d_tr + d_te, opt,
          [&](int gc, Vec2, const BasisEval& tr, const BasisEval& te, double w,
              const auto& add) {
            const double coef = params.alpha / params.lambda_on(gc);
            for (int a = 0; a < tr.n; ++a)
              for (int b = 0; b < te.n; ++b)
                add(a, 0, b, 0, coef * tr.value[a] * te.value[b] * w);
          });
    }

    case FormId::a5p: {
      require_shape(trial, subdomain::porous, 1, "total pressure trial space");
      require_shape(test, subdomain::porous, 1, "total pressure test space");
      return assemble_volume(
          trial, test, d_tr + d_te, opt,
          [&](int gc, Vec2, const BasisEval& tr, const BasisEval& te, double w,
              const auto& add) {
            const double coef = 1.0 / params.lambda_on(gc);
            for (int a = 0; a < tr.n; ++a)
              for (int b = 0; b < te.n; ++b)
                add(a, 0, b, 0, coef * tr.value[a] * te.value[b] * w);
          });
    }
  }
  throw FormError("unknown form id");
}

}  // namespace

SparseMatrix assemble(FormId form, const Space& trial, const Space& test,
                      const MaterialParams& params, GeomMode mode) {
  AsmOpts opt;
  opt.axisym = mode == GeomMode::axisym;
  return assemble_impl(form, trial, test, params, opt);
}

namespace detail {
SparseMatrix assemble_axisym_unit_weight(FormId form, const Space& trial,
                                         const Space& test,
                                         const MaterialParams& params) {
  AsmOpts opt;
  opt.axisym = true;
  opt.unit_weight = true;
  return assemble_impl(form, trial, test, params, opt);
}
}  // namespace detail

// ============================================================================
// Functionals
// ============================================================================

namespace {

// shared volume loop for right-hand sides
template <typename PointKernel>
void functional_volume(const Space& test, const AsmOpts& opt,
                       std::vector<double>& out, PointKernel&& at_point) {
  const Mesh& mesh = *test.mesh;
  const QuadRule rule = quadrature(QuadDomain::triangle, opt.degree(6));
  for (size_t ltc = 0; ltc < test.cells.size(); ++ltc) {
    const int gc = test.cells[ltc];
    const auto& cv = mesh.cells[gc];
    const AffineMap map = affine_map(mesh.vertices[cv[0]], mesh.vertices[cv[1]],
                                     mesh.vertices[cv[2]]);
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const Vec2 x = map.apply(rule.points[q]);
      const BasisEval te =
          push_gradients(map, eval_basis(test.kind, rule.points[q]));
      const double w = rule.weights[q] * map.det * opt.weight(x);
      at_point(gc, static_cast<int>(ltc), x, te, w, out);
    }
  }
}

// shared interface loop; test trace taken from the test space's own side
template <typename PointKernel>
void functional_interface(const Space& test, const AsmOpts& opt,
                          std::vector<double>& out, PointKernel&& at_point) {
  const Mesh& mesh = *test.mesh;
  const QuadRule rule = quadrature(QuadDomain::edge, opt.degree(6));
  for (const InterfaceFacet& f : mesh.interface) {
    const FacetFrame frame = interface_frame(mesh, f);
    const Vec2 pa = mesh.vertices[f.v0], pb = mesh.vertices[f.v1];
    const int cell = interface_cell(test, f);
    const int lte = test.cell_local[cell];
    const auto& cv = mesh.cells[cell];
    const AffineMap map = affine_map(mesh.vertices[cv[0]], mesh.vertices[cv[1]],
                                     mesh.vertices[cv[2]]);
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const double s = rule.points[q].x;
      const Vec2 x = pa + s * (pb - pa);
      const BasisEval te = eval_basis(test.kind, map.pull_back(x));
      const double w = rule.weights[q] * frame.length * opt.weight(x);
      at_point(f, lte, x, frame, te, w, out);
    }
  }
}

// boundary terms over one marker; every marked facet must belong to the test
// space's subdomain
template <typename PointKernel>
void functional_boundary(const Space& test, int marker, const AsmOpts& opt,
                         std::vector<double>& out, PointKernel&& at_point) {
  const Mesh& mesh = *test.mesh;
  const QuadRule rule = quadrature(QuadDomain::edge, opt.degree(6));
  bool seen = false;
  for (const BoundaryFacet& f : mesh.boundary) {
    if (f.marker != marker) continue;
    seen = true;
    const int lte = test.cell_local[f.cell];
    if (lte < 0)
      throw FormError("boundary marker " + std::to_string(marker) +
                      " lies outside the test space's subdomain");
    const FacetFrame frame = boundary_frame(mesh, f);
    const Vec2 pa = mesh.vertices[f.v0], pb = mesh.vertices[f.v1];
    const auto& cv = mesh.cells[f.cell];
    const AffineMap map = affine_map(mesh.vertices[cv[0]], mesh.vertices[cv[1]],
                                     mesh.vertices[cv[2]]);
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const double s = rule.points[q].x;
      const Vec2 x = pa + s * (pb - pa);
      const BasisEval te = eval_basis(test.kind, map.pull_back(x));
      const double w = rule.weights[q] * frame.length * opt.weight(x);
      at_point(lte, x, frame, te, w, out);
    }
  }
  if (!seen)
    throw FormError("no boundary facet carries marker " +
                    std::to_string(marker));
}

void require_extras(bool ok, const char* what) {
  if (!ok)
    throw FormError(std::string("manufactured corrections incomplete: ") +
                    what);
}

}  // namespace

std::vector<double> assemble_functional(FunctionalId fid, const Space& test,
                                        const MaterialParams& params,
                                        double time,
                                        const FunctionalExtras& extras,
                                        GeomMode mode) {
  params.validate();
  AsmOpts opt;
  opt.axisym = mode == GeomMode::axisym;
  check_axisym_geometry(*test.mesh, opt);
  std::vector<double> out(static_cast<size_t>(test.n_dofs()), 0.0);

  switch (fid) {
    case FunctionalId::ff: {
      require_shape(test, subdomain::fluid, 2, "fluid velocity test space");
      require_extras(extras.m3.has_value() == extras.m4.has_value(),
                     "FF needs both m3 and m4");
      const bool has_gravity = params.g.x != 0.0 || params.g.y != 0.0;
      if (has_gravity || extras.fluid_source) {
        functional_volume(
            test, opt, out,
            [&](int, int lte, Vec2 x, const BasisEval& te, double w,
                std::vector<double>& acc) {
              Vec2 load = params.rho_f * params.g;
              if (extras.fluid_source)
                load = load + (*extras.fluid_source)(x, time);
              for (int b = 0; b < te.n; ++b) {
                const int node = test.cell_nodes[static_cast<size_t>(lte)][b];
                acc[static_cast<size_t>(test.dof(node, 0))] +=
                    w * load.x * te.value[b];
                acc[static_cast<size_t>(test.dof(node, 1))] +=
                    w * load.y * te.value[b];
              }
            });
      }
      if (extras.m3) {
        functional_interface(
            test, opt, out,
            [&](const InterfaceFacet&, int lte, Vec2 x, const FacetFrame& fr,
                const BasisEval& te, double w, std::vector<double>& acc) {
              const double v3 = (*extras.m3)(x, time, fr.n, fr.t);
              const double v4 = (*extras.m4)(x, time, fr.n, fr.t);
              for (int b = 0; b < te.n; ++b) {
                const int node = test.cell_nodes[static_cast<size_t>(lte)][b];
                for (int j = 0; j < 2; ++j)
                  acc[static_cast<size_t>(test.dof(node, j))] +=
                      w * te.value[b] *
                      (v3 * comp(fr.n, j) + v4 * comp(fr.t, j));
              }
            });
      }
      for (const auto& [marker, traction] : extras.fluid_traction) {
        functional_boundary(
            test, marker, opt, out,
            [&](int lte, Vec2 x, const FacetFrame& fr, const BasisEval& te,
                double w, std::vector<double>& acc) {
              const Vec2 tr = traction(x, time, fr.n);
              for (int b = 0; b < te.n; ++b) {
                const int node = test.cell_nodes[static_cast<size_t>(lte)][b];
                acc[static_cast<size_t>(test.dof(node, 0))] +=
                    w * tr.x * te.value[b];
                acc[static_cast<size_t>(test.dof(node, 1))] +=
                    w * tr.y * te.value[b];
              }
            });
      }
      return out;
    }

    case FunctionalId::fp: {
      require_shape(test, subdomain::porous, 2, "displacement test space");
      const int have = (extras.m2 ? 1 : 0) + (extras.m3 ? 1 : 0) +
                       (extras.m4 ? 1 : 0);
      require_extras(have == 0 || have == 3, "FP needs m2, m3 and m4");
      if (extras.porous_body_accel || extras.porous_source) {
        functional_volume(
            test, opt, out,
            [&](int, int lte, Vec2 x, const BasisEval& te, double w,
                std::vector<double>& acc) {
              Vec2 load{0.0, 0.0};
              if (extras.porous_body_accel)
                load = params.rho_s * (*extras.porous_body_accel)(x, time);
              if (extras.porous_source)
                load = load + (*extras.porous_source)(x, time);
              for (int b = 0; b < te.n; ++b) {
                const int node = test.cell_nodes[static_cast<size_t>(lte)][b];
                acc[static_cast<size_t>(test.dof(node, 0))] +=
                    w * load.x * te.value[b];
                acc[static_cast<size_t>(test.dof(node, 1))] +=
                    w * load.y * te.value[b];
              }
            });
      }
      if (extras.m2) {
        functional_interface(
            test, opt, out,
            [&](const InterfaceFacet&, int lte, Vec2 x, const FacetFrame& fr,
                const BasisEval& te, double w, std::vector<double>& acc) {
              const Vec2 v2 = (*extras.m2)(x, time, fr.n, fr.t);
              const double v3 = (*extras.m3)(x, time, fr.n, fr.t);
              const double v4 = (*extras.m4)(x, time, fr.n, fr.t);
              for (int b = 0; b < te.n; ++b) {
                const int node = test.cell_nodes[static_cast<size_t>(lte)][b];
                for (int j = 0; j < 2; ++j)
                  acc[static_cast<size_t>(test.dof(node, j))] +=
                      w * te.value[b] *
                      (comp(v2, j) - v3 * comp(fr.n, j) - v4 * comp(fr.t, j));
              }
            });
      }
      for (const auto& [marker, traction] : extras.porous_traction) {
        functional_boundary(
            test, marker, opt, out,
            [&](int lte, Vec2 x, const FacetFrame& fr, const BasisEval& te,
                double w, std::vector<double>& acc) {
              const Vec2 tr = traction(x, time, fr.n);
              for (int b = 0; b < te.n; ++b) {
                const int node = test.cell_nodes[static_cast<size_t>(lte)][b];
                acc[static_cast<size_t>(test.dof(node, 0))] +=
                    w * tr.x * te.value[b];
                acc[static_cast<size_t>(test.dof(node, 1))] +=
                    w * tr.y * te.value[b];
              }
            });
      }
      return out;
    }

    case FunctionalId::g: {
      require_shape(test, subdomain::porous, 1, "porous pressure test space");
      const bool has_gravity = params.g.x != 0.0 || params.g.y != 0.0;
      if (has_gravity || extras.mass_source) {
        functional_volume(
            test, opt, out,
            [&](int gc, int lte, Vec2 x, const BasisEval& te, double w,
                std::vector<double>& acc) {
              const double mob =
                  has_gravity ? params.kappa_on(gc) / params.mu_f : 0.0;
              const double src =
                  extras.mass_source ? (*extras.mass_source)(x, time) : 0.0;
              for (int b = 0; b < te.n; ++b) {
                const int node = test.cell_nodes[static_cast<size_t>(lte)][b];
                double val = src * te.value[b];
                if (has_gravity)
                  val += params.rho_f * mob *
                         (params.g.x * te.grad[b].x + params.g.y * te.grad[b].y);
                acc[static_cast<size_t>(test.dof(node, 0))] += w * val;
              }
            });
      }
      if (has_gravity) {
        functional_interface(
            test, opt, out,
            [&](const InterfaceFacet& f, int lte, Vec2, const FacetFrame& fr,
                const BasisEval& te, double w, std::vector<double>& acc) {
              const double mob = params.kappa_on(f.porous_cell) / params.mu_f;
              const double gn = params.g.x * fr.n.x + params.g.y * fr.n.y;
              for (int b = 0; b < te.n; ++b) {
                const int node = test.cell_nodes[static_cast<size_t>(lte)][b];
                acc[static_cast<size_t>(test.dof(node, 0))] -=
                    w * params.rho_f * mob * gn * te.value[b];
              }
            });
      }
      if (extras.m1) {
        functional_interface(
            test, opt, out,
            [&](const InterfaceFacet&, int lte, Vec2 x, const FacetFrame& fr,
                const BasisEval& te, double w, std::vector<double>& acc) {
              const double v1 = (*extras.m1)(x, time, fr.n, fr.t);
              for (int b = 0; b < te.n; ++b) {
                const int node = test.cell_nodes[static_cast<size_t>(lte)][b];
                acc[static_cast<size_t>(test.dof(node, 0))] -= w * v1 * te.value[b];
              }
            });
      }
      for (const auto& [marker, flux] : extras.porous_flux) {
        functional_boundary(
            test, marker, opt, out,
            [&](int lte, Vec2 x, const FacetFrame& fr, const BasisEval& te,
                double w, std::vector<double>& acc) {
              const double fv = flux(x, time, fr.n);
              for (int b = 0; b < te.n; ++b) {
                const int node = test.cell_nodes[static_cast<size_t>(lte)][b];
                acc[static_cast<size_t>(test.dof(node, 0))] += w * fv * te.value[b];
              }
            });
      }
      return out;
    }
  }
  throw FormError("unknown functional id");
}

// ============================================================================
// Nitsche velocity inlet
// ============================================================================

std::pair<SparseMatrix, std::vector<double>> assemble_nitsche_velocity(
    const Space& v, int marker, const VectorFn& u_in, double penalty,
    const MaterialParams& params, double time, GeomMode mode) {
  params.validate();
  require_shape(v, subdomain::fluid, 2, "fluid velocity space");
  if (!(penalty > 0.0)) throw FormError("Nitsche penalty must be positive");
  AsmOpts opt;
  opt.axisym = mode == GeomMode::axisym;
  const Mesh& mesh = *v.mesh;
  check_axisym_geometry(mesh, opt);
  const QuadRule rule = quadrature(QuadDomain::edge, opt.degree(5));

  std::vector<Triplet> triplets;
  std::vector<double> rhs(static_cast<size_t>(v.n_dofs()), 0.0);
  bool seen = false;
  for (const BoundaryFacet& f : mesh.boundary) {
    if (f.marker != marker) continue;
    seen = true;
    if (v.cell_local[f.cell] < 0)
      throw FormError("Nitsche marker " + std::to_string(marker) +
                      " lies on the porous boundary");
    const int lc = v.cell_local[f.cell];
    const FacetFrame frame = boundary_frame(mesh, f);
    const Vec2 pa = mesh.vertices[f.v0], pb = mesh.vertices[f.v1];
    const auto& cv = mesh.cells[f.cell];
    const AffineMap map = affine_map(mesh.vertices[cv[0]], mesh.vertices[cv[1]],
                                     mesh.vertices[cv[2]]);
    const double pen = penalty / frame.length;
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const double s = rule.points[q].x;
      const Vec2 x = pa + s * (pb - pa);
      const BasisEval basis =
          push_gradients(map, eval_basis(v.kind, map.pull_back(x)));
      const double w = rule.weights[q] * frame.length * opt.weight(x);
      const Vec2 uin = u_in(x, time);
      for (int b = 0; b < basis.n; ++b) {
        const int node_b = v.cell_nodes[static_cast<size_t>(lc)][b];
        const double gbn =
            basis.grad[b].x * frame.n.x + basis.grad[b].y * frame.n.y;
        // rhs: -2 mu_f eps(v) n . u_in + pen u_in . v
        const double guin =
            basis.grad[b].x * uin.x + basis.grad[b].y * uin.y;
        for (int j = 0; j < 2; ++j) {
          const double consistency =
              -params.mu_f * (gbn * comp(uin, j) + guin * comp(frame.n, j));
          rhs[static_cast<size_t>(v.dof(node_b, j))] +=
              w * (consistency + pen * comp(uin, j) * basis.value[b]);
        }
        for (int a = 0; a < basis.n; ++a) {
          const int node_a = v.cell_nodes[static_cast<size_t>(lc)][a];
          const double gan =
              basis.grad[a].x * frame.n.x + basis.grad[a].y * frame.n.y;
          for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
              // -<2 mu eps(u)n, v> - <2 mu eps(v)n, u> + pen <u, v>
              double val = 0.0;
              const double flux_u =
                  params.mu_f * ((i == j ? gan * basis.value[b] : 0.0) +
                                 comp(frame.n, i) *
                                     (j == 0 ? basis.grad[a].x
                                             : basis.grad[a].y) *
                                     basis.value[b]);
              const double flux_v =
                  params.mu_f * ((i == j ? gbn * basis.value[a] : 0.0) +
                                 comp(frame.n, j) *
                                     (i == 0 ? basis.grad[b].x
                                             : basis.grad[b].y) *
                                     basis.value[a]);
              val -= flux_u + flux_v;
              if (i == j) val += pen * basis.value[a] * basis.value[b];
              triplets.push_back({v.dof(node_b, j), v.dof(node_a, i), w * val});
            }
        }
      }
    }
  }
  if (!seen)
    throw FormError("no boundary facet carries marker " +
                    std::to_string(marker));
  return {SparseMatrix::from_triplets(v.n_dofs(), v.n_dofs(),
                                      std::move(triplets)),
          std::move(rhs)};
}

// ============================================================================
// Convection
// ============================================================================

ConvectivePair assemble_convective(const std::vector<double>& u_lin,
                                   const Space& v, double rho_f,
                                   GeomMode mode) {
  require_shape(v, subdomain::fluid, 2, "fluid velocity space");
  if (u_lin.size() != static_cast<size_t>(v.n_dofs()))
    throw FormError("linearization point has the wrong length");
  AsmOpts opt;
  opt.axisym = mode == GeomMode::axisym;
  const Mesh& mesh = *v.mesh;
  check_axisym_geometry(mesh, opt);
  const int d = element_degree(v.kind);
  const QuadRule rule =
      quadrature(QuadDomain::triangle, opt.degree(std::min(6, 3 * d - 1)));

  std::vector<Triplet> tc, tj;
  for (size_t lc = 0; lc < v.cells.size(); ++lc) {
    const int gc = v.cells[lc];
    const auto& cv = mesh.cells[gc];
    const AffineMap map = affine_map(mesh.vertices[cv[0]], mesh.vertices[cv[1]],
                                     mesh.vertices[cv[2]]);
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const Vec2 x = map.apply(rule.points[q]);
      const BasisEval basis =
          push_gradients(map, eval_basis(v.kind, rule.points[q]));
      const double w = rule.weights[q] * map.det * opt.weight(x);

      // u_lin value and gradient at the quadrature point
      Vec2 uval{0.0, 0.0};
      double gu[2][2] = {{0.0, 0.0}, {0.0, 0.0}};  // gu[j][i] = d(u_j)/d(x_i)
      for (int a = 0; a < basis.n; ++a) {
        const int node = v.cell_nodes[lc][a];
        const double cx = u_lin[static_cast<size_t>(v.dof(node, 0))];
        const double cy = u_lin[static_cast<size_t>(v.dof(node, 1))];
        uval.x += cx * basis.value[a];
        uval.y += cy * basis.value[a];
        gu[0][0] += cx * basis.grad[a].x;
        gu[0][1] += cx * basis.grad[a].y;
        gu[1][0] += cy * basis.grad[a].x;
        gu[1][1] += cy * basis.grad[a].y;
      }

      for (int a = 0; a < basis.n; ++a) {
        const int node_a = v.cell_nodes[lc][a];
        const double adv =
            uval.x * basis.grad[a].x + uval.y * basis.grad[a].y;
        for (int b = 0; b < basis.n; ++b) {
          const int node_b = v.cell_nodes[lc][b];
          const double cval = rho_f * basis.value[b] * adv * w;
          tc.push_back({v.dof(node_b, 0), v.dof(node_a, 0), cval});
          tc.push_back({v.dof(node_b, 1), v.dof(node_a, 1), cval});
          for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
              tj.push_back({v.dof(node_b, j), v.dof(node_a, i),
                            rho_f * basis.value[a] * gu[j][i] *
                                basis.value[b] * w});
        }
      }
    }
  }
  return {SparseMatrix::from_triplets(v.n_dofs(), v.n_dofs(), std::move(tc)),
          SparseMatrix::from_triplets(v.n_dofs(), v.n_dofs(), std::move(tj))};
}

}  // namespace bstok
