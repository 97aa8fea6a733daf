#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "biotstokes/forms.hpp"
#include "biotstokes/linalg.hpp"
#include "biotstokes/mesh.hpp"
#include "biotstokes/spaces.hpp"
#include "doctest.h"

using namespace bstok;

namespace {

// ============================================================================
// Fixtures and oracles
// ============================================================================

Mesh standard_two_layer(int nx, int ny_each) {
  return generate_two_layer_rect({-1.0, 1.0}, {0.0, 2.0}, {-2.0, 0.0}, nx,
                                 ny_each, {});
}

// deliberately non-unit values so scaling mistakes cannot hide
MaterialParams test_params(const Mesh& mesh) {
  MaterialParams p;
  p.lambda = 2.5;
  p.mu_s = 1.3;
  p.mu_f = 0.7;
  p.alpha = 0.9;
  p.gamma = 1.1;
  p.c0 = 0.2;
  p.rho_f = 1.2;
  p.rho_s = 1.4;
  p.set_uniform_kappa(mesh, 0.5);
  return p;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

double dotv(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_asymmetry(const SparseMatrix& a) {
  double m = 0.0;
  for (int r = 0; r < a.rows; ++r)
    for (int k = a.row_offsets[r]; k < a.row_offsets[r + 1]; ++k) {
      const int c = a.col_indices[k];
      const double diff = std::fabs(a.values[k] - a.at(c, r));
      const double scale = std::max(1.0, std::fabs(a.values[k]));
      m = std::max(m, diff / scale);
    }
  return m;
}

double max_transpose_diff(const SparseMatrix& a, const SparseMatrix& b) {
  REQUIRE(a.rows == b.cols);
  REQUIRE(a.cols == b.rows);
  double m = 0.0;
  for (int r = 0; r < a.rows; ++r)
    for (int k = a.row_offsets[r]; k < a.row_offsets[r + 1]; ++k) {
      const int c = a.col_indices[k];
      m = std::max(m, std::fabs(a.values[k] - b.at(c, r)));
    }
  for (int r = 0; r < b.rows; ++r)
    for (int k = b.row_offsets[r]; k < b.row_offsets[r + 1]; ++k) {
      const int c = b.col_indices[k];
      m = std::max(m, std::fabs(b.values[k] - a.at(c, r)));
    }
  return m;
}

std::vector<double> random_vector(int n, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = dist(gen);
  return v;
}

// independent P1 gradient on a triangle: grad of the hat of vertex k
Vec2 p1_hat_gradient(Vec2 q0, Vec2 q1, Vec2 q2, int k) {
  const double twice_area = cross(q1 - q0, q2 - q0);
  const Vec2 e = k == 0 ? q2 - q1 : (k == 1 ? q0 - q2 : q1 - q0);
  return (1.0 / twice_area) * Vec2{-e.y, e.x};
}

// evaluates a vector FE field at a physical point of a given cell
Vec2 eval_vec(const Space& s, const std::vector<double>& coef, int cell,
              Vec2 x) {
  const int lc = s.cell_local[cell];
  const auto& cv = s.mesh->cells[cell];
  const AffineMap map = affine_map(s.mesh->vertices[cv[0]],
                                   s.mesh->vertices[cv[1]],
                                   s.mesh->vertices[cv[2]]);
  const BasisEval basis = eval_basis(s.kind, map.pull_back(x));
  Vec2 out{0.0, 0.0};
  for (int a = 0; a < basis.n; ++a) {
    const int node = s.cell_nodes[static_cast<size_t>(lc)][a];
    out.x += coef[static_cast<size_t>(s.dof(node, 0))] * basis.value[a];
    out.y += coef[static_cast<size_t>(s.dof(node, 1))] * basis.value[a];
  }
  return out;
}

// divergence of a vector FE field at a physical point of a given cell
double eval_div(const Space& s, const std::vector<double>& coef, int cell,
                Vec2 x) {
  const int lc = s.cell_local[cell];
  const auto& cv = s.mesh->cells[cell];
  const AffineMap map = affine_map(s.mesh->vertices[cv[0]],
                                   s.mesh->vertices[cv[1]],
                                   s.mesh->vertices[cv[2]]);
  const BasisEval basis =
      push_gradients(map, eval_basis(s.kind, map.pull_back(x)));
  double out = 0.0;
  for (int a = 0; a < basis.n; ++a) {
    const int node = s.cell_nodes[static_cast<size_t>(lc)][a];
    out += coef[static_cast<size_t>(s.dof(node, 0))] * basis.grad[a].x;
    out += coef[static_cast<size_t>(s.dof(node, 1))] * basis.grad[a].y;
  }
  return out;
}

// monolithic Stokes matrix [[A, B'], [-B, 0]] from the velocity block A and
// the canonical divergence block B (rows pressure, cols velocity)
SparseMatrix stokes_matrix(const SparseMatrix& a, const SparseMatrix& b) {
  const int nu = a.rows;
  const int np = b.rows;
  std::vector<Triplet> t;
  auto push_block = [&](const SparseMatrix& m, int r0, int c0, double s) {
    for (int r = 0; r < m.rows; ++r)
      for (int k = m.row_offsets[r]; k < m.row_offsets[r + 1]; ++k)
        t.push_back({r0 + r, c0 + m.col_indices[k], s * m.values[k]});
  };
  push_block(a, 0, 0, 1.0);
  push_block(b.transpose(), 0, nu, 1.0);
  push_block(b, nu, 0, -1.0);
  return SparseMatrix::from_triplets(nu + np, nu + np, std::move(t));
}

// L2 distance between the velocity trace and a constant datum on a marker
double trace_error(const Space& v, const std::vector<double>& coef, int marker,
                   Vec2 u_in) {
  const Mesh& mesh = *v.mesh;
  const QuadRule rule = quadrature(QuadDomain::edge, 6);
  double acc = 0.0;
  for (const BoundaryFacet& f : mesh.boundary) {
    if (f.marker != marker) continue;
    const Vec2 pa = mesh.vertices[f.v0], pb = mesh.vertices[f.v1];
    const double len = norm(pb - pa);
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const Vec2 x = pa + rule.points[q].x * (pb - pa);
      const Vec2 diff = eval_vec(v, coef, f.cell, x) - u_in;
      acc += rule.weights[q] * len * dot(diff, diff);
    }
  }
  return std::sqrt(acc);
}

}  // namespace

// ============================================================================
// Bilinear forms
// ============================================================================

TEST_CASE("a5p matches the scaled P1 mass matrix on the reference triangle") {
  Mesh m;
  m.vertices = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
  m.cells = {{0, 1, 2}};
  m.cell_tag = {subdomain::porous};
  const Space z = build_space(m, subdomain::porous, ElementKind::p1, 1);
  MaterialParams p = test_params(m);
  p.lambda = 2.0;

  const SparseMatrix a = assemble(FormId::a5p, z, z, p);
  // (1/lambda) * (area/12) * [[2,1,1],[1,2,1],[1,1,2]] with area 1/2
  const double diag = 2.0 / 48.0, off = 1.0 / 48.0;
  REQUIRE(a.rows == 3);
  REQUIRE(a.cols == 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(a.at(i, j) == doctest::Approx(i == j ? diag : off).epsilon(1e-12));
}

TEST_CASE("b1f annihilates an interpolated divergence-free field") {
  const Mesh mesh = standard_two_layer(2, 2);
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  const Space qf = build_space(mesh, subdomain::fluid, ElementKind::p1, 1);
  const MaterialParams p = test_params(mesh);

  const auto coef = interpolate(
      v, [](Vec2 x, double) { return Vec2{x.y, x.x}; }, 0.0);
  const SparseMatrix b = assemble(FormId::b1f, v, qf, p);
  REQUIRE(b.rows == qf.n_dofs());
  REQUIRE(b.cols == v.n_dofs());
  CHECK(max_abs(b.apply(coef)) <= 1e-12);
}

TEST_CASE("symmetric forms assemble symmetric matrices") {
  const Mesh mesh = standard_two_layer(2, 2);
  const MaterialParams p = test_params(mesh);
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  const Space w = build_space(mesh, subdomain::porous, ElementKind::p2, 2);
  const Space qp = build_space(mesh, subdomain::porous, ElementKind::p2, 1);
  const Space z = build_space(mesh, subdomain::porous, ElementKind::p1, 1);
  const Space vb = build_space(mesh, subdomain::fluid, ElementKind::p1_bubble, 2);

  CHECK(max_asymmetry(assemble(FormId::a1f, v, v, p)) <= 1e-12);
  CHECK(max_asymmetry(assemble(FormId::a1f, vb, vb, p)) <= 1e-12);
  CHECK(max_asymmetry(assemble(FormId::a2f, v, v, p)) <= 1e-12);
  CHECK(max_asymmetry(assemble(FormId::a1p, w, w, p)) <= 1e-12);
  CHECK(max_asymmetry(assemble(FormId::a2sig, w, w, p)) <= 1e-12);
  CHECK(max_asymmetry(assemble(FormId::a3p, qp, qp, p)) <= 1e-12);
  CHECK(max_asymmetry(assemble(FormId::a4p, qp, qp, p)) <= 1e-12);
  CHECK(max_asymmetry(assemble(FormId::a5p, z, z, p)) <= 1e-12);
  CHECK(max_asymmetry(assemble(FormId::b2p, z, z, p)) <= 1e-12);
}

TEST_CASE("semidefinite forms have nonnegative Rayleigh quotients") {
  const Mesh mesh = standard_two_layer(2, 2);
  const MaterialParams p = test_params(mesh);
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  const Space w = build_space(mesh, subdomain::porous, ElementKind::p2, 2);
  const Space qp = build_space(mesh, subdomain::porous, ElementKind::p2, 1);
  const Space z = build_space(mesh, subdomain::porous, ElementKind::p1, 1);

  const std::vector<SparseMatrix> mats = {
      assemble(FormId::a2f, v, v, p),  assemble(FormId::a1p, w, w, p),
      assemble(FormId::a4p, qp, qp, p), assemble(FormId::a2sig, w, w, p),
      assemble(FormId::a5p, z, z, p),  assemble(FormId::a3p, qp, qp, p),
  };
  for (size_t mi = 0; mi < mats.size(); ++mi) {
    const SparseMatrix& a = mats[mi];
    for (int trial = 0; trial < 50; ++trial) {
      const auto x = random_vector(a.cols, 1000 * static_cast<unsigned>(mi) +
                                               static_cast<unsigned>(trial));
      const double quot = dotv(x, a.apply(x));
      CHECK(quot >= -1e-10 * dotv(x, x));
    }
  }
}

TEST_CASE("mixed forms pair adjointly when trial and test swap") {
  const Mesh mesh = standard_two_layer(2, 2);
  const MaterialParams p = test_params(mesh);
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  const Space qf = build_space(mesh, subdomain::fluid, ElementKind::p1, 1);
  const Space w = build_space(mesh, subdomain::porous, ElementKind::p2, 2);
  const Space qp = build_space(mesh, subdomain::porous, ElementKind::p2, 1);
  const Space z = build_space(mesh, subdomain::porous, ElementKind::p1, 1);

  CHECK(max_transpose_diff(assemble(FormId::b1f, v, qf, p),
                           assemble(FormId::b1f, qf, v, p)) <= 1e-12);
  CHECK(max_transpose_diff(assemble(FormId::b1p, w, z, p),
                           assemble(FormId::b1p, z, w, p)) <= 1e-12);
  CHECK(max_transpose_diff(assemble(FormId::b2sig, v, qp, p),
                           assemble(FormId::b2sig, qp, v, p)) <= 1e-12);
  CHECK(max_transpose_diff(assemble(FormId::b3sig, v, w, p),
                           assemble(FormId::b3sig, w, v, p)) <= 1e-12);
  CHECK(max_transpose_diff(assemble(FormId::b4sig, w, qp, p),
                           assemble(FormId::b4sig, qp, w, p)) <= 1e-12);
  CHECK(max_transpose_diff(assemble(FormId::b2p, z, qp, p),
                           assemble(FormId::b2p, qp, z, p)) <= 1e-12);
}

TEST_CASE("every catalog entry dispatches with correctly shaped output") {
  const Mesh mesh = standard_two_layer(1, 1);
  const MaterialParams p = test_params(mesh);
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  const Space qf = build_space(mesh, subdomain::fluid, ElementKind::p1, 1);
  const Space w = build_space(mesh, subdomain::porous, ElementKind::p2, 2);
  const Space qp = build_space(mesh, subdomain::porous, ElementKind::p2, 1);
  const Space z = build_space(mesh, subdomain::porous, ElementKind::p1, 1);

  struct Entry {
    FormId id;
    const Space* trial;
    const Space* test;
  };
  const std::vector<Entry> catalog = {
      {FormId::a1f, &v, &v},    {FormId::a2f, &v, &v},
      {FormId::b1f, &v, &qf},   {FormId::b1p, &w, &z},
      {FormId::b2sig, &v, &qp}, {FormId::b3sig, &v, &w},
      {FormId::b4sig, &w, &qp}, {FormId::a1p, &w, &w},
      {FormId::a2sig, &w, &w},  {FormId::a3p, &qp, &qp},
      {FormId::a4p, &qp, &qp},  {FormId::b2p, &z, &qp},
      {FormId::a5p, &z, &z},
  };
  // the convective form plus the 13 above cover the whole enumeration
  CHECK(catalog.size() + 1 == 14);
  for (const Entry& e : catalog) {
    const SparseMatrix a = assemble(e.id, *e.trial, *e.test, p);
    CHECK(a.rows == e.test->n_dofs());
    CHECK(a.cols == e.trial->n_dofs());
  }
  CHECK_THROWS_AS(static_cast<void>(assemble(FormId::cf, v, v, p)), FormError);
}

TEST_CASE("interface forms demand interface facets, a2f does not") {
  Mesh mesh = standard_two_layer(1, 1);
  mesh.interface.clear();
  const MaterialParams p = test_params(mesh);
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  const Space w = build_space(mesh, subdomain::porous, ElementKind::p2, 2);
  const Space qp = build_space(mesh, subdomain::porous, ElementKind::p2, 1);

  CHECK_THROWS_AS(static_cast<void>(assemble(FormId::b2sig, v, qp, p)),
                  FormError);
  CHECK_THROWS_AS(static_cast<void>(assemble(FormId::b3sig, v, w, p)),
                  FormError);
  CHECK_THROWS_AS(static_cast<void>(assemble(FormId::b4sig, w, qp, p)),
                  FormError);
  CHECK_THROWS_AS(static_cast<void>(assemble(FormId::a2sig, w, w, p)),
                  FormError);
  const SparseMatrix a = assemble(FormId::a2f, v, v, p);
  CHECK(a.rows == v.n_dofs());
}

TEST_CASE("interface kernels integrate the expected constants") {
  const Mesh mesh = standard_two_layer(2, 2);
  const MaterialParams p = test_params(mesh);
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  const Space w = build_space(mesh, subdomain::porous, ElementKind::p2, 2);
  const Space qp = build_space(mesh, subdomain::porous, ElementKind::p2, 1);
  const double sigma_len = 2.0;  // interface x in (-1, 1)
  const double bjs = p.gamma * p.mu_f / std::sqrt(0.5);

  const auto ones = [](Vec2, double) { return 1.0; };
  const auto down = [](Vec2, double) { return Vec2{0.0, -1.0}; };
  const auto ex = [](Vec2, double) { return Vec2{1.0, 0.0}; };
  const auto q1 = interpolate(qp, ones, 0.0);
  const auto v_down = interpolate(v, down, 0.0);
  const auto v_ex = interpolate(v, ex, 0.0);
  const auto w_down = interpolate(w, down, 0.0);
  const auto w_ex = interpolate(w, ex, 0.0);

  // <q, v.n> with n = (0,-1): constants give |Sigma|
  const SparseMatrix b2 = assemble(FormId::b2sig, v, qp, p);
  CHECK(dotv(q1, b2.apply(v_down)) == doctest::Approx(sigma_len).epsilon(1e-12));
  // -<q, w.n>
  const SparseMatrix b4 = assemble(FormId::b4sig, w, qp, p);
  CHECK(dotv(q1, b4.apply(w_down)) ==
        doctest::Approx(-sigma_len).epsilon(1e-12));
  // -bjs <v.t, w.t> with t = (-1,0)
  const SparseMatrix b3 = assemble(FormId::b3sig, v, w, p);
  CHECK(dotv(w_ex, b3.apply(v_ex)) ==
        doctest::Approx(-bjs * sigma_len).epsilon(1e-12));
  // +bjs <d.t, w.t>
  const SparseMatrix a2s = assemble(FormId::a2sig, w, w, p);
  CHECK(dotv(w_ex, a2s.apply(w_ex)) ==
        doctest::Approx(bjs * sigma_len).epsilon(1e-12));
  // constant velocity has no strain energy, so a2f reduces to its BJS part
  const SparseMatrix a2f = assemble(FormId::a2f, v, v, p);
  CHECK(dotv(v_ex, a2f.apply(v_ex)) ==
        doctest::Approx(bjs * sigma_len).epsilon(1e-12));
}

TEST_CASE("volume scalar forms scale with cell-wise coefficients") {
  const Mesh mesh = standard_two_layer(1, 1);
  MaterialParams p = test_params(mesh);
  const Space qp = build_space(mesh, subdomain::porous, ElementKind::p2, 1);
  const auto ones_coef =
      interpolate(qp, [](Vec2, double) { return 1.0; }, 0.0);
  const double porous_area = 4.0;  // (-1,1) x (-2,0)

  SUBCASE("a3p with uniform lambda") {
    const SparseMatrix a = assemble(FormId::a3p, qp, qp, p);
    const double expected =
        (p.c0 + p.alpha * p.alpha / p.lambda) * porous_area;
    CHECK(dotv(ones_coef, a.apply(ones_coef)) ==
          doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("a3p with heterogeneous lambda") {
    p.lambda_cells.assign(static_cast<size_t>(mesh.num_cells()), 1.0);
    double expected = 0.0;
    bool first = true;
    for (int c = 0; c < mesh.num_cells(); ++c) {
      if (mesh.cell_tag[static_cast<size_t>(c)] != subdomain::porous) continue;
      const double lam = first ? 2.0 : 4.0;
      first = false;
      p.lambda_cells[static_cast<size_t>(c)] = lam;
      expected += (p.c0 + p.alpha * p.alpha / lam) * mesh.cell_area(c);
    }
    const SparseMatrix a = assemble(FormId::a3p, qp, qp, p);
    CHECK(dotv(ones_coef, a.apply(ones_coef)) ==
          doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("a4p integrates the mobility against a linear pressure") {
    const auto lin = interpolate(qp, [](Vec2 x, double) { return x.y; }, 0.0);
    const SparseMatrix a = assemble(FormId::a4p, qp, qp, p);
    // grad = e_y so the energy is (kappa/mu_f) |P|
    CHECK(dotv(lin, a.apply(lin)) ==
          doctest::Approx(0.5 / p.mu_f * porous_area).epsilon(1e-12));
  }
}

// ============================================================================
// Axisymmetric mode
// ============================================================================

TEST_CASE("axisym unit-weight hook reproduces cartesian assembly") {
  // nonnegative radii so axisym mode accepts the mesh
  const Mesh mesh = generate_two_layer_rect({0.0, 2.0}, {0.0, 2.0}, {-2.0, 0.0},
                                            2, 2, {});
  const MaterialParams p = test_params(mesh);
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  const Space qf = build_space(mesh, subdomain::fluid, ElementKind::p1, 1);
  const Space w = build_space(mesh, subdomain::porous, ElementKind::p2, 2);
  const Space qp = build_space(mesh, subdomain::porous, ElementKind::p2, 1);
  const Space z = build_space(mesh, subdomain::porous, ElementKind::p1, 1);

  struct Entry {
    FormId id;
    const Space* trial;
    const Space* test;
  };
  const std::vector<Entry> catalog = {
      {FormId::a1f, &v, &v},    {FormId::a2f, &v, &v},
      {FormId::b1f, &v, &qf},   {FormId::b1p, &w, &z},
      {FormId::b2sig, &v, &qp}, {FormId::b3sig, &v, &w},
      {FormId::b4sig, &w, &qp}, {FormId::a1p, &w, &w},
      {FormId::a2sig, &w, &w},  {FormId::a3p, &qp, &qp},
      {FormId::a4p, &qp, &qp},  {FormId::b2p, &z, &qp},
      {FormId::a5p, &z, &z},
  };
  for (const Entry& e : catalog) {
    const SparseMatrix cart = assemble(e.id, *e.trial, *e.test, p);
    const SparseMatrix unit =
        detail::assemble_axisym_unit_weight(e.id, *e.trial, *e.test, p);
    double m = 0.0;
    for (int r = 0; r < cart.rows; ++r)
      for (int k = cart.row_offsets[r]; k < cart.row_offsets[r + 1]; ++k)
        m = std::max(m, std::fabs(cart.values[k] -
                                  unit.at(r, cart.col_indices[k])));
    CHECK(m <= 1e-12);
  }
}

TEST_CASE("axisym divergence forms pick up the radial term") {
  // strip away from the axis keeps every integrand smooth
  const Mesh mesh = generate_two_layer_rect({1.0, 2.0}, {0.0, 1.0}, {-1.0, 0.0},
                                            4, 4, {});
  const MaterialParams p = test_params(mesh);
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  const Space qf = build_space(mesh, subdomain::fluid, ElementKind::p1, 1);
  const Space w = build_space(mesh, subdomain::porous, ElementKind::p2, 2);
  const Space z = build_space(mesh, subdomain::porous, ElementKind::p1, 1);
  const auto er = [](Vec2, double) { return Vec2{1.0, 0.0}; };
  const auto one = [](Vec2, double) { return 1.0; };

  // div_a(e_r) = 1/r, so -(q, div_a v) r dr dz = -meridional area
  const SparseMatrix b1f = assemble(FormId::b1f, v, qf, p, GeomMode::axisym);
  CHECK(dotv(interpolate(qf, one, 0.0), b1f.apply(interpolate(v, er, 0.0))) ==
        doctest::Approx(-1.0).epsilon(1e-12));
  const SparseMatrix b1p = assemble(FormId::b1p, w, z, p, GeomMode::axisym);
  CHECK(dotv(interpolate(z, one, 0.0), b1p.apply(interpolate(w, er, 0.0))) ==
        doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("axisym stiffness forms pick up the hoop term") {
  const Mesh mesh = generate_two_layer_rect({1.0, 2.0}, {0.0, 1.0}, {-1.0, 0.0},
                                            8, 8, {});
  const MaterialParams p = test_params(mesh);
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  const Space w = build_space(mesh, subdomain::porous, ElementKind::p2, 2);
  const auto er = [](Vec2, double) { return Vec2{1.0, 0.0}; };

  // eps(e_r) = 0 in the meridional plane, so the whole energy is the hoop
  // strain: 2 mu int (1/r) dr dz = 2 mu dz ln 2; the 1/r integrand is not a
  // polynomial, hence the loose tolerance
  const double expected_f = 2.0 * p.mu_f * std::log(2.0);
  const SparseMatrix a2f = assemble(FormId::a2f, v, v, p, GeomMode::axisym);
  const auto uf = interpolate(v, er, 0.0);
  // subtract the BJS part (constant e_r is tangential on the interface)
  const double bjs = p.gamma * p.mu_f / std::sqrt(0.5);
  CHECK(dotv(uf, a2f.apply(uf)) - bjs * 1.0 * 1.5 ==
        doctest::Approx(expected_f).epsilon(1e-5));

  const double expected_s = 2.0 * p.mu_s * std::log(2.0);
  const SparseMatrix a1p = assemble(FormId::a1p, w, w, p, GeomMode::axisym);
  const auto us = interpolate(w, er, 0.0);
  CHECK(dotv(us, a1p.apply(us)) == doctest::Approx(expected_s).epsilon(1e-5));
}

TEST_CASE("axisym assembly requires nonnegative radii") {
  const Mesh mesh = standard_two_layer(1, 1);  // x starts at -1
  const MaterialParams p = test_params(mesh);
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  CHECK_THROWS_AS(
      static_cast<void>(assemble(FormId::a1f, v, v, p, GeomMode::axisym)),
      FormError);
}

// ============================================================================
// Functionals
// ============================================================================

TEST_CASE("functionals vanish without loads") {
  const Mesh mesh = standard_two_layer(1, 1);
  const MaterialParams p = test_params(mesh);  // g stays (0,0)
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  const Space w = build_space(mesh, subdomain::porous, ElementKind::p2, 2);
  const Space qp = build_space(mesh, subdomain::porous, ElementKind::p2, 1);

  CHECK(max_abs(assemble_functional(FunctionalId::ff, v, p, 0.3, {})) == 0.0);
  CHECK(max_abs(assemble_functional(FunctionalId::fp, w, p, 0.3, {})) == 0.0);
  CHECK(max_abs(assemble_functional(FunctionalId::g, qp, p, 0.3, {})) == 0.0);
}

TEST_CASE("porous body load integrates by partition of unity") {
  const Mesh mesh = standard_two_layer(2, 2);
  MaterialParams p = test_params(mesh);
  p.rho_s = 1.2;
  const Space w = build_space(mesh, subdomain::porous, ElementKind::p2, 2);
  const double porous_area = 4.0;

  FunctionalExtras extras;
  extras.porous_body_accel = [](Vec2, double) { return Vec2{1.0, 0.0}; };
  const auto fp = assemble_functional(FunctionalId::fp, w, p, 0.0, extras);
  double sum_x = 0.0, sum_y = 0.0;
  for (int node = 0; node < w.n_nodes; ++node) {
    sum_x += fp[static_cast<size_t>(w.dof(node, 0))];
    sum_y += fp[static_cast<size_t>(w.dof(node, 1))];
  }
  CHECK(sum_x == doctest::Approx(1.2 * porous_area).epsilon(1e-12));
  CHECK(sum_y == doctest::Approx(0.0).epsilon(1e-12));

  // plain sources enter unscaled
  FunctionalExtras src;
  src.porous_source = [](Vec2, double) { return Vec2{0.0, 2.0}; };
  const auto fp2 = assemble_functional(FunctionalId::fp, w, p, 0.0, src);
  double sum2 = 0.0;
  for (int node = 0; node < w.n_nodes; ++node)
    sum2 += fp2[static_cast<size_t>(w.dof(node, 1))];
  CHECK(sum2 == doctest::Approx(2.0 * porous_area).epsilon(1e-12));
}

TEST_CASE("gravity mass functional matches a hand-computed P1 oracle") {
  const Mesh mesh = standard_two_layer(1, 1);
  MaterialParams p = test_params(mesh);
  p.g = Vec2{0.0, -1.0};
  const Space qp = build_space(mesh, subdomain::porous, ElementKind::p1, 1);
  const double mob = 0.5 / p.mu_f;

  std::vector<double> oracle(static_cast<size_t>(qp.n_dofs()), 0.0);
  for (size_t lc = 0; lc < qp.cells.size(); ++lc) {
    const int gc = qp.cells[lc];
    const auto& cv = mesh.cells[gc];
    const Vec2 q0 = mesh.vertices[cv[0]], q1 = mesh.vertices[cv[1]],
               q2 = mesh.vertices[cv[2]];
    const double area = 0.5 * cross(q1 - q0, q2 - q0);
    for (int k = 0; k < 3; ++k) {
      const int node = qp.cell_nodes[lc][k];
      oracle[static_cast<size_t>(node)] +=
          p.rho_f * mob * dot(p.g, p1_hat_gradient(q0, q1, q2, k)) * area;
    }
  }
  // the interface term subtracts rho_f (kappa/mu_f) (g.n) int hat ds with
  // n = (0,-1); a P1 hat integrates to half the edge length per endpoint
  for (const InterfaceFacet& f : mesh.interface) {
    const double len = norm(mesh.vertices[f.v1] - mesh.vertices[f.v0]);
    const double gn = dot(p.g, Vec2{0.0, -1.0});
    for (int vid : {f.v0, f.v1}) {
      const int node = qp.vertex_node[static_cast<size_t>(vid)];
      oracle[static_cast<size_t>(node)] -= p.rho_f * mob * gn * 0.5 * len;
    }
  }

  const auto g = assemble_functional(FunctionalId::g, qp, p, 0.0, {});
  REQUIRE(g.size() == oracle.size());
  for (size_t i = 0; i < g.size(); ++i)
    CHECK(g[i] == doctest::Approx(oracle[i]).epsilon(1e-12));
}

TEST_CASE("interface corrections enter with the documented signs") {
  const Mesh mesh = standard_two_layer(2, 2);
  const MaterialParams p = test_params(mesh);
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  const Space w = build_space(mesh, subdomain::porous, ElementKind::p2, 2);
  const Space qp = build_space(mesh, subdomain::porous, ElementKind::p2, 1);
  const double sigma_len = 2.0;

  SUBCASE("ff pairs m3 with v.n and m4 with v.t") {
    FunctionalExtras extras;
    extras.m3 = [](Vec2, double, Vec2, Vec2) { return 1.0; };
    extras.m4 = [](Vec2, double, Vec2, Vec2) { return 0.0; };
    const auto ff = assemble_functional(FunctionalId::ff, v, p, 0.0, extras);
    const auto v_down =
        interpolate(v, [](Vec2, double) { return Vec2{0.0, -1.0}; }, 0.0);
    const auto v_left =
        interpolate(v, [](Vec2, double) { return Vec2{-1.0, 0.0}; }, 0.0);
    // v = (0,-1): v.n = 1, v.t = 0
    CHECK(dotv(ff, v_down) == doctest::Approx(sigma_len).epsilon(1e-12));
    extras.m3 = [](Vec2, double, Vec2, Vec2) { return 0.0; };
    extras.m4 = [](Vec2, double, Vec2, Vec2) { return 1.0; };
    const auto ff2 = assemble_functional(FunctionalId::ff, v, p, 0.0, extras);
    // v = (-1,0): v.t = 1 with t = (-1,0)
    CHECK(dotv(ff2, v_left) == doctest::Approx(sigma_len).epsilon(1e-12));
  }

  SUBCASE("fp pairs m2 directly and subtracts the m3/m4 resolutions") {
    FunctionalExtras extras;
    extras.m2 = [](Vec2, double, Vec2, Vec2) { return Vec2{3.0, 5.0}; };
    extras.m3 = [](Vec2, double, Vec2, Vec2) { return 7.0; };
    extras.m4 = [](Vec2, double, Vec2, Vec2) { return 11.0; };
    const auto fp = assemble_functional(FunctionalId::fp, w, p, 0.0, extras);
    const auto w_up =
        interpolate(w, [](Vec2, double) { return Vec2{0.0, 1.0}; }, 0.0);
    const auto w_ex =
        interpolate(w, [](Vec2, double) { return Vec2{1.0, 0.0}; }, 0.0);
    // w = (0,1): m2.w = 5, m3 (w.n) = -7, m4 (w.t) = 0
    CHECK(dotv(fp, w_up) ==
          doctest::Approx((5.0 + 7.0) * sigma_len).epsilon(1e-12));
    // w = (1,0): m2.w = 3, m4 (w.t) = -11
    CHECK(dotv(fp, w_ex) ==
          doctest::Approx((3.0 + 11.0) * sigma_len).epsilon(1e-12));
  }

  SUBCASE("g subtracts m1") {
    FunctionalExtras extras;
    extras.m1 = [](Vec2, double, Vec2, Vec2) { return 2.0; };
    const auto g = assemble_functional(FunctionalId::g, qp, p, 0.0, extras);
    const auto q1 = interpolate(qp, [](Vec2, double) { return 1.0; }, 0.0);
    CHECK(dotv(g, q1) == doctest::Approx(-2.0 * sigma_len).epsilon(1e-12));
  }
}

TEST_CASE("manufactured corrections must come complete") {
  const Mesh mesh = standard_two_layer(1, 1);
  const MaterialParams p = test_params(mesh);
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  const Space w = build_space(mesh, subdomain::porous, ElementKind::p2, 2);

  FunctionalExtras only_m3;
  only_m3.m3 = [](Vec2, double, Vec2, Vec2) { return 1.0; };
  CHECK_THROWS_AS(static_cast<void>(assemble_functional(FunctionalId::ff, v, p,
                                                        0.0, only_m3)),
                  FormError);
  FunctionalExtras partial;
  partial.m2 = [](Vec2, double, Vec2, Vec2) { return Vec2{1.0, 0.0}; };
  partial.m3 = [](Vec2, double, Vec2, Vec2) { return 1.0; };
  CHECK_THROWS_AS(static_cast<void>(assemble_functional(FunctionalId::fp, w, p,
                                                        0.0, partial)),
                  FormError);
}

TEST_CASE("natural boundary data lands on the marked facets") {
  const Mesh mesh = standard_two_layer(2, 2);
  const MaterialParams p = test_params(mesh);
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  const Space w = build_space(mesh, subdomain::porous, ElementKind::p2, 2);
  const Space qp = build_space(mesh, subdomain::porous, ElementKind::p2, 1);

  SUBCASE("fluid traction on the side walls") {
    FunctionalExtras extras;
    extras.fluid_traction[marker::fluid_stress] = [](Vec2, double, Vec2) {
      return Vec2{1.0, 0.0};
    };
    const auto ff = assemble_functional(FunctionalId::ff, v, p, 0.0, extras);
    const auto v_ex =
        interpolate(v, [](Vec2, double) { return Vec2{1.0, 0.0}; }, 0.0);
    // both fluid side walls span y in (0,2): total length 4
    CHECK(dotv(ff, v_ex) == doctest::Approx(4.0).epsilon(1e-12));
  }
  SUBCASE("porous traction on the clamp walls") {
    FunctionalExtras extras;
    extras.porous_traction[marker::porous_clamp] = [](Vec2, double, Vec2) {
      return Vec2{0.0, 1.0};
    };
    const auto fp = assemble_functional(FunctionalId::fp, w, p, 0.0, extras);
    const auto w_up =
        interpolate(w, [](Vec2, double) { return Vec2{0.0, 1.0}; }, 0.0);
    CHECK(dotv(fp, w_up) == doctest::Approx(4.0).epsilon(1e-12));
  }
  SUBCASE("porous flux on the bottom") {
    FunctionalExtras extras;
    extras.porous_flux[marker::porous_pressure] = [](Vec2, double, Vec2) {
      return 3.0;
    };
    const auto g = assemble_functional(FunctionalId::g, qp, p, 0.0, extras);
    const auto q1 = interpolate(qp, [](Vec2, double) { return 1.0; }, 0.0);
    CHECK(dotv(g, q1) == doctest::Approx(3.0 * 2.0).epsilon(1e-12));
  }
  SUBCASE("marker on the wrong subdomain is rejected") {
    FunctionalExtras extras;
    extras.fluid_traction[marker::porous_pressure] = [](Vec2, double, Vec2) {
      return Vec2{1.0, 0.0};
    };
    CHECK_THROWS_AS(static_cast<void>(assemble_functional(FunctionalId::ff, v,
                                                          p, 0.0, extras)),
                    FormError);
    FunctionalExtras flux;
    flux.porous_flux[marker::fluid_velocity] = [](Vec2, double, Vec2) {
      return 1.0;
    };
    CHECK_THROWS_AS(static_cast<void>(assemble_functional(FunctionalId::g, qp,
                                                          p, 0.0, flux)),
                    FormError);
  }
  SUBCASE("unknown marker is rejected") {
    FunctionalExtras extras;
    extras.fluid_traction[42] = [](Vec2, double, Vec2) {
      return Vec2{1.0, 0.0};
    };
    CHECK_THROWS_AS(static_cast<void>(assemble_functional(FunctionalId::ff, v,
                                                          p, 0.0, extras)),
                    FormError);
  }
}

// ============================================================================
// Parameter validation
// ============================================================================

TEST_CASE("material validation rejects bad parameters") {
  const Mesh mesh = standard_two_layer(1, 1);
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  const Space qp = build_space(mesh, subdomain::porous, ElementKind::p2, 1);

  MaterialParams p = test_params(mesh);
  p.alpha = 0.0;
  CHECK_THROWS_AS(static_cast<void>(assemble(FormId::a1f, v, v, p)), FormError);
  p = test_params(mesh);
  p.alpha = 1.5;
  CHECK_THROWS_AS(static_cast<void>(assemble(FormId::a1f, v, v, p)), FormError);
  p = test_params(mesh);
  p.mu_f = -1.0;
  CHECK_THROWS_AS(static_cast<void>(assemble(FormId::a1f, v, v, p)), FormError);

  p = test_params(mesh);
  p.kappa.clear();
  CHECK_THROWS_AS(static_cast<void>(assemble(FormId::a4p, qp, qp, p)),
                  FormError);
  p = test_params(mesh);
  p.kappa.resize(1);  // too short to cover the porous cells
  CHECK_THROWS_AS(static_cast<void>(assemble(FormId::a4p, qp, qp, p)),
                  FormError);
  p = test_params(mesh);
  for (int c = 0; c < mesh.num_cells(); ++c)
    if (mesh.cell_tag[static_cast<size_t>(c)] == subdomain::porous) {
      p.kappa[static_cast<size_t>(c)] = -0.5;
      break;
    }
  CHECK_THROWS_AS(static_cast<void>(assemble(FormId::a4p, qp, qp, p)),
                  FormError);
}

TEST_CASE("spaces must match the form arguments") {
  const Mesh mesh = standard_two_layer(1, 1);
  const MaterialParams p = test_params(mesh);
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  const Space w = build_space(mesh, subdomain::porous, ElementKind::p2, 2);
  const Space qf = build_space(mesh, subdomain::fluid, ElementKind::p1, 1);
  const Space qp = build_space(mesh, subdomain::porous, ElementKind::p2, 1);

  // wrong subdomain
  CHECK_THROWS_AS(static_cast<void>(assemble(FormId::a1f, w, w, p)), FormError);
  // wrong component count
  CHECK_THROWS_AS(static_cast<void>(assemble(FormId::a1f, qf, qf, p)),
                  FormError);
  // scalar/scalar passed to an interface pairing that needs a vector slot
  CHECK_THROWS_AS(static_cast<void>(assemble(FormId::b2sig, qp, qp, p)),
                  FormError);
  // fluid scalar where a porous scalar belongs
  CHECK_THROWS_AS(static_cast<void>(assemble(FormId::a3p, qf, qf, p)),
                  FormError);
}

// ============================================================================
// Nitsche velocity inlet
// ============================================================================

TEST_CASE("nitsche data vanishes with zero inlet and respects marker energy") {
  const Mesh mesh = generate_two_layer_rect({0.0, 1.0}, {0.0, 1.0},
                                            {-1.0, 0.0}, 2, 2, {});
  const MaterialParams p = test_params(mesh);
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);

  const auto zero_fn = [](Vec2, double) { return Vec2{0.0, 0.0}; };
  const auto [n, rhs] = assemble_nitsche_velocity(
      v, marker::fluid_velocity, zero_fn, 10.0, p, 0.0);
  CHECK(max_abs(rhs) == 0.0);
  CHECK(max_asymmetry(n) <= 1e-12);

  // energy vanishes on fields whose trace vanishes at the marker
  std::vector<bool> on_marker(static_cast<size_t>(v.n_dofs()), false);
  for (const BoundaryFacet& f : mesh.boundary) {
    if (f.marker != marker::fluid_velocity) continue;
    for (int node : {v.vertex_node[static_cast<size_t>(f.v0)],
                     v.vertex_node[static_cast<size_t>(f.v1)],
                     v.edge_node.at(packed_edge(f.v0, f.v1))}) {
      on_marker[static_cast<size_t>(v.dof(node, 0))] = true;
      on_marker[static_cast<size_t>(v.dof(node, 1))] = true;
    }
  }
  auto x = random_vector(v.n_dofs(), 77);
  for (size_t i = 0; i < x.size(); ++i)
    if (on_marker[i]) x[i] = 0.0;
  CHECK(std::fabs(dotv(x, n.apply(x))) <= 1e-12);
}

TEST_CASE("nitsche trace error decreases with the penalty") {
  const Mesh mesh = generate_two_layer_rect({0.0, 1.0}, {0.0, 1.0},
                                            {-1.0, 0.0}, 2, 2, {});
  const MaterialParams p = test_params(mesh);
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  const Space qf = build_space(mesh, subdomain::fluid, ElementKind::p1, 1);
  const SparseMatrix a2f = assemble(FormId::a2f, v, v, p);
  const SparseMatrix b1f = assemble(FormId::b1f, v, qf, p);
  const Vec2 u_in{1.0, 0.0};
  const auto u_in_fn = [&](Vec2, double) { return u_in; };

  std::vector<double> errors;
  for (double pen : {1.0, 10.0, 100.0}) {
    const auto [n, nrhs] = assemble_nitsche_velocity(
        v, marker::fluid_velocity, u_in_fn, pen, p, 0.0);
    const SparseMatrix k = stokes_matrix(add(a2f, n), b1f);
    std::vector<double> rhs(static_cast<size_t>(k.rows), 0.0);
    std::copy(nrhs.begin(), nrhs.end(), rhs.begin());
    const auto sol = solve_direct(k, rhs);
    const std::vector<double> u(sol.begin(), sol.begin() + v.n_dofs());
    errors.push_back(trace_error(v, u, marker::fluid_velocity, u_in));
  }
  CHECK(errors[1] < errors[0]);
  CHECK(errors[2] < errors[1]);
}

TEST_CASE("nitsche inlet tracks the strong imposition") {
  // single top facet so the comparison runs on one boundary cell
  const Mesh mesh = generate_two_layer_rect({0.0, 1.0}, {0.0, 1.0},
                                            {-1.0, 0.0}, 1, 1, {});
  MaterialParams p = test_params(mesh);
  // physical fluid viscosity; the literal penalty of 10 must dominate the
  // viscous consistency terms for the weak imposition to be accurate
  p.mu_f = 0.1;
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  const Space qf = build_space(mesh, subdomain::fluid, ElementKind::p1, 1);
  const SparseMatrix a2f = assemble(FormId::a2f, v, v, p);
  const SparseMatrix b1f = assemble(FormId::b1f, v, qf, p);
  const Vec2 u_in{1.0, 0.0};  // tangent to the top facet
  const auto u_in_fn = [&](Vec2, double) { return u_in; };
  const int n_total = v.n_dofs() + qf.n_dofs();

  // strong run: eliminate the marker dofs
  SparseMatrix k_strong = stokes_matrix(a2f, b1f);
  const DofSet bc = dirichlet_dofs(v, marker::fluid_velocity, {true, true},
                                   u_in_fn, 0.0);
  const DirichletOp op = eliminate_dirichlet(k_strong, bc.dofs);
  std::vector<double> rhs_strong(static_cast<size_t>(n_total), 0.0);
  op.correct_rhs(rhs_strong, bc.values);
  const auto sol_strong = solve_direct(k_strong, rhs_strong);

  // weak run: Nitsche terms at penalty 10
  const auto [n, nrhs] = assemble_nitsche_velocity(
      v, marker::fluid_velocity, u_in_fn, 10.0, p, 0.0);
  const SparseMatrix k_weak = stokes_matrix(add(a2f, n), b1f);
  std::vector<double> rhs_weak(static_cast<size_t>(n_total), 0.0);
  std::copy(nrhs.begin(), nrhs.end(), rhs_weak.begin());
  const auto sol_weak = solve_direct(k_weak, rhs_weak);

  double num = 0.0, den = 0.0;
  for (int i = 0; i < v.n_dofs(); ++i) {
    const double d = sol_strong[static_cast<size_t>(i)] -
                     sol_weak[static_cast<size_t>(i)];
    num += d * d;
    den += sol_strong[static_cast<size_t>(i)] *
           sol_strong[static_cast<size_t>(i)];
  }
  CHECK(std::sqrt(num / den) <= 0.10);
}

TEST_CASE("nitsche rejects porous markers and bad penalties") {
  const Mesh mesh = generate_two_layer_rect({0.0, 1.0}, {0.0, 1.0},
                                            {-1.0, 0.0}, 1, 1, {});
  const MaterialParams p = test_params(mesh);
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  const auto fn = [](Vec2, double) { return Vec2{1.0, 0.0}; };

  CHECK_THROWS_AS(static_cast<void>(assemble_nitsche_velocity(
                      v, marker::porous_pressure, fn, 1.0, p, 0.0)),
                  FormError);
  CHECK_THROWS_AS(static_cast<void>(assemble_nitsche_velocity(
                      v, marker::fluid_velocity, fn, 0.0, p, 0.0)),
                  FormError);
  CHECK_THROWS_AS(static_cast<void>(assemble_nitsche_velocity(
                      v, 42, fn, 1.0, p, 0.0)),
                  FormError);
}

// ============================================================================
// Convection
// ============================================================================

TEST_CASE("convective matrices vanish at zero linearization") {
  const Mesh mesh = standard_two_layer(1, 1);
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  const std::vector<double> zero(static_cast<size_t>(v.n_dofs()), 0.0);
  const ConvectivePair pair = assemble_convective(zero, v, 1.2);
  CHECK(max_abs(pair.c.values) == 0.0);
  CHECK(max_abs(pair.jacobian_extra.values) == 0.0);
}

TEST_CASE("convective action matches directional derivative oracles") {
  const Mesh mesh = standard_two_layer(2, 2);
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  const double rho_f = 1.2;
  const double fluid_area = 4.0;  // (-1,1) x (0,2)

  const auto u_lin =
      interpolate(v, [](Vec2, double) { return Vec2{1.0, 0.0}; }, 0.0);
  const auto w =
      interpolate(v, [](Vec2 x, double) { return Vec2{x.x, 2.0 * x.x}; }, 0.0);
  const ConvectivePair pair = assemble_convective(u_lin, v, rho_f);
  const auto r = pair.c.apply(w);

  // (u_lin . grad) w = d/dx (x, 2x) = (1, 2); pair with smooth test fields
  const auto t1 = interpolate(v, [](Vec2, double) { return Vec2{1.0, 0.0}; },
                              0.0);
  const auto t2 = interpolate(v, [](Vec2, double) { return Vec2{0.0, 1.0}; },
                              0.0);
  const auto t3 = interpolate(v, [](Vec2 x, double) { return Vec2{x.x, x.y}; },
                              0.0);
  CHECK(dotv(r, t1) == doctest::Approx(rho_f * fluid_area).epsilon(1e-12));
  CHECK(dotv(r, t2) ==
        doctest::Approx(rho_f * 2.0 * fluid_area).epsilon(1e-12));
  // int over the fluid layer of (x + 2 y) dx dy = 0 + 2 * 4 = 8
  CHECK(dotv(r, t3) == doctest::Approx(rho_f * 8.0).epsilon(1e-12));

  // jacobian extra freezes the gradient: (w . grad) u_lin2 with
  // u_lin2 = (y, x) sends w = (3,5) to (5,3)
  const auto u_lin2 =
      interpolate(v, [](Vec2 x, double) { return Vec2{x.y, x.x}; }, 0.0);
  const auto w2 =
      interpolate(v, [](Vec2, double) { return Vec2{3.0, 5.0}; }, 0.0);
  const auto r2 = assemble_convective(u_lin2, v, rho_f).jacobian_extra.apply(w2);
  CHECK(dotv(r2, t1) ==
        doctest::Approx(rho_f * 5.0 * fluid_area).epsilon(1e-12));
  CHECK(dotv(r2, t2) ==
        doctest::Approx(rho_f * 3.0 * fluid_area).epsilon(1e-12));
}

TEST_CASE("convective energy obeys the integration by parts identity") {
  const Mesh mesh = standard_two_layer(2, 2);
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  const double rho_f = 1.2;

  // P2-representable fields make both sides of the identity exact
  const auto u = interpolate(
      v, [](Vec2 x, double) { return Vec2{x.x * x.y, x.x * x.x - x.y}; }, 0.0);
  const auto w = interpolate(
      v, [](Vec2 x, double) { return Vec2{x.y * x.y, x.x + x.y}; }, 0.0);
  const double lhs = dotv(w, assemble_convective(u, v, rho_f).c.apply(w));

  // rho_f [ -(1/2) int div(u) |w|^2 + (1/2) boundary sum of (u.n)|w|^2 ]
  double rhs = 0.0;
  const QuadRule vol = quadrature(QuadDomain::triangle, 6);
  for (int gc : v.cells) {
    const auto& cv = mesh.cells[gc];
    const AffineMap map = affine_map(mesh.vertices[cv[0]], mesh.vertices[cv[1]],
                                     mesh.vertices[cv[2]]);
    for (size_t q = 0; q < vol.points.size(); ++q) {
      const Vec2 x = map.apply(vol.points[q]);
      const Vec2 wv = eval_vec(v, w, gc, x);
      rhs += -0.5 * vol.weights[q] * map.det * eval_div(v, u, gc, x) *
             dot(wv, wv);
    }
  }
  const QuadRule edge = quadrature(QuadDomain::edge, 6);
  auto boundary_term = [&](Vec2 pa, Vec2 pb, Vec2 n, int cell) {
    const double len = norm(pb - pa);
    for (size_t q = 0; q < edge.points.size(); ++q) {
      const Vec2 x = pa + edge.points[q].x * (pb - pa);
      const Vec2 uv = eval_vec(v, u, cell, x);
      const Vec2 wv = eval_vec(v, w, cell, x);
      rhs += 0.5 * edge.weights[q] * len * dot(uv, n) * dot(wv, wv);
    }
  };
  for (const BoundaryFacet& f : mesh.boundary) {
    if (v.cell_local[f.cell] < 0) continue;
    boundary_term(mesh.vertices[f.v0], mesh.vertices[f.v1],
                  boundary_frame(mesh, f).n, f.cell);
  }
  for (const InterfaceFacet& f : mesh.interface)
    boundary_term(mesh.vertices[f.v0], mesh.vertices[f.v1],
                  interface_frame(mesh, f).n, f.fluid_cell);
  rhs *= rho_f;

  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("convective assembly validates its inputs") {
  const Mesh mesh = standard_two_layer(1, 1);
  const Space v = build_space(mesh, subdomain::fluid, ElementKind::p2, 2);
  const Space w = build_space(mesh, subdomain::porous, ElementKind::p2, 2);
  std::vector<double> wrong(static_cast<size_t>(v.n_dofs()) - 1, 0.0);
  CHECK_THROWS_AS(static_cast<void>(assemble_convective(wrong, v, 1.0)),
                  FormError);
  std::vector<double> ok(static_cast<size_t>(w.n_dofs()), 0.0);
  CHECK_THROWS_AS(static_cast<void>(assemble_convective(ok, w, 1.0)),
                  FormError);
}
