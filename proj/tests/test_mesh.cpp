#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "biotstokes/mesh.hpp"

using namespace bstok;

namespace {

Mesh reference_two_layer(int nx = 2, int ny = 2) {
  return generate_two_layer_rect({-1, 1}, {0, 2}, {-2, 0}, nx, ny);
}

void check_invariants(const Mesh& m) {
  for (int c = 0; c < m.num_cells(); ++c) CHECK(m.cell_area(c) > 0.0);
  for (const auto& f : m.interface) {
    CHECK(m.cell_tag[f.fluid_cell] == subdomain::fluid);
    CHECK(m.cell_tag[f.porous_cell] == subdomain::porous);
    const FacetFrame fr = interface_frame(m, f);
    const Vec2 d = m.cell_centroid(f.porous_cell) - m.cell_centroid(f.fluid_cell);
    CHECK(dot(fr.n, d) >= 0.0);
    CHECK(norm(fr.n) == doctest::Approx(1.0));
    CHECK(dot(fr.n, fr.t) == doctest::Approx(0.0));
  }
}

}  // namespace

// ============================================================================
// Generator
// ============================================================================

TEST_CASE("2x2 two-layer rectangle: 16 triangles, 2 interface facets") {
  const Mesh m = reference_two_layer();
  CHECK(m.num_cells() == 16);
  int fluid = 0, porous = 0;
  for (int tag : m.cell_tag) (tag == subdomain::fluid ? fluid : porous)++;
  CHECK(fluid == 8);
  CHECK(porous == 8);
  REQUIRE(m.interface.size() == 2);
  for (const auto& f : m.interface) {
    const FacetFrame fr = interface_frame(m, f);
    CHECK(fr.n.x == doctest::Approx(0.0));
    CHECK(fr.n.y == doctest::Approx(-1.0));
  }
  check_invariants(m);
}

TEST_CASE("1x1 two-layer rectangle: 4 triangles, one interface facet of length 2") {
  const Mesh m = reference_two_layer(1, 1);
  CHECK(m.num_cells() == 4);
  REQUIRE(m.interface.size() == 1);
  CHECK(interface_frame(m, m.interface[0]).length == doctest::Approx(2.0));
  check_invariants(m);
}

TEST_CASE("interface facets enumerate left to right") {
  const Mesh m = reference_two_layer(4, 1);
  double prev = -1e300;
  for (const auto& f : m.interface) {
    const double midx = 0.5 * (m.vertices[f.v0].x + m.vertices[f.v1].x);
    CHECK(midx > prev);
    prev = midx;
  }
}

TEST_CASE("interface facet lengths sum to the analytic interface length") {
  const Mesh m = reference_two_layer(7, 3);
  double total = 0.0;
  for (const auto& f : m.interface) total += interface_frame(m, f).length;
  CHECK(total == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("generator boundary markers follow the documented layout") {
  const Mesh m = reference_two_layer();
  for (const auto& f : m.boundary) {
    const Vec2 a = m.vertices[f.v0], b = m.vertices[f.v1];
    if (a.y == 2.0 && b.y == 2.0) CHECK(f.marker == marker::fluid_velocity);
    if (a.y == -2.0 && b.y == -2.0) CHECK(f.marker == marker::porous_pressure);
    if (a.x == b.x) {
      const double mid = 0.5 * (a.y + b.y);
      CHECK(f.marker == (mid > 0.0 ? marker::fluid_stress : marker::porous_clamp));
    }
    // outward orientation
    const FacetFrame fr = boundary_frame(m, f);
    const Vec2 midpt = 0.5 * (a + b);
    CHECK(dot(fr.n, m.cell_centroid(f.cell) - midpt) < 0.0);
  }
}

TEST_CASE("generator options: axis marker and outlet split") {
  TwoLayerOptions opt;
  opt.axis_at_x_lo = true;
  opt.outlet_x_hi = 0.5;
  const Mesh m = generate_two_layer_rect({0, 1}, {1, 2}, {0, 1}, 4, 2, opt);
  int axis = 0, outlet = 0, wall_bottom = 0;
  for (const auto& f : m.boundary) {
    if (f.marker == marker::axis) {
      CHECK(m.vertices[f.v0].x == 0.0);
      axis++;
    }
    if (f.marker == marker::outflow) outlet++;
    const Vec2 a = m.vertices[f.v0], b = m.vertices[f.v1];
    if (a.y == 0.0 && b.y == 0.0 && f.marker == marker::porous_clamp)
      wall_bottom++;
  }
  CHECK(axis == 4);
  CHECK(outlet == 2);
  CHECK(wall_bottom == 2);
  check_invariants(m);
}

TEST_CASE("generator rejects bad input") {
  CHECK_THROWS_AS(generate_two_layer_rect({-1, 1}, {0, 0}, {-2, 0}, 2, 2),
                  MeshError);
  CHECK_THROWS_AS(generate_two_layer_rect({-1, 1}, {0, 2}, {-2, 0}, 0, 2),
                  MeshError);
  CHECK_THROWS_AS(generate_two_layer_rect({-1, 1}, {1, 2}, {-2, 0}, 2, 2),
                  MeshError);
}

// ============================================================================
// Refinement
// ============================================================================

TEST_CASE("uniform refinement quadruples cells and doubles interface facets") {
  const Mesh m = reference_two_layer();
  const Mesh r = uniform_refine(m);
  CHECK(r.num_cells() == 64);
  CHECK(r.interface.size() == 4);
  CHECK(r.boundary.size() == 2 * m.boundary.size());
  CHECK(r.max_diameter() == doctest::Approx(m.max_diameter() / 2.0));
  check_invariants(r);

  // markers inherited
  int top = 0;
  for (const auto& f : r.boundary)
    if (f.marker == marker::fluid_velocity) top++;
  CHECK(top == 4);
}

// ============================================================================
// Frames
// ============================================================================

TEST_CASE("boundary facet length: 3-4-5 triangle") {
  Mesh m;
  m.vertices = {{0, 0}, {3, 4}, {-2, 2}};
  m.cells = {{0, 1, 2}};
  m.cell_tag = {subdomain::fluid};
  m.boundary = {{0, 1, marker::fluid_stress, 0}};
  CHECK(boundary_frame(m, m.boundary[0]).length == doctest::Approx(5.0));
}

TEST_CASE("rotating the mesh rotates interface normals") {
  Mesh m = reference_two_layer();
  const FacetFrame before = interface_frame(m, m.interface[0]);
  for (auto& v : m.vertices) v = {-v.y, v.x};  // +90 degrees, keeps CCW
  const FacetFrame after = interface_frame(m, m.interface[0]);
  CHECK(after.n.x == doctest::Approx(-before.n.y));
  CHECK(after.n.y == doctest::Approx(before.n.x));
}

TEST_CASE("facet_frame id space covers boundary then interface") {
  const Mesh m = reference_two_layer(1, 1);
  const int nb = static_cast<int>(m.boundary.size());
  const FacetFrame fr = facet_frame(m, nb);  // first interface facet
  CHECK(fr.n.y == doctest::Approx(-1.0));
  CHECK_THROWS_AS(facet_frame(m, nb + 1), MeshError);
}

// ============================================================================
// Text round-trip
// ============================================================================

TEST_CASE("write/read round-trip is exact") {
  Mesh m = reference_two_layer(3, 2);
  // irrational coordinates exercise shortest-representation round-trip
  for (auto& v : m.vertices) v.x *= std::sqrt(2.0);
  std::stringstream s;
  write_mesh(m, s);
  const Mesh r = read_mesh(s);
  REQUIRE(r.num_vertices() == m.num_vertices());
  for (int i = 0; i < m.num_vertices(); ++i) {
    CHECK(r.vertices[i].x == m.vertices[i].x);
    CHECK(r.vertices[i].y == m.vertices[i].y);
  }
  REQUIRE(r.num_cells() == m.num_cells());
  for (int c = 0; c < m.num_cells(); ++c) {
    CHECK(r.cells[c] == m.cells[c]);
    CHECK(r.cell_tag[c] == m.cell_tag[c]);
  }
  REQUIRE(r.boundary.size() == m.boundary.size());
  for (size_t i = 0; i < m.boundary.size(); ++i) {
    CHECK(r.boundary[i].v0 == m.boundary[i].v0);
    CHECK(r.boundary[i].v1 == m.boundary[i].v1);
    CHECK(r.boundary[i].marker == m.boundary[i].marker);
  }
  REQUIRE(r.interface.size() == m.interface.size());
  check_invariants(r);
}

TEST_CASE("read_mesh fixes clockwise cells") {
  std::stringstream s;
  s << "mesh2d v1\nvertices 4\n0 0\n1 0\n1 1\n0 1\n"
    << "cells 2\n0 2 1 0\n0 2 3 1\n"  // first cell clockwise on purpose
    << "facets 1\n0 1 1\n";
  const Mesh m = read_mesh(s);
  CHECK(m.cell_area(0) > 0.0);
  CHECK(m.cell_area(1) > 0.0);
  CHECK(m.interface.size() == 1);  // tags differ across the diagonal
}

TEST_CASE("read_mesh rejects malformed input") {
  {
    std::stringstream s;
    s << "mesh3d v1\n";
    CHECK_THROWS_AS(read_mesh(s), MeshError);
  }
  {
    std::stringstream s;
    s << "mesh2d v1\nvertices 3\n0 0\n1 0\n0 1\n"
      << "cells 1\n0 1 999 0\nfacets 0\n";
    CHECK_THROWS_AS(read_mesh(s), MeshError);
  }
  {
    // zero-area cell
    std::stringstream s;
    s << "mesh2d v1\nvertices 3\n0 0\n1 0\n2 0\n"
      << "cells 1\n0 1 2 0\nfacets 0\n";
    CHECK_THROWS_AS(read_mesh(s), MeshError);
  }
  {
    // facet not on the boundary
    std::stringstream s;
    s << "mesh2d v1\nvertices 4\n0 0\n1 0\n1 1\n0 1\n"
      << "cells 2\n0 1 2 0\n0 2 3 0\n"
      << "facets 1\n0 2 1\n";
    CHECK_THROWS_AS(read_mesh(s), MeshError);
  }
}

TEST_CASE("cell quality is 1 for an equilateral triangle") {
  Mesh m;
  m.vertices = {{0, 0}, {1, 0}, {0.5, std::sqrt(3.0) / 2.0}};
  m.cells = {{0, 1, 2}};
  m.cell_tag = {subdomain::fluid};
  CHECK(m.cell_quality(0) == doctest::Approx(1.0));
}
