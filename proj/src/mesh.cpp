#include "biotstokes/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "biotstokes/format.hpp"

namespace bstok {

// ============================================================================
// Geometry helpers
// ============================================================================

Vec2 Mesh::cell_centroid(int c) const {
  const auto& t = cells[c];
  return (1.0 / 3.0) *
         (vertices[t[0]] + vertices[t[1]] + vertices[t[2]]);
}

double Mesh::cell_area(int c) const {
  const auto& t = cells[c];
  return 0.5 * cross(vertices[t[1]] - vertices[t[0]],
                     vertices[t[2]] - vertices[t[0]]);
}

double Mesh::cell_diameter(int c) const {
  const auto& t = cells[c];
  const double a = norm(vertices[t[1]] - vertices[t[0]]);
  const double b = norm(vertices[t[2]] - vertices[t[1]]);
  const double d = norm(vertices[t[0]] - vertices[t[2]]);
  return std::max({a, b, d});
}

double Mesh::cell_quality(int c) const {
  const auto& t = cells[c];
  const Vec2 e0 = vertices[t[1]] - vertices[t[0]];
  const Vec2 e1 = vertices[t[2]] - vertices[t[1]];
  const Vec2 e2 = vertices[t[0]] - vertices[t[2]];
  const double s = dot(e0, e0) + dot(e1, e1) + dot(e2, e2);
  return 4.0 * std::sqrt(3.0) * cell_area(c) / s;
}

double Mesh::max_diameter(std::optional<int> tag) const {
  double h = 0.0;
  for (int c = 0; c < num_cells(); ++c)
    if (!tag || cell_tag[c] == *tag) h = std::max(h, cell_diameter(c));
  return h;
}

// ============================================================================
// Generator
// ============================================================================

Mesh generate_two_layer_rect(Interval x, Interval y_fluid, Interval y_porous,
                             int nx, int ny_each, const TwoLayerOptions& opt) {
  if (!x.valid() || !y_fluid.valid() || !y_porous.valid())
    throw MeshError("generate_two_layer_rect: empty or inverted interval");
  if (nx < 1 || ny_each < 1)
    throw MeshError("generate_two_layer_rect: subdivision counts must be >= 1");
  if (y_porous.hi != y_fluid.lo)
    throw MeshError("generate_two_layer_rect: layers must share the interface line");

  const int ny = 2 * ny_each;
  Mesh m;
  m.vertices.reserve((nx + 1) * (ny + 1));
  const double dx = x.length() / nx;
  const double dyp = y_porous.length() / ny_each;
  const double dyf = y_fluid.length() / ny_each;
  for (int j = 0; j <= ny; ++j) {
    const double y = j <= ny_each ? y_porous.lo + j * dyp
                                  : y_fluid.lo + (j - ny_each) * dyf;
    for (int i = 0; i <= nx; ++i) m.vertices.push_back({x.lo + i * dx, y});
  }
  auto vid = [nx](int i, int j) { return j * (nx + 1) + i; };

  // Quad (i,j) -> triangles (v00,v10,v11) and (v00,v11,v01), both CCW.
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int v00 = vid(i, j), v10 = vid(i + 1, j);
      const int v01 = vid(i, j + 1), v11 = vid(i + 1, j + 1);
      m.cells.push_back({v00, v10, v11});
      m.cells.push_back({v00, v11, v01});
      const int tag = j < ny_each ? subdomain::porous : subdomain::fluid;
      m.cell_tag.push_back(tag);
      m.cell_tag.push_back(tag);
    }
  }
  auto tri_lo = [nx](int i, int j) { return 2 * (j * nx + i); };
  auto tri_hi = [nx](int i, int j) { return 2 * (j * nx + i) + 1; };

  for (int i = 0; i < nx; ++i) {
    int bm = marker::porous_pressure;
    if (opt.outlet_x_hi) {
      const double mid = x.lo + (i + 0.5) * dx;
      bm = mid <= *opt.outlet_x_hi ? marker::outflow : marker::porous_clamp;
    }
    m.boundary.push_back({vid(i, 0), vid(i + 1, 0), bm, tri_lo(i, 0)});
    m.boundary.push_back(
        {vid(i, ny), vid(i + 1, ny), marker::fluid_velocity, tri_hi(i, ny - 1)});
  }
  for (int j = 0; j < ny; ++j) {
    const bool in_fluid = j >= ny_each;
    const int side = in_fluid ? marker::fluid_stress : marker::porous_clamp;
    const int left = opt.axis_at_x_lo ? marker::axis : side;
    m.boundary.push_back({vid(0, j), vid(0, j + 1), left, tri_hi(0, j)});
    m.boundary.push_back({vid(nx, j), vid(nx, j + 1), side, tri_lo(nx - 1, j)});
  }

  for (int i = 0; i < nx; ++i)
    m.interface.push_back({vid(i, ny_each), vid(i + 1, ny_each),
                           tri_lo(i, ny_each), tri_hi(i, ny_each - 1)});
  return m;
}

// ============================================================================
// Validation shared by read_mesh and uniform_refine
// ============================================================================

namespace {

int64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<int64_t>(a) << 32) | static_cast<uint32_t>(b);
}

struct EdgeInfo {
  int cell[2] = {-1, -1};
  int count = 0;
};

std::map<int64_t, EdgeInfo> collect_edges(const Mesh& m) {
  std::map<int64_t, EdgeInfo> edges;
  for (int c = 0; c < m.num_cells(); ++c) {
    const auto& t = m.cells[c];
    for (int e = 0; e < 3; ++e) {
      EdgeInfo& info = edges[edge_key(t[e], t[(e + 1) % 3])];
      if (info.count >= 2)
        throw MeshError("non-manifold edge (shared by more than 2 cells)");
      info.cell[info.count++] = c;
    }
  }
  return edges;
}

/// Fix orientation, then rebuild interface facets from the subdomain tags and
/// attach adjacent cells to the given boundary facets.
void finalize_connectivity(Mesh& m) {
  for (int c = 0; c < m.num_cells(); ++c) {
    const double area = m.cell_area(c);
    const double scale = m.cell_diameter(c);
    if (std::abs(area) <= 1e-14 * scale * scale)
      throw MeshError("cell " + std::to_string(c) + " has zero area");
    if (area < 0.0) std::swap(m.cells[c][1], m.cells[c][2]);
  }
  const auto edges = collect_edges(m);

  for (auto& f : m.boundary) {
    const auto it = edges.find(edge_key(f.v0, f.v1));
    if (it == edges.end())
      throw MeshError("boundary facet does not match any cell edge");
    if (it->second.count != 1)
      throw MeshError("boundary facet lies in the mesh interior");
    f.cell = it->second.cell[0];
  }

  m.interface.clear();
  for (const auto& [key, info] : edges) {
    if (info.count != 2) continue;
    const int tag0 = m.cell_tag[info.cell[0]];
    const int tag1 = m.cell_tag[info.cell[1]];
    if (tag0 == tag1) continue;
    InterfaceFacet f;
    f.v0 = static_cast<int>(key >> 32);
    f.v1 = static_cast<int>(key & 0xffffffff);
    f.fluid_cell = tag0 == subdomain::fluid ? info.cell[0] : info.cell[1];
    f.porous_cell = tag0 == subdomain::fluid ? info.cell[1] : info.cell[0];
    m.interface.push_back(f);
  }
  std::sort(m.interface.begin(), m.interface.end(),
            [&m](const InterfaceFacet& a, const InterfaceFacet& b) {
              const Vec2 ma = 0.5 * (m.vertices[a.v0] + m.vertices[a.v1]);
              const Vec2 mb = 0.5 * (m.vertices[b.v0] + m.vertices[b.v1]);
              return ma.x != mb.x ? ma.x < mb.x : ma.y < mb.y;
            });
}

}  // namespace

// ============================================================================
// Text I/O
// ============================================================================

namespace {

[[noreturn]] void bad_line(const std::string& what) {
  throw MeshError("read_mesh: malformed input (" + what + ")");
}

}  // namespace

Mesh read_mesh(std::istream& in) {
  std::string word;
  if (!(in >> word) || word != "mesh2d") bad_line("missing mesh2d header");
  if (!(in >> word) || word != "v1") bad_line("unsupported version");

  Mesh m;
  size_t n = 0;
  if (!(in >> word) || word != "vertices" || !(in >> n))
    bad_line("vertices section");
  m.vertices.resize(n);
  for (auto& v : m.vertices)
    if (!(in >> v.x >> v.y)) bad_line("vertex coordinates");

  if (!(in >> word) || word != "cells" || !(in >> n)) bad_line("cells section");
  m.cells.resize(n);
  m.cell_tag.resize(n);
  for (size_t c = 0; c < n; ++c) {
    auto& t = m.cells[c];
    if (!(in >> t[0] >> t[1] >> t[2] >> m.cell_tag[c])) bad_line("cell record");
    for (int v : t)
      if (v < 0 || v >= m.num_vertices())
        throw MeshError("cell references vertex " + std::to_string(v) +
                        " outside the mesh");
    if (m.cell_tag[c] != subdomain::fluid && m.cell_tag[c] != subdomain::porous)
      bad_line("unknown subdomain tag");
  }

  if (!(in >> word) || word != "facets" || !(in >> n)) bad_line("facets section");
  m.boundary.resize(n);
  for (auto& f : m.boundary) {
    if (!(in >> f.v0 >> f.v1 >> f.marker)) bad_line("facet record");
    if (f.v0 < 0 || f.v0 >= m.num_vertices() || f.v1 < 0 ||
        f.v1 >= m.num_vertices())
      throw MeshError("facet references a vertex outside the mesh");
  }

  finalize_connectivity(m);
  return m;
}

Mesh read_mesh_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open mesh file: " + path);
  return read_mesh(in);
}

void write_mesh(const Mesh& m, std::ostream& out) {
  out << "mesh2d v1\n";
  out << "vertices " << m.num_vertices() << "\n";
  for (const auto& v : m.vertices)
    out << fmt_double(v.x) << " " << fmt_double(v.y) << "\n";
  out << "cells " << m.num_cells() << "\n";
  for (int c = 0; c < m.num_cells(); ++c)
    out << m.cells[c][0] << " " << m.cells[c][1] << " " << m.cells[c][2] << " "
        << m.cell_tag[c] << "\n";
  out << "facets " << m.boundary.size() << "\n";
  for (const auto& f : m.boundary)
    out << f.v0 << " " << f.v1 << " " << f.marker << "\n";
}

void write_mesh_file(const Mesh& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MeshError("cannot open for writing: " + path);
  write_mesh(m, out);
}

// ============================================================================
// Refinement
// ============================================================================

Mesh uniform_refine(const Mesh& coarse) {
  Mesh m;
  m.vertices = coarse.vertices;
  std::map<int64_t, int> midpoint;
  auto mid = [&](int a, int b) {
    const auto key = edge_key(a, b);
    const auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    const int id = m.num_vertices();
    m.vertices.push_back(0.5 * (coarse.vertices[a] + coarse.vertices[b]));
    midpoint.emplace(key, id);
    return id;
  };

  for (int c = 0; c < coarse.num_cells(); ++c) {
    const auto& t = coarse.cells[c];
    const int m01 = mid(t[0], t[1]);
    const int m12 = mid(t[1], t[2]);
    const int m02 = mid(t[0], t[2]);
    m.cells.push_back({t[0], m01, m02});
    m.cells.push_back({t[1], m12, m01});
    m.cells.push_back({t[2], m02, m12});
    m.cells.push_back({m01, m12, m02});
    for (int k = 0; k < 4; ++k) m.cell_tag.push_back(coarse.cell_tag[c]);
  }

  for (const auto& f : coarse.boundary) {
    const int mm = mid(f.v0, f.v1);
    m.boundary.push_back({f.v0, mm, f.marker, -1});
    m.boundary.push_back({mm, f.v1, f.marker, -1});
  }
  finalize_connectivity(m);
  return m;
}

// ============================================================================
// Facet frames
// ============================================================================

namespace {

FacetFrame oriented_frame(const Mesh& m, int v0, int v1, Vec2 toward) {
  const Vec2 a = m.vertices[v0];
  const Vec2 b = m.vertices[v1];
  const Vec2 e = b - a;
  const double len = norm(e);
  if (len == 0.0) throw MeshError("degenerate facet");
  Vec2 n{e.y / len, -e.x / len};
  const Vec2 midpt = 0.5 * (a + b);
  if (dot(n, toward - midpt) < 0.0) n = -1.0 * n;
  return {n, rot_minus90(n), len};
}

}  // namespace

FacetFrame boundary_frame(const Mesh& m, const BoundaryFacet& f) {
  // outward: away from the adjacent cell centroid
  FacetFrame fr = oriented_frame(m, f.v0, f.v1, m.cell_centroid(f.cell));
  fr.n = -1.0 * fr.n;
  fr.t = rot_minus90(fr.n);
  return fr;
}

FacetFrame interface_frame(const Mesh& m, const InterfaceFacet& f) {
  return oriented_frame(m, f.v0, f.v1, m.cell_centroid(f.porous_cell));
}

FacetFrame facet_frame(const Mesh& m, int facet_id) {
  const int nb = static_cast<int>(m.boundary.size());
  const int ni = static_cast<int>(m.interface.size());
  if (facet_id < 0 || facet_id >= nb + ni)
    throw MeshError("facet id out of range");
  if (facet_id < nb) return boundary_frame(m, m.boundary[facet_id]);
  return interface_frame(m, m.interface[facet_id - nb]);
}

}  // namespace bstok
