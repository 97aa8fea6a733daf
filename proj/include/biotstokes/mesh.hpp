#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "biotstokes/types.hpp"

namespace bstok {

namespace subdomain {
inline constexpr int fluid = 0;
inline constexpr int porous = 1;
}  // namespace subdomain

/// Boundary marker ids used by the generator and the scenario configs.
namespace marker {
inline constexpr int fluid_velocity = 1;   // top of generated two-layer meshes
inline constexpr int fluid_stress = 2;     // side walls of the fluid layer
inline constexpr int porous_clamp = 3;     // side walls of the porous layer
inline constexpr int porous_pressure = 4;  // bottom
inline constexpr int inflow = 5;
inline constexpr int outflow = 6;
inline constexpr int axis = 7;             // symmetry axis r = 0 (axisym mode)
}  // namespace marker

struct BoundaryFacet {
  int v0, v1;
  int marker;
  int cell;  // the unique adjacent cell
};

struct InterfaceFacet {
  int v0, v1;
  int fluid_cell;
  int porous_cell;
};

struct FacetFrame {
  Vec2 n;  // unit normal: fluid -> porous on the interface, outward on the boundary
  Vec2 t;  // n rotated by -90 degrees
  double length;
};

struct MeshError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Mesh {
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> cells;  // counterclockwise
  std::vector<int> cell_tag;              // subdomain::fluid or subdomain::porous
  std::vector<BoundaryFacet> boundary;
  std::vector<InterfaceFacet> interface;  // enumerated left-to-right when generated

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_cells() const { return static_cast<int>(cells.size()); }

  Vec2 cell_centroid(int c) const;
  double cell_area(int c) const;  // signed; positive on valid meshes
  double cell_diameter(int c) const;
  /// Shape quality 4*sqrt(3)*area/sum(edge^2): 1 for equilateral, <= 0 inverted.
  double cell_quality(int c) const;
  double max_diameter(std::optional<int> tag = std::nullopt) const;
};

struct TwoLayerOptions {
  /// Mark the x = lo side (both layers) as marker::axis instead of the wall markers.
  bool axis_at_x_lo = false;
  /// Bottom facets with midpoint x <= value get marker::outflow instead of porous_pressure;
  /// the rest of the bottom becomes porous_clamp (wall).
  std::optional<double> outlet_x_hi;
};

/// Structured two-layer rectangle: fluid above porous, conforming along the
/// shared interface line.  Each grid quad splits into 2 triangles along the
/// same diagonal.
Mesh generate_two_layer_rect(Interval x, Interval y_fluid, Interval y_porous,
                             int nx, int ny_each,
                             const TwoLayerOptions& opt = {});

/// Text format "mesh2d v1"; see README.  Interface facets are rebuilt from the
/// subdomain tags, clockwise cells are auto-fixed by swapping two indices.
Mesh read_mesh(std::istream& in);
Mesh read_mesh_file(const std::string& path);
void write_mesh(const Mesh& m, std::ostream& out);
void write_mesh_file(const Mesh& m, const std::string& path);

/// Red refinement: every triangle splits into 4 by edge midpoints; tags and
/// markers are inherited.
Mesh uniform_refine(const Mesh& m);

/// Facet ids: [0, boundary.size()) are boundary facets, the interface facets
/// follow in order.
FacetFrame facet_frame(const Mesh& m, int facet_id);

FacetFrame boundary_frame(const Mesh& m, const BoundaryFacet& f);
FacetFrame interface_frame(const Mesh& m, const InterfaceFacet& f);

}  // namespace bstok
