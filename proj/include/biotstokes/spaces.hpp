#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "biotstokes/fem.hpp"
#include "biotstokes/mesh.hpp"
#include "biotstokes/types.hpp"

namespace bstok {

struct SpaceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ============================================================================
// Field bookkeeping
// ============================================================================

// The five coupled fields, in the fixed order used by every block structure:
// fluid velocity, fluid pressure, displacement, porous pressure, total
// pressure.
enum class Field : int { u = 0, p_f = 1, d = 2, p_p = 3, phi = 4 };

inline constexpr int n_fields = 5;
inline constexpr std::array<Field, n_fields> all_fields = {
    Field::u, Field::p_f, Field::d, Field::p_p, Field::phi};

const char* field_name(Field f);

// Maps each field's coefficient range into one monolithic index space.
struct BlockLayout {
  std::array<int, n_fields> sizes{};
  std::array<int, n_fields> offsets{};

  static BlockLayout from_sizes(const std::array<int, n_fields>& sizes);

  int total() const { return offsets[n_fields - 1] + sizes[n_fields - 1]; }
  int offset(Field f) const { return offsets[static_cast<int>(f)]; }
  int size(Field f) const { return sizes[static_cast<int>(f)]; }
  int global(Field f, int local) const { return offset(f) + local; }
};

// ============================================================================
// Finite element spaces
// ============================================================================

// Scalar or vector nodal space over one mesh subdomain (subdomain -1 spans
// the whole mesh).  Node numbering is deterministic given the mesh: vertex
// nodes in ascending vertex id, then quadratic edge nodes in ascending order
// of their sorted vertex pair, then one bubble node per cell in cell order.
// Vector spaces interleave components: component c of node n is DOF 2n + c.
//
// Spaces never share DOFs across the subdomain boundary; the coupling between
// the fluid and porous sides is purely weak through interface integrals.
struct Space {
  const Mesh* mesh = nullptr;
  int subdomain = -1;
  ElementKind kind = ElementKind::p1;
  int components = 1;

  std::vector<int> cells;       // member cells, ascending global id
  std::vector<int> cell_local;  // global cell id -> index into cells, or -1
  std::vector<std::array<int, 6>> cell_nodes;  // local order of eval_basis
  std::vector<Vec2> node_coords;
  std::vector<int> vertex_node;  // mesh vertex id -> node id, or -1
  std::unordered_map<std::int64_t, int> edge_node;
  int n_nodes = 0;

  int n_dofs() const { return components * n_nodes; }
  int dof(int node, int component) const {
    return components * node + component;
  }
  int nodes_per_cell() const { return dofs_per_cell(kind); }
  std::vector<int> cell_dofs(int local_cell) const;
};

inline std::int64_t packed_edge(int a, int b) {
  const int lo = a < b ? a : b, hi = a < b ? b : a;
  return (static_cast<std::int64_t>(lo) << 32) | static_cast<std::int64_t>(hi);
}

Space build_space(const Mesh& mesh, int subdomain, ElementKind kind,
                  int components);

// ============================================================================
// Constrained DOFs
// ============================================================================

// Sorted unique DOF indices with optional aligned prescribed values.  The
// index space is whatever the producer used: space-local from dirichlet_dofs,
// monolithic after offset_dofs.
struct DofSet {
  std::vector<int> dofs;
  std::vector<double> values;

  bool has_values() const { return !values.empty(); }
};

DofSet dirichlet_dofs(const Space& space, int marker,
                      std::array<bool, 2> component_mask, const VectorFn& value,
                      double t);
DofSet dirichlet_dofs(const Space& space, int marker, const ScalarFn& value,
                      double t);

// Union of two sets.  A DOF present in both must carry the same value.
DofSet merge(const DofSet& a, const DofSet& b);

// Shift every index by a block offset (space-local -> monolithic).
DofSet offset_dofs(const DofSet& s, int offset);

// ============================================================================
// Interpolation and projection
// ============================================================================

// Nodal interpolation; bubble coefficients are set to zero.
std::vector<double> interpolate(const Space& space, const ScalarFn& f,
                                double t);
std::vector<double> interpolate(const Space& space, const VectorFn& f,
                                double t);

// L2 projection of a discrete field onto another space over the same cells.
std::vector<double> l2_project(const std::vector<double>& source_coeffs,
                               const Space& source, const Space& target);

// L2 projection of an analytic field (used for initial data).
std::vector<double> l2_project(const ScalarFn& f, double t,
                               const Space& target);
std::vector<double> l2_project(const VectorFn& f, double t,
                               const Space& target);

}  // namespace bstok
