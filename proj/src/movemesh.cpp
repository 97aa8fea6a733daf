#include "biotstokes/movemesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "biotstokes/linalg.hpp"

namespace bstok {

namespace {

double component(Vec2 v, int c) { return c == 0 ? v.x : v.y; }

// ============================================================================
// Prescribed boundary values of the extension
// ============================================================================

// Node values fixed by the extension problem: zero on the outer fluid
// boundary, the displacement trace on the interface.  The interface values
// are inserted second so they win at the corner nodes shared with the outer
// boundary.
std::unordered_map<int, Vec2> prescribed_values(
    const std::vector<double>& d_coeffs, const Space& w, const Space& v) {
  if (w.mesh == nullptr || v.mesh == nullptr || w.mesh != v.mesh) {
    throw MoveMeshError(
        "displacement and extension spaces must share one mesh");
  }
  if (w.kind != v.kind) {
    throw MoveMeshError(
        "displacement and extension spaces must share one element kind for a "
        "nodal interface trace");
  }
  if (w.components != 2 || v.components != 2) {
    throw MoveMeshError("mesh motion needs vector displacement spaces");
  }
  if (static_cast<int>(d_coeffs.size()) != w.n_dofs()) {
    throw MoveMeshError(
        "displacement coefficient count does not match its space");
  }
  const Mesh& mesh = *v.mesh;
  const bool quadratic = v.kind == ElementKind::p2;

  std::unordered_map<int, Vec2> out;
  for (const BoundaryFacet& f : mesh.boundary) {
    if (mesh.cell_tag[static_cast<size_t>(f.cell)] != subdomain::fluid) {
      continue;
    }
    out[v.vertex_node[static_cast<size_t>(f.v0)]] = Vec2{};
    out[v.vertex_node[static_cast<size_t>(f.v1)]] = Vec2{};
    if (quadratic) {
      out[v.edge_node.at(packed_edge(f.v0, f.v1))] = Vec2{};
    }
  }
  const auto trace = [&](int w_node) {
    return Vec2{d_coeffs[static_cast<size_t>(w.dof(w_node, 0))],
                d_coeffs[static_cast<size_t>(w.dof(w_node, 1))]};
  };
  for (const InterfaceFacet& f : mesh.interface) {
    out[v.vertex_node[static_cast<size_t>(f.v0)]] =
        trace(w.vertex_node[static_cast<size_t>(f.v0)]);
    out[v.vertex_node[static_cast<size_t>(f.v1)]] =
        trace(w.vertex_node[static_cast<size_t>(f.v1)]);
    if (quadratic) {
      const std::int64_t key = packed_edge(f.v0, f.v1);
      out[v.edge_node.at(key)] = trace(w.edge_node.at(key));
    }
  }
  return out;
}

ExtensionField with_prescribed(const Space& v,
                               const std::unordered_map<int, Vec2>& values,
                               double diffusion) {
  ExtensionField out;
  out.space = &v;
  out.diffusion = diffusion;
  out.coeffs.assign(static_cast<size_t>(v.n_dofs()), 0.0);
  for (const auto& [node, value] : values) {
    out.coeffs[static_cast<size_t>(v.dof(node, 0))] = value.x;
    out.coeffs[static_cast<size_t>(v.dof(node, 1))] = value.y;
  }
  return out;
}

}  // namespace

// ============================================================================
// Harmonic extension
// ============================================================================

ExtensionField harmonic_extension(const std::vector<double>& d_coeffs,
                                  const Space& displacement_space,
                                  const Space& extension_space,
                                  double diffusion) {
  if (!(diffusion > 0.0)) {
    throw MoveMeshError("extension diffusion must be positive");
  }
  const Space& v = extension_space;
  const auto values = prescribed_values(d_coeffs, displacement_space, v);
  const Mesh& mesh = *v.mesh;

  // One scalar Laplacian over the extension cells serves both components.
  const int degree = std::clamp(2 * (element_degree(v.kind) - 1), 1, 6);
  const QuadRule rule = quadrature(QuadDomain::triangle, degree);
  std::vector<Triplet> triplets;
  const int per_cell = v.nodes_per_cell();
  for (size_t lc = 0; lc < v.cells.size(); ++lc) {
    const auto& cv = mesh.cells[static_cast<size_t>(v.cells[lc])];
    const AffineMap map = affine_map(mesh.vertices[cv[0]], mesh.vertices[cv[1]],
                                     mesh.vertices[cv[2]]);
    const auto& nodes = v.cell_nodes[lc];
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const BasisEval basis =
          push_gradients(map, eval_basis(v.kind, rule.points[q]));
      const double wq = rule.weights[q] * std::abs(map.det);
      for (int a = 0; a < per_cell; ++a) {
        for (int b = 0; b < per_cell; ++b) {
          triplets.push_back({nodes[a], nodes[b],
                              diffusion * wq * dot(basis.grad[a], basis.grad[b])});
        }
      }
    }
  }
  SparseMatrix laplace =
      SparseMatrix::from_triplets(v.n_nodes, v.n_nodes, std::move(triplets));

  std::vector<int> fixed;
  fixed.reserve(values.size());
  for (const auto& [node, value] : values) {
    fixed.push_back(node);
  }
  std::sort(fixed.begin(), fixed.end());
  const DirichletOp constraint = eliminate_dirichlet(laplace, fixed);
  const Factorization lu(std::move(laplace));

  ExtensionField out;
  out.space = &v;
  out.diffusion = diffusion;
  out.coeffs.assign(static_cast<size_t>(v.n_dofs()), 0.0);
  for (int c = 0; c < 2; ++c) {
    std::vector<double> fixed_values(fixed.size());
    for (size_t i = 0; i < fixed.size(); ++i) {
      fixed_values[i] = component(values.at(fixed[i]), c);
    }
    std::vector<double> rhs(static_cast<size_t>(v.n_nodes), 0.0);
    constraint.correct_rhs(rhs, fixed_values);
    const std::vector<double> solution = lu.solve(rhs);
    for (int node = 0; node < v.n_nodes; ++node) {
      out.coeffs[static_cast<size_t>(v.dof(node, c))] =
          solution[static_cast<size_t>(node)];
    }
  }
  return out;
}

ExtensionField trace_only_extension(const std::vector<double>& d_coeffs,
                                    const Space& displacement_space,
                                    const Space& extension_space) {
  return with_prescribed(
      extension_space,
      prescribed_values(d_coeffs, displacement_space, extension_space), 1.0);
}

// ============================================================================
// Mesh coordinate update
// ============================================================================

std::vector<Vec2> vertex_displacement(const ExtensionField& ext) {
  if (ext.space == nullptr || ext.space->mesh == nullptr) {
    throw MoveMeshError("extension field has no space");
  }
  const Space& v = *ext.space;
  if (static_cast<int>(ext.coeffs.size()) != v.n_dofs()) {
    throw MoveMeshError("extension coefficient count does not match its space");
  }
  std::vector<Vec2> shift(static_cast<size_t>(v.mesh->num_vertices()), Vec2{});
  for (int vertex = 0; vertex < v.mesh->num_vertices(); ++vertex) {
    const int node = v.vertex_node[static_cast<size_t>(vertex)];
    if (node < 0) {
      continue;
    }
    shift[static_cast<size_t>(vertex)] =
        Vec2{ext.coeffs[static_cast<size_t>(v.dof(node, 0))],
             ext.coeffs[static_cast<size_t>(v.dof(node, 1))]};
  }
  return shift;
}

Mesh move_mesh(const Mesh& mesh, const std::vector<Vec2>& shift) {
  if (static_cast<int>(shift.size()) != mesh.num_vertices()) {
    throw MoveMeshError("expected one displacement per mesh vertex");
  }
  Mesh out = mesh;
  for (int vertex = 0; vertex < out.num_vertices(); ++vertex) {
    out.vertices[static_cast<size_t>(vertex)] =
        out.vertices[static_cast<size_t>(vertex)] +
        shift[static_cast<size_t>(vertex)];
  }
  for (int cell = 0; cell < out.num_cells(); ++cell) {
    const double area = out.cell_area(cell);
    if (!(area > 0.0)) {
      throw MoveMeshError("mesh motion inverted cell " + std::to_string(cell) +
                          " (signed area " + std::to_string(area) +
                          "); displacement too large for one step");
    }
  }
  return out;
}

double min_quality_near_interface(const Mesh& mesh, std::optional<int> tag) {
  std::unordered_set<int> on_interface;
  for (const InterfaceFacet& f : mesh.interface) {
    on_interface.insert(f.v0);
    on_interface.insert(f.v1);
  }
  double worst = std::numeric_limits<double>::infinity();
  bool found = false;
  for (int cell = 0; cell < mesh.num_cells(); ++cell) {
    if (tag && mesh.cell_tag[static_cast<size_t>(cell)] != *tag) {
      continue;
    }
    const auto& cv = mesh.cells[static_cast<size_t>(cell)];
    if (!on_interface.count(cv[0]) && !on_interface.count(cv[1]) &&
        !on_interface.count(cv[2])) {
      continue;
    }
    worst = std::min(worst, mesh.cell_quality(cell));
    found = true;
  }
  if (!found) {
    throw MoveMeshError("mesh has no cells touching the interface");
  }
  return worst;
}

}  // namespace bstok
