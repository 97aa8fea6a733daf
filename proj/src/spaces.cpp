#include "biotstokes/spaces.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "biotstokes/linalg.hpp"

namespace bstok {

const char* field_name(Field f) {
  switch (f) {
    case Field::u: return "u";
    case Field::p_f: return "p_F";
    case Field::d: return "d";
    case Field::p_p: return "p_P";
    case Field::phi: return "phi";
  }
  return "?";
}

BlockLayout BlockLayout::from_sizes(const std::array<int, n_fields>& sizes) {
  BlockLayout l;
  l.sizes = sizes;
  int off = 0;
  for (int f = 0; f < n_fields; ++f) {
    if (sizes[f] <= 0) throw SpaceError("block layout requires positive sizes");
    l.offsets[f] = off;
    off += sizes[f];
  }
  return l;
}

// ============================================================================
// Space construction
// ============================================================================

std::vector<int> Space::cell_dofs(int local_cell) const {
  const int npc = nodes_per_cell();
  std::vector<int> out;
  out.reserve(static_cast<size_t>(npc * components));
  for (int a = 0; a < npc; ++a)
    for (int c = 0; c < components; ++c)
      out.push_back(dof(cell_nodes[local_cell][a], c));
  return out;
}

Space build_space(const Mesh& mesh, int subdomain, ElementKind kind,
                  int components) {
  if (components != 1 && components != 2)
    throw SpaceError("component count must be 1 or 2");

  Space s;
  s.mesh = &mesh;
  s.subdomain = subdomain;
  s.kind = kind;
  s.components = components;
  s.cell_local.assign(mesh.num_cells(), -1);
  for (int c = 0; c < mesh.num_cells(); ++c) {
    if (subdomain >= 0 && mesh.cell_tag[c] != subdomain) continue;
    s.cell_local[c] = static_cast<int>(s.cells.size());
    s.cells.push_back(c);
  }
  if (s.cells.empty()) throw SpaceError("subdomain has no cells");

  // vertex nodes, ascending vertex id
  s.vertex_node.assign(mesh.num_vertices(), -1);
  for (int c : s.cells)
    for (int v : mesh.cells[c]) s.vertex_node[v] = 0;
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    if (s.vertex_node[v] == 0) {
      s.vertex_node[v] = s.n_nodes++;
      s.node_coords.push_back(mesh.vertices[v]);
    } else {
      s.vertex_node[v] = -1;
    }
  }

  // quadratic edge nodes, ascending sorted vertex pair
  if (kind == ElementKind::p2) {
    std::map<std::pair<int, int>, int> edges;
    for (int c : s.cells) {
      const auto& cv = mesh.cells[c];
      for (int e = 0; e < 3; ++e) {
        const int a = cv[e], b = cv[(e + 1) % 3];
        edges.emplace(std::minmax(a, b), -1);
      }
    }
    for (auto& [key, node] : edges) {
      node = s.n_nodes++;
      s.node_coords.push_back(
          0.5 * (mesh.vertices[key.first] + mesh.vertices[key.second]));
      s.edge_node.emplace(packed_edge(key.first, key.second), node);
    }
  }

  // cell node tables in the local order of eval_basis
  s.cell_nodes.resize(s.cells.size());
  for (size_t lc = 0; lc < s.cells.size(); ++lc) {
    const auto& cv = mesh.cells[s.cells[lc]];
    auto& nodes = s.cell_nodes[lc];
    nodes.fill(-1);
    for (int a = 0; a < 3; ++a) nodes[a] = s.vertex_node[cv[a]];
    if (kind == ElementKind::p2) {
      // midpoint node a+3 sits opposite vertex a
      nodes[3] = s.edge_node.at(packed_edge(cv[1], cv[2]));
      nodes[4] = s.edge_node.at(packed_edge(cv[2], cv[0]));
      nodes[5] = s.edge_node.at(packed_edge(cv[0], cv[1]));
    } else if (kind == ElementKind::p1_bubble) {
      nodes[3] = s.n_nodes++;
      s.node_coords.push_back(mesh.cell_centroid(s.cells[lc]));
    }
  }
  return s;
}

// ============================================================================
// Constrained DOFs
// ============================================================================

namespace {

// Nodes of this space lying on a marked boundary facet.  Facets that do not
// touch the space's subdomain contribute nothing.
std::vector<int> facet_nodes(const Space& s, const BoundaryFacet& f) {
  std::vector<int> nodes;
  const int n0 = s.vertex_node[f.v0], n1 = s.vertex_node[f.v1];
  if (n0 >= 0) nodes.push_back(n0);
  if (n1 >= 0) nodes.push_back(n1);
  if (s.kind == ElementKind::p2) {
    const auto it = s.edge_node.find(packed_edge(f.v0, f.v1));
    if (it != s.edge_node.end()) nodes.push_back(it->second);
  }
  return nodes;
}

void require_marker(const Mesh& m, int marker) {
  for (const auto& f : m.boundary)
    if (f.marker == marker) return;
  throw SpaceError("no boundary facet carries marker " +
                   std::to_string(marker));
}

DofSet from_map(const std::map<int, double>& entries) {
  DofSet out;
  out.dofs.reserve(entries.size());
  out.values.reserve(entries.size());
  for (const auto& [dof, value] : entries) {
    out.dofs.push_back(dof);
    out.values.push_back(value);
  }
  return out;
}

}  // namespace

DofSet dirichlet_dofs(const Space& space, int marker,
                      std::array<bool, 2> component_mask, const VectorFn& value,
                      double t) {
  if (space.components != 2)
    throw SpaceError("vector dirichlet_dofs needs a vector space");
  require_marker(*space.mesh, marker);
  std::map<int, double> entries;
  for (const auto& f : space.mesh->boundary) {
    if (f.marker != marker) continue;
    for (int n : facet_nodes(space, f)) {
      const Vec2 v = value(space.node_coords[n], t);
      if (component_mask[0]) entries[space.dof(n, 0)] = v.x;
      if (component_mask[1]) entries[space.dof(n, 1)] = v.y;
    }
  }
  return from_map(entries);
}

DofSet dirichlet_dofs(const Space& space, int marker, const ScalarFn& value,
                      double t) {
  if (space.components != 1)
    throw SpaceError("scalar dirichlet_dofs needs a scalar space");
  require_marker(*space.mesh, marker);
  std::map<int, double> entries;
  for (const auto& f : space.mesh->boundary) {
    if (f.marker != marker) continue;
    for (int n : facet_nodes(space, f))
      entries[space.dof(n, 0)] = value(space.node_coords[n], t);
  }
  return from_map(entries);
}

DofSet merge(const DofSet& a, const DofSet& b) {
  // an empty set is the identity regardless of whether it carries values
  if (a.dofs.empty()) return b;
  if (b.dofs.empty()) return a;
  if (a.has_values() != b.has_values())
    throw SpaceError("cannot merge a valued DofSet with an unvalued one");
  std::map<int, double> entries;
  for (size_t i = 0; i < a.dofs.size(); ++i)
    entries[a.dofs[i]] = a.has_values() ? a.values[i] : 0.0;
  for (size_t i = 0; i < b.dofs.size(); ++i) {
    const double v = b.has_values() ? b.values[i] : 0.0;
    const auto [it, inserted] = entries.emplace(b.dofs[i], v);
    if (!inserted && std::abs(it->second - v) >
                         1e-12 * std::max(1.0, std::abs(it->second)))
      throw SpaceError("conflicting values for DOF " +
                       std::to_string(b.dofs[i]));
  }
  DofSet out = from_map(entries);
  if (!a.has_values()) out.values.clear();
  return out;
}

DofSet offset_dofs(const DofSet& s, int offset) {
  DofSet out = s;
  for (int& d : out.dofs) d += offset;
  return out;
}

// ============================================================================
// Interpolation
// ============================================================================

namespace {

// Bubble nodes are numbered last, one per member cell.
int first_bubble_node(const Space& s) {
  if (s.kind != ElementKind::p1_bubble) return s.n_nodes;
  return s.n_nodes - static_cast<int>(s.cells.size());
}

}  // namespace

std::vector<double> interpolate(const Space& space, const ScalarFn& f,
                                double t) {
  if (space.components != 1)
    throw SpaceError("scalar interpolate needs a scalar space");
  std::vector<double> coeffs(static_cast<size_t>(space.n_dofs()), 0.0);
  const int nodal = first_bubble_node(space);
  for (int n = 0; n < nodal; ++n)
    coeffs[static_cast<size_t>(n)] = f(space.node_coords[n], t);
  return coeffs;
}

std::vector<double> interpolate(const Space& space, const VectorFn& f,
                                double t) {
  if (space.components != 2)
    throw SpaceError("vector interpolate needs a vector space");
  std::vector<double> coeffs(static_cast<size_t>(space.n_dofs()), 0.0);
  const int nodal = first_bubble_node(space);
  for (int n = 0; n < nodal; ++n) {
    const Vec2 v = f(space.node_coords[n], t);
    coeffs[static_cast<size_t>(space.dof(n, 0))] = v.x;
    coeffs[static_cast<size_t>(space.dof(n, 1))] = v.y;
  }
  return coeffs;
}

// ============================================================================
// L2 projection
// ============================================================================

namespace {

// Assembles the target mass matrix and solves M x = b for the supplied
// right-hand-side builder.  The builder receives the local cell index, the
// physical and reference quadrature points, the quadrature weight (including
// the Jacobian), and the evaluated target basis.
template <typename RhsAccum>
std::vector<double> mass_solve(const Space& target, int quad_degree,
                               RhsAccum&& accumulate) {
  const Mesh& mesh = *target.mesh;
  const int npc = target.nodes_per_cell();
  const int comps = target.components;
  const QuadRule rule = quadrature(QuadDomain::triangle, quad_degree);

  std::vector<Triplet> triplets;
  std::vector<double> rhs(static_cast<size_t>(target.n_dofs()), 0.0);
  for (size_t lc = 0; lc < target.cells.size(); ++lc) {
    const int c = target.cells[lc];
    const auto& cv = mesh.cells[c];
    const AffineMap map =
        affine_map(mesh.vertices[cv[0]], mesh.vertices[cv[1]],
                   mesh.vertices[cv[2]]);
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const BasisEval basis = eval_basis(target.kind, rule.points[q]);
      const double w = rule.weights[q] * map.det;
      const Vec2 x = map.apply(rule.points[q]);
      for (int a = 0; a < npc; ++a) {
        for (int b = 0; b < npc; ++b) {
          const double m = w * basis.value[a] * basis.value[b];
          for (int comp = 0; comp < comps; ++comp)
            triplets.push_back(
                {target.dof(target.cell_nodes[lc][a], comp),
                 target.dof(target.cell_nodes[lc][b], comp), m});
        }
      }
      accumulate(static_cast<int>(lc), x, rule.points[q], w, basis, rhs);
    }
  }

  SparseMatrix m = SparseMatrix::from_triplets(target.n_dofs(),
                                               target.n_dofs(), std::move(triplets));
  std::vector<double> x = solve_direct(m, rhs);

  // tighter residual contract than the general solver
  const std::vector<double> ax = m.apply(x);
  double rnorm = 0.0, bnorm = 0.0;
  for (size_t i = 0; i < rhs.size(); ++i) {
    rnorm += (ax[i] - rhs[i]) * (ax[i] - rhs[i]);
    bnorm += rhs[i] * rhs[i];
  }
  if (bnorm > 0.0 && std::sqrt(rnorm) > 1e-12 * std::sqrt(bnorm))
    throw SolverFailure("l2_project residual exceeds 1e-12");
  return x;
}

}  // namespace

std::vector<double> l2_project(const std::vector<double>& source_coeffs,
                               const Space& source, const Space& target) {
  if (source.mesh != target.mesh)
    throw SpaceError("l2_project requires spaces over the same mesh");
  if (source.components != target.components)
    throw SpaceError("l2_project requires matching component counts");
  if (source_coeffs.size() != static_cast<size_t>(source.n_dofs()))
    throw SpaceError("source coefficient vector has the wrong length");
  for (int c : target.cells)
    if (source.cell_local[c] < 0)
      throw SpaceError("source space does not cover the target cells");

  const int degree = std::min(
      6, element_degree(source.kind) + element_degree(target.kind));
  const int comps = target.components;
  const int src_npc = source.nodes_per_cell();
  return mass_solve(
      target, degree,
      [&](int lc, const Vec2&, const Vec2& ref, double w,
          const BasisEval& basis, std::vector<double>& rhs) {
        const int src_lc = source.cell_local[target.cells[lc]];
        const BasisEval src_basis = eval_basis(source.kind, ref);
        for (int comp = 0; comp < comps; ++comp) {
          double val = 0.0;
          for (int a = 0; a < src_npc; ++a)
            val += source_coeffs[static_cast<size_t>(
                       source.dof(source.cell_nodes[src_lc][a], comp))] *
                   src_basis.value[a];
          for (int b = 0; b < target.nodes_per_cell(); ++b)
            rhs[static_cast<size_t>(
                target.dof(target.cell_nodes[lc][b], comp))] +=
                w * val * basis.value[b];
        }
      });
}

std::vector<double> l2_project(const ScalarFn& f, double t,
                               const Space& target) {
  if (target.components != 1)
    throw SpaceError("scalar l2_project needs a scalar space");
  return mass_solve(
      target, 6,
      [&](int lc, const Vec2& x, const Vec2&, double w,
          const BasisEval& basis, std::vector<double>& rhs) {
        const double val = f(x, t);
        for (int b = 0; b < target.nodes_per_cell(); ++b)
          rhs[static_cast<size_t>(target.cell_nodes[lc][b])] +=
              w * val * basis.value[b];
      });
}

std::vector<double> l2_project(const VectorFn& f, double t,
                               const Space& target) {
  if (target.components != 2)
    throw SpaceError("vector l2_project needs a vector space");
  return mass_solve(
      target, 6,
      [&](int lc, const Vec2& x, const Vec2&, double w,
          const BasisEval& basis, std::vector<double>& rhs) {
        const Vec2 val = f(x, t);
        for (int b = 0; b < target.nodes_per_cell(); ++b) {
          const int node = target.cell_nodes[lc][b];
          rhs[static_cast<size_t>(target.dof(node, 0))] +=
              w * val.x * basis.value[b];
          rhs[static_cast<size_t>(target.dof(node, 1))] +=
              w * val.y * basis.value[b];
        }
      });
}

}  // namespace bstok
