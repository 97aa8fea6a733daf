#include "biotstokes/fields.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "biotstokes/linalg.hpp"
#include "biotstokes/spaces.hpp"

namespace bstok {

// ============================================================================
// Portable random stream
// ============================================================================

std::uint64_t SplitMix64::next() {
  state_ += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double SplitMix64::uniform() {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

double SplitMix64::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

// ============================================================================
// Kind names
// ============================================================================

KappaKind kappa_kind_from(const std::string& name) {
  if (name == "constant") return KappaKind::constant;
  if (name == "laplace_gradient") return KappaKind::laplace_gradient;
  if (name == "log_uniform_random") return KappaKind::log_uniform_random;
  if (name == "random_spots") return KappaKind::random_spots;
  if (name == "cell_csv") return KappaKind::cell_csv;
  throw FieldError("unknown permeability kind \"" + name + "\"");
}

const char* kappa_kind_name(KappaKind kind) {
  switch (kind) {
    case KappaKind::constant: return "constant";
    case KappaKind::laplace_gradient: return "laplace_gradient";
    case KappaKind::log_uniform_random: return "log_uniform_random";
    case KappaKind::random_spots: return "random_spots";
    case KappaKind::cell_csv: return "cell_csv";
  }
  return "?";
}

namespace {

struct PorousCells {
  std::vector<int> cells;  // ascending global id
  std::vector<double> areas;
  double total_area = 0.0;
};

PorousCells porous_cells(const Mesh& mesh) {
  PorousCells out;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    if (mesh.cell_tag[static_cast<size_t>(c)] != subdomain::porous) continue;
    out.cells.push_back(c);
    out.areas.push_back(mesh.cell_area(c));
    out.total_area += out.areas.back();
  }
  if (out.cells.empty()) {
    throw FieldError("mesh has no porous cells to carry a permeability field");
  }
  return out;
}

double area_mean(const PorousCells& pc, const std::vector<double>& by_cell) {
  double acc = 0.0;
  for (size_t i = 0; i < pc.cells.size(); ++i) {
    acc += pc.areas[i] * by_cell[static_cast<size_t>(pc.cells[i])];
  }
  return acc / pc.total_area;
}

void require_positive(double v, const char* what) {
  if (!(v > 0.0)) {
    throw FieldError(std::string(what) + " must be positive");
  }
}

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Harmonic blend: P1 Laplace over the porous subdomain with kappa_max on the
// interface and kappa_min on the marked boundary, sampled per cell as the
// vertex average.
std::vector<double> gradient_values(const Mesh& mesh, const KappaSpec& spec,
                                    const PorousCells& pc) {
  require_positive(spec.kappa_max, "kappa max");
  require_positive(spec.kappa_min, "kappa min");
  if (mesh.interface.empty()) {
    throw FieldError("laplace_gradient needs interface facets");
  }
  const Space p1 = build_space(mesh, subdomain::porous, ElementKind::p1, 1);

  std::unordered_map<int, double> fixed;
  bool saw_marker = false;
  for (const BoundaryFacet& f : mesh.boundary) {
    if (f.marker != spec.min_marker) continue;
    if (mesh.cell_tag[static_cast<size_t>(f.cell)] != subdomain::porous) {
      continue;
    }
    saw_marker = true;
    fixed[p1.vertex_node[static_cast<size_t>(f.v0)]] = spec.kappa_min;
    fixed[p1.vertex_node[static_cast<size_t>(f.v1)]] = spec.kappa_min;
  }
  if (!saw_marker) {
    throw FieldError("laplace_gradient found no porous facets with marker " +
                     std::to_string(spec.min_marker));
  }
  for (const InterfaceFacet& f : mesh.interface) {
    fixed[p1.vertex_node[static_cast<size_t>(f.v0)]] = spec.kappa_max;
    fixed[p1.vertex_node[static_cast<size_t>(f.v1)]] = spec.kappa_max;
  }

  const QuadRule rule = quadrature(QuadDomain::triangle, 1);
  std::vector<Triplet> triplets;
  for (size_t lc = 0; lc < p1.cells.size(); ++lc) {
    const auto& cv = mesh.cells[static_cast<size_t>(p1.cells[lc])];
    const AffineMap map = affine_map(mesh.vertices[cv[0]], mesh.vertices[cv[1]],
                                     mesh.vertices[cv[2]]);
    const auto& nodes = p1.cell_nodes[lc];
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const BasisEval basis =
          push_gradients(map, eval_basis(ElementKind::p1, rule.points[q]));
      const double wq = rule.weights[q] * std::abs(map.det);
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
          triplets.push_back(
              {nodes[a], nodes[b], wq * dot(basis.grad[a], basis.grad[b])});
        }
      }
    }
  }
  SparseMatrix laplace =
      SparseMatrix::from_triplets(p1.n_nodes, p1.n_nodes, std::move(triplets));
  std::vector<int> dofs;
  dofs.reserve(fixed.size());
  for (const auto& [node, value] : fixed) dofs.push_back(node);
  std::sort(dofs.begin(), dofs.end());
  std::vector<double> values(dofs.size());
  for (size_t i = 0; i < dofs.size(); ++i) values[i] = fixed.at(dofs[i]);

  const DirichletOp op = eliminate_dirichlet(laplace, dofs);
  std::vector<double> rhs(static_cast<size_t>(p1.n_nodes), 0.0);
  op.correct_rhs(rhs, values);
  const std::vector<double> nodal = solve_direct(laplace, rhs);

  const double lo = std::min(spec.kappa_min, spec.kappa_max);
  const double hi = std::max(spec.kappa_min, spec.kappa_max);
  std::vector<double> by_cell(static_cast<size_t>(mesh.num_cells()), 0.0);
  for (size_t lc = 0; lc < pc.cells.size(); ++lc) {
    const int gc = pc.cells[lc];
    const auto& cv = mesh.cells[static_cast<size_t>(gc)];
    double v = 0.0;
    for (int k = 0; k < 3; ++k) {
      v += nodal[static_cast<size_t>(
          p1.vertex_node[static_cast<size_t>(cv[static_cast<size_t>(k)])])];
    }
    by_cell[static_cast<size_t>(gc)] = std::clamp(v / 3.0, lo, hi);
  }
  return by_cell;
}

std::vector<double> csv_values(const Mesh& mesh, const KappaSpec& spec,
                               const PorousCells& pc) {
  std::ifstream in(spec.csv_path);
  if (!in) {
    throw FieldError("cannot open permeability csv \"" + spec.csv_path + "\"");
  }
  std::vector<double> rows;
  std::string line;
  while (std::getline(in, line)) {
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::string cleaned = line;
    std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
    std::istringstream ls(cleaned);
    double first;
    if (ls >> first) {
      rows.push_back(first);  // later columns (porosity etc.) are ignored here
    }
  }
  if (rows.size() != pc.cells.size()) {
    throw FieldError("permeability csv has " + std::to_string(rows.size()) +
                     " rows but the mesh has " +
                     std::to_string(pc.cells.size()) + " porous cells");
  }
  std::vector<double> by_cell(static_cast<size_t>(mesh.num_cells()), 0.0);
  for (size_t i = 0; i < pc.cells.size(); ++i) {
    if (!(rows[i] > 0.0)) {
      throw FieldError("permeability csv row " + std::to_string(i + 1) +
                       " is not positive");
    }
    by_cell[static_cast<size_t>(pc.cells[i])] = rows[i];
  }
  return by_cell;
}

}  // namespace

// ============================================================================
// Field generation
// ============================================================================

PermeabilityField permeability_field(const Mesh& mesh, const KappaSpec& spec) {
  const PorousCells pc = porous_cells(mesh);
  std::vector<double> by_cell(static_cast<size_t>(mesh.num_cells()), 0.0);
  double clamp_lo = 0.0;
  double clamp_hi = 0.0;
  bool clamped = false;

  switch (spec.kind) {
    case KappaKind::constant: {
      require_positive(spec.value, "constant permeability");
      std::fill(by_cell.begin(), by_cell.end(), spec.value);
      break;
    }
    case KappaKind::laplace_gradient: {
      by_cell = gradient_values(mesh, spec, pc);
      clamp_lo = std::min(spec.kappa_min, spec.kappa_max);
      clamp_hi = std::max(spec.kappa_min, spec.kappa_max);
      clamped = true;
      break;
    }
    case KappaKind::log_uniform_random: {
      require_positive(spec.kappa_min, "kappa min");
      require_positive(spec.kappa_max, "kappa max");
      if (spec.kappa_max <= spec.kappa_min) {
        throw FieldError("kappa max must exceed kappa min");
      }
      SplitMix64 rng(spec.seed);
      const double lo = std::log(spec.kappa_min);
      const double hi = std::log(spec.kappa_max);
      for (int gc : pc.cells) {
        by_cell[static_cast<size_t>(gc)] = std::exp(rng.uniform(lo, hi));
      }
      clamp_lo = spec.kappa_min;
      clamp_hi = spec.kappa_max;
      clamped = true;
      break;
    }
    case KappaKind::random_spots: {
      require_positive(spec.kappa_min, "kappa min");
      require_positive(spec.kappa_max, "kappa max");
      if (spec.spots <= 0 || !(spec.spot_radius > 0.0)) {
        throw FieldError("random_spots needs a spot count and radius");
      }
      for (int gc : pc.cells) {
        by_cell[static_cast<size_t>(gc)] = spec.kappa_max;
      }
      Vec2 lo{1e300, 1e300}, hi{-1e300, -1e300};
      for (int gc : pc.cells) {
        const auto& cv = mesh.cells[static_cast<size_t>(gc)];
        for (int k = 0; k < 3; ++k) {
          const Vec2 p = mesh.vertices[static_cast<size_t>(cv[static_cast<size_t>(k)])];
          lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
          hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
        }
      }
      SplitMix64 rng(spec.seed);
      for (int s = 0; s < spec.spots; ++s) {
        const Vec2 center{rng.uniform(lo.x, hi.x), rng.uniform(lo.y, hi.y)};
        for (int gc : pc.cells) {
          if (norm(mesh.cell_centroid(gc) - center) <= spec.spot_radius) {
            by_cell[static_cast<size_t>(gc)] = spec.kappa_min;
          }
        }
      }
      clamp_lo = spec.kappa_min;
      clamp_hi = spec.kappa_max;
      clamped = true;
      break;
    }
    case KappaKind::cell_csv: {
      by_cell = csv_values(mesh, spec, pc);
      break;
    }
  }

  // the plain constant field is exactly its value; summing areas would only
  // add roundoff to a mean that is value by definition
  double mean = spec.kind == KappaKind::constant ? spec.value
                                                 : area_mean(pc, by_cell);
  if (spec.target_mean) {
    const double target = *spec.target_mean;
    require_positive(target, "target mean");
    if (!clamped) {
      const double factor = target / mean;
      for (int gc : pc.cells) by_cell[static_cast<size_t>(gc)] *= factor;
      mean = area_mean(pc, by_cell);
    } else {
      // mean(factor) = sum area*clamp(factor*v) / area is monotone in the
      // factor and spans (clamp_lo, clamp_hi], so a geometric bisection hits
      // any admissible target; a fixed-point rescale loop can stall when most
      // of the field sits on a clamp bound
      if (target < clamp_lo || target > clamp_hi) {
        throw FieldError("target mean " + fmt_g(target) +
                         " is unreachable under the clamp bounds [" +
                         fmt_g(clamp_lo) + ", " + fmt_g(clamp_hi) + "]");
      }
      const std::vector<double> base = by_cell;
      const auto mean_at = [&](double factor) {
        double acc = 0.0;
        for (size_t i = 0; i < pc.cells.size(); ++i) {
          acc += pc.areas[i] *
                 std::clamp(base[static_cast<size_t>(pc.cells[i])] * factor,
                            clamp_lo, clamp_hi);
        }
        return acc / pc.total_area;
      };
      double f_lo = 1.0, f_hi = 1.0;
      while (mean_at(f_lo) > target && f_lo > 1e-30) f_lo *= 0.25;
      while (mean_at(f_hi) < target && f_hi < 1e30) f_hi *= 4.0;
      for (int it = 0; it < 200; ++it) {
        const double mid = std::sqrt(f_lo * f_hi);
        if (mean_at(mid) < target) {
          f_lo = mid;
        } else {
          f_hi = mid;
        }
      }
      const double factor = std::sqrt(f_lo * f_hi);
      for (int gc : pc.cells) {
        double& v = by_cell[static_cast<size_t>(gc)];
        v = std::clamp(v * factor, clamp_lo, clamp_hi);
      }
      mean = area_mean(pc, by_cell);
      if (std::abs(mean - target) > 1e-3 * target) {
        throw FieldError("target mean " + fmt_g(target) +
                         " is unreachable under the clamp bounds (reached " +
                         fmt_g(mean) + ")");
      }
    }
  }

  // fluid cells carry the mean so adjacent-cell lookups never see zero
  for (int c = 0; c < mesh.num_cells(); ++c) {
    if (mesh.cell_tag[static_cast<size_t>(c)] == subdomain::fluid) {
      by_cell[static_cast<size_t>(c)] = mean;
    }
  }

  PermeabilityField out;
  out.values = std::move(by_cell);
  out.kind = spec.kind;
  out.seed = spec.seed;
  out.mean = mean;
  return out;
}

}  // namespace bstok
