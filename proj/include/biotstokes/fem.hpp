#pragma once

#include <array>
#include <vector>

#include "biotstokes/types.hpp"

namespace bstok {

enum class ElementKind { p1, p2, p1_bubble };

int dofs_per_cell(ElementKind kind);    // 3, 6, 4
int element_degree(ElementKind kind);   // 1, 2, 3 (the bubble is cubic)

enum class QuadDomain { triangle, edge };

/// Quadrature rule on the reference triangle {(0,0),(1,0),(0,1)} or the
/// reference edge [0,1] (points carry the parameter in .x, weights sum to 1).
/// Triangle weights sum to the reference area 1/2.
struct QuadRule {
  std::vector<Vec2> points;
  std::vector<double> weights;
};

/// Rule exact for polynomials of total degree <= degree.  degree in [1, 6].
QuadRule quadrature(QuadDomain domain, int degree);

/// Local basis values and reference gradients at one reference point.
/// Local node order: vertices 0,1,2; P2 appends the midpoints opposite each
/// vertex (node 3 = mid(v1,v2), node 4 = mid(v2,v0), node 5 = mid(v0,v1));
/// P1_BUBBLE appends the cell bubble 27*l0*l1*l2 as node 3.
struct BasisEval {
  std::array<double, 6> value{};
  std::array<Vec2, 6> grad{};
  int n = 0;
};

BasisEval eval_basis(ElementKind kind, Vec2 p);

/// Affine reference-to-physical map x = J*xi + b.
struct AffineMap {
  double j[2][2];
  double jinv_t[2][2];
  Vec2 b;
  double det;  // signed; positive on valid meshes

  Vec2 apply(Vec2 ref) const {
    return {j[0][0] * ref.x + j[0][1] * ref.y + b.x,
            j[1][0] * ref.x + j[1][1] * ref.y + b.y};
  }
  Vec2 pull_back(Vec2 phys) const {
    const Vec2 d = phys - b;
    // inverse of J from the stored inverse transpose
    return {jinv_t[0][0] * d.x + jinv_t[1][0] * d.y,
            jinv_t[0][1] * d.x + jinv_t[1][1] * d.y};
  }
  Vec2 push_gradient(Vec2 g) const {
    return {jinv_t[0][0] * g.x + jinv_t[0][1] * g.y,
            jinv_t[1][0] * g.x + jinv_t[1][1] * g.y};
  }
};

AffineMap affine_map(Vec2 v0, Vec2 v1, Vec2 v2);

/// Copy of e with gradients pushed to physical coordinates.
[[nodiscard]] BasisEval push_gradients(const AffineMap& m, BasisEval e);

struct FemError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace bstok
