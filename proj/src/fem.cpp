#include "biotstokes/fem.hpp"

namespace bstok {

int dofs_per_cell(ElementKind kind) {
  switch (kind) {
    case ElementKind::p1: return 3;
    case ElementKind::p2: return 6;
    case ElementKind::p1_bubble: return 4;
  }
  throw FemError("unknown element kind");
}

int element_degree(ElementKind kind) {
  switch (kind) {
    case ElementKind::p1: return 1;
    case ElementKind::p2: return 2;
    case ElementKind::p1_bubble: return 3;
  }
  throw FemError("unknown element kind");
}

// ============================================================================
// Quadrature
// ============================================================================

namespace {

void push_group3(QuadRule& r, double a, double w) {
  r.points.push_back({a, a});
  r.points.push_back({1.0 - 2.0 * a, a});
  r.points.push_back({a, 1.0 - 2.0 * a});
  for (int i = 0; i < 3; ++i) r.weights.push_back(w);
}

void push_group6(QuadRule& r, double a, double b, double w) {
  const double c = 1.0 - a - b;
  r.points.push_back({a, b});
  r.points.push_back({b, a});
  r.points.push_back({a, c});
  r.points.push_back({c, a});
  r.points.push_back({b, c});
  r.points.push_back({c, b});
  for (int i = 0; i < 6; ++i) r.weights.push_back(w);
}

QuadRule triangle_rule(int degree) {
  // Positive-weight symmetric rules; the listed weights are normalized to a
  // unit sum and scaled by the reference area 1/2 below.
  QuadRule r;
  switch (degree) {
    case 1:
      r.points.push_back({1.0 / 3.0, 1.0 / 3.0});
      r.weights.push_back(1.0);
      break;
    case 2:
      push_group3(r, 1.0 / 6.0, 1.0 / 3.0);
      break;
    case 3:
    case 4:
      push_group3(r, 0.445948490915965, 0.223381589678011);
      push_group3(r, 0.091576213509771, 0.109951743655322);
      break;
    case 5:
      r.points.push_back({1.0 / 3.0, 1.0 / 3.0});
      r.weights.push_back(0.225);
      push_group3(r, 0.470142064105115, 0.132394152788506);
      push_group3(r, 0.101286507323456, 0.125939180544827);
      break;
    case 6:
      push_group3(r, 0.063089014491502, 0.050844906370207);
      push_group3(r, 0.249286745170910, 0.116786275726379);
      push_group6(r, 0.310352451033785, 0.053145049844816, 0.082851075618374);
      break;
    default:
      throw FemError("triangle quadrature degree must be in [1,6]");
  }
  for (double& w : r.weights) w *= 0.5;
  return r;
}

QuadRule edge_rule(int degree) {
  QuadRule r;
  auto sym = [&r](double offset, double w) {
    r.points.push_back({0.5 - offset, 0.0});
    r.points.push_back({0.5 + offset, 0.0});
    r.weights.push_back(w);
    r.weights.push_back(w);
  };
  switch (degree) {
    case 1:
      r.points.push_back({0.5, 0.0});
      r.weights.push_back(1.0);
      break;
    case 2:
    case 3:
      sym(0.5 / std::sqrt(3.0), 0.5);
      break;
    case 4:
    case 5:
      r.points.push_back({0.5, 0.0});
      r.weights.push_back(4.0 / 9.0);
      sym(0.5 * std::sqrt(0.6), 5.0 / 18.0);
      break;
    case 6:
      sym(0.5 * 0.3399810435848563, 0.5 * 0.6521451548625461);
      sym(0.5 * 0.8611363115940526, 0.5 * 0.3478548451374538);
      break;
    default:
      throw FemError("edge quadrature degree must be in [1,6]");
  }
  return r;
}

}  // namespace

QuadRule quadrature(QuadDomain domain, int degree) {
  return domain == QuadDomain::triangle ? triangle_rule(degree)
                                        : edge_rule(degree);
}

// ============================================================================
// Reference bases
// ============================================================================

BasisEval eval_basis(ElementKind kind, Vec2 p) {
  const double l0 = 1.0 - p.x - p.y;
  const double l1 = p.x;
  const double l2 = p.y;
  const Vec2 g0{-1.0, -1.0};
  const Vec2 g1{1.0, 0.0};
  const Vec2 g2{0.0, 1.0};

  BasisEval e;
  switch (kind) {
    case ElementKind::p1:
      e.n = 3;
      e.value = {l0, l1, l2};
      e.grad = {g0, g1, g2};
      break;
    case ElementKind::p2:
      e.n = 6;
      e.value = {l0 * (2.0 * l0 - 1.0), l1 * (2.0 * l1 - 1.0),
                 l2 * (2.0 * l2 - 1.0), 4.0 * l1 * l2, 4.0 * l2 * l0,
                 4.0 * l0 * l1};
      e.grad = {(4.0 * l0 - 1.0) * g0,
                (4.0 * l1 - 1.0) * g1,
                (4.0 * l2 - 1.0) * g2,
                4.0 * (l2 * g1 + l1 * g2),
                4.0 * (l0 * g2 + l2 * g0),
                4.0 * (l1 * g0 + l0 * g1)};
      break;
    case ElementKind::p1_bubble:
      e.n = 4;
      e.value = {l0, l1, l2, 27.0 * l0 * l1 * l2};
      e.grad = {g0, g1, g2,
                27.0 * (l1 * l2 * g0 + l0 * l2 * g1 + l0 * l1 * g2)};
      break;
  }
  return e;
}

// ============================================================================
// Affine maps
// ============================================================================

AffineMap affine_map(Vec2 v0, Vec2 v1, Vec2 v2) {
  AffineMap m;
  m.j[0][0] = v1.x - v0.x;
  m.j[0][1] = v2.x - v0.x;
  m.j[1][0] = v1.y - v0.y;
  m.j[1][1] = v2.y - v0.y;
  m.b = v0;
  m.det = m.j[0][0] * m.j[1][1] - m.j[0][1] * m.j[1][0];
  if (m.det == 0.0) throw FemError("degenerate triangle (zero Jacobian)");
  const double inv_det = 1.0 / m.det;
  // inverse transpose of J
  m.jinv_t[0][0] = m.j[1][1] * inv_det;
  m.jinv_t[0][1] = -m.j[1][0] * inv_det;
  m.jinv_t[1][0] = -m.j[0][1] * inv_det;
  m.jinv_t[1][1] = m.j[0][0] * inv_det;
  return m;
}

BasisEval push_gradients(const AffineMap& m, BasisEval e) {
  for (int i = 0; i < e.n; ++i) e.grad[i] = m.push_gradient(e.grad[i]);
  return e;
}

}  // namespace bstok
