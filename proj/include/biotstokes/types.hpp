#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

namespace bstok {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::sqrt(dot(a, a)); }

/// Rotation by -90 degrees: (x, y) -> (y, -x).  Used to derive the interface
/// tangent from the normal; the sign choice cancels in all BJS products.
inline Vec2 rot_minus90(Vec2 a) { return {a.y, -a.x}; }

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
  bool valid() const { return hi > lo; }
};

/// Scalar field of (point, time).
using ScalarFn = std::function<double(Vec2, double)>;
/// Vector field of (point, time).
using VectorFn = std::function<Vec2(Vec2, double)>;

}  // namespace bstok
