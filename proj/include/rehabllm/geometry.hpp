#pragma once

#include <cmath>
#include <span>

namespace rehab {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Vec3 operator*(double s, Vec3 v) { return {s * v.x, s * v.y, s * v.z}; }
  friend constexpr Vec3 operator*(Vec3 v, double s) { return s * v; }
  friend constexpr bool operator==(Vec3, Vec3) = default;
};

constexpr double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

constexpr Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(Vec3 v) { return std::hypot(v.x, v.y, v.z); }

// Segments shorter than this (in data units) are treated as degenerate.
inline constexpr double kDegeneracyEpsilon = 1e-9;

inline constexpr double kPi = 3.14159265358979323846;

inline double rad_to_deg(double rad) { return rad * (180.0 / kPi); }

/// Unsigned angle between two non-zero vectors, in degrees in [0, 180].
/// Uses atan2(|u x v|, u . v), which stays accurate near 0 and 180 degrees.
double angle_between(Vec3 u, Vec3 v);

/// Angle at vertex `b` between rays b->a and b->c, degrees in [0, 180].
/// Throws DegenerateGeometry when either ray is not longer than epsilon.
double joint_angle(Vec3 a, Vec3 b, Vec3 c);

/// Angle between the segment base->tip and the world up axis, in [0, 180].
double segment_vertical_angle(Vec3 base, Vec3 tip, Vec3 up);

/// Signed angle of the hip line against the horizontal plane, in [-90, 90].
/// Positive when the left hip sits higher along `up`.
double pelvic_tilt(Vec3 left_hip, Vec3 right_hip, Vec3 up);

/// max(series) - min(series). Requires at least two samples.
double stability_range(std::span<const double> series);

/// A plane stored as unit normal n and offset d, with n . p = d on the plane.
struct Plane {
  Vec3 normal;
  double offset = 0.0;

  static Plane through(Vec3 p0, Vec3 p1, Vec3 p2);

  double distance(Vec3 p) const { return std::abs(dot(normal, p) - offset); }
};

/// Unsigned per-frame distance of `track` from the plane fixed by the three
/// anchor points. `out` must have the same length as `track`.
void plane_deviation(std::span<const Vec3> track, Vec3 p0, Vec3 p1, Vec3 p2, std::span<double> out);

/// Distance between a and b after projecting both onto the horizontal plane.
double horizontal_distance(Vec3 a, Vec3 b, Vec3 up);

/// Rejects the component of v along the unit normal n.
inline Vec3 project_onto_plane(Vec3 v, Vec3 n) { return v - dot(v, n) * n; }

}  // namespace rehab
