#include "rehabllm/geometry.hpp"

#include <algorithm>

#include "rehabllm/errors.hpp"

namespace rehab {

double angle_between(Vec3 u, Vec3 v) {
  const double s = norm(cross(u, v));
  const double c = dot(u, v);
  return rad_to_deg(std::atan2(s, c));
}

double joint_angle(Vec3 a, Vec3 b, Vec3 c) {
  const Vec3 ba = a - b;
  const Vec3 bc = c - b;
  if (norm(ba) <= kDegeneracyEpsilon || norm(bc) <= kDegeneracyEpsilon) {
    throw DegenerateGeometry("joint_angle: segment shorter than epsilon");
  }
  return angle_between(ba, bc);
}

double segment_vertical_angle(Vec3 base, Vec3 tip, Vec3 up) {
  const Vec3 seg = tip - base;
  if (norm(seg) <= kDegeneracyEpsilon) {
    throw DegenerateGeometry("segment_vertical_angle: segment shorter than epsilon");
  }
  return angle_between(seg, up);
}

double pelvic_tilt(Vec3 left_hip, Vec3 right_hip, Vec3 up) {
  const Vec3 line = left_hip - right_hip;
  if (norm(line) <= kDegeneracyEpsilon) {
    throw DegenerateGeometry("pelvic_tilt: coincident hips");
  }
  const double rise = dot(line, up);
  const double run = norm(project_onto_plane(line, up));
  return rad_to_deg(std::atan2(rise, run));
}

double stability_range(std::span<const double> series) {
  if (series.size() < 2) {
    throw RangeError("stability_range: series needs at least two samples");
  }
  const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
  return *hi - *lo;
}

Plane Plane::through(Vec3 p0, Vec3 p1, Vec3 p2) {
  const Vec3 n = cross(p1 - p0, p2 - p0);
  const double len = norm(n);
  // The cross product of two edges scales with their lengths, so compare
  // against a squared-length threshold.
  if (len <= kDegeneracyEpsilon * kDegeneracyEpsilon ||
      len <= kDegeneracyEpsilon * std::max(norm(p1 - p0), norm(p2 - p0))) {
    throw DegenerateGeometry("plane_deviation: collinear plane points");
  }
  const Vec3 unit = (1.0 / len) * n;
  return Plane{unit, dot(unit, p0)};
}

void plane_deviation(std::span<const Vec3> track, Vec3 p0, Vec3 p1, Vec3 p2, std::span<double> out) {
  const Plane plane = Plane::through(p0, p1, p2);
  for (std::size_t i = 0; i < track.size(); ++i) {
    out[i] = plane.distance(track[i]);
  }
}

double horizontal_distance(Vec3 a, Vec3 b, Vec3 up) {
  return norm(project_onto_plane(a - b, up));
}

}  // namespace rehab
