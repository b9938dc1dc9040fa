#include <doctest.h>

#include "oracles.hpp"
#include "rehabllm/errors.hpp"
#include "rehabllm/geometry.hpp"

using namespace rehab;
using rehab::testing::check_geometry;

TEST_CASE("geometry primitives agree with long double oracles") {
  const auto r = check_geometry(2000, 7);
  INFO(r.detail);
  CHECK(r.ok);
  CHECK(r.cases >= 4 * 2000);
  CHECK(r.seconds < 5.0);
}

TEST_CASE("joint angle on hand-built configurations") {
  CHECK(joint_angle({1, 0, 0}, {0, 0, 0}, {0, 1, 0}) == doctest::Approx(90.0).epsilon(1e-12));
  CHECK(joint_angle({1, 0, 0}, {0, 0, 0}, {-1, 0, 0}) == doctest::Approx(180.0).epsilon(1e-12));
  CHECK(joint_angle({1, 0, 0}, {0, 0, 0}, {2, 0, 0}) == doctest::Approx(0.0));
  CHECK(joint_angle({1, 1, 0}, {0, 0, 0}, {1, 0, 0}) == doctest::Approx(45.0).epsilon(1e-12));
}

TEST_CASE("angles stay accurate next to a straight limb") {
  // 1e-8 rad off straight; acos of a cosine would lose this entirely.
  const double a = joint_angle({1, 0, 0}, {0, 0, 0}, {-1, 1e-8, 0});
  CHECK(180.0 - a == doctest::Approx(rad_to_deg(1e-8)).epsilon(1e-6));
  const double b = angle_between({1, 0, 0}, {1, 1e-9, 0});
  CHECK(b == doctest::Approx(rad_to_deg(1e-9)).epsilon(1e-6));
}

TEST_CASE("degenerate joint angle reports the problem") {
  CHECK_THROWS_AS(joint_angle({0, 0, 0}, {0, 0, 0}, {1, 0, 0}), DegenerateGeometry);
  CHECK_THROWS_AS(joint_angle({1, 0, 0}, {0, 0, 0}, {1e-12, 0, 0}), DegenerateGeometry);
}

TEST_CASE("segment vertical angle and pelvic tilt") {
  const Vec3 up{0, 1, 0};
  CHECK(segment_vertical_angle({0, 0, 0}, {0, 2, 0}, up) == doctest::Approx(0.0));
  CHECK(segment_vertical_angle({0, 0, 0}, {1, 1, 0}, up) == doctest::Approx(45.0));
  CHECK(segment_vertical_angle({0, 0, 0}, {0, -1, 0}, up) == doctest::Approx(180.0));
  CHECK(pelvic_tilt({0.1, 1.0, 0}, {-0.1, 1.0, 0}, up) == doctest::Approx(0.0));
  CHECK(pelvic_tilt({0.1, 1.1, 0}, {-0.1, 0.9, 0}, up) == doctest::Approx(45.0));
  CHECK(pelvic_tilt({0.1, 0.9, 0}, {-0.1, 1.1, 0}, up) == doctest::Approx(-45.0));
}

TEST_CASE("stability range") {
  const std::vector<double> s{3.0, -1.0, 2.5};
  CHECK(stability_range(s) == 4.0);
  const std::vector<double> one{1.0};
  CHECK_THROWS_AS(stability_range(one), RangeError);
}

TEST_CASE("plane through collinear points is rejected") {
  CHECK_THROWS_AS(Plane::through({0, 0, 0}, {1, 1, 1}, {2, 2, 2}), DegenerateGeometry);
  const Plane p = Plane::through({0, 0, 0}, {1, 0, 0}, {0, 1, 0});
  CHECK(p.distance({5, -3, 2}) == doctest::Approx(2.0));
}

TEST_CASE("horizontal distance ignores height") {
  CHECK(horizontal_distance({0, 0, 0}, {3, 10, 4}, {0, 1, 0}) == doctest::Approx(5.0));
  CHECK(horizontal_distance({0, 0, 0}, {3, 4, 10}, {0, 0, 1}) == doctest::Approx(5.0));
}
