#include "doctest.h"

#include "sonarsweep/calibration.hpp"
#include "sonarsweep/errors.hpp"
#include "sonarsweep/geometry.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace sonarsweep;
using doctest::Approx;

namespace {

constexpr double kPi = std::numbers::pi;

Calibration axis_calibration() {
  Calibration c = default_calibration();
  c.intrinsics = {100.0, 100.0, 50.0, 40.0, 101, 81};
  c.extrinsics = RigidTransform(RigidTransform::sonar_to_camera_axes(), Eigen::Vector3d::Zero());
  return c;
}

}  // namespace

TEST_CASE("spherical to cartesian") {
  const auto on_axis = spherical_to_cartesian(2.0, 0.0, 0.0);
  CHECK(on_axis.x() == 0.0);
  CHECK(on_axis.y() == 2.0);
  CHECK(on_axis.z() == 0.0);

  const auto origin = spherical_to_cartesian(0.0, 1.3, -0.4);
  CHECK(origin.v.norm() == 0.0);

  const auto p = spherical_to_cartesian(1.0, kPi / 6.0, 0.0);
  CHECK(p.x() == Approx(0.5).epsilon(1e-15));
  CHECK(p.y() == Approx(std::sqrt(3.0) / 2.0).epsilon(1e-15));
  CHECK(p.z() == 0.0);
}

TEST_CASE("plane hypothesis set") {
  const PlaneHypothesisSet planes(kPi / 4.0, 0.5, 1.05, 48);
  CHECK(planes.size() == 48);
  CHECK(planes.distance(0) == 0.5);
  CHECK(planes.distance(1) / planes.distance(0) == Approx(1.05).epsilon(1e-15));
  // Frozen value of 0.5 * 1.05^47, the last (48th) plane.
  CHECK(planes.distance(47) == Approx(4.952985546162919).epsilon(1e-14));
  for (std::size_t i = 1; i < planes.size(); ++i) {
    CHECK(planes.distance(i) / planes.distance(i - 1) == Approx(1.05).epsilon(1e-13));
  }
  CHECK_THROWS_AS((void)planes.distance(48), std::out_of_range);

  CHECK_THROWS_AS(PlaneHypothesisSet(0.0, 0.5, 1.05, 48), ValidationError);
  CHECK_THROWS_AS(PlaneHypothesisSet(kPi / 2.0, 0.5, 1.05, 48), ValidationError);
  CHECK_THROWS_AS(PlaneHypothesisSet(kPi / 4.0, -0.5, 1.05, 48), ValidationError);
  CHECK_THROWS_AS(PlaneHypothesisSet(kPi / 4.0, 0.5, 1.0, 48), ValidationError);
  CHECK_THROWS_AS(PlaneHypothesisSet(kPi / 4.0, 0.5, 1.05, 1), ValidationError);
}

TEST_CASE("backproject sonar measurement onto a plane") {
  // Set d0 = 1, k = 2 so that plane 0 sits at 1 m and plane 1 at 2 m.
  const PlaneHypothesisSet planes(kPi / 4.0, 1.0, 2.0, 3);

  const auto a = backproject_sonar_to_plane({1.0, 0.0}, planes, 0);
  CHECK(a.x() == 0.0);
  CHECK(a.y() == Approx(1.0));
  CHECK(a.z() == Approx(0.0));

  const auto b = backproject_sonar_to_plane({1.0, 0.0}, planes, 1);
  CHECK(b.x() == 0.0);
  CHECK(b.y() == Approx(1.0));
  CHECK(b.z() == Approx(1.0));

  const auto c = backproject_sonar_to_plane({2.0, kPi / 2.0}, planes, 0);
  CHECK(c.x() == Approx(2.0));
  CHECK(c.y() == Approx(0.0).epsilon(1e-15));
  CHECK(c.z() == Approx(1.0));

  SUBCASE("lies on its plane and round-trips through the polar lookup") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> range(0.1, 5.0), bearing(-0.5, 0.5);
    for (const double alpha : {0.3, kPi / 4.0, 1.2}) {
      const PlaneHypothesisSet set(alpha, 0.5, 1.05, 48);
      for (int n = 0; n < 500; ++n) {
        const SonarPolar polar{range(rng), bearing(rng)};
        const std::size_t i = static_cast<std::size_t>(n) % set.size();
        const auto p = backproject_sonar_to_plane(polar, set, i);
        CHECK(std::abs(set.residual(p, i)) < 1e-12);
        const auto back = cartesian_to_sonar_polar(p);
        CHECK(std::abs(back.range - polar.range) < 1e-12);
        CHECK(std::abs(back.bearing - polar.bearing) < 1e-12);
      }
    }
  }
}

TEST_CASE("cartesian to sonar polar") {
  const auto a = cartesian_to_sonar_polar(SonarPoint(0.0, 1.0, 0.0));
  CHECK(a.range == 1.0);
  CHECK(a.bearing == 0.0);

  const auto b = cartesian_to_sonar_polar(SonarPoint(1.0, 1.0, 5.0));
  CHECK(b.range == Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(b.bearing == Approx(kPi / 4.0).epsilon(1e-15));

  SonarSpec spec = default_calibration().sonar;
  CHECK(cartesian_to_sonar_polar(SonarPoint(0.0, 2.0, 0.0), spec).in_fov);
  CHECK_FALSE(cartesian_to_sonar_polar(SonarPoint(0.0, 6.0, 0.0), spec).in_fov);
  CHECK_FALSE(cartesian_to_sonar_polar(SonarPoint(0.0, 0.05, 0.0), spec).in_fov);
  CHECK_FALSE(cartesian_to_sonar_polar(SonarPoint(2.0, 2.0, 0.0), spec).in_fov);

  CHECK(in_vertical_aperture(SonarPoint(0.0, 2.0, 0.1), spec));
  CHECK_FALSE(in_vertical_aperture(SonarPoint(0.0, 2.0, 0.3), spec));
}

TEST_CASE("rigid transform") {
  CHECK_THROWS_AS(RigidTransform(2.0 * Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero()),
                  ValidationError);
  Eigen::Matrix3d reflect = Eigen::Matrix3d::Identity();
  reflect(0, 0) = -1.0;
  CHECK_THROWS_AS(RigidTransform(reflect, Eigen::Vector3d::Zero()), ValidationError);

  const Calibration c = default_calibration();
  const SonarPoint p(0.3, 2.0, -0.2);
  const auto q = c.extrinsics.to_sonar(c.extrinsics.to_camera(p));
  CHECK((q.v - p.v).norm() < 1e-15);
  const auto id = c.extrinsics.compose(c.extrinsics.inverse());
  CHECK((id.rotation() - Eigen::Matrix3d::Identity()).norm() < 1e-15);
  CHECK(id.translation().norm() < 1e-15);
  // The sonar origin sits 0.15 m to the camera's left (camera is to starboard).
  const auto origin = c.extrinsics.to_camera(SonarPoint(0.0, 0.0, 0.0));
  CHECK(origin.x() == Approx(-0.15));
}

TEST_CASE("3x3 solver") {
  Eigen::Matrix3d a;
  a << 2, 1, 0, 1, 3, 1, 0, 1, 4;
  const Eigen::Vector3d x(1.0, -2.0, 0.5);
  const auto s = solve_3x3(a, a * x);
  REQUIRE(s);
  CHECK((*s - x).norm() < 1e-14);

  Eigen::Matrix3d singular;
  singular << 1, 2, 3, 2, 4, 6, 0, 1, 1;
  CHECK_FALSE(solve_3x3(singular, Eigen::Vector3d::Ones()));
  CHECK_FALSE(solve_3x3(Eigen::Matrix3d::Zero(), Eigen::Vector3d::Ones()));
}

TEST_CASE("ray-plane intersection") {
  SUBCASE("principal point, identity-like extrinsics") {
    const Calibration c = axis_calibration();
    for (std::size_t i : {0u, 10u, 47u}) {
      const auto p = solve_ray_plane(c.intrinsics.cx, c.intrinsics.cy, c.intrinsics,
                                     c.extrinsics, c.planes, i);
      REQUIRE(p);
      // On the optical axis (sonar Y axis) and on plane i: Y = d_i at Z = 0.
      CHECK(std::abs(p->x()) < 1e-12);
      CHECK(std::abs(p->z()) < 1e-12);
      CHECK(p->y() == Approx(c.planes.distance(i)).epsilon(1e-13));
      CHECK(std::abs(c.planes.residual(*p, i)) < 1e-12);
    }
  }

  SUBCASE("matches the bisection oracle, the closed form and reprojects") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    int checked = 0;
    for (int cal = 0; cal < 5; ++cal) {
      const Calibration c = testing::random_calibration(rng);
      for (int n = 0; n < 400; ++n) {
        const double u = unit(rng) * (c.intrinsics.width - 1);
        const double v = unit(rng) * (c.intrinsics.height - 1);
        const auto i = static_cast<std::size_t>(unit(rng) * 48.0) % 48;
        const auto oracle = testing::bisect_ray_plane(u, v, c, i);
        const auto p = solve_ray_plane(u, v, c.intrinsics, c.extrinsics, c.planes, i);
        if (!oracle) continue;
        REQUIRE(p);
        ++checked;
        CHECK((p->v - *oracle).norm() < 1e-9 * std::max(1.0, oracle->norm()));
        CHECK(std::abs(c.planes.residual(*p, i)) < 1e-9);
        const auto px = project_sonar_point(*p, c.intrinsics, c.extrinsics);
        REQUIRE(px);
        CHECK(std::hypot(px->x() - u, px->y() - v) < 1e-6);
        const auto zc = closed_form_camera_depth(u, v, c.planes.distance(i), c.intrinsics,
                                                 c.extrinsics, c.planes.alpha());
        REQUIRE(zc);
        CHECK(std::abs(*zc - c.extrinsics.to_camera(*p).z()) < 1e-9);
      }
    }
    CHECK(checked > 1000);
  }

  SUBCASE("ray parallel to the plane is singular") {
    Calibration c = axis_calibration();
    // Pixel whose ray has zero component along the plane normal: with alpha =
    // 45 deg the ray (0, 1, -1) in sonar axes runs along the plane.
    const double v = c.intrinsics.cy + c.intrinsics.fy * 1.0;
    CHECK_FALSE(solve_ray_plane(c.intrinsics.cx, v, c.intrinsics, c.extrinsics, c.planes, 3));
    CHECK_FALSE(closed_form_camera_depth(c.intrinsics.cx, v, 1.0, c.intrinsics, c.extrinsics,
                                         c.planes.alpha()));
  }
}

TEST_CASE("closed-form camera depth") {
  const Calibration c = axis_calibration();
  const double alpha = kPi / 4.0;
  const auto z1 =
      closed_form_camera_depth(c.intrinsics.cx, c.intrinsics.cy, 1.0, c.intrinsics,
                               c.extrinsics, alpha);
  REQUIRE(z1);
  CHECK(*z1 == Approx(1.0).epsilon(1e-15));

  // Zero translation: depth is homogeneous in the plane distance.
  for (double u : {3.0, 50.0, 90.0}) {
    const auto a = closed_form_camera_depth(u, 10.0, 1.3, c.intrinsics, c.extrinsics, alpha);
    const auto b = closed_form_camera_depth(u, 10.0, 2.6, c.intrinsics, c.extrinsics, alpha);
    REQUIRE(a);
    REQUIRE(b);
    CHECK(*b == Approx(2.0 * *a).epsilon(1e-14));
  }
}

TEST_CASE("ray depth to euclidean distance") {
  const CameraIntrinsics k{100.0, 100.0, 0.0, 0.0, 200, 200};
  CHECK(ray_depth_to_euclidean(0.0, 0.0, 2.5, k) == 2.5);
  CHECK(ray_depth_to_euclidean(0.0, 0.0, -2.5, k) == 2.5);
  CHECK(ray_depth_to_euclidean(100.0, 0.0, 1.0, k) == Approx(std::sqrt(2.0)).epsilon(1e-15));
  for (double u : {10.0, 60.0, 199.0}) {
    CHECK(ray_depth_to_euclidean(u, 37.0, 1.7, k) >= 1.7);
  }
}

TEST_CASE("intrinsics and sonar validation") {
  CHECK_THROWS_AS((CameraIntrinsics{0.0, 100.0, 10.0, 10.0, 20, 20}.validate()), ValidationError);
  CHECK_THROWS_AS((CameraIntrinsics{100.0, 100.0, 30.0, 10.0, 20, 20}.validate()),
                  ValidationError);
  CHECK_NOTHROW(default_calibration().validate());
  SonarSpec s = default_calibration().sonar;
  s.range_min = 6.0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = default_calibration().sonar;
  s.range_bins = 1;
  CHECK_THROWS_AS(s.validate(), ValidationError);

  const SonarSpec a = default_calibration().sonar;
  SonarSpec b = a;
  b.bearing_fov += 1e-12;
  CHECK(approx_equal(a, b));
  b.bearing_fov += 1e-6;
  CHECK_FALSE(approx_equal(a, b));
}

TEST_CASE("sonar bin coordinates") {
  const SonarSpec s = default_calibration().sonar;
  CHECK(s.range_to_bin(s.bin_center_range(17)) == Approx(17.0));
  CHECK(s.bearing_to_bin(s.bin_center_bearing(90)) == Approx(90.0));
  CHECK(s.range_to_bin(s.range_min) == Approx(-0.5));
  CHECK(s.bearing_to_bin(0.5 * s.bearing_fov) == Approx(s.bearing_bins - 0.5));
}

TEST_CASE("warp grid") {
  const Calibration c = default_calibration();

  SUBCASE("mid-range plane is mostly valid over the frustum footprint") {
    const WarpSlice slice = build_warp_slice(c.intrinsics, c.extrinsics, c.sonar, c.planes, 24);
    std::size_t valid = 0, footprint = 0;
    for (int v = 0; v < c.intrinsics.height; ++v) {
      for (int u = 0; u < c.intrinsics.width; ++u) {
        const auto& e = slice.entries[static_cast<std::size_t>(v) * c.intrinsics.width + u];
        if (!e.valid) continue;
        ++valid;
        CHECK(std::abs(c.planes.residual(e.point, 24)) < 1e-9);
      }
    }
    // Pixels looking into the horizontal sonar fan: bearing within the FOV.
    for (int v = 0; v < c.intrinsics.height; ++v) {
      for (int u = 0; u < c.intrinsics.width; ++u) {
        const auto p = solve_ray_plane(u, v, c.intrinsics, c.extrinsics, c.planes, 24);
        if (!p || c.extrinsics.to_camera(*p).z() <= 0.0) continue;
        const auto l = cartesian_to_sonar_polar(*p);
        if (std::abs(l.bearing) <= 0.5 * c.sonar.bearing_fov && l.range <= c.sonar.range_max &&
            l.range >= c.sonar.range_min) {
          ++footprint;
        }
      }
    }
    REQUIRE(footprint > 0);
    CHECK(static_cast<double>(valid) >= 0.9 * static_cast<double>(footprint));
    CHECK(valid > 10000);
  }

  SUBCASE("zero-size image gives an empty grid") {
    CameraIntrinsics k = c.intrinsics;
    k.width = 0;
    k.height = 0;
    const WarpGrid grid = build_warp_grid(k, c.extrinsics, c.sonar, c.planes);
    CHECK(grid.planes() == 48);
    CHECK(grid.slice(0).entries.empty());
    CHECK(grid.valid_count(0) == 0);
  }

  SUBCASE("shrinking the bearing FOV never validates an entry") {
    SonarSpec narrow = c.sonar;
    narrow.bearing_fov *= 0.5;
    for (std::size_t i : {5u, 30u}) {
      const auto wide = build_warp_slice(c.intrinsics, c.extrinsics, c.sonar, c.planes, i);
      const auto tight = build_warp_slice(c.intrinsics, c.extrinsics, narrow, c.planes, i);
      std::size_t violations = 0;
      for (std::size_t e = 0; e < wide.entries.size(); ++e) {
        violations += (tight.entries[e].valid && !wide.entries[e].valid) ? 1 : 0;
      }
      CHECK(violations == 0);
      CHECK(std::count_if(tight.entries.begin(), tight.entries.end(),
                          [](const WarpEntry& e) { return e.valid; }) <
            std::count_if(wide.entries.begin(), wide.entries.end(),
                          [](const WarpEntry& e) { return e.valid; }));
    }
  }
}

TEST_CASE("calibration json round trip") {
  const Calibration c = default_calibration();
  const Calibration back = calibration_from_json(to_json(c));
  CHECK(back.intrinsics.fx == c.intrinsics.fx);
  CHECK(back.intrinsics.width == c.intrinsics.width);
  CHECK((back.extrinsics.rotation() - c.extrinsics.rotation()).norm() == 0.0);
  CHECK(approx_equal(back.sonar, c.sonar));
  CHECK(back.planes.size() == 48);
  CHECK(back.planes.alpha() == Approx(c.planes.alpha()).epsilon(1e-15));

  auto j = to_json(c);
  j["planes"].erase("alpha_deg");
  CHECK_THROWS_AS(calibration_from_json(j), ValidationError);
  j = to_json(c);
  j["intrinsics"]["fx"] = "wide";
  CHECK_THROWS_AS(calibration_from_json(j), ValidationError);
  j = to_json(c);
  j["extrinsics"]["rotation"] = {1, 0, 0, 0, 1, 0, 0, 0, 2};
  CHECK_THROWS_AS(calibration_from_json(j), ValidationError);
}
