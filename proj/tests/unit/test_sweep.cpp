#include "doctest.h"

#include "sonarsweep/errors.hpp"
#include "sonarsweep/simulator.hpp"
#include "sonarsweep/sweep.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstring>
#include <numbers>
#include <numeric>
#include <random>

using namespace sonarsweep;
using doctest::Approx;

namespace {

CostVolume random_volume(std::mt19937_64& rng, int w, int h, int n, double invalid_rate = 0.0) {
  std::uniform_real_distribution<double> cost(-3.0, 3.0), unit(0.0, 1.0);
  CostVolume vol(w, h, n);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u)
      for (int i = 0; i < n; ++i)
        if (unit(rng) >= invalid_rate) vol.set(u, v, i, cost(rng));
  return vol;
}

std::vector<double> plane_distances(int n) {
  return PlaneHypothesisSet(std::numbers::pi / 4.0, 0.5, 1.05, n).distances();
}

}  // namespace

TEST_CASE("feature extractors") {
  SUBCASE("intensity is the identity") {
    Image<float> img(6, 5);
    for (int v = 0; v < 5; ++v)
      for (int u = 0; u < 6; ++u) img.at(u, v) = 0.1f * static_cast<float>(u * v);
    const auto f = extract_features(img, {FeatureKind::Intensity, 0});
    CHECK(f.values == img);
    for (const auto m : f.valid.data()) CHECK(m == 1);
  }

  SUBCASE("gradient of a ramp") {
    Image<float> ramp(8, 6);
    for (int v = 0; v < 6; ++v)
      for (int u = 0; u < 8; ++u) ramp.at(u, v) = static_cast<float>(u);
    const auto f = extract_features(ramp, {FeatureKind::Gradient, 1});
    CHECK(f.channels() == 2);
    for (int v = 0; v < 6; ++v) {
      for (int u = 0; u < 8; ++u) {
        CHECK(f.values.at(u, v, 0) == 1.0f);
        CHECK(f.values.at(u, v, 1) == 0.0f);
      }
    }
  }

  SUBCASE("zncc patches") {
    const Image<float> flat(9, 9, 1, 0.4f);
    const auto zero = extract_features(flat, {FeatureKind::ZnccPatch, 2});
    CHECK(zero.channels() == 25);
    for (const float x : zero.values.data()) CHECK(x == 0.0f);
    for (const auto m : zero.valid.data()) CHECK(m == 1);

    std::mt19937 rng(1);
    Image<float> noise(9, 9);
    for (auto& x : noise.data()) x = static_cast<float>(rng() % 1000) / 1000.0f;
    const auto f = extract_features(noise, {FeatureKind::ZnccPatch, 2});
    const auto p = f.values.pixel(4, 4);
    double mean = 0.0, norm = 0.0;
    for (const float x : p) {
      mean += x;
      norm += double(x) * x;
    }
    CHECK(std::abs(mean) < 1e-6);
    CHECK(norm == Approx(1.0).epsilon(1e-6));

    // Affine intensity changes leave zncc features unchanged.
    Image<float> affine = noise;
    for (auto& x : affine.data()) x = 0.3f * x + 0.2f;
    const auto g = extract_features(affine, {FeatureKind::ZnccPatch, 2});
    for (std::size_t k = 0; k < f.values.data().size(); ++k) {
      CHECK(g.values.data()[k] == Approx(f.values.data()[k]).epsilon(1e-4));
    }
  }

  SUBCASE("support mask invalidates pixels whose window touches it") {
    const Image<float> img(9, 9, 1, 0.5f);
    Mask support(9, 9, 1, 1);
    support.at(4, 4) = 0;
    const auto f = extract_features(img, {FeatureKind::ZnccPatch, 1}, support);
    CHECK_FALSE(f.is_valid(3, 3));
    CHECK_FALSE(f.is_valid(5, 5));
    CHECK(f.is_valid(2, 2));
    CHECK_THROWS_AS(extract_features(img, {FeatureKind::ZnccPatch, 1}, Mask(3, 3)),
                    InputDataError);
  }

  SUBCASE("configuration") {
    CHECK(parse_feature_kind("zncc-patch") == FeatureKind::ZnccPatch);
    CHECK(to_string(FeatureKind::Gradient) == "gradient");
    CHECK_THROWS_AS(parse_feature_kind("sift"), ValidationError);
    CHECK_THROWS_AS((FeatureConfig{FeatureKind::ZnccPatch, 0}.validate()), ValidationError);
    CHECK_THROWS_AS((FeatureConfig{FeatureKind::ZnccPatch, 16}.validate()), ValidationError);
    CHECK(FeatureConfig{}.channels() == 169);
  }
}

TEST_CASE("sonar feature warping") {
  SonarSpec spec = default_calibration().sonar;
  spec.range_bins = 10;
  spec.bearing_bins = 8;
  Image<float> values(spec.bearing_bins, spec.range_bins);
  for (int r = 0; r < spec.range_bins; ++r)
    for (int b = 0; b < spec.bearing_bins; ++b) values.at(b, r) = static_cast<float>(10 * r + b);
  const FeatureMap sonar = intensity_map(values);

  auto lookup = [&](double range, double bearing) {
    WarpSlice slice;
    slice.entries.resize(1);
    slice.entries[0].valid = true;
    slice.entries[0].polar = {range, bearing};
    return warp_sonar_features(slice, 1, 1, sonar, spec);
  };

  const auto center = lookup(spec.bin_center_range(3), spec.bin_center_bearing(5));
  REQUIRE(center.is_valid(0, 0));
  CHECK(center.values.at(0, 0) == 35.0f);

  const double mid_range = 0.5 * (spec.bin_center_range(3) + spec.bin_center_range(4));
  const auto mid = lookup(mid_range, spec.bin_center_bearing(5));
  CHECK(mid.values.at(0, 0) == Approx(0.5 * (35.0 + 45.0)).epsilon(1e-6));

  const double mid_bearing = 0.5 * (spec.bin_center_bearing(1) + spec.bin_center_bearing(2));
  CHECK(lookup(spec.bin_center_range(0), mid_bearing).values.at(0, 0) ==
        Approx(1.5).epsilon(1e-6));

  WarpSlice invalid;
  invalid.entries.resize(1);
  CHECK_FALSE(warp_sonar_features(invalid, 1, 1, sonar, spec).is_valid(0, 0));

  FeatureMap holed = sonar;
  holed.valid.at(5, 3) = 0;
  CHECK_FALSE(warp_sonar_features(
                  [&] {
                    WarpSlice s;
                    s.entries.resize(1);
                    s.entries[0].valid = true;
                    s.entries[0].polar = {mid_range, spec.bin_center_bearing(5)};
                    return s;
                  }(),
                  1, 1, holed, spec)
                  .is_valid(0, 0));

  SUBCASE("constant map warps to a constant on every plane") {
    const Calibration c = default_calibration();
    const FeatureMap flat = intensity_map(Image<float>(c.sonar.bearing_bins, c.sonar.range_bins,
                                                       1, 0.625f));
    CameraIntrinsics k = c.intrinsics;
    k.width = 80;
    k.height = 60;
    k.cx = 40.0;
    k.cy = 30.0;
    k.fx = k.fy = 40.0;
    const WarpGrid grid = build_warp_grid(k, c.extrinsics, c.sonar, c.planes);
    const auto maps = warp_sonar_features(grid, flat, c.sonar);
    REQUIRE(maps.size() == c.planes.size());
    std::size_t valid = 0;
    for (std::size_t i = 0; i < maps.size(); ++i) {
      for (int v = 0; v < k.height; ++v) {
        for (int u = 0; u < k.width; ++u) {
          CHECK(maps[i].is_valid(u, v) == grid.at(u, v, i).valid);
          if (!maps[i].is_valid(u, v)) continue;
          ++valid;
          CHECK(maps[i].values.at(u, v) == Approx(0.625).epsilon(1e-6));
        }
      }
    }
    CHECK(valid > 0);
  }
}

TEST_CASE("matching costs") {
  const std::vector<float> a{0.2f, -0.4f, 0.9f};
  CHECK(*match_cost(a, a, Metric::Sad) == 0.0);
  const std::vector<float> x{1.0f, 0.0f}, y{0.0f, 1.0f};
  CHECK(*match_cost(x, y, Metric::NegDot) == 0.0);
  CHECK(*match_cost(x, x, Metric::NegDot) == -1.0);
  CHECK(*match_cost(a, a, Metric::NegZncc) == Approx(-1.0).epsilon(1e-12));
  const std::vector<float> flipped{-0.2f, 0.4f, -0.9f};
  CHECK(*match_cost(a, flipped, Metric::NegZncc) == Approx(1.0).epsilon(1e-12));
  const std::vector<float> flat{0.3f, 0.3f, 0.3f};
  CHECK_FALSE(match_cost(a, flat, Metric::NegZncc));
  const std::vector<float> single{0.5f};
  CHECK_FALSE(match_cost(single, single, Metric::NegZncc));
  CHECK_THROWS_AS(match_cost(a, x, Metric::Sad), InputDataError);
  CHECK(parse_metric("neg-dot") == Metric::NegDot);
  CHECK_THROWS_AS(parse_metric("ssd"), ValidationError);
}

TEST_CASE("cost volume") {
  CostVolume vol(3, 2, 4);
  CHECK_FALSE(vol.valid(1, 1, 2));
  CHECK(vol.cost(1, 1, 2) == CostVolume::kInvalidCost);
  vol.set(1, 1, 2, -0.5);
  CHECK(vol.valid(1, 1, 2));
  CHECK(vol.costs(1, 1)[2] == -0.5);
  CHECK_THROWS_AS(vol.set(0, 0, 0, std::nan("")), NumericalError);
  CHECK_THROWS_AS(vol.set(0, 0, 0, INFINITY), NumericalError);
  vol.invalidate(1, 1, 2);
  CHECK_FALSE(vol.valid(1, 1, 2));

  SUBCASE("filled from feature maps") {
    FeatureMap cam{Image<float>(2, 1, 2, 0.0f), Mask(2, 1, 1, 1)};
    cam.values.at(0, 0, 0) = 1.0f;
    cam.values.at(1, 0, 1) = 1.0f;
    FeatureMap warped = cam;
    warped.valid.at(1, 0) = 0;
    const auto built = build_cost_volume(cam, {warped, cam}, {Metric::NegDot, 2.0});
    CHECK(built.cost(0, 0, 0) == -2.0);
    CHECK_FALSE(built.valid(1, 0, 0));
    CHECK(built.cost(1, 0, 1) == -2.0);
    CHECK_THROWS_AS(build_cost_volume(cam, {FeatureMap{Image<float>(3, 1, 2), Mask(3, 1)}},
                                      CostConfig{}),
                    InputDataError);
  }
}

TEST_CASE("regularizer") {
  std::mt19937_64 rng(4);
  const CostVolume vol = random_volume(rng, 9, 8, 3, 0.1);
  CHECK(regularize_cost_volume(vol, {0, 1}) == vol);

  CostVolume flat(7, 7, 2);
  for (int v = 0; v < 7; ++v)
    for (int u = 0; u < 7; ++u)
      for (int i = 0; i < 2; ++i) flat.set(u, v, i, 1.25);
  CHECK(regularize_cost_volume(flat, {2, 3}) == flat);

  CostVolume impulse(7, 7, 1);
  for (int v = 0; v < 7; ++v)
    for (int u = 0; u < 7; ++u) impulse.set(u, v, 0, 0.0);
  impulse.set(3, 3, 0, 1.0);
  const auto spread = regularize_cost_volume(impulse, {1, 1});
  for (int v = 0; v < 7; ++v) {
    for (int u = 0; u < 7; ++u) {
      const bool near = std::abs(u - 3) <= 1 && std::abs(v - 3) <= 1;
      CHECK(spread.cost(u, v, 0) == Approx(near ? 1.0 / 9.0 : 0.0).epsilon(1e-15));
    }
  }

  // Validity is preserved and invalid entries never leak into the mean.
  const auto reg = regularize_cost_volume(vol, {1, 2});
  for (int v = 0; v < 8; ++v)
    for (int u = 0; u < 9; ++u)
      for (int i = 0; i < 3; ++i) CHECK(reg.valid(u, v, i) == vol.valid(u, v, i));
  CHECK_THROWS_AS(regularize_cost_volume(vol, {-1, 1}), ValidationError);
}

TEST_CASE("soft argmin") {
  const auto d = plane_distances(48);

  SUBCASE("delta distribution") {
    CostVolume vol(1, 1, 48);
    for (int i = 0; i < 48; ++i) vol.set(0, 0, i, i == 17 ? 0.0 : 1e6);
    const auto s = soft_argmin(vol, d);
    CHECK(std::abs(s.d_hat.at(0, 0) - d[17]) < 1e-9);
    CHECK(s.argmin.at(0, 0) == 17);
  }

  SUBCASE("uniform costs give the mean distance") {
    CostVolume vol(1, 1, 48);
    for (int i = 0; i < 48; ++i) vol.set(0, 0, i, 0.7);
    const auto s = soft_argmin(vol, d);
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / 48.0;
    CHECK(std::abs(s.d_hat.at(0, 0) - mean) < 1e-12);
    CHECK(s.argmin.at(0, 0) == 0);  // lowest index on ties
  }

  SUBCASE("shift invariance, normalization and plane order") {
    std::mt19937_64 rng(8);
    const CostVolume vol = random_volume(rng, 6, 5, 48, 0.2);
    CostVolume shifted(6, 5, 48), permuted(6, 5, 48);
    std::vector<int> order(48);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> permuted_d(48);
    for (int i = 0; i < 48; ++i) permuted_d[static_cast<std::size_t>(i)] = d[order[i]];
    for (int v = 0; v < 5; ++v) {
      for (int u = 0; u < 6; ++u) {
        const double offset = 100.0 * (u - v);
        for (int i = 0; i < 48; ++i) {
          if (vol.valid(u, v, i)) shifted.set(u, v, i, vol.cost(u, v, i) + offset);
          if (vol.valid(u, v, order[i])) permuted.set(u, v, i, vol.cost(u, v, order[i]));
        }
      }
    }
    const auto a = soft_argmin(vol, d);
    const auto b = soft_argmin(shifted, d);
    const auto c = soft_argmin(permuted, permuted_d);
    for (int v = 0; v < 5; ++v) {
      for (int u = 0; u < 6; ++u) {
        CHECK(std::abs(a.d_hat.at(u, v) - b.d_hat.at(u, v)) < 1e-9);
        CHECK(std::abs(a.d_hat.at(u, v) - c.d_hat.at(u, v)) < 1e-12);
        double total = 0.0;
        for (int i = 0; i < 48; ++i) {
          total += a.probabilities.at(u, v, i);
          if (!vol.valid(u, v, i)) CHECK(a.probabilities.at(u, v, i) == 0.0);
        }
        CHECK(total == Approx(1.0).epsilon(1e-12));
        CHECK(a.d_hat.at(u, v) >= d.front());
        CHECK(a.d_hat.at(u, v) <= d.back());
      }
    }
  }

  SUBCASE("lower temperature concentrates mass on the argmin") {
    // Scaling costs by lambda > 1 never lowers P(argmin) nor raises the
    // expected cost.
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 200; ++trial) {
      const CostVolume vol = random_volume(rng, 1, 1, 48);
      CostVolume sharp(1, 1, 48);
      for (int i = 0; i < 48; ++i) sharp.set(0, 0, i, 2.0 * vol.cost(0, 0, i));
      const auto a = soft_argmin(vol, d);
      const auto b = soft_argmin(sharp, d);
      const int best = a.argmin.at(0, 0);
      CHECK(b.argmin.at(0, 0) == best);
      CHECK(b.probabilities.at(0, 0, best) >= a.probabilities.at(0, 0, best) - 1e-12);
      double ea = 0.0, eb = 0.0;
      for (int i = 0; i < 48; ++i) {
        ea += a.probabilities.at(0, 0, i) * vol.cost(0, 0, i);
        eb += b.probabilities.at(0, 0, i) * vol.cost(0, 0, i);
      }
      CHECK(eb <= ea + 1e-12);
    }
  }

  SUBCASE("pixels without a valid plane are masked") {
    CostVolume vol(2, 1, 48);
    for (int i = 0; i < 48; ++i) vol.set(1, 0, i, 0.0);
    const auto s = soft_argmin(vol, d);
    CHECK_FALSE(s.valid.at(0, 0));
    CHECK(s.argmin.at(0, 0) == -1);
    CHECK(s.valid.at(1, 0));
    CHECK_THROWS_AS(soft_argmin(vol, plane_distances(12)), ValidationError);
  }
}

TEST_CASE("depth regression") {
  const Rig rig = default_rig();
  const auto& c = rig.calibration;
  const Scene scene = default_scene(rig, 34);
  const auto gt = render_camera(scene, c.intrinsics, rig.world_from_camera());

  SUBCASE("true plane distance reproduces the ground-truth depth on the wall") {
    const Image<double> d_hat(c.intrinsics.width, c.intrinsics.height, 1, c.planes.distance(34));
    const Mask all(c.intrinsics.width, c.intrinsics.height, 1, 1);
    const DepthMap depth =
        regress_depth_map(d_hat, all, c.intrinsics, c.extrinsics, c.planes.alpha());
    std::size_t wall = 0;
    for (int v = 0; v < c.intrinsics.height; ++v) {
      for (int u = 0; u < c.intrinsics.width; ++u) {
        if (!gt.depth.is_valid(u, v)) continue;
        // Skip sphere pixels: the sphere is not on plane 34.
        const auto p = solve_ray_plane(u, v, c.intrinsics, c.extrinsics, c.planes, 34);
        if (!p) continue;
        const double plane_depth = (c.extrinsics.to_camera(*p).v).norm();
        if (std::abs(plane_depth - gt.depth.depth.at(u, v)) > 1e-3) continue;
        ++wall;
        REQUIRE(depth.is_valid(u, v));
        CHECK(std::abs(depth.depth.at(u, v) / gt.depth.depth.at(u, v) - 1.0) < 1e-6);
        CHECK(depth.plane_distance.at(u, v) == c.planes.distance(34));
      }
    }
    CHECK(wall > 20000);
  }

  SUBCASE("masked input stays masked; constant d follows the ray-plane intersection") {
    Calibration axis = c;
    axis.extrinsics =
        RigidTransform(RigidTransform::sonar_to_camera_axes(), Eigen::Vector3d::Zero());
    Image<double> d_hat(c.intrinsics.width, c.intrinsics.height, 1, 2.0);
    Mask mask(c.intrinsics.width, c.intrinsics.height, 1, 1);
    mask.at(10, 10) = 0;
    const DepthMap depth =
        regress_depth_map(d_hat, mask, axis.intrinsics, axis.extrinsics, axis.planes.alpha());
    CHECK_FALSE(depth.is_valid(10, 10));
    const PlaneHypothesisSet at_two(axis.planes.alpha(), 2.0, 1.05, 2);
    for (int v = 0; v < c.intrinsics.height; v += 13) {
      for (int u = 0; u < c.intrinsics.width; u += 11) {
        const auto p = solve_ray_plane(u, v, axis.intrinsics, axis.extrinsics, at_two, 0);
        if (!p || axis.extrinsics.to_camera(*p).z() <= 0.0) {
          CHECK_FALSE(depth.is_valid(u, v));
          continue;
        }
        if (u == 10 && v == 10) continue;
        REQUIRE(depth.is_valid(u, v));
        CHECK(depth.depth.at(u, v) ==
              Approx(axis.extrinsics.to_camera(*p).v.norm()).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("pipeline edge cases") {
  const Calibration c = default_calibration();
  const PolarSonarImage sonar(c.sonar);

  SUBCASE("all-black camera never produces NaN") {
    PolarSonarImage ping = sonar;
    for (int r = 0; r < c.sonar.range_bins; ++r)
      for (int b = 0; b < c.sonar.bearing_bins; ++b) ping.at(r, b) = (r * 7 + b) % 5 * 0.2f;
    const Image<std::uint8_t> black(c.intrinsics.width, c.intrinsics.height, 1, 0);
    PipelineConfig cfg;
    cfg.export_cost_volume = true;
    const auto out = run_pipeline(black, ping, c, cfg);
    for (const double x : out.depth.depth.data()) CHECK(std::isfinite(x));
    CHECK(out.depth.valid_count() == 0);
    REQUIRE(out.cost_volume);
    CHECK(out.cost_volume->width() == c.intrinsics.width);
  }

  SUBCASE("mismatched inputs") {
    const Image<std::uint8_t> small(10, 10, 1, 0);
    CHECK_THROWS_AS(run_pipeline(small, sonar, c, {}), InputDataError);
    SonarSpec other = c.sonar;
    other.range_bins = 100;
    const Image<std::uint8_t> image(c.intrinsics.width, c.intrinsics.height, 1, 0);
    CHECK_THROWS_AS(run_pipeline(image, PolarSonarImage(other), c, {}), InputDataError);
    PipelineConfig bad;
    bad.cost.scale = 0.0;
    CHECK_THROWS_AS(run_pipeline(image, sonar, c, bad), ValidationError);
  }
}

TEST_CASE("SSCV1 cost volume encoding") {
  std::mt19937_64 rng(12);
  const CostVolume vol = random_volume(rng, 5, 4, 6, 0.3);
  const std::string bytes = encode_cost_volume(vol);
  CHECK(bytes.substr(0, 5) == "SSCV1");
  std::uint32_t h = 0, w = 0, n = 0;
  std::memcpy(&h, bytes.data() + 5, 4);
  std::memcpy(&w, bytes.data() + 9, 4);
  std::memcpy(&n, bytes.data() + 13, 4);
  CHECK(h == 4);
  CHECK(w == 5);
  CHECK(n == 6);
  CHECK(bytes.size() == 17 + 4 * 5 * 6 * 5);

  // Entry (u, v, i) sits at offset ((u * H) + v) * N + i.
  float first = 0.0f;
  const std::size_t k = (2 * 4 + 3) * 6 + 1;
  std::memcpy(&first, bytes.data() + 17 + 4 * k, 4);
  CHECK(first == (vol.valid(2, 3, 1) ? static_cast<float>(vol.cost(2, 3, 1)) : FLT_MAX));
  CHECK(bytes[17 + 4 * 120 + k] == (vol.valid(2, 3, 1) ? 1 : 0));

  const CostVolume back = decode_cost_volume(bytes);
  for (int v = 0; v < 4; ++v) {
    for (int u = 0; u < 5; ++u) {
      for (int i = 0; i < 6; ++i) {
        CHECK(back.valid(u, v, i) == vol.valid(u, v, i));
        if (vol.valid(u, v, i)) {
          CHECK(back.cost(u, v, i) == static_cast<float>(vol.cost(u, v, i)));
        }
      }
    }
  }
  CHECK(encode_cost_volume(back) == bytes);

  CHECK_THROWS_AS(decode_cost_volume("SSCV2"), InputDataError);
  CHECK_THROWS_AS(decode_cost_volume(bytes.substr(0, bytes.size() - 1)), InputDataError);
  std::string bad_flag = bytes;
  bad_flag.back() = 7;
  CHECK_THROWS_AS(decode_cost_volume(bad_flag), InputDataError);
}
