#include "sonarsweep/simulator.hpp"

#include "sonarsweep/errors.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace sonarsweep {

using nlohmann::json;

namespace {

constexpr double kMinHitDistance = 1e-9;

std::uint64_t mix(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice_value(std::int64_t x, std::int64_t y, std::int64_t z, std::uint32_t seed) {
  std::uint64_t h = mix(static_cast<std::uint64_t>(seed));
  h = mix(h ^ static_cast<std::uint64_t>(x));
  h = mix(h ^ static_cast<std::uint64_t>(y));
  h = mix(h ^ static_cast<std::uint64_t>(z));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

// Smooth 3D value noise in [0, 1].
double value_noise(const Eigen::Vector3d& p, std::uint32_t seed) {
  const double fx = std::floor(p.x()), fy = std::floor(p.y()), fz = std::floor(p.z());
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  const auto iz = static_cast<std::int64_t>(fz);
  const double tx = fade(p.x() - fx), ty = fade(p.y() - fy), tz = fade(p.z() - fz);
  double acc = 0.0;
  for (int corner = 0; corner < 8; ++corner) {
    const int dx = corner & 1, dy = (corner >> 1) & 1, dz = (corner >> 2) & 1;
    const double w = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty) * (dz ? tz : 1.0 - tz);
    acc += w * lattice_value(ix + dx, iy + dy, iz + dz, seed);
  }
  return acc;
}

std::optional<double> intersect(const PlaneShape& s, const Eigen::Vector3d& o,
                                const Eigen::Vector3d& d, Eigen::Vector3d& normal) {
  const double denom = s.normal.dot(d);
  if (std::abs(denom) < 1e-12) return std::nullopt;
  const double t = s.normal.dot(s.point - o) / denom;
  if (!(t > kMinHitDistance)) return std::nullopt;
  normal = s.normal;
  return t;
}

std::optional<double> intersect(const SphereShape& s, const Eigen::Vector3d& o,
                                const Eigen::Vector3d& d, Eigen::Vector3d& normal) {
  const Eigen::Vector3d oc = o - s.center;
  const double b = oc.dot(d);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double root = std::sqrt(disc);
  double t = -b - root;
  if (!(t > kMinHitDistance)) t = -b + root;
  if (!(t > kMinHitDistance)) return std::nullopt;
  normal = (o + t * d - s.center) / s.radius;
  return t;
}

std::optional<double> intersect(const BoxShape& s, const Eigen::Vector3d& o,
                                const Eigen::Vector3d& d, Eigen::Vector3d& normal) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int near_axis = 0, far_axis = 0;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-300) {
      if (o[a] < s.min[a] || o[a] > s.max[a]) return std::nullopt;
      continue;
    }
    double t0 = (s.min[a] - o[a]) / d[a];
    double t1 = (s.max[a] - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > t_near) { t_near = t0; near_axis = a; }
    if (t1 < t_far) { t_far = t1; far_axis = a; }
    if (t_near > t_far) return std::nullopt;
  }
  double t = t_near;
  int axis = near_axis;
  if (!(t > kMinHitDistance)) {
    t = t_far;
    axis = far_axis;
  }
  if (!(t > kMinHitDistance) || !std::isfinite(t)) return std::nullopt;
  normal = Eigen::Vector3d::Zero();
  normal[axis] = d[axis] > 0.0 ? -1.0 : 1.0;
  return t;
}

Eigen::Vector3d vec3_from_json(const json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(std::string("scene: missing '") + key + "'");
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 3) throw ValidationError(std::string("scene: '") + key + "' needs 3 values");
  return {v[0], v[1], v[2]};
}

json vec3_to_json(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

PolarSonarImage::PolarSonarImage(Image<float> values, const SonarSpec& s)
    : intensity(std::move(values)), spec(s) {
  if (intensity.width() != s.bearing_bins || intensity.height() != s.range_bins ||
      intensity.channels() != 1) {
    throw InputDataError("sonar image is " + std::to_string(intensity.width()) + "x" +
                         std::to_string(intensity.height()) + " but its spec says " +
                         std::to_string(s.bearing_bins) + " bearing x " +
                         std::to_string(s.range_bins) + " range bins");
  }
}

std::size_t DepthMap::valid_count() const {
  std::size_t n = 0;
  for (const auto m : valid.data()) n += m != 0 ? 1 : 0;
  return n;
}

void Scene::validate() const {
  if (primitives.empty()) throw ValidationError("scene: needs at least one primitive");
  for (const auto& p : primitives) {
    if (!(p.reflectance >= 0.0 && p.reflectance <= 1.0)) {
      throw ValidationError("scene: reflectance must lie in [0, 1]");
    }
    if (!(p.texture.scale > 0.0) || !(p.texture.amplitude >= 0.0)) {
      throw ValidationError("scene: texture needs scale > 0 and amplitude >= 0");
    }
    if (const auto* plane = std::get_if<PlaneShape>(&p.shape)) {
      if (!(std::abs(plane->normal.norm() - 1.0) <= 1e-9)) {
        throw ValidationError("scene: plane normal must be unit length");
      }
    } else if (const auto* sphere = std::get_if<SphereShape>(&p.shape)) {
      if (!(sphere->radius > 0.0)) throw ValidationError("scene: sphere radius must be positive");
    } else if (const auto* box = std::get_if<BoxShape>(&p.shape)) {
      if (!(box->min.array() < box->max.array()).all()) {
        throw ValidationError("scene: box min must be below max on every axis");
      }
    }
  }
}

json to_json(const Scene& scene) {
  json prims = json::array();
  for (const auto& p : scene.primitives) {
    json j;
    if (const auto* plane = std::get_if<PlaneShape>(&p.shape)) {
      j = {{"type", "plane"}, {"point", vec3_to_json(plane->point)},
           {"normal", vec3_to_json(plane->normal)}};
    } else if (const auto* sphere = std::get_if<SphereShape>(&p.shape)) {
      j = {{"type", "sphere"}, {"center", vec3_to_json(sphere->center)},
           {"radius", sphere->radius}};
    } else {
      const auto& box = std::get<BoxShape>(p.shape);
      j = {{"type", "box"}, {"min", vec3_to_json(box.min)}, {"max", vec3_to_json(box.max)}};
    }
    j["reflectance"] = p.reflectance;
    j["static"] = p.is_static;
    if (p.texture.amplitude > 0.0) {
      j["texture"] = {{"amplitude", p.texture.amplitude},
                      {"scale", p.texture.scale},
                      {"seed", p.texture.seed}};
    }
    prims.push_back(std::move(j));
  }
  return {{"primitives", prims}};
}

Scene scene_from_json(const json& j) {
  Scene scene;
  try {
    if (!j.is_object() || !j.contains("primitives") || !j.at("primitives").is_array()) {
      throw ValidationError("scene: expected an object with a 'primitives' array");
    }
    for (const auto& e : j.at("primitives")) {
      Primitive p;
      const std::string type = e.at("type").get<std::string>();
      if (type == "plane") {
        p.shape = PlaneShape{vec3_from_json(e, "point"), vec3_from_json(e, "normal")};
      } else if (type == "sphere") {
        p.shape = SphereShape{vec3_from_json(e, "center"), e.at("radius").get<double>()};
      } else if (type == "box") {
        p.shape = BoxShape{vec3_from_json(e, "min"), vec3_from_json(e, "max")};
      } else {
        throw ValidationError("scene: unknown primitive type '" + type + "'");
      }
      p.reflectance = e.value("reflectance", 0.8);
      p.is_static = e.value("static", false);
      if (e.contains("texture")) {
        const auto& t = e.at("texture");
        p.texture.amplitude = t.value("amplitude", 0.0);
        p.texture.scale = t.value("scale", 0.1);
        p.texture.seed = t.value("seed", 0u);
      }
      scene.primitives.push_back(p);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("scene: ") + e.what());
  }
  scene.validate();
  return scene;
}

std::optional<RayHit> cast_ray(const Scene& scene, const Eigen::Vector3d& origin,
                               const Eigen::Vector3d& direction) {
  std::optional<RayHit> best;
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    Eigen::Vector3d normal;
    const auto t = std::visit(
        [&](const auto& shape) { return intersect(shape, origin, direction, normal); },
        scene.primitives[i].shape);
    if (t && (!best || *t < best->distance)) {
      best = RayHit{*t, origin + *t * direction, normal, i};
    }
  }
  return best;
}

double surface_albedo(const Primitive& primitive, const Eigen::Vector3d& point) {
  double albedo = primitive.reflectance;
  if (primitive.texture.amplitude > 0.0) {
    const Eigen::Vector3d q = point / primitive.texture.scale;
    const double n = 0.65 * value_noise(q, primitive.texture.seed) +
                     0.35 * value_noise(2.0 * q, primitive.texture.seed + 1);
    albedo *= 1.0 + primitive.texture.amplitude * (2.0 * n - 1.0);
  }
  return std::clamp(albedo, 0.0, 1.0);
}

Rig default_rig() {
  Rig rig;
  rig.calibration = default_calibration();
  const double pitch = deg_to_rad(15.0);
  // Rotation about X by -pitch tips the forward axis down.
  const Eigen::Matrix3d r = Eigen::AngleAxisd(-pitch, Eigen::Vector3d::UnitX()).toRotationMatrix();
  rig.world_from_sonar = RigidTransform(r, Eigen::Vector3d(0.0, 0.0, 1.5));
  return rig;
}

Scene default_scene(const Rig& rig, std::size_t plane_index) {
  const auto& planes = rig.calibration.planes;
  const RigidTransform& pose = rig.world_from_sonar;
  const double d = planes.distance(plane_index);

  Primitive wall;
  wall.shape = PlaneShape{pose.apply(Eigen::Vector3d(0.0, d, 0.0)),
                          pose.rotation() * planes.normal()};
  wall.reflectance = 0.7;
  wall.texture = {0.6, 0.06, 11};
  wall.is_static = true;

  // Sphere well inside the vertical aperture, in front of the wall.
  const Eigen::Vector3d center_s(-0.35, 0.76 * d, 0.0);
  Primitive ball;
  ball.shape = SphereShape{pose.apply(center_s), 0.18};
  ball.reflectance = 0.9;
  ball.texture = {0.5, 0.04, 23};

  Scene scene;
  scene.primitives = {wall, ball};
  return scene;
}

CameraRender render_camera(const Scene& scene, const CameraIntrinsics& intrinsics,
                           const RigidTransform& world_from_camera) {
  intrinsics.validate();
  const int width = intrinsics.width;
  const int height = intrinsics.height;
  CameraRender out{Image<float>(width, height, 1, 0.0f), DepthMap(width, height)};
  const Eigen::Vector3d origin = world_from_camera.translation();

#pragma omp parallel for schedule(static)
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const Eigen::Vector3d dir =
          (world_from_camera.rotation() * intrinsics.ray(u, v)).normalized();
      const auto hit = cast_ray(scene, origin, dir);
      if (!hit) continue;
      const double shade = std::abs(hit->normal.dot(dir));
      out.image.at(u, v) =
          static_cast<float>(surface_albedo(scene.primitives[hit->primitive], hit->point) * shade);
      out.depth.depth.at(u, v) = hit->distance;
      out.depth.valid.at(u, v) = 1;
    }
  }
  return out;
}

namespace {

// Silhouette strata are bisected up to this depth (at most 64 sub-strata).
constexpr int kMaxRefinement = 6;

struct ColumnTracer {
  const Scene& scene;
  const SonarSpec& spec;
  const RigidTransform& pose;
  double bearing;
  int strata;
  std::vector<double>& column;
  double weight_sum = 0.0;

  std::optional<RayHit> trace(double elevation) const {
    const Eigen::Vector3d dir =
        pose.rotation() * spherical_to_cartesian(1.0, bearing, elevation).v;
    return cast_ray(scene, pose.translation(), dir);
  }

  // Uniform deposit over the slant-range interval [a, z], clipped to the window.
  void spread(double a, double z, double weight) {
    const double bin_size = spec.range_bin_size();
    const int bins = spec.range_bins;
    const int first = std::clamp(static_cast<int>((a - spec.range_min) / bin_size), 0, bins - 1);
    const int last = std::clamp(static_cast<int>((z - spec.range_min) / bin_size), 0, bins - 1);
    const double span = z - a;
    double deposited = 0.0;
    for (int r = first; r <= last; ++r) {
      const double lo = std::max(a, spec.range_min + r * bin_size);
      const double hi = std::min(z, spec.range_min + (r + 1) * bin_size);
      if (hi <= lo) continue;
      const double part = r == last ? weight - deposited : weight * (hi - lo) / span;
      column[static_cast<std::size_t>(r)] += part;
      deposited += part;
    }
  }

  // One elevation stratum [e0, e1] carrying `share` of the column's rays. A
  // stratum whose edges hit the same primitive as its center spreads its
  // deposit over the covered ranges. Strata straddling a silhouette are
  // bisected, down to kMaxRefinement levels.
  void stratum(double e0, double e1, const std::optional<RayHit>& lo,
               const std::optional<RayHit>& hi, double share, int depth) {
    const double mid = 0.5 * (e0 + e1);
    const auto center = trace(mid);
    const bool same = center && lo && hi && lo->primitive == center->primitive &&
                      hi->primitive == center->primitive;
    // A range extremum inside the stratum is also refined: the three rays
    // would miss the true range interval there.
    const bool monotone =
        same && (center->distance - lo->distance) * (hi->distance - center->distance) >= 0.0;
    if (!monotone && depth < kMaxRefinement) {
      stratum(e0, mid, lo, center, 0.5 * share, depth + 1);
      stratum(mid, e1, center, hi, 0.5 * share, depth + 1);
      return;
    }
    if (!center || center->distance < spec.range_min || center->distance >= spec.range_max) {
      return;
    }
    const Primitive& prim = scene.primitives[center->primitive];
    // Simpson's rule over the stratum when all three rays see one surface.
    const double albedo =
        same ? (surface_albedo(prim, lo->point) + 4.0 * surface_albedo(prim, center->point) +
                surface_albedo(prim, hi->point)) / 6.0
             : surface_albedo(prim, center->point);
    const double weight = albedo * share;
    weight_sum += weight;
    if (same) {
      const double a =
          std::max(std::min({lo->distance, hi->distance, center->distance}), spec.range_min);
      const double z =
          std::min(std::max({lo->distance, hi->distance, center->distance}), spec.range_max);
      if (z - a > 1e-12 * spec.range_bin_size()) {
        spread(a, z, weight);
        return;
      }
    }
    const int bin = std::min(
        spec.range_bins - 1,
        static_cast<int>((center->distance - spec.range_min) / spec.range_bin_size()));
    column[static_cast<std::size_t>(bin)] += weight;
  }
};

}  // namespace

SonarEnergy render_sonar_energy(const Scene& scene, const SonarSpec& spec,
                                const RigidTransform& world_from_sonar,
                                const SonarRenderConfig& config) {
  spec.validate();
  if (config.elevation_rays < 1) throw ValidationError("sonar render: need >= 1 elevation ray");
  const int strata = config.elevation_rays;
  SonarEnergy out{Image<double>(spec.bearing_bins, spec.range_bins, 1, 0.0), 0.0};
  std::vector<double> column_weight(static_cast<std::size_t>(spec.bearing_bins), 0.0);

#pragma omp parallel for schedule(static)
  for (int b = 0; b < spec.bearing_bins; ++b) {
    std::vector<double> column(static_cast<std::size_t>(spec.range_bins), 0.0);
    ColumnTracer tracer{scene, spec, world_from_sonar, spec.bin_center_bearing(b), strata, column};
    const double step = spec.elevation_fov / strata;
    const double bottom = -0.5 * spec.elevation_fov;
    // Deposits follow the fixed stratum order, so sums are schedule independent.
    auto lower = tracer.trace(bottom);
    for (int e = 0; e < strata; ++e) {
      auto upper = tracer.trace(bottom + (e + 1) * step);
      tracer.stratum(bottom + e * step, bottom + (e + 1) * step, lower, upper, 1.0 / strata, 0);
      lower = std::move(upper);
    }
    for (int r = 0; r < spec.range_bins; ++r) {
      out.energy.at(b, r) = column[static_cast<std::size_t>(r)];
    }
    column_weight[static_cast<std::size_t>(b)] = tracer.weight_sum;
  }
  for (const double w : column_weight) out.total_weight += w;
  return out;
}

PolarSonarImage render_sonar(const Scene& scene, const SonarSpec& spec,
                             const RigidTransform& world_from_sonar,
                             const SonarRenderConfig& config) {
  const SonarEnergy energy = render_sonar_energy(scene, spec, world_from_sonar, config);
  double peak = 0.0;
  for (const double e : energy.energy.data()) peak = std::max(peak, e);
  PolarSonarImage out(spec);
  if (peak > 0.0) {
    for (int r = 0; r < spec.range_bins; ++r)
      for (int b = 0; b < spec.bearing_bins; ++b)
        out.at(r, b) = static_cast<float>(energy.energy.at(b, r) / peak);
  }
  return out;
}

PolarSonarImage add_sonar_noise(const PolarSonarImage& image, const SonarNoiseConfig& config) {
  if (!(config.speckle_sigma >= 0.0)) throw ValidationError("noise: speckle sigma must be >= 0");
  if (!(config.background >= 0.0)) throw ValidationError("noise: background must be >= 0");
  PolarSonarImage out = image;
  if (config.speckle_sigma == 0.0 && config.background == 0.0) return out;
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& value : out.intensity.data()) {
    const double speckle = std::max(0.0, 1.0 + config.speckle_sigma * normal(rng));
    value = static_cast<float>(std::clamp(value * speckle + config.background, 0.0, 1.0));
  }
  return out;
}

const WaterType& jerlov_water_type(std::string_view name) {
  static const std::array<WaterType, 3> kTypes{{
      {"1C", {0.75, 0.87, 0.88}},
      {"3C", {0.71, 0.80, 0.82}},
      {"5C", {0.67, 0.67, 0.73}},
  }};
  for (const auto& t : kTypes) {
    if (t.name == name) return t;
  }
  throw ValidationError("unknown water type '" + std::string(name) + "' (expected 1C, 3C or 5C)");
}

namespace {

void check_turbidity_params(const Rgb& transmission, const Rgb& ambient) {
  for (int c = 0; c < 3; ++c) {
    if (!(transmission[c] > 0.0 && transmission[c] <= 1.0)) {
      throw ValidationError("turbidity: transmission must lie in (0, 1]");
    }
    if (!(ambient[c] >= 0.0 && ambient[c] <= 1.0)) {
      throw ValidationError("turbidity: ambient light must lie in [0, 1]");
    }
  }
}

template <typename DistanceAt>
Image<float> turbid(const Image<float>& clear, const Rgb& transmission, const Rgb& ambient,
                    DistanceAt distance_at) {
  if (clear.channels() != 1 && clear.channels() != 3) {
    throw InputDataError("turbidity: expected a gray or RGB image");
  }
  check_turbidity_params(transmission, ambient);
  Image<float> out(clear.width(), clear.height(), 3);
  for (int v = 0; v < clear.height(); ++v) {
    for (int u = 0; u < clear.width(); ++u) {
      const double d = distance_at(u, v);
      for (int c = 0; c < 3; ++c) {
        const double j = clear.at(u, v, clear.channels() == 3 ? c : 0);
        const double t = std::pow(transmission[c], d);
        out.at(u, v, c) = static_cast<float>(j * t + (1.0 - t) * ambient[c]);
      }
    }
  }
  return out;
}

}  // namespace

Image<float> apply_turbidity(const Image<float>& clear, const Rgb& transmission,
                             const Rgb& ambient, double distance) {
  if (!(distance >= 0.0)) throw ValidationError("turbidity: distance must be >= 0");
  return turbid(clear, transmission, ambient, [distance](int, int) { return distance; });
}

Image<float> apply_turbidity(const Image<float>& clear, const Rgb& transmission,
                             const Rgb& ambient, const Image<double>& distance) {
  if (!clear.same_size(distance)) throw InputDataError("turbidity: distance map size mismatch");
  for (const double d : distance.data()) {
    if (!(d >= 0.0)) throw ValidationError("turbidity: distances must be >= 0");
  }
  return turbid(clear, transmission, ambient,
                [&distance](int u, int v) { return distance.at(u, v); });
}

Image<std::uint8_t> to_8bit(const Image<float>& image) {
  Image<std::uint8_t> out(image.width(), image.height(), image.channels());
  auto src = image.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<std::uint8_t>(std::lround(std::clamp(src[i], 0.0f, 1.0f) * 255.0f));
  }
  return out;
}

}  // namespace sonarsweep
