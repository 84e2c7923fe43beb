#ifndef SONARSWEEP_SIMULATOR_HPP
#define SONARSWEEP_SIMULATOR_HPP

// Desk-scale opti-acoustic simulator: analytic primitives, a headlight
// pinhole camera, an elevation-integrating forward-looking sonar, speckle
// noise, and the underwater image formation model used to synthesize
// turbidity.
//
// Both sensors see the same albedo field (reflectance modulated by an
// optional procedural texture), so handcrafted cross-modal similarity has
// something to match. Real acoustic reflectivity differs from optical albedo.

#include "sonarsweep/calibration.hpp"
#include "sonarsweep/maps.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

namespace sonarsweep {

/// Multiplicative value-noise modulation of a primitive's reflectance.
/// amplitude 0 disables it; scale is the lattice spacing in meters.
struct Texture {
  double amplitude = 0.0;
  double scale = 0.1;
  std::uint32_t seed = 0;
};

struct PlaneShape {
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
};

struct SphereShape {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 1.0;
};

struct BoxShape {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Ones();
};

struct Primitive {
  std::variant<PlaneShape, SphereShape, BoxShape> shape;
  double reflectance = 0.8;
  Texture texture;
  /// Static primitives are part of the background frames (no moving objects).
  bool is_static = false;
};

/// World-frame scene. Anything that is not hit is background.
struct Scene {
  std::vector<Primitive> primitives;

  /// At least one primitive, reflectances in [0, 1], unit plane normals
  /// (within 1e-9), positive radii and well-ordered boxes.
  void validate() const;
};

nlohmann::json to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);

struct RayHit {
  double distance = 0.0;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
  std::size_t primitive = 0;
};

/// Nearest intersection along origin + t * direction (direction unit length).
std::optional<RayHit> cast_ray(const Scene& scene, const Eigen::Vector3d& origin,
                               const Eigen::Vector3d& direction);

/// Reflectance at a world point, texture applied, clamped to [0, 1].
double surface_albedo(const Primitive& primitive, const Eigen::Vector3d& point);

/// Sensor rig placed in the world. Poses map sensor coordinates to world
/// coordinates; the world uses the sonar axis convention (X right, Y forward,
/// Z up).
struct Rig {
  Calibration calibration;
  RigidTransform world_from_sonar;

  RigidTransform world_from_camera() const {
    return world_from_sonar.compose(calibration.extrinsics.inverse());
  }
};

/// default_calibration() mounted on a pod pitched 15 degrees down.
Rig default_rig();

/// Clean evaluation scene for a rig: a textured inclined plane coinciding
/// with hypothesis plane `plane_index` and a textured sphere in front of it.
Scene default_scene(const Rig& rig, std::size_t plane_index = 34);

struct CameraRender {
  /// Linear intensity in [0, 1].
  Image<float> image;
  DepthMap depth;
};

/// Per-pixel nearest hit; intensity = albedo * |n . ray| (headlight), depth =
/// Euclidean distance from the camera center. Misses are black and masked.
CameraRender render_camera(const Scene& scene, const CameraIntrinsics& intrinsics,
                           const RigidTransform& world_from_camera);

struct SonarRenderConfig {
  int elevation_rays = 64;
};

struct SonarEnergy {
  /// Unnormalized energy, same layout as PolarSonarImage::intensity.
  Image<double> energy;
  /// Sum of the deposit weights of all rays that hit within range.
  double total_weight = 0.0;
};

/// For each bearing bin, splits the vertical aperture into `elevation_rays`
/// strata. A stratum whose edge and center rays hit one surface deposits its
/// albedo-weighted share spread over the slant ranges it covers; strata on a
/// silhouette or a range extremum are bisected first (up to 6 levels).
/// Deposits are weighted by 1 / E per stratum, halved at each bisection.
SonarEnergy render_sonar_energy(const Scene& scene, const SonarSpec& spec,
                                const RigidTransform& world_from_sonar,
                                const SonarRenderConfig& config = {});

/// render_sonar_energy normalized by the image maximum (an all-zero image
/// stays zero).
PolarSonarImage render_sonar(const Scene& scene, const SonarSpec& spec,
                             const RigidTransform& world_from_sonar,
                             const SonarRenderConfig& config = {});

struct SonarNoiseConfig {
  double speckle_sigma = 0.0;
  double background = 0.0;
  std::uint64_t seed = 0;
};

/// out = clamp(in * max(0, 1 + sigma * n) + background, 0, 1), n ~ N(0, 1)
/// drawn bin by bin in row-major order from a seeded generator.
PolarSonarImage add_sonar_noise(const PolarSonarImage& image, const SonarNoiseConfig& config);

using Rgb = std::array<double, 3>;

struct WaterType {
  std::string_view name;
  Rgb transmission;  // per-meter spectral transmission, red/green/blue
};

/// Jerlov coastal presets "1C", "3C", "5C". Throws ValidationError otherwise.
const WaterType& jerlov_water_type(std::string_view name);

/// I = J * T^d + (1 - T^d) * B per channel. A single-channel input is treated
/// as gray (equal channels); the output always has three channels.
Image<float> apply_turbidity(const Image<float>& clear, const Rgb& transmission,
                             const Rgb& ambient, double distance);
/// Per-pixel distance variant; `distance` must match the image size.
Image<float> apply_turbidity(const Image<float>& clear, const Rgb& transmission,
                             const Rgb& ambient, const Image<double>& distance);

/// Linear [0, 1] image to 8-bit with rounding.
Image<std::uint8_t> to_8bit(const Image<float>& image);

}  // namespace sonarsweep

#endif  // SONARSWEEP_SIMULATOR_HPP
