#include "sonarsweep/geometry.hpp"

#include "sonarsweep/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace sonarsweep {

namespace {

constexpr double kOrthonormalTolerance = 1e-9;
constexpr double kSingularRelative = 1e-12;
constexpr double kDegenerateDenominator = 1e-12;

}  // namespace

double deg_to_rad(double degrees) { return degrees * std::numbers::pi / 180.0; }
double rad_to_deg(double radians) { return radians * 180.0 / std::numbers::pi; }

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw ValidationError("intrinsics: focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw ValidationError("intrinsics: image size must be positive");
  }
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw ValidationError("intrinsics: principal point outside the image");
  }
}

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Eigen::Vector3d CameraIntrinsics::ray(double u, double v) const {
  return {(u - cx) / fx, (v - cy) / fy, 1.0};
}

std::optional<Eigen::Vector2d> CameraIntrinsics::project(const CameraPoint& p) const {
  if (!(p.z() > 0.0)) return std::nullopt;
  return Eigen::Vector2d(fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy);
}

RigidTransform::RigidTransform()
    : rotation_(Eigen::Matrix3d::Identity()), translation_(Eigen::Vector3d::Zero()) {}

RigidTransform::RigidTransform(const Eigen::Matrix3d& rotation,
                               const Eigen::Vector3d& translation)
    : rotation_(rotation), translation_(translation) {
  const double ortho_error =
      (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho_error <= kOrthonormalTolerance)) {
    throw ValidationError("rotation is not orthonormal (max |R^T R - I| = " +
                          std::to_string(ortho_error) + ")");
  }
  if (!(std::abs(rotation.determinant() - 1.0) <= kOrthonormalTolerance)) {
    throw ValidationError("rotation determinant is not +1");
  }
  if (!translation.allFinite()) {
    throw ValidationError("translation is not finite");
  }
}

RigidTransform RigidTransform::inverse() const {
  const Eigen::Matrix3d rt = rotation_.transpose();
  return RigidTransform(rt, -rt * translation_);
}

RigidTransform RigidTransform::compose(const RigidTransform& other) const {
  return RigidTransform(rotation_ * other.rotation_,
                        rotation_ * other.translation_ + translation_);
}

Eigen::Matrix3d RigidTransform::sonar_to_camera_axes() {
  // x_c = X_s, y_c = -Z_s, z_c = Y_s
  Eigen::Matrix3d r;
  r << 1.0, 0.0, 0.0,
       0.0, 0.0, -1.0,
       0.0, 1.0, 0.0;
  return r;
}

void SonarSpec::validate() const {
  if (!(range_min > 0.0 && range_min < range_max && std::isfinite(range_max))) {
    throw ValidationError("sonar: require 0 < range_min < range_max");
  }
  if (!(bearing_fov > 0.0 && bearing_fov < std::numbers::pi)) {
    throw ValidationError("sonar: bearing FOV must lie in (0, 180) degrees");
  }
  if (!(elevation_fov > 0.0 && elevation_fov < std::numbers::pi)) {
    throw ValidationError("sonar: elevation FOV must lie in (0, 180) degrees");
  }
  if (range_bins < 2 || bearing_bins < 2) {
    throw ValidationError("sonar: need at least 2 range and 2 bearing bins");
  }
}

PlaneHypothesisSet::PlaneHypothesisSet(double alpha, double d0, double k, int n)
    : alpha_(alpha), d0_(d0), k_(k) {
  if (!(alpha > 0.0 && alpha < 0.5 * std::numbers::pi)) {
    throw ValidationError("planes: alpha must lie in (0, 90) degrees");
  }
  if (!(d0 > 0.0 && std::isfinite(d0))) throw ValidationError("planes: d0 must be positive");
  if (!(k > 1.0 && std::isfinite(k))) throw ValidationError("planes: k must exceed 1");
  if (n < 2) throw ValidationError("planes: need at least 2 planes");
  distances_.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    distances_.push_back(d0 * std::pow(k, i));
  }
  for (std::size_t i = 1; i < distances_.size(); ++i) {
    if (!(distances_[i] > distances_[i - 1]) || !std::isfinite(distances_[i])) {
      throw ValidationError("planes: distances are not strictly increasing");
    }
  }
}

double PlaneHypothesisSet::distance(std::size_t index) const {
  if (index >= distances_.size()) {
    throw std::out_of_range("plane index " + std::to_string(index) + " out of range [0, " +
                            std::to_string(distances_.size()) + ")");
  }
  return distances_[index];
}

Eigen::Vector3d PlaneHypothesisSet::normal() const {
  return {0.0, std::sin(alpha_), std::cos(alpha_)};
}

double PlaneHypothesisSet::residual(const SonarPoint& p, std::size_t index) const {
  return normal().dot(p.v) - distance(index) * std::sin(alpha_);
}

SonarPoint spherical_to_cartesian(double range, double bearing, double elevation) {
  const double horizontal = range * std::cos(elevation);
  return {horizontal * std::sin(bearing), horizontal * std::cos(bearing),
          range * std::sin(elevation)};
}

SonarPoint backproject_sonar_to_plane(const SonarPolar& polar,
                                      const PlaneHypothesisSet& planes,
                                      std::size_t index) {
  const double lateral = polar.range * std::sin(polar.bearing);
  const double forward = polar.range * std::cos(polar.bearing);
  const double elevation = (planes.distance(index) - forward) * std::tan(planes.alpha());
  return {lateral, forward, elevation};
}

SonarPolar cartesian_to_sonar_polar(const SonarPoint& p) {
  return {std::hypot(p.x(), p.y()), std::atan2(p.x(), p.y())};
}

PolarLookup cartesian_to_sonar_polar(const SonarPoint& p, const SonarSpec& spec) {
  PolarLookup out;
  out.polar = cartesian_to_sonar_polar(p);
  out.in_fov = out.polar.range >= spec.range_min && out.polar.range <= spec.range_max &&
               std::abs(out.polar.bearing) <= 0.5 * spec.bearing_fov;
  return out;
}

std::optional<Eigen::Vector3d> solve_3x3(const Eigen::Matrix3d& a, const Eigen::Vector3d& b) {
  Eigen::Matrix3d adj;
  adj(0, 0) = a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1);
  adj(0, 1) = a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2);
  adj(0, 2) = a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1);
  adj(1, 0) = a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2);
  adj(1, 1) = a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0);
  adj(1, 2) = a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2);
  adj(2, 0) = a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0);
  adj(2, 1) = a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1);
  adj(2, 2) = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
  const double det = a(0, 0) * adj(0, 0) + a(0, 1) * adj(1, 0) + a(0, 2) * adj(2, 0);
  const double scale = a.cwiseAbs().maxCoeff();
  if (!std::isfinite(det) || std::abs(det) < kSingularRelative * scale * scale * scale ||
      scale == 0.0) {
    return std::nullopt;
  }
  const Eigen::Matrix3d inv = adj / det;
  Eigen::Vector3d x = inv * b;
  x += inv * (b - a * x);
  return x;
}

std::optional<SonarPoint> solve_ray_plane(double u, double v,
                                          const CameraIntrinsics& intrinsics,
                                          const RigidTransform& extrinsics,
                                          const PlaneHypothesisSet& planes,
                                          std::size_t index) {
  const Eigen::Matrix3d k = intrinsics.matrix();
  const Eigen::Matrix3d m = k * extrinsics.rotation();
  const Eigen::Vector3d c = k * extrinsics.translation();
  const double alpha = planes.alpha();

  Eigen::Matrix3d a;
  a.row(0) = planes.normal().transpose();
  a.row(1) = u * m.row(2) - m.row(0);
  a.row(2) = v * m.row(2) - m.row(1);
  const Eigen::Vector3d b(planes.distance(index) * std::sin(alpha), c(0) - u * c(2),
                          c(1) - v * c(2));
  const auto x = solve_3x3(a, b);
  if (!x) return std::nullopt;
  return SonarPoint(*x);
}

std::optional<double> closed_form_camera_depth(double u, double v, double plane_distance,
                                               const CameraIntrinsics& intrinsics,
                                               const RigidTransform& extrinsics,
                                               double alpha) {
  const Eigen::Vector3d normal(0.0, std::sin(alpha), std::cos(alpha));
  const Eigen::Vector3d rn = extrinsics.rotation() * normal;
  const double denominator = rn.dot(intrinsics.ray(u, v));
  if (!(std::abs(denominator) >= kDegenerateDenominator)) return std::nullopt;
  return (plane_distance * std::sin(alpha) + rn.dot(extrinsics.translation())) / denominator;
}

double ray_depth_to_euclidean(double u, double v, double camera_depth,
                              const CameraIntrinsics& intrinsics) {
  return std::abs(camera_depth) * intrinsics.ray(u, v).norm();
}

std::optional<Eigen::Vector2d> project_sonar_point(const SonarPoint& p,
                                                   const CameraIntrinsics& intrinsics,
                                                   const RigidTransform& extrinsics) {
  return intrinsics.project(extrinsics.to_camera(p));
}

WarpGrid::WarpGrid(int width, int height, std::vector<WarpSlice> slices)
    : width_(width), height_(height), slices_(std::move(slices)) {
  const auto expected = static_cast<std::size_t>(width) * height;
  for (const auto& s : slices_) {
    if (s.entries.size() != expected) {
      throw InputDataError("warp grid: slice size does not match image dimensions");
    }
  }
}

std::size_t WarpGrid::valid_count(std::size_t index) const {
  std::size_t count = 0;
  for (const auto& e : slices_.at(index).entries) count += e.valid ? 1 : 0;
  return count;
}

bool approx_equal(const SonarSpec& a, const SonarSpec& b, double tol) {
  return a.range_bins == b.range_bins && a.bearing_bins == b.bearing_bins &&
         std::abs(a.range_min - b.range_min) <= tol && std::abs(a.range_max - b.range_max) <= tol &&
         std::abs(a.bearing_fov - b.bearing_fov) <= tol &&
         std::abs(a.elevation_fov - b.elevation_fov) <= tol;
}

bool in_vertical_aperture(const SonarPoint& p, const SonarSpec& spec) {
  const double elevation = std::atan2(p.z(), std::hypot(p.x(), p.y()));
  return std::abs(elevation) <= 0.5 * spec.elevation_fov;
}

WarpSlice build_warp_slice(const CameraIntrinsics& intrinsics,
                           const RigidTransform& extrinsics, const SonarSpec& spec,
                           const PlaneHypothesisSet& planes, std::size_t index) {
  const int width = intrinsics.width;
  const int height = intrinsics.height;
  WarpSlice slice;
  slice.entries.resize(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0));
  (void)planes.distance(index);

#pragma omp parallel for schedule(static)
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      WarpEntry& entry = slice.entries[static_cast<std::size_t>(v) * width + u];
      const auto point = solve_ray_plane(u, v, intrinsics, extrinsics, planes, index);
      if (!point) continue;
      entry.point = *point;
      const PolarLookup lookup = cartesian_to_sonar_polar(*point, spec);
      entry.polar = lookup.polar;
      // The intersection must lie in front of the camera to be on the viewing ray.
      const bool in_front = extrinsics.to_camera(*point).z() > 0.0;
      entry.valid = lookup.in_fov && in_front;
    }
  }
  return slice;
}

WarpGrid build_warp_grid(const CameraIntrinsics& intrinsics,
                         const RigidTransform& extrinsics, const SonarSpec& spec,
                         const PlaneHypothesisSet& planes) {
  std::vector<WarpSlice> slices;
  slices.reserve(planes.size());
  for (std::size_t i = 0; i < planes.size(); ++i) {
    slices.push_back(build_warp_slice(intrinsics, extrinsics, spec, planes, i));
  }
  return WarpGrid(std::max(intrinsics.width, 0), std::max(intrinsics.height, 0),
                  std::move(slices));
}

}  // namespace sonarsweep
