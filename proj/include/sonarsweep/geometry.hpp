#ifndef SONARSWEEP_GEOMETRY_HPP
#define SONARSWEEP_GEOMETRY_HPP

// Coordinate frames, projection models, and the ray/plane machinery of the
// sonar-aligned plane sweep.
//
// Frame conventions (used everywhere in this library):
//   Sonar frame S:  X lateral (starboard), Y forward (acoustic axis), Z up.
//   Camera frame C: x right, y down, z forward (optical axis).
// The extrinsic transform maps sonar coordinates into the camera:
//   P_c = R * P_s + t.
//
// Hypothesis plane i contains the sonar-frame point (0, d_i, 0) and is tilted
// by the inclination alpha about the X axis:
//   sin(alpha) * Y + cos(alpha) * Z = d_i * sin(alpha),
// i.e. unit normal n = (0, sin alpha, cos alpha) and elevation
//   Z = (d_i - Y) * tan(alpha).

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace sonarsweep {

struct SonarFrame {};
struct CameraFrame {};

/// A 3D point (meters) tagged with the frame it is expressed in.
template <typename Frame>
struct Point3 {
  Eigen::Vector3d v = Eigen::Vector3d::Zero();

  Point3() = default;
  explicit Point3(const Eigen::Vector3d& p) : v(p) {}
  Point3(double x, double y, double z) : v(x, y, z) {}

  double x() const { return v.x(); }
  double y() const { return v.y(); }
  double z() const { return v.z(); }
};

using SonarPoint = Point3<SonarFrame>;
using CameraPoint = Point3<CameraFrame>;

/// Pinhole intrinsics in pixels. Pixel (u, v) refers to the pixel center.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Throws ValidationError unless fx, fy > 0 and the principal point lies
  /// inside the image.
  void validate() const;

  Eigen::Matrix3d matrix() const;
  /// K^-1 [u, v, 1]^T: the viewing ray scaled to unit camera depth.
  Eigen::Vector3d ray(double u, double v) const;
  /// Pixel of a camera-frame point; nullopt when the point is not in front.
  std::optional<Eigen::Vector2d> project(const CameraPoint& p) const;
};

/// Rigid transform from the sonar frame into the camera frame. The rotation is
/// checked for orthonormality (R^T R = I, det R = +1, both within 1e-9).
class RigidTransform {
 public:
  RigidTransform();
  RigidTransform(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation);

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation_ * p + translation_;
  }
  CameraPoint to_camera(const SonarPoint& p) const { return CameraPoint(apply(p.v)); }
  SonarPoint to_sonar(const CameraPoint& p) const {
    return SonarPoint(rotation_.transpose() * (p.v - translation_));
  }

  RigidTransform inverse() const;
  /// (*this) after (other): x -> this(other(x)).
  RigidTransform compose(const RigidTransform& other) const;

  /// Rotation mapping the sonar axes onto camera axes for co-aligned sensors.
  static Eigen::Matrix3d sonar_to_camera_axes();

 private:
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
};

/// Imaging geometry of a forward-looking sonar. Angles in radians.
struct SonarSpec {
  double range_min = 0.1;
  double range_max = 5.0;
  double bearing_fov = 0.0;    // total horizontal aperture
  double elevation_fov = 0.0;  // total vertical aperture
  int range_bins = 0;
  int bearing_bins = 0;

  void validate() const;

  double range_bin_size() const { return (range_max - range_min) / range_bins; }
  double bearing_bin_size() const { return bearing_fov / bearing_bins; }

  /// Continuous bin coordinates: integer values are bin centers.
  double range_to_bin(double range) const {
    return (range - range_min) / range_bin_size() - 0.5;
  }
  double bearing_to_bin(double bearing) const {
    return (bearing + 0.5 * bearing_fov) / bearing_bin_size() - 0.5;
  }
  double bin_center_range(int bin) const {
    return range_min + (bin + 0.5) * range_bin_size();
  }
  double bin_center_bearing(int bin) const {
    return -0.5 * bearing_fov + (bin + 0.5) * bearing_bin_size();
  }

  friend bool operator==(const SonarSpec&, const SonarSpec&) = default;
};

/// Same bin counts and lengths/angles within `tol` (absorbs degree round trips).
bool approx_equal(const SonarSpec& a, const SonarSpec& b, double tol = 1e-9);

/// Range (meters) and bearing (radians, positive to starboard).
struct SonarPolar {
  double range = 0.0;
  double bearing = 0.0;
};

/// Candidate planes at distances d_i = d0 * k^i, i = 0..n-1 (0-based), all
/// sharing the inclination alpha.
class PlaneHypothesisSet {
 public:
  PlaneHypothesisSet(double alpha, double d0, double k, int n);

  double alpha() const { return alpha_; }
  double d0() const { return d0_; }
  double k() const { return k_; }
  std::size_t size() const { return distances_.size(); }

  /// Distance of plane `index` (0-based). Throws std::out_of_range.
  double distance(std::size_t index) const;
  const std::vector<double>& distances() const { return distances_; }

  Eigen::Vector3d normal() const;
  /// Signed residual of the plane equation for plane `index`, in meters.
  double residual(const SonarPoint& p, std::size_t index) const;

 private:
  double alpha_;
  double d0_;
  double k_;
  std::vector<double> distances_;
};

/// Spherical (range, bearing, elevation) to sonar-frame Cartesian:
/// (d cos(phi) sin(theta), d cos(phi) cos(theta), d sin(phi)).
SonarPoint spherical_to_cartesian(double range, double bearing, double elevation);

/// Lifts a polar measurement onto plane `index` (orthographic model).
SonarPoint backproject_sonar_to_plane(const SonarPolar& polar,
                                      const PlaneHypothesisSet& planes,
                                      std::size_t index);

struct PolarLookup {
  SonarPolar polar;
  bool in_fov = false;
};

/// Range and bearing from the horizontal components only (cos(phi) ~ 1).
SonarPolar cartesian_to_sonar_polar(const SonarPoint& p);
/// Same, with the in-FOV flag evaluated against the range/bearing window.
PolarLookup cartesian_to_sonar_polar(const SonarPoint& p, const SonarSpec& spec);

/// True when the elevation angle of `p` lies within +-elevation_fov / 2.
bool in_vertical_aperture(const SonarPoint& p, const SonarSpec& spec);

/// Solves A x = b for a 3x3 system by the adjugate formula. Returns nullopt
/// when |det A| < 1e-12 * max|A_ij|^3. One step of iterative refinement is
/// applied to the closed-form solution.
std::optional<Eigen::Vector3d> solve_3x3(const Eigen::Matrix3d& a, const Eigen::Vector3d& b);

/// Intersection of the viewing ray of pixel (u, v) with plane `index`,
/// expressed in the sonar frame. Combines the planar constraint with the two
/// projection constraints obtained by eliminating the projective scale.
/// nullopt when the ray is (numerically) parallel to the plane.
std::optional<SonarPoint> solve_ray_plane(double u, double v,
                                          const CameraIntrinsics& intrinsics,
                                          const RigidTransform& extrinsics,
                                          const PlaneHypothesisSet& planes,
                                          std::size_t index);

/// Camera-frame depth Z_c of the point on the viewing ray of (u, v) lying on
/// the plane at distance `plane_distance`. nullopt when the denominator
/// (R n)^T K^-1 [u, v, 1]^T is below 1e-12 in magnitude.
std::optional<double> closed_form_camera_depth(double u, double v, double plane_distance,
                                               const CameraIntrinsics& intrinsics,
                                               const RigidTransform& extrinsics,
                                               double alpha);

/// Euclidean distance along the viewing ray: |Z_c| * ||K^-1 [u, v, 1]^T||.
double ray_depth_to_euclidean(double u, double v, double camera_depth,
                              const CameraIntrinsics& intrinsics);

/// Pixel of a sonar-frame point; nullopt when behind the camera.
std::optional<Eigen::Vector2d> project_sonar_point(const SonarPoint& p,
                                                   const CameraIntrinsics& intrinsics,
                                                   const RigidTransform& extrinsics);

struct WarpEntry {
  SonarPoint point;
  SonarPolar polar;
  bool valid = false;
};

/// Per-pixel intersections for one plane, row-major over the image.
struct WarpSlice {
  std::vector<WarpEntry> entries;
};

/// Sampling coordinates for every pixel and every plane hypothesis.
class WarpGrid {
 public:
  WarpGrid() = default;
  WarpGrid(int width, int height, std::vector<WarpSlice> slices);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t planes() const { return slices_.size(); }

  const WarpSlice& slice(std::size_t index) const { return slices_.at(index); }
  const WarpEntry& at(int u, int v, std::size_t index) const {
    return slices_[index].entries[static_cast<std::size_t>(v) * width_ + u];
  }
  std::size_t valid_count(std::size_t index) const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<WarpSlice> slices_;
};

/// Builds the sampling slice of a single plane. Entries whose system is
/// singular or whose polar lookup falls outside the range/bearing window are
/// marked invalid.
WarpSlice build_warp_slice(const CameraIntrinsics& intrinsics,
                           const RigidTransform& extrinsics, const SonarSpec& spec,
                           const PlaneHypothesisSet& planes, std::size_t index);

/// Builds all slices. Image dimensions are taken from the intrinsics.
WarpGrid build_warp_grid(const CameraIntrinsics& intrinsics,
                         const RigidTransform& extrinsics, const SonarSpec& spec,
                         const PlaneHypothesisSet& planes);

double deg_to_rad(double degrees);
double rad_to_deg(double radians);

}  // namespace sonarsweep

#endif  // SONARSWEEP_GEOMETRY_HPP
