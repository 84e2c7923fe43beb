#ifndef SONARSWEEP_CALIBRATION_HPP
#define SONARSWEEP_CALIBRATION_HPP

#include "sonarsweep/geometry.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>

namespace sonarsweep {

/// Everything the sweep needs to relate camera pixels to sonar bins.
///
/// JSON layout (angles in degrees, lengths in meters):
///
///     {
///       "intrinsics": {"fx": .., "fy": .., "cx": .., "cy": .., "width": .., "height": ..},
///       "extrinsics": {"rotation": [9 values, row-major], "translation": [x, y, z]},
///       "sonar": {"range_min": .., "range_max": .., "bearing_fov_deg": ..,
///                 "elevation_fov_deg": .., "range_bins": .., "bearing_bins": ..},
///       "planes": {"alpha_deg": .., "d0": .., "k": .., "n": ..}
///     }
///
/// The extrinsics map sonar-frame points into the camera frame.
struct Calibration {
  CameraIntrinsics intrinsics;
  RigidTransform extrinsics;
  SonarSpec sonar;
  PlaneHypothesisSet planes{0.25 * 3.141592653589793, 0.5, 1.05, 48};

  void validate() const;
};

/// Rig used by the simulator and as the CLI default: 320x240 camera with a 60
/// degree horizontal FOV, 60x12 degree sonar reaching 5 m, camera 0.15 m to
/// starboard of the sonar with co-aligned axes, 48 planes from 0.5 m with
/// ratio 1.05 and a 45 degree inclination.
Calibration default_calibration();

nlohmann::json to_json(const CameraIntrinsics& k);
nlohmann::json to_json(const RigidTransform& t);
nlohmann::json to_json(const SonarSpec& s);
nlohmann::json to_json(const PlaneHypothesisSet& p);
nlohmann::json to_json(const Calibration& c);

CameraIntrinsics intrinsics_from_json(const nlohmann::json& j);
RigidTransform transform_from_json(const nlohmann::json& j);
SonarSpec sonar_spec_from_json(const nlohmann::json& j);
PlaneHypothesisSet planes_from_json(const nlohmann::json& j);
Calibration calibration_from_json(const nlohmann::json& j);

Calibration load_calibration(const std::filesystem::path& path);

}  // namespace sonarsweep

#endif  // SONARSWEEP_CALIBRATION_HPP
