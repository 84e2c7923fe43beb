#include "sonarsweep/calibration.hpp"

#include "sonarsweep/errors.hpp"
#include "sonarsweep/io.hpp"

#include <string>

namespace sonarsweep {

using nlohmann::json;

namespace {

template <typename T>
T required(const json& j, const char* key, const char* section) {
  if (!j.is_object() || !j.contains(key)) {
    throw ValidationError(std::string(section) + ": missing key '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string(section) + ": key '" + key + "' has the wrong type");
  }
}

}  // namespace

void Calibration::validate() const {
  intrinsics.validate();
  sonar.validate();
}

Calibration default_calibration() {
  Calibration c;
  // 60 degree horizontal FOV over 320 columns, square pixels.
  const double f = 160.0 / std::tan(deg_to_rad(30.0));
  c.intrinsics = {f, f, 159.5, 119.5, 320, 240};
  // Camera center sits 0.15 m to starboard of the sonar: c_s = (0.15, 0, 0),
  // t = -R c_s.
  const Eigen::Matrix3d r = RigidTransform::sonar_to_camera_axes();
  c.extrinsics = RigidTransform(r, -r * Eigen::Vector3d(0.15, 0.0, 0.0));
  c.sonar.range_min = 0.1;
  c.sonar.range_max = 5.0;
  c.sonar.bearing_fov = deg_to_rad(60.0);
  c.sonar.elevation_fov = deg_to_rad(12.0);
  c.sonar.range_bins = 256;
  c.sonar.bearing_bins = 128;
  c.planes = PlaneHypothesisSet(deg_to_rad(45.0), 0.5, 1.05, 48);
  return c;
}

json to_json(const CameraIntrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx},
          {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

json to_json(const RigidTransform& t) {
  json rotation = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rotation.push_back(t.rotation()(r, c));
  return {{"rotation", rotation},
          {"translation", {t.translation().x(), t.translation().y(), t.translation().z()}}};
}

json to_json(const SonarSpec& s) {
  return {{"range_min", s.range_min},
          {"range_max", s.range_max},
          {"bearing_fov_deg", rad_to_deg(s.bearing_fov)},
          {"elevation_fov_deg", rad_to_deg(s.elevation_fov)},
          {"range_bins", s.range_bins},
          {"bearing_bins", s.bearing_bins}};
}

json to_json(const PlaneHypothesisSet& p) {
  return {{"alpha_deg", rad_to_deg(p.alpha())},
          {"d0", p.d0()},
          {"k", p.k()},
          {"n", static_cast<int>(p.size())}};
}

json to_json(const Calibration& c) {
  return {{"intrinsics", to_json(c.intrinsics)},
          {"extrinsics", to_json(c.extrinsics)},
          {"sonar", to_json(c.sonar)},
          {"planes", to_json(c.planes)}};
}

CameraIntrinsics intrinsics_from_json(const json& j) {
  CameraIntrinsics k;
  k.fx = required<double>(j, "fx", "intrinsics");
  k.fy = required<double>(j, "fy", "intrinsics");
  k.cx = required<double>(j, "cx", "intrinsics");
  k.cy = required<double>(j, "cy", "intrinsics");
  k.width = required<int>(j, "width", "intrinsics");
  k.height = required<int>(j, "height", "intrinsics");
  k.validate();
  return k;
}

RigidTransform transform_from_json(const json& j) {
  const auto rotation = required<std::vector<double>>(j, "rotation", "extrinsics");
  const auto translation = required<std::vector<double>>(j, "translation", "extrinsics");
  if (rotation.size() != 9 || translation.size() != 3) {
    throw ValidationError("extrinsics: rotation needs 9 values and translation 3");
  }
  Eigen::Matrix3d r;
  for (int i = 0; i < 9; ++i) r(i / 3, i % 3) = rotation[static_cast<std::size_t>(i)];
  return RigidTransform(r, Eigen::Vector3d(translation[0], translation[1], translation[2]));
}

SonarSpec sonar_spec_from_json(const json& j) {
  SonarSpec s;
  s.range_min = required<double>(j, "range_min", "sonar");
  s.range_max = required<double>(j, "range_max", "sonar");
  s.bearing_fov = deg_to_rad(required<double>(j, "bearing_fov_deg", "sonar"));
  s.elevation_fov = deg_to_rad(required<double>(j, "elevation_fov_deg", "sonar"));
  s.range_bins = required<int>(j, "range_bins", "sonar");
  s.bearing_bins = required<int>(j, "bearing_bins", "sonar");
  s.validate();
  return s;
}

PlaneHypothesisSet planes_from_json(const json& j) {
  return PlaneHypothesisSet(deg_to_rad(required<double>(j, "alpha_deg", "planes")),
                            required<double>(j, "d0", "planes"),
                            required<double>(j, "k", "planes"),
                            required<int>(j, "n", "planes"));
}

Calibration calibration_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("calibration: expected a JSON object");
  Calibration c;
  c.intrinsics = intrinsics_from_json(j.value("intrinsics", json::object()));
  c.extrinsics = transform_from_json(j.value("extrinsics", json::object()));
  c.sonar = sonar_spec_from_json(j.value("sonar", json::object()));
  c.planes = planes_from_json(j.value("planes", json::object()));
  return c;
}

Calibration load_calibration(const std::filesystem::path& path) {
  return calibration_from_json(read_json(path));
}

}  // namespace sonarsweep
