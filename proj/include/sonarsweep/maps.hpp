#ifndef SONARSWEEP_MAPS_HPP
#define SONARSWEEP_MAPS_HPP

#include "sonarsweep/geometry.hpp"
#include "sonarsweep/image.hpp"

namespace sonarsweep {

/// Range-bin x bearing-bin intensity grid. Row r is range bin r (row 0 at
/// range_min); column b is bearing bin b (column 0 at -bearing_fov / 2).
struct PolarSonarImage {
  Image<float> intensity;
  SonarSpec spec;

  PolarSonarImage() = default;
  explicit PolarSonarImage(const SonarSpec& s)
      : intensity(s.bearing_bins, s.range_bins, 1, 0.0f), spec(s) {}
  PolarSonarImage(Image<float> values, const SonarSpec& s);

  int range_bins() const { return intensity.height(); }
  int bearing_bins() const { return intensity.width(); }
  float at(int range_bin, int bearing_bin) const { return intensity.at(bearing_bin, range_bin); }
  float& at(int range_bin, int bearing_bin) { return intensity.at(bearing_bin, range_bin); }
};

/// Dense per-pixel Euclidean distance from the camera center (meters).
/// Pixels with a zero mask entry carry no depth.
struct DepthMap {
  Image<double> depth;
  Mask valid;
  /// Regressed plane distance per pixel; empty when not produced.
  Image<double> plane_distance;

  DepthMap() = default;
  DepthMap(int width, int height)
      : depth(width, height, 1, 0.0), valid(width, height, 1, 0) {}

  int width() const { return depth.width(); }
  int height() const { return depth.height(); }
  bool is_valid(int u, int v) const { return valid.at(u, v) != 0; }
  std::size_t valid_count() const;
};

}  // namespace sonarsweep

#endif  // SONARSWEEP_MAPS_HPP
