#ifndef SONARSWEEP_PREPROCESS_HPP
#define SONARSWEEP_PREPROCESS_HPP

// Sonar cleanup (background model, median denoising, subtraction) and camera
// preparation (crop to the sonar frustum, luma, histogram equalization).

#include "sonarsweep/calibration.hpp"
#include "sonarsweep/maps.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <vector>

namespace sonarsweep {

struct BackgroundModel {
  PolarSonarImage mean;
  int frame_count = 0;
};

/// Per-bin arithmetic mean of object-free frames. Throws InputDataError for
/// an empty list or frames with differing geometry.
BackgroundModel average_background(const std::vector<PolarSonarImage>& frames);

/// Median over a (2r+1)^2 window with edge clamping. radius 0 is the identity.
Image<float> median_filter(const Image<float>& image, int radius);
PolarSonarImage denoise(const PolarSonarImage& image, int radius);

/// max(frame - model, 0) per bin.
PolarSonarImage subtract_background(const PolarSonarImage& frame, const BackgroundModel& model);

/// Denoise the frame and the background mean, then subtract.
PolarSonarImage clean_sonar_frame(const PolarSonarImage& frame, const BackgroundModel& model,
                                  int median_radius);

/// Pixel window [u0, u0 + w) x [v0, v0 + h).
struct CropWindow {
  int u0 = 0;
  int v0 = 0;
  int w = 0;
  int h = 0;

  bool contains(int u, int v) const { return u >= u0 && v >= v0 && u < u0 + w && v < v0 + h; }
  friend bool operator==(const CropWindow&, const CropWindow&) = default;
};

nlohmann::json to_json(const CropWindow& crop);
CropWindow crop_from_json(const nlohmann::json& j);

/// Bounding box of the projected sonar frustum (range x bearing x elevation
/// aperture), clipped to the image. Throws ValidationError when the frustum
/// does not reach the image.
CropWindow sonar_frustum_crop(const CameraIntrinsics& intrinsics,
                              const RigidTransform& extrinsics, const SonarSpec& spec);

/// Intrinsics of the cropped image (principal point shifted).
CameraIntrinsics crop_intrinsics(const CameraIntrinsics& intrinsics, const CropWindow& crop);

template <typename T>
Image<T> crop_image(const Image<T>& image, const CropWindow& crop) {
  Image<T> out(crop.w, crop.h, image.channels());
  for (int v = 0; v < crop.h; ++v)
    for (int u = 0; u < crop.w; ++u)
      for (int c = 0; c < image.channels(); ++c)
        out.at(u, v, c) = image.at(crop.u0 + u, crop.v0 + v, c);
  return out;
}

/// Gray passthrough; RGB uses Y = 0.299 R + 0.587 G + 0.114 B, rounded.
Image<std::uint8_t> to_luma(const Image<std::uint8_t>& image);

/// Maps level g to floor(255 * cdf(g)) where cdf counts pixels <= g.
/// A single-level image maps to 255.
Image<std::uint8_t> equalize_histogram(const Image<std::uint8_t>& gray);

struct PreparedCamera {
  Image<std::uint8_t> image;
  CropWindow crop;
  CameraIntrinsics intrinsics;
};

/// Crop to the sonar frustum, convert to luma, equalize over the crop.
PreparedCamera prepare_camera(const Image<std::uint8_t>& image, const Calibration& calibration);

}  // namespace sonarsweep

#endif  // SONARSWEEP_PREPROCESS_HPP
