#include "sonarsweep/preprocess.hpp"

#include "sonarsweep/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace sonarsweep {

BackgroundModel average_background(const std::vector<PolarSonarImage>& frames) {
  if (frames.empty()) throw InputDataError("background model needs at least one frame");
  const SonarSpec& spec = frames.front().spec;
  std::vector<double> sum(frames.front().intensity.data().size(), 0.0);
  for (const auto& frame : frames) {
    if (!approx_equal(frame.spec, spec) ||
        !frame.intensity.same_shape(frames.front().intensity)) {
      throw InputDataError("background frames differ in size or sonar geometry");
    }
    const auto values = frame.intensity.data();
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += values[i];
  }
  BackgroundModel model{PolarSonarImage(spec), static_cast<int>(frames.size())};
  auto out = model.mean.intensity.data();
  for (std::size_t i = 0; i < sum.size(); ++i) {
    out[i] = static_cast<float>(sum[i] / static_cast<double>(frames.size()));
  }
  return model;
}

Image<float> median_filter(const Image<float>& image, int radius) {
  if (radius < 0) throw ValidationError("median radius must be >= 0");
  if (radius == 0 || image.empty()) return image;
  Image<float> out(image.width(), image.height(), image.channels());
  const int w = image.width(), h = image.height();
  const std::size_t taps = static_cast<std::size_t>(2 * radius + 1) * (2 * radius + 1);
#pragma omp parallel for schedule(static)
  for (int v = 0; v < h; ++v) {
    std::vector<float> window(taps);
    for (int u = 0; u < w; ++u) {
      for (int c = 0; c < image.channels(); ++c) {
        std::size_t n = 0;
        for (int dv = -radius; dv <= radius; ++dv) {
          const int vv = std::clamp(v + dv, 0, h - 1);
          for (int du = -radius; du <= radius; ++du) {
            window[n++] = image.at(std::clamp(u + du, 0, w - 1), vv, c);
          }
        }
        std::nth_element(window.begin(), window.begin() + taps / 2, window.end());
        out.at(u, v, c) = window[taps / 2];
      }
    }
  }
  return out;
}

PolarSonarImage denoise(const PolarSonarImage& image, int radius) {
  return PolarSonarImage(median_filter(image.intensity, radius), image.spec);
}

PolarSonarImage subtract_background(const PolarSonarImage& frame, const BackgroundModel& model) {
  if (!approx_equal(frame.spec, model.mean.spec) ||
      !frame.intensity.same_shape(model.mean.intensity)) {
    throw InputDataError("frame and background model differ in size or sonar geometry");
  }
  PolarSonarImage out = frame;
  auto dst = out.intensity.data();
  const auto bg = model.mean.intensity.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::max(dst[i] - bg[i], 0.0f);
  return out;
}

PolarSonarImage clean_sonar_frame(const PolarSonarImage& frame, const BackgroundModel& model,
                                  int median_radius) {
  const BackgroundModel denoised{denoise(model.mean, median_radius), model.frame_count};
  return subtract_background(denoise(frame, median_radius), denoised);
}

nlohmann::json to_json(const CropWindow& crop) {
  return {{"u0", crop.u0}, {"v0", crop.v0}, {"w", crop.w}, {"h", crop.h}};
}

CropWindow crop_from_json(const nlohmann::json& j) {
  try {
    CropWindow c{j.at("u0").get<int>(), j.at("v0").get<int>(), j.at("w").get<int>(),
                 j.at("h").get<int>()};
    if (c.u0 < 0 || c.v0 < 0 || c.w <= 0 || c.h <= 0) {
      throw ValidationError("crop window must have non-negative origin and positive size");
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("crop window: ") + e.what());
  }
}

CropWindow sonar_frustum_crop(const CameraIntrinsics& intrinsics,
                              const RigidTransform& extrinsics, const SonarSpec& spec) {
  intrinsics.validate();
  spec.validate();
  constexpr int kSamples = 24;
  double umin = std::numeric_limits<double>::infinity(), vmin = umin;
  double umax = -umin, vmax = -umin;
  bool any = false;
  auto add = [&](double range, double bearing, double elevation) {
    const auto p = project_sonar_point(spherical_to_cartesian(range, bearing, elevation),
                                       intrinsics, extrinsics);
    if (!p) return;
    any = true;
    umin = std::min(umin, p->x());
    umax = std::max(umax, p->x());
    vmin = std::min(vmin, p->y());
    vmax = std::max(vmax, p->y());
  };
  // Sample the whole frustum volume on a lattice; its hull bounds the projection.
  for (int a = 0; a <= kSamples; ++a) {
    const double range = spec.range_min + (spec.range_max - spec.range_min) * a / kSamples;
    for (int b = 0; b <= kSamples; ++b) {
      const double bearing = -0.5 * spec.bearing_fov + spec.bearing_fov * b / kSamples;
      for (int e = 0; e <= kSamples; ++e) {
        add(range, bearing, -0.5 * spec.elevation_fov + spec.elevation_fov * e / kSamples);
      }
    }
  }
  const double wmax = intrinsics.width - 1, hmax = intrinsics.height - 1;
  if (!any || umax < 0.0 || vmax < 0.0 || umin > wmax || vmin > hmax) {
    throw ValidationError("sonar frustum does not intersect the camera image");
  }
  const int u0 = static_cast<int>(std::floor(std::clamp(umin, 0.0, wmax)));
  const int v0 = static_cast<int>(std::floor(std::clamp(vmin, 0.0, hmax)));
  const int u1 = static_cast<int>(std::ceil(std::clamp(umax, 0.0, wmax)));
  const int v1 = static_cast<int>(std::ceil(std::clamp(vmax, 0.0, hmax)));
  return {u0, v0, u1 - u0 + 1, v1 - v0 + 1};
}

CameraIntrinsics crop_intrinsics(const CameraIntrinsics& intrinsics, const CropWindow& crop) {
  CameraIntrinsics k = intrinsics;
  k.cx -= crop.u0;
  k.cy -= crop.v0;
  k.width = crop.w;
  k.height = crop.h;
  return k;
}

Image<std::uint8_t> to_luma(const Image<std::uint8_t>& image) {
  if (image.channels() == 1) return image;
  if (image.channels() != 3) throw InputDataError("expected a gray or RGB image");
  Image<std::uint8_t> out(image.width(), image.height(), 1);
  for (int v = 0; v < image.height(); ++v) {
    for (int u = 0; u < image.width(); ++u) {
      const double y = 0.299 * image.at(u, v, 0) + 0.587 * image.at(u, v, 1) +
                       0.114 * image.at(u, v, 2);
      out.at(u, v) = static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
    }
  }
  return out;
}

Image<std::uint8_t> equalize_histogram(const Image<std::uint8_t>& gray) {
  if (gray.channels() != 1) throw InputDataError("histogram equalization needs a gray image");
  if (gray.empty()) return gray;
  std::array<std::uint64_t, 256> hist{};
  for (const auto g : gray.data()) ++hist[g];
  const std::uint64_t total = gray.pixel_count();
  std::array<std::uint8_t, 256> lut{};
  std::uint64_t cum = 0;
  for (int g = 0; g < 256; ++g) {
    cum += hist[static_cast<std::size_t>(g)];
    lut[static_cast<std::size_t>(g)] = static_cast<std::uint8_t>(255 * cum / total);
  }
  Image<std::uint8_t> out(gray.width(), gray.height(), 1);
  auto dst = out.data();
  const auto src = gray.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = lut[src[i]];
  return out;
}

PreparedCamera prepare_camera(const Image<std::uint8_t>& image, const Calibration& calibration) {
  const auto& k = calibration.intrinsics;
  if (image.width() != k.width || image.height() != k.height) {
    throw InputDataError("camera image is " + std::to_string(image.width()) + "x" +
                         std::to_string(image.height()) + " but the calibration expects " +
                         std::to_string(k.width) + "x" + std::to_string(k.height));
  }
  const CropWindow crop = sonar_frustum_crop(k, calibration.extrinsics, calibration.sonar);
  return {equalize_histogram(to_luma(crop_image(image, crop))), crop, crop_intrinsics(k, crop)};
}

}  // namespace sonarsweep
