#include "sonarsweep/sweep.hpp"

#include "sonarsweep/errors.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstring>

namespace sonarsweep {

namespace {

constexpr double kVarianceFloor = 1e-12;

bool support_ok(const Mask& support, int u, int v) {
  return support.empty() || support.at(u, v) != 0;
}

void check_support(const Image<float>& image, const Mask& support) {
  if (!support.empty() && !support.same_size(image)) {
    throw InputDataError("feature support mask does not match the image size");
  }
}

}  // namespace

FeatureKind parse_feature_kind(std::string_view name) {
  if (name == "intensity") return FeatureKind::Intensity;
  if (name == "gradient") return FeatureKind::Gradient;
  if (name == "zncc-patch") return FeatureKind::ZnccPatch;
  throw ValidationError("unknown feature extractor '" + std::string(name) +
                        "' (expected intensity, gradient or zncc-patch)");
}

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::Intensity: return "intensity";
    case FeatureKind::Gradient: return "gradient";
    case FeatureKind::ZnccPatch: return "zncc-patch";
  }
  return "?";
}

int FeatureConfig::channels() const {
  switch (kind) {
    case FeatureKind::Intensity: return 1;
    case FeatureKind::Gradient: return 2;
    case FeatureKind::ZnccPatch: return (2 * patch_radius + 1) * (2 * patch_radius + 1);
  }
  return 1;
}

void FeatureConfig::validate() const {
  if (patch_radius < 0 || patch_radius > 15) {
    throw ValidationError("patch radius must lie in [0, 15]");
  }
  if (kind == FeatureKind::ZnccPatch && patch_radius == 0) {
    throw ValidationError("zncc-patch needs a patch radius of at least 1");
  }
}

FeatureMap intensity_map(const Image<float>& image) {
  if (image.channels() != 1) throw InputDataError("feature input must be single-channel");
  return {image, Mask(image.width(), image.height(), 1, 1)};
}

FeatureMap extract_features(const Image<float>& image, const FeatureConfig& config,
                            const Mask& support) {
  config.validate();
  if (image.channels() != 1) throw InputDataError("feature input must be single-channel");
  if (image.empty()) throw InputDataError("feature input is empty");
  check_support(image, support);
  const int w = image.width(), h = image.height();

  if (config.kind == FeatureKind::Intensity) {
    return {image, support.empty() ? Mask(w, h, 1, 1) : support};
  }

  FeatureMap out{Image<float>(w, h, config.channels(), 0.0f), Mask(w, h, 1, 0)};

  if (config.kind == FeatureKind::Gradient) {
#pragma omp parallel for schedule(static)
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        const int ul = std::max(u - 1, 0), ur = std::min(u + 1, w - 1);
        const int vt = std::max(v - 1, 0), vb = std::min(v + 1, h - 1);
        if (!(support_ok(support, u, v) && support_ok(support, ul, v) &&
              support_ok(support, ur, v) && support_ok(support, u, vt) &&
              support_ok(support, u, vb))) {
          continue;
        }
        const double gx = ur > ul ? (image.at(ur, v) - image.at(ul, v)) / double(ur - ul) : 0.0;
        const double gy = vb > vt ? (image.at(u, vb) - image.at(u, vt)) / double(vb - vt) : 0.0;
        out.values.at(u, v, 0) = static_cast<float>(gx);
        out.values.at(u, v, 1) = static_cast<float>(gy);
        out.valid.at(u, v) = 1;
      }
    }
    return out;
  }

  const int r = config.patch_radius;
  const int f = config.channels();
#pragma omp parallel for schedule(static)
  for (int v = 0; v < h; ++v) {
    std::vector<double> patch(static_cast<std::size_t>(f));
    for (int u = 0; u < w; ++u) {
      bool ok = true;
      std::size_t n = 0;
      double mean = 0.0;
      for (int dv = -r; dv <= r && ok; ++dv) {
        const int vv = std::clamp(v + dv, 0, h - 1);
        for (int du = -r; du <= r; ++du) {
          const int uu = std::clamp(u + du, 0, w - 1);
          if (!support_ok(support, uu, vv)) {
            ok = false;
            break;
          }
          patch[n] = image.at(uu, vv);
          mean += patch[n++];
        }
      }
      if (!ok) continue;
      mean /= f;
      double sq = 0.0;
      for (auto& x : patch) {
        x -= mean;
        sq += x * x;
      }
      out.valid.at(u, v) = 1;
      if (sq / f < kVarianceFloor) continue;  // zero vector
      const double inv = 1.0 / std::sqrt(sq);
      auto dst = out.values.pixel(u, v);
      for (int c = 0; c < f; ++c) dst[c] = static_cast<float>(patch[c] * inv);
    }
  }
  return out;
}

FeatureMap warp_sonar_features(const WarpSlice& slice, int width, int height,
                               const FeatureMap& sonar_features, const SonarSpec& spec) {
  if (slice.entries.size() != static_cast<std::size_t>(width) * height) {
    throw InputDataError("warp slice does not match the requested image size");
  }
  if (sonar_features.width() != spec.bearing_bins || sonar_features.height() != spec.range_bins) {
    throw InputDataError("sonar feature map does not match the sonar geometry");
  }
  const int f = sonar_features.channels();
  const int rb_max = spec.range_bins - 1, bb_max = spec.bearing_bins - 1;
  FeatureMap out{Image<float>(width, height, f, 0.0f), Mask(width, height, 1, 0)};

#pragma omp parallel for schedule(static)
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const WarpEntry& e = slice.entries[static_cast<std::size_t>(v) * width + u];
      if (!e.valid) continue;
      const double rb = std::clamp(spec.range_to_bin(e.polar.range), 0.0, double(rb_max));
      const double bb = std::clamp(spec.bearing_to_bin(e.polar.bearing), 0.0, double(bb_max));
      const int r0 = static_cast<int>(std::floor(rb)), b0 = static_cast<int>(std::floor(bb));
      const int r1 = std::min(r0 + 1, rb_max), b1 = std::min(b0 + 1, bb_max);
      const double fr = rb - r0, fb = bb - b0;
      if (!(sonar_features.is_valid(b0, r0) && sonar_features.is_valid(b1, r0) &&
            sonar_features.is_valid(b0, r1) && sonar_features.is_valid(b1, r1))) {
        continue;
      }
      auto dst = out.values.pixel(u, v);
      for (int c = 0; c < f; ++c) {
        const double top = (1.0 - fb) * sonar_features.values.at(b0, r0, c) +
                           fb * sonar_features.values.at(b1, r0, c);
        const double bottom = (1.0 - fb) * sonar_features.values.at(b0, r1, c) +
                              fb * sonar_features.values.at(b1, r1, c);
        dst[c] = static_cast<float>((1.0 - fr) * top + fr * bottom);
      }
      out.valid.at(u, v) = 1;
    }
  }
  return out;
}

std::vector<FeatureMap> warp_sonar_features(const WarpGrid& grid,
                                            const FeatureMap& sonar_features,
                                            const SonarSpec& spec) {
  std::vector<FeatureMap> out;
  out.reserve(grid.planes());
  for (std::size_t i = 0; i < grid.planes(); ++i) {
    out.push_back(
        warp_sonar_features(grid.slice(i), grid.width(), grid.height(), sonar_features, spec));
  }
  return out;
}

Metric parse_metric(std::string_view name) {
  if (name == "sad") return Metric::Sad;
  if (name == "neg-dot") return Metric::NegDot;
  if (name == "neg-zncc") return Metric::NegZncc;
  throw ValidationError("unknown metric '" + std::string(name) +
                        "' (expected sad, neg-dot or neg-zncc)");
}

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::Sad: return "sad";
    case Metric::NegDot: return "neg-dot";
    case Metric::NegZncc: return "neg-zncc";
  }
  return "?";
}

std::optional<double> match_cost(std::span<const float> a, std::span<const float> b,
                                 Metric metric) {
  if (a.size() != b.size()) throw InputDataError("feature vectors differ in length");
  const std::size_t n = a.size();
  switch (metric) {
    case Metric::Sad: {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += std::abs(double(a[i]) - double(b[i]));
      return s;
    }
    case Metric::NegDot: {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += double(a[i]) * double(b[i]);
      return -s;
    }
    case Metric::NegZncc: {
      if (n == 0) return std::nullopt;
      double ma = 0.0, mb = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
      }
      ma /= double(n);
      mb /= double(n);
      double saa = 0.0, sbb = 0.0, sab = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double x = a[i] - ma, y = b[i] - mb;
        saa += x * x;
        sbb += y * y;
        sab += x * y;
      }
      if (saa / double(n) < kVarianceFloor || sbb / double(n) < kVarianceFloor) {
        return std::nullopt;
      }
      return -sab / std::sqrt(saa * sbb);
    }
  }
  return std::nullopt;
}

void CostConfig::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ValidationError("cost scale must be > 0");
}

CostVolume::CostVolume(int width, int height, int planes)
    : width_(width), height_(height), planes_(planes) {
  if (width < 0 || height < 0 || planes < 1) {
    throw ValidationError("cost volume needs non-negative size and at least one plane");
  }
  const std::size_t n = static_cast<std::size_t>(width) * height * planes;
  costs_.assign(n, kInvalidCost);
  valid_.assign(n, 0);
}

void CostVolume::set(int u, int v, int i, double cost) {
  if (!std::isfinite(cost)) throw NumericalError("non-finite matching cost");
  costs_[index(u, v, i)] = cost;
  valid_[index(u, v, i)] = 1;
}

void CostVolume::invalidate(int u, int v, int i) {
  costs_[index(u, v, i)] = kInvalidCost;
  valid_[index(u, v, i)] = 0;
}

void fill_cost_slice(CostVolume& volume, int plane, const FeatureMap& camera,
                     const FeatureMap& warped, const CostConfig& config) {
  config.validate();
  if (camera.width() != volume.width() || camera.height() != volume.height() ||
      !camera.values.same_shape(warped.values)) {
    throw InputDataError("camera and warped feature maps differ in size or channel count");
  }
  if (plane < 0 || plane >= volume.planes()) throw ValidationError("plane index out of range");
  const int w = volume.width(), h = volume.height();
#pragma omp parallel for schedule(static)
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      std::optional<double> c;
      if (camera.is_valid(u, v) && warped.is_valid(u, v)) {
        c = match_cost(camera.values.pixel(u, v), warped.values.pixel(u, v), config.metric);
      }
      if (c) {
        volume.set(u, v, plane, config.scale * *c);
      } else {
        volume.invalidate(u, v, plane);
      }
    }
  }
}

CostVolume build_cost_volume(const FeatureMap& camera, const std::vector<FeatureMap>& warped,
                             const CostConfig& config) {
  if (warped.empty()) throw ValidationError("cost volume needs at least one warped map");
  CostVolume volume(camera.width(), camera.height(), static_cast<int>(warped.size()));
  for (std::size_t i = 0; i < warped.size(); ++i) {
    fill_cost_slice(volume, static_cast<int>(i), camera, warped[i], config);
  }
  return volume;
}

void RegularizerConfig::validate() const {
  if (radius < 0) throw ValidationError("regularizer radius must be >= 0");
  if (passes < 0) throw ValidationError("regularizer passes must be >= 0");
}

CostVolume regularize_cost_volume(const CostVolume& volume, const RegularizerConfig& config) {
  config.validate();
  if (config.radius == 0 || config.passes == 0) return volume;
  const int w = volume.width(), h = volume.height(), n = volume.planes();
  const int r = config.radius;
  const std::size_t total = static_cast<std::size_t>(w) * h * n;
  auto at = [w, n](int u, int v, int i) {
    return (static_cast<std::size_t>(v) * w + u) * n + i;
  };

  CostVolume current = volume;
  std::vector<double> row_sum(total), row_count(total);
  for (int pass = 0; pass < config.passes; ++pass) {
#pragma omp parallel for schedule(static)
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        for (int i = 0; i < n; ++i) {
          double s = 0.0, c = 0.0;
          for (int uu = std::max(u - r, 0); uu <= std::min(u + r, w - 1); ++uu) {
            if (current.valid(uu, v, i)) {
              s += current.cost(uu, v, i);
              c += 1.0;
            }
          }
          row_sum[at(u, v, i)] = s;
          row_count[at(u, v, i)] = c;
        }
      }
    }
    CostVolume next = current;
#pragma omp parallel for schedule(static)
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        for (int i = 0; i < n; ++i) {
          if (!current.valid(u, v, i)) continue;
          double s = 0.0, c = 0.0;
          for (int vv = std::max(v - r, 0); vv <= std::min(v + r, h - 1); ++vv) {
            s += row_sum[at(u, vv, i)];
            c += row_count[at(u, vv, i)];
          }
          next.set(u, v, i, s / c);
        }
      }
    }
    current = std::move(next);
  }
  return current;
}

SoftArgmin soft_argmin(const CostVolume& volume, std::span<const double> distances) {
  const int w = volume.width(), h = volume.height(), n = volume.planes();
  if (distances.size() != static_cast<std::size_t>(n)) {
    throw ValidationError("soft-argmin: plane count does not match the distance list");
  }
  const auto [dmin_it, dmax_it] = std::minmax_element(distances.begin(), distances.end());
  const double dmin = *dmin_it, dmax = *dmax_it;
  SoftArgmin out{Image<double>(w, h, 1, 0.0), Mask(w, h, 1, 0), Image<double>(w, h, n, 0.0),
                 Image<int>(w, h, 1, -1)};

#pragma omp parallel for schedule(static)
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const auto costs = volume.costs(u, v);
      const auto valid = volume.validity(u, v);
      int best = -1;
      for (int i = 0; i < n; ++i) {
        if (valid[i] && (best < 0 || costs[i] < costs[best])) best = i;
      }
      if (best < 0) continue;
      auto p = out.probabilities.pixel(u, v);
      double z = 0.0;
      for (int i = 0; i < n; ++i) {
        if (!valid[i]) continue;
        p[i] = std::exp(-(costs[i] - costs[best]));
        z += p[i];
      }
      double d = 0.0;
      for (int i = 0; i < n; ++i) {
        p[i] /= z;
        d += p[i] * distances[i];
      }
      out.d_hat.at(u, v) = std::clamp(d, dmin, dmax);
      out.valid.at(u, v) = 1;
      out.argmin.at(u, v) = best;
    }
  }
  return out;
}

DepthMap regress_depth_map(const Image<double>& d_hat, const Mask& valid,
                           const CameraIntrinsics& intrinsics, const RigidTransform& extrinsics,
                           double alpha) {
  if (!d_hat.same_size(valid)) throw InputDataError("d_hat and mask differ in size");
  const int w = d_hat.width(), h = d_hat.height();
  DepthMap out(w, h);
  out.plane_distance = Image<double>(w, h, 1, 0.0);
#pragma omp parallel for schedule(static)
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (valid.at(u, v) == 0) continue;
      const auto z = closed_form_camera_depth(u, v, d_hat.at(u, v), intrinsics, extrinsics, alpha);
      if (!z || !(*z > 0.0)) continue;
      const double depth = ray_depth_to_euclidean(u, v, *z, intrinsics);
      if (!std::isfinite(depth)) continue;
      out.depth.at(u, v) = depth;
      out.valid.at(u, v) = 1;
      out.plane_distance.at(u, v) = d_hat.at(u, v);
    }
  }
  return out;
}

void PipelineConfig::validate() const {
  features.validate();
  cost.validate();
  regularizer.validate();
}

PipelineResult run_pipeline(const Image<std::uint8_t>& camera, const PolarSonarImage& sonar,
                            const Calibration& calibration, const PipelineConfig& config) {
  config.validate();
  calibration.validate();
  const auto& k = calibration.intrinsics;
  if (camera.width() != k.width || camera.height() != k.height) {
    throw InputDataError("camera image size does not match the calibration");
  }
  if (!approx_equal(sonar.spec, calibration.sonar) ||
      sonar.intensity.width() != calibration.sonar.bearing_bins ||
      sonar.intensity.height() != calibration.sonar.range_bins) {
    throw InputDataError("sonar image geometry does not match the calibration");
  }

  PreparedCamera prepared;
  if (config.prepare_camera) {
    prepared = prepare_camera(camera, calibration);
  } else {
    prepared = {to_luma(camera), CropWindow{0, 0, k.width, k.height}, k};
  }
  const int w = prepared.crop.w, h = prepared.crop.h;
  Image<float> gray(w, h, 1);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) gray.at(u, v) = prepared.image.at(u, v) / 255.0f;

  const FeatureMap camera_features = extract_features(gray, config.features);
  FeatureMap sonar_map = intensity_map(sonar.intensity);
  if (config.zero_sonar_features) {
    std::fill(sonar_map.values.data().begin(), sonar_map.values.data().end(), 0.0f);
  }

  const auto& planes = calibration.planes;
  const int n = static_cast<int>(planes.size());
  CostVolume raw(w, h, n);
  for (int i = 0; i < n; ++i) {
    WarpSlice slice = build_warp_slice(prepared.intrinsics, calibration.extrinsics,
                                       calibration.sonar, planes, static_cast<std::size_t>(i));
    if (config.gate_elevation) {
      for (auto& e : slice.entries) {
        e.valid = e.valid && in_vertical_aperture(e.point, calibration.sonar);
      }
    }
    const FeatureMap warped = warp_sonar_features(slice, w, h, sonar_map, calibration.sonar);
    const FeatureMap warped_features =
        extract_features(warped.values, config.features, warped.valid);
    fill_cost_slice(raw, i, camera_features, warped_features, config.cost);
  }

  const CostVolume regularized = regularize_cost_volume(raw, config.regularizer);
  const SoftArgmin soft = soft_argmin(regularized, planes.distances());
  const DepthMap local = regress_depth_map(soft.d_hat, soft.valid, prepared.intrinsics,
                                           calibration.extrinsics, planes.alpha());

  PipelineResult result;
  result.crop = prepared.crop;
  result.depth = DepthMap(k.width, k.height);
  result.depth.plane_distance = Image<double>(k.width, k.height, 1, 0.0);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const int fu = prepared.crop.u0 + u, fv = prepared.crop.v0 + v;
      result.depth.depth.at(fu, fv) = local.depth.at(u, v);
      result.depth.valid.at(fu, fv) = local.valid.at(u, v);
      result.depth.plane_distance.at(fu, fv) = local.plane_distance.at(u, v);
    }
  }
  if (config.export_cost_volume) {
    CostVolume full(k.width, k.height, n);
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u)
        for (int i = 0; i < n; ++i)
          if (raw.valid(u, v, i)) {
            full.set(prepared.crop.u0 + u, prepared.crop.v0 + v, i, raw.cost(u, v, i));
          }
    result.cost_volume = std::move(full);
  }
  return result;
}

namespace {

void put_u32(std::string& out, std::uint32_t x) {
  char b[4];
  std::memcpy(b, &x, 4);
  out.append(b, 4);
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
  std::uint32_t x = 0;
  std::memcpy(&x, bytes.data() + offset, 4);
  return x;
}

constexpr std::string_view kMagic = "SSCV1";

}  // namespace

std::string encode_cost_volume(const CostVolume& volume) {
  const std::size_t n =
      static_cast<std::size_t>(volume.width()) * volume.height() * volume.planes();
  std::string out(kMagic);
  out.reserve(kMagic.size() + 12 + n * 5);
  put_u32(out, static_cast<std::uint32_t>(volume.height()));
  put_u32(out, static_cast<std::uint32_t>(volume.width()));
  put_u32(out, static_cast<std::uint32_t>(volume.planes()));
  std::string validity;
  validity.reserve(n);
  for (int u = 0; u < volume.width(); ++u) {
    for (int v = 0; v < volume.height(); ++v) {
      for (int i = 0; i < volume.planes(); ++i) {
        const bool ok = volume.valid(u, v, i);
        const double c = volume.cost(u, v, i);
        if (ok && !(std::abs(c) <= FLT_MAX)) {
          throw NumericalError("cost does not fit in float32");
        }
        const float f = ok ? static_cast<float>(c) : FLT_MAX;
        char b[4];
        std::memcpy(b, &f, 4);
        out.append(b, 4);
        validity.push_back(ok ? 1 : 0);
      }
    }
  }
  return out + validity;
}

CostVolume decode_cost_volume(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 12 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw InputDataError("not an SSCV1 cost volume");
  }
  const std::uint32_t h = get_u32(bytes, 5), w = get_u32(bytes, 9), n = get_u32(bytes, 13);
  if (h > (1u << 16) || w > (1u << 16) || n == 0 || n > (1u << 12)) {
    throw InputDataError("SSCV1 dimensions out of range");
  }
  const std::size_t count = static_cast<std::size_t>(h) * w * n;
  const std::size_t header = kMagic.size() + 12;
  if (bytes.size() != header + count * 5) throw InputDataError("SSCV1 payload size mismatch");
  CostVolume volume(static_cast<int>(w), static_cast<int>(h), static_cast<int>(n));
  std::size_t k = 0;
  for (int u = 0; u < static_cast<int>(w); ++u) {
    for (int v = 0; v < static_cast<int>(h); ++v) {
      for (int i = 0; i < static_cast<int>(n); ++i, ++k) {
        const auto flag = static_cast<std::uint8_t>(bytes[header + count * 4 + k]);
        if (flag > 1) throw InputDataError("SSCV1 validity bytes must be 0 or 1");
        if (flag == 0) continue;
        float f = 0.0f;
        std::memcpy(&f, bytes.data() + header + k * 4, 4);
        if (!std::isfinite(f)) throw InputDataError("SSCV1 holds a non-finite valid cost");
        volume.set(u, v, i, f);
      }
    }
  }
  return volume;
}

}  // namespace sonarsweep
