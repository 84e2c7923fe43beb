#ifndef SONARSWEEP_SWEEP_HPP
#define SONARSWEEP_SWEEP_HPP

// Cost-volume construction and depth regression.
//
// Matching happens in camera space: the sonar intensity is resampled onto
// every hypothesis plane (one warped slice per plane), and the same
// handcrafted extractor runs on the camera crop and on each warped slice.
// Costs are "lower is better" and converted to probabilities with
// softmax(-cost) over the valid planes of a pixel.

#include "sonarsweep/calibration.hpp"
#include "sonarsweep/maps.hpp"
#include "sonarsweep/preprocess.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sonarsweep {

enum class FeatureKind { Intensity, Gradient, ZnccPatch };

/// "intensity", "gradient" or "zncc-patch"; throws ValidationError otherwise.
FeatureKind parse_feature_kind(std::string_view name);
std::string_view to_string(FeatureKind kind);

struct FeatureConfig {
  FeatureKind kind = FeatureKind::ZnccPatch;
  int patch_radius = 6;

  /// Channel count F: 1, 2 or (2r + 1)^2.
  int channels() const;
  void validate() const;
};

struct FeatureMap {
  Image<float> values;
  Mask valid;

  int width() const { return values.width(); }
  int height() const { return values.height(); }
  int channels() const { return values.channels(); }
  bool is_valid(int u, int v) const { return valid.at(u, v) != 0; }
};

/// Single-channel map of an image, every pixel valid.
FeatureMap intensity_map(const Image<float>& image);

/// Runs the extractor on a single-channel image. Neighborhoods are sampled
/// with edge clamping. A pixel is valid only when every sample it reads is
/// valid in `support` (all pixels when `support` is empty).
///   intensity   F = 1, passthrough
///   gradient    F = 2, (dI/du, dI/dv); central differences, one-sided at borders
///   zncc-patch  F = (2r+1)^2, zero-mean unit-norm patch; the zero vector when
///               the patch variance is below 1e-12
FeatureMap extract_features(const Image<float>& image, const FeatureConfig& config,
                            const Mask& support = {});

/// Bilinear lookup of sonar features at the polar coordinates of one warp
/// slice. Output has the slice's pixel layout; entries are invalid when the
/// slice entry is invalid or a contributing bin is invalid.
FeatureMap warp_sonar_features(const WarpSlice& slice, int width, int height,
                               const FeatureMap& sonar_features, const SonarSpec& spec);
/// One warped map per plane of the grid.
std::vector<FeatureMap> warp_sonar_features(const WarpGrid& grid,
                                            const FeatureMap& sonar_features,
                                            const SonarSpec& spec);

enum class Metric { Sad, NegDot, NegZncc };

/// "sad", "neg-dot" or "neg-zncc"; throws ValidationError otherwise.
Metric parse_metric(std::string_view name);
std::string_view to_string(Metric metric);

/// Dissimilarity of two feature vectors of equal length:
///   sad       sum |a - b|
///   neg-dot   -a . b
///   neg-zncc  -zncc(a, b); undefined (nullopt) when either vector has
///             variance below 1e-12, which includes F = 1
std::optional<double> match_cost(std::span<const float> a, std::span<const float> b,
                                 Metric metric);

struct CostConfig {
  Metric metric = Metric::NegZncc;
  /// Multiplies every cost; acts as the inverse softmax temperature.
  double scale = 25.0;

  void validate() const;
};

/// W x H x N costs with a validity flag per entry. Invalid entries hold
/// kInvalidCost.
class CostVolume {
 public:
  static constexpr double kInvalidCost = std::numeric_limits<double>::max();

  CostVolume() = default;
  CostVolume(int width, int height, int planes);

  int width() const { return width_; }
  int height() const { return height_; }
  int planes() const { return planes_; }

  double cost(int u, int v, int i) const { return costs_[index(u, v, i)]; }
  bool valid(int u, int v, int i) const { return valid_[index(u, v, i)] != 0; }
  /// Throws NumericalError for a non-finite cost.
  void set(int u, int v, int i, double cost);
  void invalidate(int u, int v, int i);

  std::span<const double> costs(int u, int v) const {
    return {costs_.data() + index(u, v, 0), static_cast<std::size_t>(planes_)};
  }
  std::span<const std::uint8_t> validity(int u, int v) const {
    return {valid_.data() + index(u, v, 0), static_cast<std::size_t>(planes_)};
  }

  friend bool operator==(const CostVolume&, const CostVolume&) = default;

 private:
  std::size_t index(int u, int v, int i) const {
    return (static_cast<std::size_t>(v) * width_ + u) * planes_ + i;
  }

  int width_ = 0;
  int height_ = 0;
  int planes_ = 0;
  std::vector<double> costs_;
  std::vector<std::uint8_t> valid_;
};

/// Fills slice `plane` from the camera features and one warped map.
void fill_cost_slice(CostVolume& volume, int plane, const FeatureMap& camera,
                     const FeatureMap& warped, const CostConfig& config);

CostVolume build_cost_volume(const FeatureMap& camera, const std::vector<FeatureMap>& warped,
                             const CostConfig& config);

struct RegularizerConfig {
  int radius = 3;
  int passes = 1;

  void validate() const;
};

/// Per-slice box mean over the valid entries of each window; the validity
/// mask is unchanged and radius 0 returns the input.
CostVolume regularize_cost_volume(const CostVolume& volume, const RegularizerConfig& config);

struct SoftArgmin {
  Image<double> d_hat;
  Mask valid;
  /// Channel i holds P(d_i | u, v); zero for invalid planes and pixels.
  Image<double> probabilities;
  /// Lowest-cost valid plane (lowest index on ties); -1 when masked.
  Image<int> argmin;
};

/// softmax(-cost) over the valid planes of each pixel, with max subtraction,
/// and the expected plane distance. Pixels without a valid plane are masked.
SoftArgmin soft_argmin(const CostVolume& volume, std::span<const double> distances);

/// Closed-form ray depth for each d_hat, converted to Euclidean distance.
/// Degenerate rays and points behind the camera are masked.
DepthMap regress_depth_map(const Image<double>& d_hat, const Mask& valid,
                           const CameraIntrinsics& intrinsics, const RigidTransform& extrinsics,
                           double alpha);

struct PipelineConfig {
  FeatureConfig features;
  CostConfig cost;
  RegularizerConfig regularizer;
  /// Crop to the sonar frustum and equalize. When off the whole image is
  /// used and only converted to luma.
  bool prepare_camera = true;
  /// Drop plane points outside the vertical beam; the sonar cannot have
  /// observed them.
  bool gate_elevation = true;
  /// Ablation: replace the sonar image by zeros before warping.
  bool zero_sonar_features = false;
  bool export_cost_volume = false;

  void validate() const;
};

struct PipelineResult {
  /// Full camera resolution; pixels outside the crop are masked.
  DepthMap depth;
  CropWindow crop;
  /// Full camera resolution, present when requested.
  std::optional<CostVolume> cost_volume;
};

/// Camera image is 8-bit gray or RGB at the calibrated resolution; the sonar
/// image must match the calibrated sonar geometry.
PipelineResult run_pipeline(const Image<std::uint8_t>& camera, const PolarSonarImage& sonar,
                            const Calibration& calibration, const PipelineConfig& config);

/// Binary cost volume: "SSCV1", u32 H, W, N, H*W*N float32 costs, then H*W*N
/// u8 validity, little-endian. Entries are ordered u outermost, then v, then
/// plane. Invalid entries store FLT_MAX.
std::string encode_cost_volume(const CostVolume& volume);
CostVolume decode_cost_volume(std::string_view bytes);

}  // namespace sonarsweep

#endif  // SONARSWEEP_SWEEP_HPP
