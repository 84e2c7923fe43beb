#ifndef SONARSWEEP_EVAL_HPP
#define SONARSWEEP_EVAL_HPP

#include "sonarsweep/maps.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <string>
#include <vector>

namespace sonarsweep {

struct MetricsReport {
  double abs_rel = 0.0;
  double abs_diff = 0.0;
  double rmse = 0.0;
  double a1 = 0.0;
  std::size_t valid_pixel_count = 0;
};

/// Standard depth metrics over pixels valid in both maps with gt > 0.
/// a1 counts pixels with max(p / g, g / p) < threshold. Throws
/// InputDataError on a size mismatch, a non-positive valid prediction, or
/// when no pixel qualifies.
MetricsReport compute_metrics(const DepthMap& pred, const DepthMap& gt, double threshold = 1.25);

struct DistanceBin {
  double lo = 0.0;
  double hi = 0.0;
  double mae = 0.0;
  std::size_t count = 0;

  bool empty() const { return count == 0; }
};

/// Mean |p - g| per ground-truth distance bin [lo, hi); the last bin also
/// includes its upper edge. Edges must be strictly increasing (at least two).
std::vector<DistanceBin> error_vs_distance(const DepthMap& pred, const DepthMap& gt,
                                           const std::vector<double>& edges);

nlohmann::json to_json(const MetricsReport& report);
/// Aligned two-line table: Abs Rel, Abs Diff, RMSE, a1, pixels.
std::string format_metrics_table(const MetricsReport& report);
/// "bin_lo,bin_hi,mae,count" header plus one row per bin; empty bins print
/// an empty mae field.
std::string distance_bins_csv(const std::vector<DistanceBin>& bins);

}  // namespace sonarsweep

#endif  // SONARSWEEP_EVAL_HPP
