#include "sonarsweep/eval.hpp"

#include "sonarsweep/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace sonarsweep {

namespace {

void check_pair(const DepthMap& pred, const DepthMap& gt) {
  if (pred.width() != gt.width() || pred.height() != gt.height()) {
    throw InputDataError("prediction is " + std::to_string(pred.width()) + "x" +
                         std::to_string(pred.height()) + " but ground truth is " +
                         std::to_string(gt.width()) + "x" + std::to_string(gt.height()));
  }
}

// Calls f(p, g) in row-major order for every pixel that enters the metrics.
template <typename F>
void for_each_pair(const DepthMap& pred, const DepthMap& gt, F&& f) {
  for (int v = 0; v < gt.height(); ++v) {
    for (int u = 0; u < gt.width(); ++u) {
      if (!pred.is_valid(u, v) || !gt.is_valid(u, v)) continue;
      const double g = gt.depth.at(u, v);
      if (!(g > 0.0)) continue;
      const double p = pred.depth.at(u, v);
      if (!(p > 0.0) || !std::isfinite(p)) {
        throw InputDataError("prediction holds a non-positive depth at a valid pixel");
      }
      f(p, g);
    }
  }
}

}  // namespace

MetricsReport compute_metrics(const DepthMap& pred, const DepthMap& gt, double threshold) {
  check_pair(pred, gt);
  if (!(threshold > 1.0)) throw ValidationError("a1 threshold must exceed 1");
  double rel = 0.0, diff = 0.0, sq = 0.0;
  std::size_t hits = 0, n = 0;
  for_each_pair(pred, gt, [&](double p, double g) {
    const double e = std::abs(p - g);
    rel += e / g;
    diff += e;
    sq += e * e;
    hits += std::max(p / g, g / p) < threshold ? 1 : 0;
    ++n;
  });
  if (n == 0) throw InputDataError("prediction and ground truth share no valid pixel");
  const double count = static_cast<double>(n);
  return {rel / count, diff / count, std::sqrt(sq / count), static_cast<double>(hits) / count, n};
}

std::vector<DistanceBin> error_vs_distance(const DepthMap& pred, const DepthMap& gt,
                                           const std::vector<double>& edges) {
  check_pair(pred, gt);
  if (edges.size() < 2) throw ValidationError("distance bins need at least two edges");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (!std::isfinite(edges[i]) || (i > 0 && !(edges[i] > edges[i - 1]))) {
      throw ValidationError("distance bin edges must be finite and strictly increasing");
    }
  }
  std::vector<DistanceBin> bins(edges.size() - 1);
  std::vector<double> sums(bins.size(), 0.0);
  for (std::size_t b = 0; b < bins.size(); ++b) {
    bins[b].lo = edges[b];
    bins[b].hi = edges[b + 1];
  }
  for_each_pair(pred, gt, [&](double p, double g) {
    if (g < edges.front() || g > edges.back()) return;
    auto it = std::upper_bound(edges.begin(), edges.end(), g);
    std::size_t b = static_cast<std::size_t>(it - edges.begin()) - 1;
    if (b >= bins.size()) b = bins.size() - 1;
    sums[b] += std::abs(p - g);
    ++bins[b].count;
  });
  for (std::size_t b = 0; b < bins.size(); ++b) {
    if (bins[b].count > 0) bins[b].mae = sums[b] / static_cast<double>(bins[b].count);
  }
  return bins;
}

nlohmann::json to_json(const MetricsReport& report) {
  return {{"abs_rel", report.abs_rel},
          {"abs_diff", report.abs_diff},
          {"rmse", report.rmse},
          {"a1", report.a1},
          {"valid_pixel_count", report.valid_pixel_count}};
}

std::string format_metrics_table(const MetricsReport& report) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%10s %10s %10s %10s %10s\n%10.4f %10.4f %10.4f %10.4f %10zu\n",
                "Abs Rel", "Abs Diff", "RMSE", "a1", "pixels", report.abs_rel, report.abs_diff,
                report.rmse, report.a1, report.valid_pixel_count);
  return buf;
}

std::string distance_bins_csv(const std::vector<DistanceBin>& bins) {
  std::ostringstream out;
  out.precision(17);
  out << "bin_lo,bin_hi,mae,count\n";
  for (const auto& b : bins) {
    out << b.lo << ',' << b.hi << ',';
    if (!b.empty()) out << b.mae;
    out << ',' << b.count << '\n';
  }
  return out.str();
}

}  // namespace sonarsweep
