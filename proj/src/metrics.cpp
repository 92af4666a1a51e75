#include "explain/metrics.hpp"

#include <algorithm>
#include <stdexcept>
#include <utility>

#include "explain/errors.hpp"

namespace explain {

PerformanceCurve performance_curve(std::span<const double> probs, std::span<const int> labels,
                                   int n_thresholds) {
  const std::size_t n = probs.size();
  if (labels.size() != n) throw std::invalid_argument("probs/labels length mismatch");
  if (n_thresholds < 2) throw std::invalid_argument("n_thresholds must be >= 2");

  long n_pos = 0;
  for (int y : labels) n_pos += y;
  if (n_pos == 0) throw DataError("degenerate targets");

  // Sort probabilities descending alongside labels; prefix sums then give the
  // contingency counts for any threshold in O(log n).
  std::vector<std::pair<double, int>> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = {probs[i], labels[i]};
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<long> prefix_pos(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) prefix_pos[i + 1] = prefix_pos[i] + order[i].second;

  PerformanceCurve curve;
  curve.thresholds.resize(n_thresholds);
  curve.pod.resize(n_thresholds);
  curve.sr.resize(n_thresholds);
  for (int k = 0; k < n_thresholds; ++k) {
    const double t =
        static_cast<double>(n_thresholds - 1 - k) / static_cast<double>(n_thresholds - 1);
    // Number of rows with prob >= t: first position where prob < t.
    const auto it = std::partition_point(order.begin(), order.end(),
                                         [t](const auto& p) { return p.first >= t; });
    const long predicted = static_cast<long>(it - order.begin());
    const long hits = prefix_pos[predicted];
    const long false_alarms = predicted - hits;
    curve.thresholds[k] = t;
    curve.pod[k] = static_cast<double>(hits) / static_cast<double>(n_pos);
    curve.sr[k] = predicted == 0
                      ? 1.0
                      : static_cast<double>(hits) / static_cast<double>(hits + false_alarms);
  }
  return curve;
}

double naupdc(std::span<const double> probs, std::span<const int> labels, int n_thresholds) {
  const PerformanceCurve curve = performance_curve(probs, labels, n_thresholds);

  long n_pos = 0;
  for (int y : labels) n_pos += y;
  const double base_rate = static_cast<double>(n_pos) / static_cast<double>(labels.size());
  if (base_rate >= 1.0) throw DataError("normalization undefined");

  // Achieved operating points only: thresholds that predicted at least one
  // positive. pod = 0 with the sr := 1 convention is not a real point.
  std::vector<std::pair<double, double>> points;
  points.reserve(curve.pod.size());
  for (std::size_t k = 0; k < curve.pod.size(); ++k) {
    const bool predicted_any = curve.pod[k] > 0.0 || curve.sr[k] < 1.0;
    if (predicted_any) points.emplace_back(curve.pod[k], curve.sr[k]);
  }
  std::sort(points.begin(), points.end());
  // Deduplicate by pod keeping the best sr (the highest-threshold table).
  std::vector<std::pair<double, double>> dedup;
  for (const auto& p : points) {
    if (!dedup.empty() && dedup.back().first == p.first) {
      dedup.back().second = std::max(dedup.back().second, p.second);
    } else {
      dedup.push_back(p);
    }
  }
  if (dedup.empty()) return (0.0 - base_rate) / (1.0 - base_rate);

  double area = dedup.front().first * dedup.front().second;  // rectangle down to pod = 0
  for (std::size_t k = 1; k < dedup.size(); ++k) {
    area += (dedup[k].first - dedup[k - 1].first) * 0.5 *
            (dedup[k].second + dedup[k - 1].second);
  }
  return (area - base_rate) / (1.0 - base_rate);
}

}  // namespace explain
