#include "explain/effects.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/beta.hpp>

#include "explain/errors.hpp"
#include "explain/parallel.hpp"

namespace explain {

EffectCurve partial_dependence(const ProbabilisticClassifier& model, const TabularDataset& data,
                               int feature_index, const BinGrid& grid, int workers) {
  if (feature_index < 0 || static_cast<std::size_t>(feature_index) >= data.n_features()) {
    throw std::invalid_argument("feature index out of range");
  }
  if (grid.centers.empty()) throw std::invalid_argument("degenerate grid");

  std::vector<double> values(grid.centers.size(), 0.0);
  parallel_for(grid.centers.size(), workers, [&](std::size_t k) {
    Matrix x = data.features;
    const std::vector<double> clamped(x.rows(), grid.centers[k]);
    x.set_column(feature_index, clamped);
    const std::vector<double> probs = model.predict_proba(x);
    values[k] = std::accumulate(probs.begin(), probs.end(), 0.0) /
                static_cast<double>(probs.size());
  });

  const double mean = std::accumulate(values.begin(), values.end(), 0.0) /
                      static_cast<double>(values.size());
  for (double& v : values) v -= mean;

  EffectCurve curve;
  curve.feature_index = feature_index;
  curve.grid = grid.centers;
  curve.values = std::move(values);
  curve.method_id = "pd";
  curve.bin_counts = grid.counts;
  return curve;
}

EffectCurve ale_first_order(const ProbabilisticClassifier& model, const TabularDataset& data,
                            int feature_index, const BinGrid& grid, int workers) {
  if (feature_index < 0 || static_cast<std::size_t>(feature_index) >= data.n_features()) {
    throw std::invalid_argument("feature index out of range");
  }
  const std::size_t n = data.n_examples();

  // Assign rows to bins, then merge empty bins into their left neighbor
  // (leftmost empties merge right) so every local effect is defined.
  std::vector<std::vector<int>> bin_rows(grid.centers.size());
  for (std::size_t i = 0; i < n; ++i) {
    bin_rows[bin_index(grid, data.features(i, feature_index))].push_back(static_cast<int>(i));
  }
  struct UsableBin {
    double lo, hi;
    std::vector<int> rows;
  };
  std::vector<UsableBin> bins;
  for (std::size_t k = 0; k < bin_rows.size(); ++k) {
    if (!bin_rows[k].empty() || bins.empty()) {
      bins.push_back({grid.edges[k], grid.edges[k + 1], std::move(bin_rows[k])});
    } else {
      bins.back().hi = grid.edges[k + 1];
    }
  }
  while (bins.size() > 1 && bins.front().rows.empty()) {
    bins[1].lo = bins[0].lo;
    bins.erase(bins.begin());
  }
  if (bins.size() < 2) throw std::invalid_argument("fewer than 2 usable bins");
  for (const auto& b : bins) {
    if (b.rows.empty()) throw std::invalid_argument("fewer than 2 usable bins");
  }

  // Per bin: full local effect (lower to upper edge) for the accumulation,
  // plus the half effect up to the bin center so the reported value is the
  // accumulated effect at the center itself rather than an edge chord.
  std::vector<double> local(bins.size(), 0.0);
  std::vector<double> local_to_center(bins.size(), 0.0);
  parallel_for(bins.size(), workers, [&](std::size_t k) {
    const auto& bin = bins[k];
    Matrix rows_hi(bin.rows.size(), data.n_features());
    Matrix rows_lo(bin.rows.size(), data.n_features());
    Matrix rows_mid(bin.rows.size(), data.n_features());
    const double center = 0.5 * (bin.lo + bin.hi);
    for (std::size_t r = 0; r < bin.rows.size(); ++r) {
      const auto src = data.features.row(bin.rows[r]);
      std::copy(src.begin(), src.end(), rows_hi.row(r).begin());
      std::copy(src.begin(), src.end(), rows_lo.row(r).begin());
      std::copy(src.begin(), src.end(), rows_mid.row(r).begin());
      rows_hi(r, feature_index) = bin.hi;
      rows_lo(r, feature_index) = bin.lo;
      rows_mid(r, feature_index) = center;
    }
    const std::vector<double> hi = model.predict_proba(rows_hi);
    const std::vector<double> lo = model.predict_proba(rows_lo);
    const std::vector<double> mid = model.predict_proba(rows_mid);
    double sum = 0.0, half = 0.0;
    for (std::size_t r = 0; r < hi.size(); ++r) {
      sum += hi[r] - lo[r];
      half += mid[r] - lo[r];
    }
    local[k] = sum / static_cast<double>(hi.size());
    local_to_center[k] = half / static_cast<double>(hi.size());
  });

  std::vector<double> at_center(bins.size());
  double cum = 0.0;
  for (std::size_t k = 0; k < bins.size(); ++k) {
    at_center[k] = cum + local_to_center[k];
    cum += local[k];
  }
  double weighted_sum = 0.0;
  long total = 0;
  for (std::size_t k = 0; k < bins.size(); ++k) {
    weighted_sum += at_center[k] * static_cast<double>(bins[k].rows.size());
    total += static_cast<long>(bins[k].rows.size());
  }
  const double weighted_mean = weighted_sum / static_cast<double>(total);
  for (double& v : at_center) v -= weighted_mean;

  EffectCurve curve;
  curve.feature_index = feature_index;
  curve.method_id = "ale";
  curve.grid.resize(bins.size());
  curve.bin_counts.resize(bins.size());
  for (std::size_t k = 0; k < bins.size(); ++k) {
    curve.grid[k] = 0.5 * (bins[k].lo + bins[k].hi);
    curve.bin_counts[k] = static_cast<int>(bins[k].rows.size());
  }
  curve.values = std::move(at_center);
  return curve;
}

ImportanceResult ale_variance_ranking(const std::vector<EffectCurve>& curves,
                                      const std::vector<std::string>& feature_names) {
  if (curves.empty()) throw std::invalid_argument("no curves");
  std::vector<double> scores(curves.size());
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const auto& curve = curves[c];
    double w_total = 0.0, mean = 0.0;
    for (std::size_t k = 0; k < curve.values.size(); ++k) {
      const double w = curve.bin_counts.empty() ? 1.0 : curve.bin_counts[k];
      mean += w * curve.values[k];
      w_total += w;
    }
    mean /= w_total;
    double var = 0.0;
    for (std::size_t k = 0; k < curve.values.size(); ++k) {
      const double w = curve.bin_counts.empty() ? 1.0 : curve.bin_counts[k];
      const double diff = curve.values[k] - mean;
      var += w * diff * diff;
    }
    scores[c] = std::sqrt(var / w_total);
  }
  std::vector<std::string> names;
  for (const auto& curve : curves) {
    names.push_back(curve.feature_index >= 0 &&
                            static_cast<std::size_t>(curve.feature_index) < feature_names.size()
                        ? feature_names[curve.feature_index]
                        : "feature_" + std::to_string(curve.feature_index));
  }
  return make_single_round_result("ale_var", std::move(names), std::move(scores),
                                  Mode::relevance);
}

namespace {

struct RateBin {
  double lo, hi;
  long n_pos = 0, n_neg = 0;
};

struct Interval {
  double lo, hi, mean;
};

Interval posterior_interval(const RateBin& bin, double alpha, double beta, double confidence) {
  const double a = alpha + static_cast<double>(bin.n_pos);
  const double b = beta + static_cast<double>(bin.n_neg);
  const boost::math::beta_distribution<double> dist(a, b);
  const double tail = 0.5 * (1.0 - confidence);
  return {boost::math::quantile(dist, tail), boost::math::quantile(dist, 1.0 - tail),
          a / (a + b)};
}

}  // namespace

EventRateCurve event_rate_histogram(const TabularDataset& data, int feature_index,
                                    int initial_bins, double prior_alpha, double prior_beta,
                                    double merge_confidence) {
  if (feature_index < 0 || static_cast<std::size_t>(feature_index) >= data.n_features()) {
    throw std::invalid_argument("feature index out of range");
  }
  if (prior_alpha <= 0.0 || prior_beta <= 0.0) throw std::invalid_argument("invalid prior");
  if (merge_confidence <= 0.0 || merge_confidence >= 1.0) {
    throw std::invalid_argument("merge_confidence must be in (0, 1)");
  }
  if (data.base_rate <= 0.0) throw DataError("degenerate targets");

  const std::vector<double> values = data.features.column(feature_index);
  const BinGrid grid = quantile_bins(values, initial_bins);

  std::vector<RateBin> bins(grid.centers.size());
  for (std::size_t k = 0; k < bins.size(); ++k) {
    bins[k].lo = grid.edges[k];
    bins[k].hi = grid.edges[k + 1];
  }
  for (std::size_t i = 0; i < data.n_examples(); ++i) {
    RateBin& bin = bins[bin_index(grid, values[i])];
    (data.targets[i] == 1 ? bin.n_pos : bin.n_neg) += 1;
  }

  // Left-to-right sweep: merge the first adjacent pair whose credible
  // intervals overlap, restart, repeat to a fixpoint.
  bool merged = true;
  while (merged && bins.size() > 1) {
    merged = false;
    for (std::size_t k = 0; k + 1 < bins.size(); ++k) {
      const Interval a = posterior_interval(bins[k], prior_alpha, prior_beta, merge_confidence);
      const Interval b =
          posterior_interval(bins[k + 1], prior_alpha, prior_beta, merge_confidence);
      if (a.lo <= b.hi && b.lo <= a.hi) {
        bins[k].hi = bins[k + 1].hi;
        bins[k].n_pos += bins[k + 1].n_pos;
        bins[k].n_neg += bins[k + 1].n_neg;
        bins.erase(bins.begin() + k + 1);
        merged = true;
        break;
      }
    }
  }

  EventRateCurve curve;
  curve.feature_index = feature_index;
  curve.prior_alpha = prior_alpha;
  curve.prior_beta = prior_beta;
  curve.bin_edges.push_back(bins.front().lo);
  for (const auto& bin : bins) {
    const Interval iv = posterior_interval(bin, prior_alpha, prior_beta, merge_confidence);
    curve.bin_edges.push_back(bin.hi);
    curve.posterior_mean.push_back(iv.mean);
    curve.ci_low.push_back(iv.lo);
    curve.ci_high.push_back(iv.hi);
  }
  return curve;
}

double interpolate_curve(const EffectCurve& curve, double x) {
  const auto& xs = curve.grid;
  const auto& ys = curve.values;
  if (xs.empty()) throw std::invalid_argument("empty curve");
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const std::size_t hi = static_cast<std::size_t>(it - xs.begin());
  const std::size_t lo = hi - 1;
  const double t = (x - xs[lo]) / (xs[hi] - xs[lo]);
  return ys[lo] + t * (ys[hi] - ys[lo]);
}

std::pair<EffectCurve, std::vector<double>> method_average_effect(
    const std::vector<EffectCurve>& curves, const BinGrid& common_grid) {
  if (curves.size() < 2) throw std::invalid_argument("need at least 2 curves");
  const int feature = curves.front().feature_index;
  for (const auto& c : curves) {
    if (c.feature_index != feature) throw std::invalid_argument("mismatched feature indices");
  }
  const std::size_t m = common_grid.centers.size();
  std::vector<double> mean(m, 0.0), spread(m, 0.0);
  Matrix interp(curves.size(), m);
  for (std::size_t c = 0; c < curves.size(); ++c) {
    for (std::size_t k = 0; k < m; ++k) {
      interp(c, k) = interpolate_curve(curves[c], common_grid.centers[k]);
    }
  }
  for (std::size_t k = 0; k < m; ++k) {
    double sum = 0.0;
    for (std::size_t c = 0; c < curves.size(); ++c) sum += interp(c, k);
    mean[k] = sum / static_cast<double>(curves.size());
    double var = 0.0;
    for (std::size_t c = 0; c < curves.size(); ++c) {
      const double diff = interp(c, k) - mean[k];
      var += diff * diff;
    }
    spread[k] = std::sqrt(var / static_cast<double>(curves.size()));
  }

  EffectCurve avg;
  avg.feature_index = feature;
  avg.grid = common_grid.centers;
  avg.values = std::move(mean);
  avg.method_id = "avg";
  avg.bin_counts = common_grid.counts;
  avg.spread = spread;
  return {std::move(avg), std::move(spread)};
}

}  // namespace explain
