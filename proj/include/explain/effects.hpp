#pragma once

#include <string>
#include <utility>
#include <vector>

#include "explain/dataset.hpp"
#include "explain/importance_result.hpp"
#include "explain/models.hpp"

namespace explain {

// One feature's estimated effect over a value grid, in probability units,
// centered so the method's weighted mean effect is zero (PD: unweighted over
// grid points; ALE and binned attributions: weighted by bin counts).
struct EffectCurve {
  int feature_index = -1;
  std::vector<double> grid;    // strictly increasing evaluation points
  std::vector<double> values;  // centered effect in probability units
  std::string method_id;
  std::vector<int> bin_counts;
  std::vector<double> spread;  // per-point std across methods; only for averages
};

// Beta-posterior conditional event rate per feature bin.
struct EventRateCurve {
  int feature_index = -1;
  std::vector<double> bin_edges;
  std::vector<double> posterior_mean;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  double prior_alpha = 1.0;
  double prior_beta = 1.0;
};

// Mean prediction with the feature clamped to each bin center, centered by
// the unweighted mean over grid points.
EffectCurve partial_dependence(const ProbabilisticClassifier& model, const TabularDataset& data,
                               int feature_index, const BinGrid& grid, int workers = 1);

// First-order accumulated local effects: per-bin mean prediction difference
// between the bin's edges over the rows inside the bin, accumulated across
// bins, evaluated at bin centers, centered by the count-weighted mean.
// Bins with no rows merge into their left neighbor.
EffectCurve ale_first_order(const ProbabilisticClassifier& model, const TabularDataset& data,
                            int feature_index, const BinGrid& grid, int workers = 1);

// Ranks features by the bin-count-weighted standard deviation of their ALE
// curves.
ImportanceResult ale_variance_ranking(const std::vector<EffectCurve>& curves,
                                      const std::vector<std::string>& feature_names);

// Quantile-binned event rates with Beta(alpha + n+, beta + n-) posteriors;
// adjacent bins merge while their central credible intervals overlap
// (left-to-right sweep until no merge applies).
EventRateCurve event_rate_histogram(const TabularDataset& data, int feature_index,
                                    int initial_bins = 30, double prior_alpha = 1.0,
                                    double prior_beta = 1.0, double merge_confidence = 0.95);

// Interpolates every curve onto the common grid centers and returns the
// pointwise mean curve plus the per-point standard deviation across methods.
std::pair<EffectCurve, std::vector<double>> method_average_effect(
    const std::vector<EffectCurve>& curves, const BinGrid& common_grid);

// Piecewise-linear interpolation of a curve, clamped to its end values.
double interpolate_curve(const EffectCurve& curve, double x);

}  // namespace explain
