#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "explain/dataset.hpp"
#include "explain/effects.hpp"
#include "explain/importance_result.hpp"
#include "explain/models.hpp"

namespace explain {

// Additive attribution for one explained row: prediction ~ phi0 + sum(phi).
struct Attribution {
  std::vector<double> phi;
  double phi0 = 0.0;
  bool ridge_fallback = false;  // LIME only: singular design rescued by ridge
};

// Per-example, per-feature additive contributions plus bias terms.
struct AttributionSet {
  Matrix phi;  // n_explained x n_features
  std::vector<double> phi0;
  std::string method_id;
  std::vector<int> explained_row_indices;
  Matrix explained_features;  // feature values of the explained rows
  bool any_ridge_fallback = false;
};

// Nested grouping of feature indices; leaves are exactly the features.
struct PartitionTree {
  struct Node {
    int feature = -1;           // leaf feature index, -1 for internal
    std::vector<int> children;  // child node ids for internal nodes
  };
  std::vector<Node> nodes;
  int root = -1;

  // One internal root whose children are the individual features.
  static PartitionTree flat(int n_features);
  // Binary hierarchy from a complete-linkage merge sequence (linkage_merges).
  static PartitionTree from_linkage(const std::vector<std::pair<int, int>>& merges,
                                    int n_features);

  void validate(int n_features) const;
  std::vector<int> features_under(int node) const;
};

// Exact Shapley values by full subset enumeration with a marginal
// (background-imputation) value function: v(S) is the mean prediction over
// background rows with the instance's values spliced in on S. phi0 = v(empty).
// Requires n_features <= 12.
Attribution exact_shapley(const ProbabilisticClassifier& model, std::span<const double> instance,
                          const Matrix& background);

// Owen values: recursive block-level Shapley over the partition hierarchy.
// With a flat partition this reduces exactly to exact_shapley; efficiency
// (phi0 + sum(phi) = f(x)) holds by construction for any partition.
Attribution owen_values(const ProbabilisticClassifier& model, std::span<const double> instance,
                        const Matrix& background, const PartitionTree& partition);

// Training-quartile discretizer used by LIME's perturbation sampling.
class LimeDiscretizer {
 public:
  explicit LimeDiscretizer(const TabularDataset& data);

  int bin_of(int feature, double value) const;
  int n_bins(int feature) const;
  std::size_t pool_size(int feature, int bin) const;
  // A training value from the given bin, chosen uniformly.
  double sample_from_bin(int feature, int bin, class Rng& rng) const;

 private:
  std::vector<std::vector<double>> edges_;        // interior quartile edges per feature
  std::vector<std::vector<std::vector<double>>> pools_;  // training values per bin
};

// Weighted-ridge local surrogate in binary bin-match space. Each perturbed
// sample keeps the instance's quartile bin (z=1) or redraws from a uniformly
// chosen other bin (z=0) with probability 1/2 per feature; sample weights are
// exp(-D^2 / kernel_width^2) with D the Euclidean distance in z-space.
// kernel_width <= 0 selects the default 0.75 * sqrt(n_features).
Attribution lime_explain(const ProbabilisticClassifier& model, std::span<const double> instance,
                         const LimeDiscretizer& discretizer, int n_samples = 2500,
                         double kernel_width = -1.0, std::uint64_t seed = 0);

// Root-to-leaf decomposition: each split edge attributes the change in the
// node positive fraction to the split feature; phi0 is the root fraction.
// Forest attribution is the mean over trees. Local accuracy is exact.
Attribution tree_interpreter(const RandomForestModel& forest, std::span<const double> instance);

enum class SageLoss { log_loss };

// Shapley attribution of expected model loss, estimated by permutation
// sampling with marginal background imputation. Stops when every feature's
// standard error is below 2.5% of the largest estimate, or at the sample cap
// (result flagged not converged). Scores are in loss units: positive means
// knowing the feature reduces expected loss.
ImportanceResult sage_values(const ProbabilisticClassifier& model, const TabularDataset& data,
                             SageLoss loss, int n_outer_samples, int batch, std::uint64_t seed);

// Sum of |phi| per feature over explained rows, ranked descending.
ImportanceResult aggregate_global_relevance(const AttributionSet& attributions,
                                            const std::vector<std::string>& feature_names,
                                            std::size_t sample_cap = 50000);

// Mean phi per feature-value bin on the shared grid, centered by the
// count-weighted mean; empty bins are dropped.
EffectCurve aggregate_binned_effect(const AttributionSet& attributions,
                                    const TabularDataset& data, int feature_index,
                                    const BinGrid& grid, std::size_t sample_cap = 50000);

double log_loss(double prob, int label);

}  // namespace explain
