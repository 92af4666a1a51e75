#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "explain/matrix.hpp"

namespace explain {

// Feature matrix with binary targets; the substrate every method consumes.
// Immutable after construction by convention.
struct TabularDataset {
  Matrix features;                         // n_examples x n_features
  std::vector<std::string> feature_names;  // unique, one per column
  std::vector<int> targets;                // each 0 or 1
  double base_rate = 0.0;                  // fraction of positive targets

  std::size_t n_examples() const { return features.rows(); }
  std::size_t n_features() const { return features.cols(); }
};

// Validates invariants (finite features, binary targets, unique names) and
// computes the base rate.
TabularDataset make_dataset(Matrix features, std::vector<std::string> feature_names,
                            std::vector<int> targets);

// Ordered, pairwise-disjoint named sets of feature indices.
struct FeatureGroups {
  std::vector<std::pair<std::string, std::vector<int>>> groups;
};

void validate_groups(const FeatureGroups& groups, std::size_t n_features);

struct StandardizationParams {
  std::vector<double> means;
  std::vector<double> stds;  // population standard deviation, 0 for constant features
};

// Shared quantile bin grid used by ALE, PD, event-rate and binned attributions.
struct BinGrid {
  std::vector<double> edges;    // strictly increasing
  std::vector<double> centers;  // midpoints, len(edges) - 1
  std::vector<int> counts;      // training examples per bin, sums to n
};

// UTF-8 comma-separated values, one header row, decimal-point reals.
TabularDataset load_csv(const std::string& path, const std::string& target_column);

// Maps each feature to mean 0 / population std 1; constant features become
// all-zeros with std recorded as 0.
std::pair<TabularDataset, StandardizationParams> standardize(const TabularDataset& data);

// Pearson correlations. Entries involving a constant feature are 0.
Matrix correlation_matrix(const TabularDataset& data);

// Agglomerative complete-linkage clustering on distance 1 - |corr|, cut at
// distance 1 - threshold. Anti-correlated features count as linked.
FeatureGroups cluster_features(const Matrix& corr, double threshold = 0.5,
                               const std::vector<std::string>& feature_names = {});

// Full complete-linkage merge sequence on 1 - |corr|, run to a single root.
// Leaves are nodes 0..d-1; merge k creates node d+k from the returned pair.
std::vector<std::pair<int, int>> linkage_merges(const Matrix& corr);

// Edges at equally spaced sample quantiles (linear interpolation between
// order statistics); duplicate edges collapsed; outer edges pushed out by a
// small relative margin so the min/max values fall strictly inside.
BinGrid quantile_bins(std::span<const double> values, int n_bins);

// Bin index for a value under the grid's edges (clamped to the outer bins).
int bin_index(const BinGrid& grid, double value);

// Linear-interpolation quantile of already-sorted values, q in [0, 1].
double quantile_sorted(std::span<const double> sorted_values, double q);

}  // namespace explain
