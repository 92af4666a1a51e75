#include "explain/attributions.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "explain/errors.hpp"
#include "explain/rng.hpp"

namespace explain {

namespace {

constexpr std::uint64_t kStreamLime = 0x6c696d65;
constexpr std::uint64_t kStreamSage = 0x73616765;

// Mean prediction over background rows with the instance spliced in on the
// coalition's features.
class CoalitionValue {
 public:
  CoalitionValue(const ProbabilisticClassifier& model, std::span<const double> instance,
                 const Matrix& background)
      : model_(model), instance_(instance), background_(background) {
    if (background.rows() == 0) throw std::invalid_argument("empty background");
    if (background.cols() != instance.size() || model.n_features() != instance.size()) {
      throw std::invalid_argument("instance width mismatch");
    }
  }

  double operator()(std::uint64_t coalition_mask) {
    const auto hit = cache_.find(coalition_mask);
    if (hit != cache_.end()) return hit->second;
    Matrix rows = background_;
    const std::size_t d = instance_.size();
    for (std::size_t j = 0; j < d; ++j) {
      if ((coalition_mask >> j) & 1ULL) {
        for (std::size_t r = 0; r < rows.rows(); ++r) rows(r, j) = instance_[j];
      }
    }
    const std::vector<double> probs = model_.predict_proba(rows);
    const double v = std::accumulate(probs.begin(), probs.end(), 0.0) /
                     static_cast<double>(probs.size());
    cache_.emplace(coalition_mask, v);
    return v;
  }

 private:
  const ProbabilisticClassifier& model_;
  std::span<const double> instance_;
  const Matrix& background_;
  std::unordered_map<std::uint64_t, double> cache_;
};

std::vector<double> shapley_subset_weights(int d) {
  // w(s) = s! (d-1-s)! / d! for the subset size s not containing the player.
  std::vector<double> w(d);
  std::vector<double> fact(d + 1, 1.0);
  for (int k = 1; k <= d; ++k) fact[k] = fact[k - 1] * k;
  for (int s = 0; s < d; ++s) w[s] = fact[s] * fact[d - 1 - s] / fact[d];
  return w;
}

}  // namespace

Attribution exact_shapley(const ProbabilisticClassifier& model, std::span<const double> instance,
                          const Matrix& background) {
  const int d = static_cast<int>(instance.size());
  if (d > 12) {
    throw std::invalid_argument(
        "exact_shapley enumerates 2^d coalitions and requires n_features <= 12; "
        "use owen_values with a partition, or sample rows");
  }
  CoalitionValue value(model, instance, background);
  const std::vector<double> weights = shapley_subset_weights(d);

  Attribution out;
  out.phi.assign(d, 0.0);
  out.phi0 = value(0);
  const std::uint64_t full = (1ULL << d) - 1;
  for (std::uint64_t mask = 0; mask <= full; ++mask) {
    const int size = std::popcount(mask);
    for (int j = 0; j < d; ++j) {
      if ((mask >> j) & 1ULL) continue;
      out.phi[j] += weights[size] * (value(mask | (1ULL << j)) - value(mask));
    }
  }
  return out;
}

PartitionTree PartitionTree::flat(int n_features) {
  PartitionTree tree;
  Node root;
  for (int j = 0; j < n_features; ++j) {
    tree.nodes.push_back({j, {}});
    root.children.push_back(j);
  }
  tree.root = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back(std::move(root));
  return tree;
}

PartitionTree PartitionTree::from_linkage(const std::vector<std::pair<int, int>>& merges,
                                          int n_features) {
  PartitionTree tree;
  for (int j = 0; j < n_features; ++j) tree.nodes.push_back({j, {}});
  for (const auto& [a, b] : merges) {
    tree.nodes.push_back({-1, {a, b}});
  }
  tree.root = static_cast<int>(tree.nodes.size()) - 1;
  if (n_features == 1) tree.root = 0;
  tree.validate(n_features);
  return tree;
}

void PartitionTree::validate(int n_features) const {
  if (root < 0 || root >= static_cast<int>(nodes.size())) {
    throw std::invalid_argument("malformed partition: bad root");
  }
  const std::vector<int> leaves = features_under(root);
  std::vector<char> seen(n_features, 0);
  for (int f : leaves) {
    if (f < 0 || f >= n_features || seen[f]) {
      throw std::invalid_argument("malformed partition: leaves are not exactly the features");
    }
    seen[f] = 1;
  }
  if (static_cast<int>(leaves.size()) != n_features) {
    throw std::invalid_argument("malformed partition: leaves are not exactly the features");
  }
}

std::vector<int> PartitionTree::features_under(int node) const {
  std::vector<int> out;
  std::vector<int> stack{node};
  while (!stack.empty()) {
    const int cur = stack.back();
    stack.pop_back();
    if (cur < 0 || cur >= static_cast<int>(nodes.size())) {
      throw std::invalid_argument("malformed partition: bad node id");
    }
    if (nodes[cur].feature >= 0) {
      out.push_back(nodes[cur].feature);
    } else {
      if (nodes[cur].children.empty()) {
        throw std::invalid_argument("malformed partition: internal node without children");
      }
      for (int c : nodes[cur].children) stack.push_back(c);
    }
  }
  return out;
}

namespace {

std::uint64_t features_mask(const PartitionTree& tree, int node) {
  std::uint64_t mask = 0;
  for (int f : tree.features_under(node)) mask |= 1ULL << f;
  return mask;
}

// Recursive block-level Shapley: at each node the children act as players;
// every child is evaluated against Shapley-weighted contexts built from its
// sibling blocks, recursing until leaves receive weighted marginal
// contributions.
void owen_recurse(const PartitionTree& tree, int node, std::uint64_t context, double weight,
                  CoalitionValue& value, std::vector<double>& phi) {
  const auto& n = tree.nodes[node];
  if (n.feature >= 0) {
    const std::uint64_t bit = 1ULL << n.feature;
    phi[n.feature] += weight * (value(context | bit) - value(context));
    return;
  }
  const int p = static_cast<int>(n.children.size());
  const std::vector<double> weights = shapley_subset_weights(p);
  std::vector<std::uint64_t> child_masks(p);
  for (int c = 0; c < p; ++c) child_masks[c] = features_mask(tree, n.children[c]);

  for (int c = 0; c < p; ++c) {
    // All subsets of the sibling blocks.
    std::vector<int> siblings;
    for (int s = 0; s < p; ++s) {
      if (s != c) siblings.push_back(s);
    }
    const std::uint64_t n_subsets = 1ULL << siblings.size();
    for (std::uint64_t sub = 0; sub < n_subsets; ++sub) {
      std::uint64_t ctx = context;
      for (std::size_t b = 0; b < siblings.size(); ++b) {
        if ((sub >> b) & 1ULL) ctx |= child_masks[siblings[b]];
      }
      owen_recurse(tree, n.children[c], ctx, weight * weights[std::popcount(sub)], value, phi);
    }
  }
}

}  // namespace

Attribution owen_values(const ProbabilisticClassifier& model, std::span<const double> instance,
                        const Matrix& background, const PartitionTree& partition) {
  const int d = static_cast<int>(instance.size());
  if (d > 64) throw std::invalid_argument("owen_values supports up to 64 features");
  partition.validate(d);
  CoalitionValue value(model, instance, background);

  Attribution out;
  out.phi.assign(d, 0.0);
  out.phi0 = value(0);
  owen_recurse(partition, partition.root, 0, 1.0, value, out.phi);
  return out;
}

LimeDiscretizer::LimeDiscretizer(const TabularDataset& data) {
  const std::size_t d = data.n_features();
  edges_.resize(d);
  pools_.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<double> sorted = data.features.column(j);
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> qs;
    for (double q : {0.25, 0.5, 0.75}) {
      const double e = quantile_sorted(sorted, q);
      if (qs.empty() || e > qs.back()) qs.push_back(e);
    }
    edges_[j] = qs;
    pools_[j].assign(qs.size() + 1, {});
    for (double v : sorted) pools_[j][bin_of(static_cast<int>(j), v)].push_back(v);
  }
}

int LimeDiscretizer::bin_of(int feature, double value) const {
  const auto& e = edges_[feature];
  int bin = 0;
  while (bin < static_cast<int>(e.size()) && value > e[bin]) ++bin;
  return bin;
}

int LimeDiscretizer::n_bins(int feature) const {
  return static_cast<int>(edges_[feature].size()) + 1;
}

std::size_t LimeDiscretizer::pool_size(int feature, int bin) const {
  return pools_[feature][bin].size();
}

double LimeDiscretizer::sample_from_bin(int feature, int bin, Rng& rng) const {
  const auto& pool = pools_[feature][bin];
  return pool[rng.below(pool.size())];
}

Attribution lime_explain(const ProbabilisticClassifier& model, std::span<const double> instance,
                         const LimeDiscretizer& discretizer, int n_samples, double kernel_width,
                         std::uint64_t seed) {
  const int d = static_cast<int>(instance.size());
  if (n_samples < d + 1) throw std::invalid_argument("n_samples too small");
  if (kernel_width <= 0.0) kernel_width = 0.75 * std::sqrt(static_cast<double>(d));

  Rng rng = Rng::substream(seed, {kStreamLime});

  Matrix z(n_samples, d);         // binary bin-match design
  Matrix perturbed(n_samples, d); // model inputs
  for (int s = 0; s < n_samples; ++s) {
    for (int j = 0; j < d; ++j) {
      const int own_bin = discretizer.bin_of(j, instance[j]);
      const bool keep = rng.bernoulli(0.5);
      int bin = own_bin;
      if (!keep) {
        // Uniform among the other non-empty bins; fall back to the own bin
        // when quartile collapse left nothing else.
        std::vector<int> others;
        for (int b = 0; b < discretizer.n_bins(j); ++b) {
          if (b != own_bin && discretizer.pool_size(j, b) > 0) others.push_back(b);
        }
        if (!others.empty()) bin = others[rng.below(others.size())];
      }
      const bool matches = bin == own_bin;
      z(s, j) = matches ? 1.0 : 0.0;
      perturbed(s, j) = matches ? instance[j] : discretizer.sample_from_bin(j, bin, rng);
    }
  }

  const std::vector<double> response = model.predict_proba(perturbed);
  std::vector<double> weight(n_samples);
  for (int s = 0; s < n_samples; ++s) {
    double dist_sq = 0.0;
    for (int j = 0; j < d; ++j) dist_sq += (1.0 - z(s, j)) * (1.0 - z(s, j));
    weight[s] = std::exp(-dist_sq / (kernel_width * kernel_width));
  }

  // Weighted least squares with intercept: solve (A^T W A) theta = A^T W y.
  const int p = d + 1;
  Matrix normal(p, p, 0.0);
  std::vector<double> rhs(p, 0.0);
  std::vector<double> row(p);
  for (int s = 0; s < n_samples; ++s) {
    row[0] = 1.0;
    for (int j = 0; j < d; ++j) row[j + 1] = z(s, j);
    for (int a = 0; a < p; ++a) {
      rhs[a] += weight[s] * row[a] * response[s];
      for (int b = a; b < p; ++b) normal(a, b) += weight[s] * row[a] * row[b];
    }
  }
  for (int a = 0; a < p; ++a) {
    for (int b = 0; b < a; ++b) normal(a, b) = normal(b, a);
  }

  Attribution out;
  std::vector<double> theta;
  if (!cholesky_solve(normal, rhs, theta)) {
    for (int a = 0; a < p; ++a) normal(a, a) += 1e-6;
    if (!cholesky_solve(normal, rhs, theta)) {
      throw std::runtime_error("lime: normal equations unsolvable");
    }
    out.ridge_fallback = true;
  }
  out.phi0 = theta[0];
  out.phi.assign(theta.begin() + 1, theta.end());
  return out;
}

Attribution tree_interpreter(const RandomForestModel& forest, std::span<const double> instance) {
  if (forest.trees.empty()) throw std::invalid_argument("untrained forest");
  if (instance.size() != forest.n_features_in) {
    throw std::invalid_argument("instance width mismatch");
  }
  Attribution out;
  out.phi.assign(forest.n_features_in, 0.0);
  for (const auto& tree : forest.trees) {
    const std::vector<int> path = tree.decision_path(instance);
    out.phi0 += tree.nodes[path.front()].positive_fraction;
    for (std::size_t k = 0; k + 1 < path.size(); ++k) {
      const auto& parent = tree.nodes[path[k]];
      const auto& child = tree.nodes[path[k + 1]];
      out.phi[parent.feature] += child.positive_fraction - parent.positive_fraction;
    }
  }
  const double n_trees = static_cast<double>(forest.trees.size());
  out.phi0 /= n_trees;
  for (double& v : out.phi) v /= n_trees;
  return out;
}

double log_loss(double prob, int label) {
  const double p = std::clamp(prob, 1e-12, 1.0 - 1e-12);
  return label == 1 ? -std::log(p) : -std::log1p(-p);
}

ImportanceResult sage_values(const ProbabilisticClassifier& model, const TabularDataset& data,
                             SageLoss loss, int n_outer_samples, int batch, std::uint64_t seed) {
  (void)loss;  // log_loss is the only member
  const int d = static_cast<int>(data.n_features());
  const std::size_t n = data.n_examples();
  if (n_outer_samples < 1) throw std::invalid_argument("n_outer_samples must be >= 1");
  if (batch < 1) throw std::invalid_argument("batch must be >= 1");

  // Welford running statistics per feature.
  std::vector<double> mean(d, 0.0), m2(d, 0.0);
  long count = 0;
  bool converged = false;

  Matrix rows(batch, d);
  for (int t = 0; t < n_outer_samples; ++t) {
    Rng rng = Rng::substream(seed, {kStreamSage, static_cast<std::uint64_t>(t)});
    const std::size_t row_idx = rng.below(n);
    const auto instance = data.features.row(row_idx);
    const int label = data.targets[row_idx];

    for (int b = 0; b < batch; ++b) {
      const auto bg = data.features.row(rng.below(n));
      std::copy(bg.begin(), bg.end(), rows.row(b).begin());
    }
    std::vector<std::size_t> order = rng.permutation(d);

    auto coalition_loss = [&]() {
      const std::vector<double> probs = model.predict_proba(rows);
      const double yhat = std::accumulate(probs.begin(), probs.end(), 0.0) /
                          static_cast<double>(probs.size());
      return log_loss(yhat, label);
    };

    double prev_loss = coalition_loss();
    for (std::size_t k = 0; k < order.size(); ++k) {
      const int f = static_cast<int>(order[k]);
      for (int b = 0; b < batch; ++b) rows(b, f) = instance[f];
      const double cur_loss = coalition_loss();
      const double delta = prev_loss - cur_loss;  // loss decrease when f becomes known
      prev_loss = cur_loss;
      // Welford update for feature f at sample index `count`.
      const double d1 = delta - mean[f];
      mean[f] += d1 / static_cast<double>(count + 1);
      m2[f] += d1 * (delta - mean[f]);
    }
    ++count;

    if (count >= 32 && count % 16 == 0) {
      double max_abs = 0.0;
      for (double v : mean) max_abs = std::max(max_abs, std::abs(v));
      if (max_abs > 0.0) {
        double worst_se = 0.0;
        for (int f = 0; f < d; ++f) {
          const double var = m2[f] / static_cast<double>(count);
          worst_se = std::max(worst_se, std::sqrt(var / static_cast<double>(count)));
        }
        if (worst_se < 0.025 * max_abs) {
          converged = true;
          break;
        }
      }
    }
  }

  ImportanceResult out =
      make_single_round_result("sage", data.feature_names, std::move(mean), Mode::relevance);
  out.converged = converged;
  return out;
}

ImportanceResult aggregate_global_relevance(const AttributionSet& attributions,
                                            const std::vector<std::string>& feature_names,
                                            std::size_t sample_cap) {
  if (attributions.phi.rows() == 0) throw std::invalid_argument("empty attribution set");
  if (attributions.phi.rows() > sample_cap) {
    throw std::invalid_argument("attribution set exceeds sample_cap");
  }
  const std::size_t d = attributions.phi.cols();
  std::vector<double> scores(d, 0.0);
  for (std::size_t i = 0; i < attributions.phi.rows(); ++i) {
    for (std::size_t j = 0; j < d; ++j) scores[j] += std::abs(attributions.phi(i, j));
  }
  ImportanceResult out = make_single_round_result(attributions.method_id, feature_names,
                                                  std::move(scores), Mode::relevance);
  return out;
}

EffectCurve aggregate_binned_effect(const AttributionSet& attributions,
                                    const TabularDataset& data, int feature_index,
                                    const BinGrid& grid, std::size_t sample_cap) {
  if (grid.centers.empty()) throw std::invalid_argument("binned_effect requires a grid");
  if (feature_index < 0 || static_cast<std::size_t>(feature_index) >= data.n_features()) {
    throw std::invalid_argument("binned_effect requires a valid feature index");
  }
  if (attributions.phi.rows() == 0) throw std::invalid_argument("empty attribution set");
  if (attributions.phi.rows() > sample_cap) {
    throw std::invalid_argument("attribution set exceeds sample_cap");
  }

  std::vector<double> sums(grid.centers.size(), 0.0);
  std::vector<long> counts(grid.centers.size(), 0);
  for (std::size_t i = 0; i < attributions.phi.rows(); ++i) {
    const int row = attributions.explained_row_indices[i];
    const int bin = bin_index(grid, data.features(row, feature_index));
    sums[bin] += attributions.phi(i, feature_index);
    counts[bin] += 1;
  }

  EffectCurve curve;
  curve.feature_index = feature_index;
  curve.method_id = attributions.method_id;
  double weighted_sum = 0.0;
  long total = 0;
  for (std::size_t k = 0; k < sums.size(); ++k) {
    if (counts[k] == 0) continue;
    const double mean = sums[k] / static_cast<double>(counts[k]);
    curve.grid.push_back(grid.centers[k]);
    curve.values.push_back(mean);
    curve.bin_counts.push_back(static_cast<int>(counts[k]));
    weighted_sum += sums[k];
    total += counts[k];
  }
  if (curve.values.empty()) throw std::invalid_argument("no populated bins");
  const double weighted_mean = weighted_sum / static_cast<double>(total);
  for (double& v : curve.values) v -= weighted_mean;
  return curve;
}

}  // namespace explain
