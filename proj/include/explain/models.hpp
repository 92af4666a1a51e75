#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "explain/dataset.hpp"
#include "explain/importance_result.hpp"
#include "explain/matrix.hpp"

namespace explain {

// Black-box interface every model-agnostic method sees: feature rows in,
// event probabilities out. Implementations must be deterministic and safe
// for concurrent prediction.
class ProbabilisticClassifier {
 public:
  virtual ~ProbabilisticClassifier() = default;
  virtual std::size_t n_features() const = 0;
  // One P(y=1|x) per row, each in [0, 1]. Throws on row width mismatch.
  virtual std::vector<double> predict_proba(const Matrix& rows) const = 0;

  double predict_one(std::span<const double> row) const;
};

double sigmoid(double z);

class LogisticRegressionModel final : public ProbabilisticClassifier {
 public:
  double bias = 0.0;                     // beta_0
  std::vector<double> coefficients;      // beta_i in standardized input space
  StandardizationParams standardization; // applied before scoring

  // Objective value per proximal-gradient iteration (training only, not
  // serialized). Non-increasing by construction.
  std::vector<double> objective_trace;

  std::size_t n_features() const override { return coefficients.size(); }
  std::vector<double> predict_proba(const Matrix& rows) const override;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double positive_fraction = 0.0;  // share of positive training rows reaching the node
  int n_train = 0;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict_row(std::span<const double> row) const;
  // Node indices from root to leaf for a row.
  std::vector<int> decision_path(std::span<const double> row) const;
};

class RandomForestModel final : public ProbabilisticClassifier {
 public:
  std::vector<DecisionTree> trees;
  int features_per_split = 0;  // ceil(sqrt(d))
  bool trained_with_bootstrap = true;
  std::size_t n_features_in = 0;

  std::size_t n_features() const override { return n_features_in; }
  // Arithmetic mean of the per-tree leaf values.
  std::vector<double> predict_proba(const Matrix& rows) const override;
};

// Minimizes mean log-loss + l1*||beta||_1 + (l2/2)*||beta||_2^2 by proximal
// gradient (ISTA) with a fixed step from the Lipschitz bound. Inputs are
// standardized internally; the model stores the transform. The bias is not
// penalized. Throws DataError("diverged") if the loss turns non-finite.
LogisticRegressionModel train_logistic(const TabularDataset& data, double l1_penalty,
                                       double l2_penalty, int max_iters = 500,
                                       double tol = 1e-8);

// Grows Gini-minimizing axis-split trees on bootstrap resamples, considering
// ceil(sqrt(d)) random features per split. Ties prefer the lowest feature
// index, then the lowest threshold. Deterministic given the seed regardless
// of scheduling (per-tree counter substreams).
RandomForestModel train_random_forest(const TabularDataset& data, int n_trees, int max_depth,
                                      int min_leaf, std::uint64_t seed, bool bootstrap = true);

// Mean decrease in Gini impurity, weighted by the fraction of examples each
// split affects, averaged over trees and normalized to sum to 1. A forest
// with no splits yields all zeros.
ImportanceResult gini_importance(const RandomForestModel& model,
                                 const std::vector<std::string>& feature_names);

// Coefficient relevance |beta_i| * std(x_i), with stds describing the inputs
// as presented to the model.
ImportanceResult coefficient_relevance(const LogisticRegressionModel& model,
                                       const StandardizationParams& presented,
                                       const std::vector<std::string>& feature_names);

// Stds of standardized inputs: 1 where the raw feature varies, 0 where not.
StandardizationParams presented_input_stds(const StandardizationParams& raw);

using AnyModel = std::variant<LogisticRegressionModel, RandomForestModel>;

const ProbabilisticClassifier& as_classifier(const AnyModel& model);

// Versioned JSON document (parameters, tree arrays, standardization).
void save_model(const AnyModel& model, const std::string& path);
AnyModel load_model(const std::string& path);

}  // namespace explain
