#include "explain/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "explain/errors.hpp"
#include "explain/rng.hpp"
#include "json.hpp"

namespace explain {

namespace {

constexpr std::uint64_t kStreamBootstrap = 0x626f6f74;  // per-tree resampling
constexpr std::uint64_t kStreamTreeGrow = 0x74726565;   // per-tree split feature draws

double gini_impurity(double positive_fraction) {
  return 2.0 * positive_fraction * (1.0 - positive_fraction);
}

}  // namespace

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double ProbabilisticClassifier::predict_one(std::span<const double> row) const {
  Matrix m(1, row.size());
  for (std::size_t j = 0; j < row.size(); ++j) m(0, j) = row[j];
  return predict_proba(m)[0];
}

std::vector<double> LogisticRegressionModel::predict_proba(const Matrix& rows) const {
  const std::size_t d = coefficients.size();
  if (rows.cols() != d) throw std::invalid_argument("row width does not match n_features");
  const bool transform = standardization.stds.size() == d;  // identity otherwise
  std::vector<double> out(rows.rows());
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    double z = bias;
    const auto row = rows.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      double x = row[j];
      if (transform) {
        const double sd = standardization.stds[j];
        x = sd > 0.0 ? (row[j] - standardization.means[j]) / sd : 0.0;
      }
      z += coefficients[j] * x;
    }
    out[i] = sigmoid(z);
  }
  return out;
}

LogisticRegressionModel train_logistic(const TabularDataset& data, double l1_penalty,
                                       double l2_penalty, int max_iters, double tol) {
  if (l1_penalty < 0.0 || l2_penalty < 0.0) throw std::invalid_argument("negative penalty");
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  auto [std_data, params] = standardize(data);
  const Matrix& x = std_data.features;
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();

  // Lipschitz bound for the smooth part: ||[X 1]||_F^2 / (4n) + l2.
  double sq_norm = static_cast<double>(n);  // implicit bias column of ones
  for (double v : x.data()) sq_norm += v * v;
  const double step = 1.0 / (sq_norm / (4.0 * static_cast<double>(n)) + l2_penalty);

  std::vector<double> beta(d, 0.0);
  double bias = 0.0;
  std::vector<double> probs(n), grad(d);
  std::vector<double> trace;
  trace.reserve(max_iters);

  auto objective = [&](const std::vector<double>& b, double b0) {
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double z = b0;
      const auto row = x.row(i);
      for (std::size_t j = 0; j < d; ++j) z += b[j] * row[j];
      // log(1 + exp(-m)) with m = z for y=1 and m = -z for y=0, stably.
      const double m = std_data.targets[i] == 1 ? z : -z;
      loss += m >= 0.0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
    }
    loss /= static_cast<double>(n);
    double l1 = 0.0, l2 = 0.0;
    for (double bj : b) {
      l1 += std::abs(bj);
      l2 += bj * bj;
    }
    return loss + l1_penalty * l1 + 0.5 * l2_penalty * l2;
  };

  trace.push_back(objective(beta, bias));
  for (int iter = 0; iter < max_iters; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      double z = bias;
      const auto row = x.row(i);
      for (std::size_t j = 0; j < d; ++j) z += beta[j] * row[j];
      probs[i] = sigmoid(z);
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_bias = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double resid = probs[i] - static_cast<double>(std_data.targets[i]);
      grad_bias += resid;
      const auto row = x.row(i);
      for (std::size_t j = 0; j < d; ++j) grad[j] += resid * row[j];
    }
    grad_bias /= static_cast<double>(n);
    for (std::size_t j = 0; j < d; ++j) {
      grad[j] = grad[j] / static_cast<double>(n) + l2_penalty * beta[j];
    }

    double max_change = std::abs(step * grad_bias);
    bias -= step * grad_bias;
    const double shrink = step * l1_penalty;
    for (std::size_t j = 0; j < d; ++j) {
      const double raw = beta[j] - step * grad[j];
      // Soft threshold keeps exact zeros for L1.
      const double next = raw > shrink ? raw - shrink : (raw < -shrink ? raw + shrink : 0.0);
      max_change = std::max(max_change, std::abs(next - beta[j]));
      beta[j] = next;
    }

    const double obj = objective(beta, bias);
    if (!std::isfinite(obj)) throw DataError("diverged");
    trace.push_back(obj);
    if (max_change < tol) break;
  }

  LogisticRegressionModel model;
  model.bias = bias;
  model.coefficients = std::move(beta);
  model.standardization = std::move(params);
  model.objective_trace = std::move(trace);
  return model;
}

double DecisionTree::predict_row(std::span<const double> row) const {
  int node = 0;
  while (nodes[node].feature >= 0) {
    node = row[nodes[node].feature] <= nodes[node].threshold ? nodes[node].left
                                                             : nodes[node].right;
  }
  return nodes[node].positive_fraction;
}

std::vector<int> DecisionTree::decision_path(std::span<const double> row) const {
  std::vector<int> path{0};
  int node = 0;
  while (nodes[node].feature >= 0) {
    node = row[nodes[node].feature] <= nodes[node].threshold ? nodes[node].left
                                                             : nodes[node].right;
    path.push_back(node);
  }
  return path;
}

std::vector<double> RandomForestModel::predict_proba(const Matrix& rows) const {
  if (rows.cols() != n_features_in) throw std::invalid_argument("row width does not match n_features");
  if (trees.empty()) throw std::invalid_argument("forest has no trees");
  std::vector<double> out(rows.rows(), 0.0);
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    double sum = 0.0;
    for (const auto& tree : trees) sum += tree.predict_row(rows.row(i));
    out[i] = sum / static_cast<double>(trees.size());
  }
  return out;
}

namespace {

struct TreeBuilder {
  const Matrix& x;
  const std::vector<int>& y;
  int max_depth;
  int min_leaf;
  int features_per_split;
  Rng& rng;
  DecisionTree tree;

  int build(std::vector<int>& rows, int depth) {
    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const long n = static_cast<long>(rows.size());
    long pos = 0;
    for (int r : rows) pos += y[r];
    tree.nodes[node_id].n_train = static_cast<int>(n);
    tree.nodes[node_id].positive_fraction = static_cast<double>(pos) / static_cast<double>(n);

    const bool pure = pos == 0 || pos == n;
    if (depth >= max_depth || pure || n < 2 * min_leaf) return node_id;

    const auto candidates =
        rng.sample_without_replacement(x.cols(), features_per_split);

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_child_impurity = std::numeric_limits<double>::infinity();
    const double parent_impurity =
        gini_impurity(tree.nodes[node_id].positive_fraction);

    std::vector<std::pair<double, int>> sorted_vals(rows.size());
    for (std::size_t f_idx = 0; f_idx < candidates.size(); ++f_idx) {
      const int f = static_cast<int>(candidates[f_idx]);
      for (std::size_t k = 0; k < rows.size(); ++k) {
        sorted_vals[k] = {x(rows[k], f), y[rows[k]]};
      }
      std::sort(sorted_vals.begin(), sorted_vals.end());
      long left_n = 0, left_pos = 0;
      for (long k = 0; k + 1 < n; ++k) {
        left_n += 1;
        left_pos += sorted_vals[k].second;
        if (sorted_vals[k].first == sorted_vals[k + 1].first) continue;
        if (left_n < min_leaf || n - left_n < min_leaf) continue;
        const double p_left = static_cast<double>(left_pos) / static_cast<double>(left_n);
        const double p_right =
            static_cast<double>(pos - left_pos) / static_cast<double>(n - left_n);
        const double weighted =
            (static_cast<double>(left_n) * gini_impurity(p_left) +
             static_cast<double>(n - left_n) * gini_impurity(p_right)) /
            static_cast<double>(n);
        // Strict improvement with an epsilon guard; candidates are scanned in
        // ascending (feature, threshold) order, so ties keep the lowest pair.
        if (weighted < best_child_impurity - 1e-15) {
          best_child_impurity = weighted;
          best_feature = f;
          best_threshold = 0.5 * (sorted_vals[k].first + sorted_vals[k + 1].first);
        }
      }
    }

    if (best_feature < 0 || best_child_impurity >= parent_impurity - 1e-12) return node_id;

    std::vector<int> left_rows, right_rows;
    left_rows.reserve(rows.size());
    right_rows.reserve(rows.size());
    for (int r : rows) {
      (x(r, best_feature) <= best_threshold ? left_rows : right_rows).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    tree.nodes[node_id].feature = best_feature;
    tree.nodes[node_id].threshold = best_threshold;
    const int left_id = build(left_rows, depth + 1);
    tree.nodes[node_id].left = left_id;
    const int right_id = build(right_rows, depth + 1);
    tree.nodes[node_id].right = right_id;
    return node_id;
  }
};

}  // namespace

RandomForestModel train_random_forest(const TabularDataset& data, int n_trees, int max_depth,
                                      int min_leaf, std::uint64_t seed, bool bootstrap) {
  const std::size_t n = data.n_examples();
  const std::size_t d = data.n_features();
  if (n == 0 || d == 0) throw DataError("empty dataset");
  if (n_trees < 1) throw std::invalid_argument("n_trees must be >= 1");
  if (max_depth < 1) throw std::invalid_argument("max_depth must be >= 1");
  if (min_leaf < 1) throw std::invalid_argument("min_leaf must be >= 1");

  RandomForestModel model;
  model.n_features_in = d;
  model.features_per_split =
      static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));
  model.trained_with_bootstrap = bootstrap;
  model.trees.resize(n_trees);

  for (int t = 0; t < n_trees; ++t) {
    std::vector<int> rows(n);
    if (bootstrap) {
      Rng boot = Rng::substream(seed, {kStreamBootstrap, static_cast<std::uint64_t>(t)});
      for (std::size_t i = 0; i < n; ++i) rows[i] = static_cast<int>(boot.below(n));
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    Rng grow = Rng::substream(seed, {kStreamTreeGrow, static_cast<std::uint64_t>(t)});
    TreeBuilder builder{data.features, data.targets, max_depth,
                        min_leaf,      model.features_per_split, grow, {}};
    builder.build(rows, 0);
    model.trees[t] = std::move(builder.tree);
  }
  return model;
}

ImportanceResult gini_importance(const RandomForestModel& model,
                                 const std::vector<std::string>& feature_names) {
  if (model.trees.empty()) throw std::invalid_argument("untrained forest");
  const std::size_t d = model.n_features_in;
  std::vector<double> totals(d, 0.0);
  for (const auto& tree : model.trees) {
    const double n_total = static_cast<double>(tree.nodes[0].n_train);
    for (const auto& node : tree.nodes) {
      if (node.feature < 0) continue;
      const auto& left = tree.nodes[node.left];
      const auto& right = tree.nodes[node.right];
      const double n_node = static_cast<double>(node.n_train);
      const double weighted_children =
          (static_cast<double>(left.n_train) * gini_impurity(left.positive_fraction) +
           static_cast<double>(right.n_train) * gini_impurity(right.positive_fraction)) /
          n_node;
      const double decrease = gini_impurity(node.positive_fraction) - weighted_children;
      totals[node.feature] += (n_node / n_total) * decrease;
    }
  }
  for (double& v : totals) v /= static_cast<double>(model.trees.size());
  const double sum = std::accumulate(totals.begin(), totals.end(), 0.0);
  if (sum > 0.0) {
    for (double& v : totals) v /= sum;
  }
  return make_single_round_result("gini", feature_names, std::move(totals),
                                  Mode::model_specific);
}

ImportanceResult coefficient_relevance(const LogisticRegressionModel& model,
                                       const StandardizationParams& presented,
                                       const std::vector<std::string>& feature_names) {
  const std::size_t d = model.coefficients.size();
  if (presented.stds.size() != d) throw std::invalid_argument("std length mismatch");
  std::vector<double> scores(d);
  for (std::size_t j = 0; j < d; ++j) {
    scores[j] = std::abs(model.coefficients[j]) * presented.stds[j];
  }
  return make_single_round_result("coef", feature_names, std::move(scores),
                                  Mode::model_specific);
}

StandardizationParams presented_input_stds(const StandardizationParams& raw) {
  StandardizationParams out;
  out.means.assign(raw.means.size(), 0.0);
  out.stds.resize(raw.stds.size());
  for (std::size_t j = 0; j < raw.stds.size(); ++j) {
    out.stds[j] = raw.stds[j] > 0.0 ? 1.0 : 0.0;
  }
  return out;
}

const ProbabilisticClassifier& as_classifier(const AnyModel& model) {
  return std::visit(
      [](const auto& m) -> const ProbabilisticClassifier& { return m; }, model);
}

namespace {

using nlohmann::json;

json tree_to_json(const DecisionTree& tree) {
  json nodes = json::array();
  for (const auto& n : tree.nodes) {
    nodes.push_back({{"feature", n.feature},
                     {"threshold", n.threshold},
                     {"left", n.left},
                     {"right", n.right},
                     {"positive_fraction", n.positive_fraction},
                     {"n_train", n.n_train}});
  }
  return {{"nodes", nodes}};
}

DecisionTree tree_from_json(const json& j) {
  DecisionTree tree;
  for (const auto& jn : j.at("nodes")) {
    TreeNode n;
    n.feature = jn.at("feature").get<int>();
    n.threshold = jn.at("threshold").get<double>();
    n.left = jn.at("left").get<int>();
    n.right = jn.at("right").get<int>();
    n.positive_fraction = jn.at("positive_fraction").get<double>();
    n.n_train = jn.at("n_train").get<int>();
    tree.nodes.push_back(n);
  }
  return tree;
}

}  // namespace

void save_model(const AnyModel& model, const std::string& path) {
  json doc;
  doc["format_version"] = 1;
  if (const auto* lr = std::get_if<LogisticRegressionModel>(&model)) {
    doc["model_type"] = "logistic";
    doc["bias"] = lr->bias;
    doc["coefficients"] = lr->coefficients;
    doc["means"] = lr->standardization.means;
    doc["stds"] = lr->standardization.stds;
  } else {
    const auto& rf = std::get<RandomForestModel>(model);
    doc["model_type"] = "random_forest";
    doc["n_features"] = rf.n_features_in;
    doc["features_per_split"] = rf.features_per_split;
    doc["bootstrap"] = rf.trained_with_bootstrap;
    json trees = json::array();
    for (const auto& t : rf.trees) trees.push_back(tree_to_json(t));
    doc["trees"] = std::move(trees);
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file: " + path);
  out << doc.dump(2) << "\n";
}

AnyModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError("malformed model file: " + std::string(e.what()));
  }
  if (doc.value("format_version", 0) != 1) throw DataError("unsupported model format version");
  const std::string type = doc.at("model_type").get<std::string>();
  if (type == "logistic") {
    LogisticRegressionModel m;
    m.bias = doc.at("bias").get<double>();
    m.coefficients = doc.at("coefficients").get<std::vector<double>>();
    m.standardization.means = doc.at("means").get<std::vector<double>>();
    m.standardization.stds = doc.at("stds").get<std::vector<double>>();
    if (m.standardization.means.size() != m.coefficients.size() ||
        m.standardization.stds.size() != m.coefficients.size()) {
      throw DataError("inconsistent logistic model document");
    }
    return m;
  }
  if (type == "random_forest") {
    RandomForestModel m;
    m.n_features_in = doc.at("n_features").get<std::size_t>();
    m.features_per_split = doc.at("features_per_split").get<int>();
    m.trained_with_bootstrap = doc.at("bootstrap").get<bool>();
    for (const auto& jt : doc.at("trees")) m.trees.push_back(tree_from_json(jt));
    if (m.trees.empty()) throw DataError("forest model has no trees");
    return m;
  }
  throw DataError("unknown model_type: " + type);
}

}  // namespace explain
