#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <numeric>

#include "explain/attributions.hpp"
#include "explain/models.hpp"
#include "explain/rng.hpp"
#include "helpers.hpp"

using namespace explain;

namespace {

// Model that is linear in probability space: f(x) = a + b . x, with inputs
// kept small enough that the output stays in [0, 1].
class LinearProbabilityModel final : public ProbabilisticClassifier {
 public:
  LinearProbabilityModel(double intercept, std::vector<double> slopes)
      : intercept_(intercept), slopes_(std::move(slopes)) {}
  std::size_t n_features() const override { return slopes_.size(); }
  std::vector<double> predict_proba(const Matrix& rows) const override {
    std::vector<double> out(rows.rows());
    for (std::size_t i = 0; i < rows.rows(); ++i) {
      double v = intercept_;
      for (std::size_t j = 0; j < slopes_.size(); ++j) v += slopes_[j] * rows(i, j);
      out[i] = v;
    }
    return out;
  }

 private:
  double intercept_;
  std::vector<double> slopes_;
};

double column_mean(const Matrix& m, std::size_t c) {
  double sum = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) sum += m(i, c);
  return sum / static_cast<double>(m.rows());
}

}  // namespace

TEST_CASE("exact_shapley") {
  SUBCASE("linear-probability model has the closed-form attribution") {
    const LinearProbabilityModel model(0.4, {0.05, -0.03, 0.02});
    const TabularDataset data = testutil::logistic_dataset(300, {1, 1, 1}, 0.0, 41);
    const Matrix background = testutil::background_rows(data, 64, 7);
    const std::vector<double> instance{1.2, -0.7, 0.4};

    const Attribution attr = exact_shapley(model, instance, background);
    const std::vector<double> slopes{0.05, -0.03, 0.02};
    for (std::size_t j = 0; j < 3; ++j) {
      const double expected = slopes[j] * (instance[j] - column_mean(background, j));
      CHECK(attr.phi[j] == doctest::Approx(expected).epsilon(1e-9));
    }
  }
  SUBCASE("exchangeable features receive equal attributions") {
    // Symmetric model over two identical feature values.
    const LinearProbabilityModel model(0.3, {0.04, 0.04});
    Matrix background(32, 2);
    Rng rng(9);
    for (std::size_t i = 0; i < background.rows(); ++i) {
      const double v = rng.normal();
      background(i, 0) = v;
      background(i, 1) = v;  // exchangeable background too
    }
    const std::vector<double> instance{0.8, 0.8};
    const Attribution attr = exact_shapley(model, instance, background);
    CHECK(attr.phi[0] == doctest::Approx(attr.phi[1]).epsilon(1e-9));
  }
  SUBCASE("efficiency holds for an arbitrary model at d = 8") {
    std::vector<double> beta(8);
    Rng rng(13);
    for (double& b : beta) b = rng.normal();
    const auto model = testutil::raw_logistic_model(beta, 0.2);
    const TabularDataset data = testutil::logistic_dataset(200, beta, 0.2, 43);
    const Matrix background = testutil::background_rows(data, 50, 3);
    for (int trial = 0; trial < 5; ++trial) {
      const auto instance = data.features.row(trial);
      const Attribution attr = exact_shapley(model, instance, background);
      const double total =
          attr.phi0 + std::accumulate(attr.phi.begin(), attr.phi.end(), 0.0);
      CHECK(total == doctest::Approx(model.predict_one(instance)).epsilon(1e-9));
    }
  }
  SUBCASE("an unused feature receives exactly zero") {
    const auto model = testutil::raw_logistic_model({1.4, 0.0}, -0.1);
    const TabularDataset data = testutil::logistic_dataset(100, {1.4, 0.0}, -0.1, 45);
    const Matrix background = testutil::background_rows(data, 40, 5);
    const Attribution attr = exact_shapley(model, data.features.row(0), background);
    CHECK(std::abs(attr.phi[1]) <= 1e-9);
  }
  SUBCASE("consistency: growing a coefficient never shrinks its attribution") {
    const TabularDataset data = testutil::logistic_dataset(100, {1, 1}, 0.0, 47);
    const Matrix background = testutil::background_rows(data, 40, 11);
    const std::vector<double> instance{0.9, -0.4};
    double previous = -1e9;
    for (double slope : {0.01, 0.02, 0.03, 0.04, 0.05}) {
      const LinearProbabilityModel model(0.4, {slope, 0.02});
      const Attribution attr = exact_shapley(model, instance, background);
      CHECK(attr.phi[0] >= previous - 1e-12);
      previous = attr.phi[0];
    }
  }
  SUBCASE("more than 12 features is rejected") {
    std::vector<double> beta(13, 0.1);
    const auto model = testutil::raw_logistic_model(beta, 0.0);
    Matrix background(4, 13, 0.0);
    const std::vector<double> instance(13, 0.0);
    CHECK_THROWS_AS(exact_shapley(model, instance, background), std::invalid_argument);
  }
}

TEST_CASE("owen_values") {
  std::vector<double> beta{1.0, -0.7, 0.4, 0.2, -0.1, 0.6};
  const auto model = testutil::raw_logistic_model(beta, 0.1);
  const TabularDataset data = testutil::logistic_dataset(150, beta, 0.1, 53);
  const Matrix background = testutil::background_rows(data, 40, 17);

  SUBCASE("flat partition reproduces exact Shapley") {
    const PartitionTree flat = PartitionTree::flat(6);
    for (int trial = 0; trial < 3; ++trial) {
      const auto instance = data.features.row(trial);
      const Attribution owen = owen_values(model, instance, background, flat);
      const Attribution shap = exact_shapley(model, instance, background);
      for (std::size_t j = 0; j < 6; ++j) {
        CHECK(owen.phi[j] == doctest::Approx(shap.phi[j]).epsilon(1e-9));
      }
      CHECK(owen.phi0 == doctest::Approx(shap.phi0).epsilon(1e-12));
    }
  }
  SUBCASE("nested partitions keep efficiency exact") {
    // Binary hierarchy over the six features.
    PartitionTree tree;
    for (int j = 0; j < 6; ++j) tree.nodes.push_back({j, {}});
    tree.nodes.push_back({-1, {0, 1}});     // node 6
    tree.nodes.push_back({-1, {2, 3}});     // node 7
    tree.nodes.push_back({-1, {4, 5}});     // node 8
    tree.nodes.push_back({-1, {6, 7, 8}});  // root
    tree.root = 9;
    const auto instance = data.features.row(1);
    const Attribution owen = owen_values(model, instance, background, tree);
    const double total = owen.phi0 + std::accumulate(owen.phi.begin(), owen.phi.end(), 0.0);
    CHECK(total == doctest::Approx(model.predict_one(instance)).epsilon(1e-9));
  }
  SUBCASE("a single all-feature block still attributes with exact efficiency") {
    PartitionTree tree;
    for (int j = 0; j < 6; ++j) tree.nodes.push_back({j, {}});
    tree.nodes.push_back({-1, {0, 1, 2, 3, 4, 5}});  // one block with every feature
    tree.nodes.push_back({-1, {6}});                 // root holding the block
    tree.root = 7;
    const auto instance = data.features.row(2);
    const Attribution owen = owen_values(model, instance, background, tree);
    const double total = owen.phi0 + std::accumulate(owen.phi.begin(), owen.phi.end(), 0.0);
    CHECK(total == doctest::Approx(model.predict_one(instance)).epsilon(1e-9));
  }
  SUBCASE("matches a hand-computed two-level recursion") {
    // d = 3: block {0, 1} and singleton {2}. Independent implementation of
    // the two-level Owen formula evaluated against the same value function.
    const LinearProbabilityModel lin(0.35, {0.05, 0.04, -0.03});
    Matrix bg(16, 3);
    Rng rng(23);
    for (std::size_t i = 0; i < bg.rows(); ++i) {
      bg(i, 0) = rng.normal();
      bg(i, 1) = 0.9 * bg(i, 0) + 0.4 * rng.normal();
      bg(i, 2) = rng.normal();
    }
    const std::vector<double> instance{0.7, 0.6, -0.2};

    PartitionTree tree;
    tree.nodes = {{0, {}}, {1, {}}, {2, {}}, {-1, {0, 1}}, {-1, {3, 2}}};
    tree.root = 4;
    const Attribution owen = owen_values(lin, instance, bg, tree);

    auto value = [&](const std::vector<int>& coalition) {
      Matrix rows = bg;
      for (int j : coalition) {
        for (std::size_t r = 0; r < rows.rows(); ++r) rows(r, j) = instance[j];
      }
      const auto probs = lin.predict_proba(rows);
      return std::accumulate(probs.begin(), probs.end(), 0.0) /
             static_cast<double>(probs.size());
    };
    // Feature 2 (its own block): average over the other block absent/present.
    const double phi2_oracle = 0.5 * (value({2}) - value({})) +
                               0.5 * (value({0, 1, 2}) - value({0, 1}));
    CHECK(owen.phi[2] == doctest::Approx(phi2_oracle).epsilon(1e-9));
    // Feature 0 inside block {0, 1}: contexts from the sibling block {2},
    // then within-block 2-player Shapley.
    const double phi0_oracle =
        0.5 * (0.5 * (value({0}) - value({})) + 0.5 * (value({0, 1}) - value({1}))) +
        0.5 * (0.5 * (value({0, 2}) - value({2})) + 0.5 * (value({0, 1, 2}) - value({1, 2})));
    CHECK(owen.phi[0] == doctest::Approx(phi0_oracle).epsilon(1e-9));
  }
  SUBCASE("perfectly correlated features in one block split credit equally") {
    const LinearProbabilityModel lin(0.3, {0.05, 0.05});
    Matrix bg(16, 2);
    Rng rng(29);
    for (std::size_t i = 0; i < bg.rows(); ++i) {
      const double v = rng.normal();
      bg(i, 0) = v;
      bg(i, 1) = v;
    }
    PartitionTree blocked;
    blocked.nodes = {{0, {}}, {1, {}}, {-1, {0, 1}}, {-1, {2}}};
    blocked.root = 3;
    const std::vector<double> instance{1.1, 1.1};
    const Attribution attr = owen_values(lin, instance, bg, blocked);
    CHECK(attr.phi[0] == doctest::Approx(attr.phi[1]).epsilon(1e-9));
  }
  SUBCASE("malformed partitions are rejected") {
    PartitionTree missing_leaf;
    missing_leaf.nodes = {{0, {}}, {1, {}}, {-1, {0}}};
    missing_leaf.root = 2;
    CHECK_THROWS_AS(owen_values(model, data.features.row(0), background, missing_leaf),
                    std::invalid_argument);
  }
}

TEST_CASE("lime_explain") {
  const TabularDataset data = testutil::logistic_dataset(2000, {2.0, 0.0, 0.0}, 0.0, 59);
  const LimeDiscretizer discretizer(data);

  SUBCASE("constant model yields zero coefficients and the constant intercept") {
    const LinearProbabilityModel constant(0.7, {0.0, 0.0, 0.0});
    const Attribution attr =
        lime_explain(constant, data.features.row(0), discretizer, 2500, -1.0, 61);
    CHECK(attr.phi0 == doctest::Approx(0.7).epsilon(1e-6));
    for (double phi : attr.phi) CHECK(std::abs(phi) < 1e-6);
    CHECK_FALSE(attr.ridge_fallback);
  }
  SUBCASE("the only informative feature dominates, and stays stable at 20x samples") {
    const auto model = testutil::raw_logistic_model({2.0, 0.0, 0.0}, 0.0);
    const std::vector<double> instance{1.5, 0.3, -0.2};
    const Attribution attr = lime_explain(model, instance, discretizer, 2500, -1.0, 63);
    const double others = std::max(std::abs(attr.phi[1]), std::abs(attr.phi[2]));
    CHECK(std::abs(attr.phi[0]) > 5.0 * others);

    const Attribution big = lime_explain(model, instance, discretizer, 50000, -1.0, 63);
    CHECK(std::abs(big.phi[0]) > 5.0 * std::max(std::abs(big.phi[1]), std::abs(big.phi[2])));
    CHECK(attr.phi[0] == doctest::Approx(big.phi[0]).epsilon(0.25));
  }
  SUBCASE("same seed gives identical coefficients") {
    const auto model = testutil::raw_logistic_model({1.0, -0.5, 0.2}, 0.1);
    const Attribution a = lime_explain(model, data.features.row(3), discretizer, 1000, -1.0, 65);
    const Attribution b = lime_explain(model, data.features.row(3), discretizer, 1000, -1.0, 65);
    CHECK(a.phi == b.phi);
    CHECK(a.phi0 == b.phi0);
  }
  SUBCASE("local-accuracy residual is recorded, not asserted") {
    // LIME does not guarantee local accuracy; log the residual for reference.
    const auto model = testutil::raw_logistic_model({2.0, 0.0, 0.0}, 0.0);
    const auto instance = data.features.row(5);
    const Attribution attr = lime_explain(model, instance, discretizer, 2500, -1.0, 66);
    const double surrogate = attr.phi0 + std::accumulate(attr.phi.begin(), attr.phi.end(), 0.0);
    const double residual = std::abs(surrogate - model.predict_one(instance));
    MESSAGE("lime local-accuracy residual: " << residual);
    CHECK(std::isfinite(residual));
  }
}

TEST_CASE("tree_interpreter") {
  SUBCASE("two-split path attributes each fraction change to its feature") {
    // Root (0.4) splits on feature 0; its right child (0.6) splits on
    // feature 1 reaching a 0.8 leaf: phi = (0.2, 0.2), phi0 = 0.4.
    DecisionTree tree;
    tree.nodes.resize(5);
    tree.nodes[0] = {0, 0.5, 1, 2, 0.4, 100};
    tree.nodes[1] = {-1, 0.0, -1, -1, 0.2, 50};
    tree.nodes[2] = {1, 1.0, 3, 4, 0.6, 50};
    tree.nodes[3] = {-1, 0.0, -1, -1, 0.3, 20};
    tree.nodes[4] = {-1, 0.0, -1, -1, 0.8, 30};
    RandomForestModel forest;
    forest.trees = {tree};
    forest.n_features_in = 2;

    const std::vector<double> instance{0.9, 1.7};  // right, then right
    const Attribution attr = tree_interpreter(forest, instance);
    CHECK(attr.phi0 == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(attr.phi[0] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(attr.phi[1] == doctest::Approx(0.2).epsilon(1e-12));
    const double total = attr.phi0 + attr.phi[0] + attr.phi[1];
    CHECK(total == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(total == doctest::Approx(forest.predict_proba(
                       Matrix::from_rows({instance}))[0]).epsilon(1e-12));
  }
  SUBCASE("stump attributes the whole change to its split feature") {
    DecisionTree tree;
    tree.nodes.resize(3);
    tree.nodes[0] = {3, 0.0, 1, 2, 0.5, 10};
    tree.nodes[1] = {-1, 0.0, -1, -1, 0.1, 5};
    tree.nodes[2] = {-1, 0.0, -1, -1, 0.9, 5};
    RandomForestModel forest;
    forest.trees = {tree};
    forest.n_features_in = 5;
    const std::vector<double> instance{0, 0, 0, 1.0, 0};
    const Attribution attr = tree_interpreter(forest, instance);
    CHECK(attr.phi[3] == doctest::Approx(0.4).epsilon(1e-12));
    for (int j : {0, 1, 2, 4}) CHECK(attr.phi[j] == 0.0);
  }
  SUBCASE("local accuracy holds on a trained forest") {
    const TabularDataset data = testutil::logistic_dataset(600, {1.5, -1.0, 0.5}, 0.0, 67);
    const RandomForestModel forest = train_random_forest(data, 25, 6, 3, 71);
    const std::vector<double> preds = forest.predict_proba(data.features);
    // Forest attribution equals the mean of per-tree attributions by
    // construction; check additivity to the forest prediction.
    for (int i = 0; i < 50; ++i) {
      const Attribution attr = tree_interpreter(forest, data.features.row(i));
      const double total =
          attr.phi0 + std::accumulate(attr.phi.begin(), attr.phi.end(), 0.0);
      CHECK(total == doctest::Approx(preds[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("sage_values") {
  const std::vector<double> beta{1.5, -1.0, 0.0};
  const auto model = testutil::raw_logistic_model(beta, 0.0);
  const TabularDataset data = testutil::logistic_dataset(1500, beta, 0.0, 73);

  SUBCASE("an ignored feature gets attribution within 0.005 of zero") {
    const ImportanceResult sage =
        sage_values(model, data, SageLoss::log_loss, 400, 64, 75);
    CHECK(std::abs(sage.scores[2]) < 0.005);
  }
  SUBCASE("efficiency: total matches the loss gap within 5%") {
    const ImportanceResult sage =
        sage_values(model, data, SageLoss::log_loss, 3000, 256, 77);
    const std::vector<double> probs = model.predict_proba(data.features);
    double mean_pred = std::accumulate(probs.begin(), probs.end(), 0.0) /
                       static_cast<double>(probs.size());
    double loss_baseline = 0.0, loss_model = 0.0;
    for (std::size_t i = 0; i < data.n_examples(); ++i) {
      loss_baseline += log_loss(mean_pred, data.targets[i]);
      loss_model += log_loss(probs[i], data.targets[i]);
    }
    loss_baseline /= static_cast<double>(data.n_examples());
    loss_model /= static_cast<double>(data.n_examples());
    const double total = std::accumulate(sage.scores.begin(), sage.scores.end(), 0.0);
    const double gap = loss_baseline - loss_model;
    CHECK(std::abs(total - gap) < 0.05 * std::abs(gap));
  }
  SUBCASE("seeded determinism at a fixed budget") {
    const ImportanceResult a = sage_values(model, data, SageLoss::log_loss, 150, 32, 79);
    const ImportanceResult b = sage_values(model, data, SageLoss::log_loss, 150, 32, 79);
    CHECK(a.scores == b.scores);
  }
  SUBCASE("a tiny budget is flagged unconverged, not an error") {
    const ImportanceResult sage = sage_values(model, data, SageLoss::log_loss, 5, 16, 81);
    CHECK_FALSE(sage.converged);
  }
}

TEST_CASE("aggregation of attribution sets") {
  const TabularDataset data = testutil::logistic_dataset(400, {1.0, 0.0}, 0.0, 83);

  SUBCASE("a single explained row gives |phi| as relevance") {
    AttributionSet set;
    set.method_id = "shap";
    set.phi = Matrix::from_rows({{0.3, -0.5}});
    set.phi0 = {0.4};
    set.explained_row_indices = {0};
    const ImportanceResult imp =
        aggregate_global_relevance(set, data.feature_names);
    CHECK(imp.scores == std::vector<double>{0.3, 0.5});
    CHECK(imp.rank == std::vector<int>{1, 0});
  }
  SUBCASE("an all-zero column has zero relevance and a flat effect") {
    AttributionSet set;
    set.method_id = "shap";
    set.phi = Matrix(data.n_examples(), 2, 0.0);
    for (std::size_t i = 0; i < data.n_examples(); ++i) {
      set.phi(i, 0) = 0.1 * data.features(i, 0);
      set.explained_row_indices.push_back(static_cast<int>(i));
    }
    set.phi0.assign(data.n_examples(), 0.5);
    const ImportanceResult imp = aggregate_global_relevance(set, data.feature_names);
    CHECK(imp.scores[1] == 0.0);

    const BinGrid grid = quantile_bins(data.features.column(1), 10);
    const EffectCurve curve = aggregate_binned_effect(set, data, 1, grid);
    for (double v : curve.values) CHECK(std::abs(v) <= 1e-12);
  }
  SUBCASE("binned shapley effect of a linear model recovers the line") {
    // Uniform features keep per-bin means at the bin centers.
    Rng rng(86);
    Matrix x(600, 2);
    std::vector<int> y(600);
    for (std::size_t i = 0; i < 600; ++i) {
      x(i, 0) = rng.uniform();
      x(i, 1) = rng.uniform();
      y[i] = rng.bernoulli(0.4) ? 1 : 0;
    }
    const TabularDataset uniform =
        make_dataset(std::move(x), testutil::feature_names(2), std::move(y));

    const LinearProbabilityModel model(0.4, {0.05, -0.02});
    const Matrix background = testutil::background_rows(uniform, 100, 85);
    AttributionSet set;
    set.method_id = "shap";
    set.phi = Matrix(uniform.n_examples(), 2);
    set.phi0.resize(uniform.n_examples());
    for (std::size_t i = 0; i < uniform.n_examples(); ++i) {
      const Attribution attr = exact_shapley(model, uniform.features.row(i), background);
      set.phi(i, 0) = attr.phi[0];
      set.phi(i, 1) = attr.phi[1];
      set.phi0[i] = attr.phi0;
      set.explained_row_indices.push_back(static_cast<int>(i));
    }
    const BinGrid grid = quantile_bins(uniform.features.column(0), 15);
    const EffectCurve curve = aggregate_binned_effect(set, uniform, 0, grid);
    // Analytic line, centered with the curve's own count weights.
    std::vector<double> analytic;
    double mean = 0.0;
    long total = 0;
    const double bg_mean = column_mean(background, 0);
    for (std::size_t k = 0; k < curve.grid.size(); ++k) {
      analytic.push_back(0.05 * (curve.grid[k] - bg_mean));
      mean += analytic.back() * curve.bin_counts[k];
      total += curve.bin_counts[k];
    }
    mean /= static_cast<double>(total);
    for (std::size_t k = 0; k < curve.grid.size(); ++k) {
      CHECK(std::abs(curve.values[k] - (analytic[k] - mean)) < 0.01);
    }
  }
  SUBCASE("sample cap is enforced") {
    AttributionSet set;
    set.method_id = "shap";
    set.phi = Matrix(5, 2, 0.1);
    set.phi0.assign(5, 0.0);
    set.explained_row_indices = {0, 1, 2, 3, 4};
    CHECK_THROWS_AS(aggregate_global_relevance(set, data.feature_names, 3),
                    std::invalid_argument);
  }
}
