#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "explain/dataset.hpp"
#include "explain/models.hpp"
#include "explain/rng.hpp"

namespace testutil {

using explain::Matrix;
using explain::TabularDataset;

inline std::vector<std::string> feature_names(int d) {
  std::vector<std::string> names;
  for (int j = 0; j < d; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

// Independent standard-normal features with Bernoulli(sigmoid(bias + beta.x))
// labels.
inline TabularDataset logistic_dataset(std::size_t n, const std::vector<double>& beta,
                                       double bias, std::uint64_t seed) {
  const int d = static_cast<int>(beta.size());
  explain::Rng rng(seed);
  Matrix x(n, d);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double z = bias;
    for (int j = 0; j < d; ++j) {
      x(i, j) = rng.normal();
      z += beta[j] * x(i, j);
    }
    y[i] = rng.bernoulli(explain::sigmoid(z)) ? 1 : 0;
  }
  return explain::make_dataset(std::move(x), feature_names(d), std::move(y));
}

// A logistic model with the given coefficients acting directly on raw inputs
// (identity standardization).
inline explain::LogisticRegressionModel raw_logistic_model(std::vector<double> beta,
                                                           double bias) {
  explain::LogisticRegressionModel model;
  model.bias = bias;
  model.standardization.means.assign(beta.size(), 0.0);
  model.standardization.stds.assign(beta.size(), 1.0);
  model.coefficients = std::move(beta);
  return model;
}

// Gaussian pair with the requested correlation plus extra independent
// features, labels from a logistic link on the raw features.
inline TabularDataset correlated_pair_dataset(std::size_t n, double rho,
                                              const std::vector<double>& beta, double bias,
                                              std::uint64_t seed) {
  const int d = static_cast<int>(beta.size());
  explain::Rng rng(seed);
  Matrix x(n, d);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.normal();
    x(i, 0) = u;
    if (d > 1) x(i, 1) = rho * u + std::sqrt(1.0 - rho * rho) * rng.normal();
    for (int j = 2; j < d; ++j) x(i, j) = rng.normal();
    double z = bias;
    for (int j = 0; j < d; ++j) z += beta[j] * x(i, j);
    y[i] = rng.bernoulli(explain::sigmoid(z)) ? 1 : 0;
  }
  return explain::make_dataset(std::move(x), feature_names(d), std::move(y));
}

inline Matrix background_rows(const TabularDataset& data, std::size_t count,
                              std::uint64_t seed) {
  explain::Rng rng(seed);
  const auto rows = rng.sample_without_replacement(data.n_examples(),
                                                   std::min(count, data.n_examples()));
  Matrix bg(rows.size(), data.n_features());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = data.features.row(rows[i]);
    std::copy(src.begin(), src.end(), bg.row(i).begin());
  }
  return bg;
}

}  // namespace testutil
