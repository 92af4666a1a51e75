#include "doctest.h"

#include <cmath>
#include <functional>
#include <vector>

#include "explain/errors.hpp"
#include "explain/metrics.hpp"
#include "explain/rng.hpp"

using namespace explain;

TEST_CASE("performance_curve") {
  SUBCASE("perfect classifier passes through pod=1, sr=1") {
    const std::vector<double> probs{1, 0, 1, 0, 1};
    const std::vector<int> labels{1, 0, 1, 0, 1};
    const PerformanceCurve curve = performance_curve(probs, labels);
    bool hit = false;
    for (std::size_t k = 0; k < curve.pod.size(); ++k) {
      if (curve.pod[k] == 1.0 && curve.sr[k] == 1.0) hit = true;
    }
    CHECK(hit);
  }
  SUBCASE("all probabilities zero give pod 0 above threshold 0") {
    const std::vector<double> probs{0, 0, 0, 0};
    const std::vector<int> labels{1, 0, 1, 0};
    const PerformanceCurve curve = performance_curve(probs, labels);
    for (std::size_t k = 0; k < curve.pod.size(); ++k) {
      if (curve.thresholds[k] > 0.0) CHECK(curve.pod[k] == 0.0);
    }
  }
  SUBCASE("hand-counted contingency at threshold 0.5") {
    // Positives: rows 0, 1, 5 with probs 0.9, 0.6, 0.55; negatives 0.4, 0.3, 0.8.
    // At t = 0.5: predicted = {0.9, 0.6, 0.8, 0.55} -> hits 3, false alarms 1,
    // misses 0 => pod = 1, sr = 3/4.
    const std::vector<double> probs{0.9, 0.6, 0.4, 0.8, 0.3, 0.55};
    const std::vector<int> labels{1, 1, 0, 0, 0, 1};
    const PerformanceCurve curve = performance_curve(probs, labels, 201);
    bool found = false;
    for (std::size_t k = 0; k < curve.thresholds.size(); ++k) {
      if (std::abs(curve.thresholds[k] - 0.5) < 1e-12) {
        CHECK(curve.pod[k] == doctest::Approx(1.0));
        CHECK(curve.sr[k] == doctest::Approx(0.75));
        found = true;
      }
    }
    CHECK(found);
  }
  SUBCASE("pod non-decreasing as threshold decreases") {
    Rng rng(3);
    std::vector<double> probs(500);
    std::vector<int> labels(500);
    for (std::size_t i = 0; i < probs.size(); ++i) {
      probs[i] = rng.uniform();
      labels[i] = rng.bernoulli(0.3) ? 1 : 0;
    }
    const PerformanceCurve curve = performance_curve(probs, labels);
    for (std::size_t k = 1; k < curve.pod.size(); ++k) CHECK(curve.pod[k] >= curve.pod[k - 1]);
  }
  SUBCASE("no positive labels is degenerate") {
    CHECK_THROWS_WITH_AS(
        performance_curve(std::vector<double>{0.5, 0.5}, std::vector<int>{0, 0}),
        "degenerate targets", DataError);
  }
}

TEST_CASE("naupdc anchors") {
  SUBCASE("perfect classifier scores 1") {
    std::vector<double> probs;
    std::vector<int> labels;
    Rng rng(1);
    for (int i = 0; i < 400; ++i) {
      const int y = rng.bernoulli(0.25) ? 1 : 0;
      labels.push_back(y);
      probs.push_back(y);
    }
    CHECK(naupdc(probs, labels) == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("label-independent classifier scores about 0") {
    Rng rng(7);
    std::vector<double> probs(10000, 0.5);
    std::vector<int> labels(10000);
    for (auto& y : labels) y = rng.bernoulli(0.3) ? 1 : 0;
    CHECK(std::abs(naupdc(probs, labels)) < 0.05);
  }
  SUBCASE("anti-skill goes negative") {
    Rng rng(11);
    std::vector<double> probs(4000);
    std::vector<int> labels(4000);
    for (std::size_t i = 0; i < probs.size(); ++i) {
      probs[i] = rng.uniform();
      // Invert: high prob mostly label 0.
      labels[i] = rng.bernoulli(1.0 - probs[i]) ? 1 : 0;
    }
    CHECK(naupdc(probs, labels) < 0.0);
  }
  SUBCASE("base rate one is undefined") {
    CHECK_THROWS_WITH_AS(naupdc(std::vector<double>{0.5, 0.6}, std::vector<int>{1, 1}),
                         "normalization undefined", DataError);
  }
}

TEST_CASE("naupdc properties") {
  SUBCASE("invariant under strictly monotone transforms at grid resolution") {
    // Discrete probabilities whose images stay separated by more than the
    // threshold spacing, so both sweeps achieve exactly the same tables.
    Rng rng(13);
    const std::vector<double> levels{0.1, 0.3, 0.5, 0.7, 0.9};
    const std::vector<std::function<double(double)>> transforms{
        [](double p) { return p * p; },
        [](double p) { return p * p * p; },
        [](double p) { return 0.5 * p + 0.25; },
        [](double p) { return std::sqrt(p); },
    };
    for (int trial = 0; trial < 4; ++trial) {
      std::vector<double> probs(2000), mapped(2000);
      std::vector<int> labels(2000);
      for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = levels[rng.below(levels.size())];
        probs[i] = p;
        mapped[i] = transforms[trial](p);
        labels[i] = rng.bernoulli(p) ? 1 : 0;
      }
      CHECK(naupdc(probs, labels) == naupdc(mapped, labels));
    }
  }
  SUBCASE("never exceeds 1; equals 1 only with a perfect operating point") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> probs(300);
      std::vector<int> labels(300);
      bool any_pos = false;
      for (std::size_t i = 0; i < probs.size(); ++i) {
        probs[i] = rng.uniform();
        labels[i] = rng.bernoulli(probs[i]) ? 1 : 0;
        any_pos = any_pos || labels[i] == 1;
      }
      if (!any_pos) labels[0] = 1;
      const double v = naupdc(probs, labels);
      CHECK(v <= 1.0);
      if (v == doctest::Approx(1.0)) {
        const PerformanceCurve curve = performance_curve(probs, labels);
        bool perfect = false;
        for (std::size_t k = 0; k < curve.pod.size(); ++k) {
          perfect = perfect || (curve.pod[k] == 1.0 && curve.sr[k] == 1.0);
        }
        CHECK(perfect);
      }
    }
  }
}
