#include "explain/importance.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "explain/metrics.hpp"
#include "explain/parallel.hpp"
#include "explain/rng.hpp"

namespace explain {

namespace {

constexpr std::uint64_t kStreamFeaturePerm = 0x7065726d;  // (round, feature) shuffles
constexpr std::uint64_t kStreamJointPerm = 0x67727075;    // (round, set-hash) joint shuffles

std::vector<std::size_t> feature_permutation(std::uint64_t seed, int round, int feature,
                                             std::size_t n) {
  return Rng::substream(seed, {kStreamFeaturePerm, static_cast<std::uint64_t>(round),
                               static_cast<std::uint64_t>(feature)})
      .permutation(n);
}

std::uint64_t index_set_hash(const std::vector<int>& sorted_indices) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the sorted index list
  auto mix = [&h](std::uint64_t v) {
    for (int byte = 0; byte < 8; ++byte) {
      h ^= (v >> (8 * byte)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  mix(sorted_indices.size());
  for (int idx : sorted_indices) mix(static_cast<std::uint64_t>(idx));
  return h;
}

std::vector<std::size_t> joint_permutation(std::uint64_t seed, int round,
                                           const std::vector<int>& sorted_indices,
                                           std::size_t n) {
  return Rng::substream(seed, {kStreamJointPerm, static_cast<std::uint64_t>(round),
                               index_set_hash(sorted_indices)})
      .permutation(n);
}

// Score with the given feature columns permuted, each by its own shuffle.
double permuted_level(const ProbabilisticClassifier& model, const TabularDataset& data,
                      const std::vector<std::pair<int, const std::vector<std::size_t>*>>& perms,
                      const Scorer& scorer) {
  Matrix x = data.features;
  for (const auto& [feature, perm] : perms) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
      x(i, feature) = data.features((*perm)[i], feature);
    }
  }
  const std::vector<double> probs = model.predict_proba(x);
  return scorer(probs, data.targets);
}

Scorer resolve_scorer(Scorer scorer) {
  if (!scorer) {
    scorer = [](std::span<const double> probs, std::span<const int> labels) {
      return naupdc(probs, labels);
    };
  }
  return scorer;
}

struct SingleResult {
  Matrix per_round_scores;
  Matrix per_round_levels;
};

}  // namespace

ImportanceResult permutation_importance(const ProbabilisticClassifier& model,
                                        const TabularDataset& data, Direction direction,
                                        Mode mode, int n_rounds, int top_k,
                                        std::uint64_t seed, int workers, Scorer scorer) {
  scorer = resolve_scorer(std::move(scorer));
  if (direction != Direction::backward && direction != Direction::forward) {
    throw std::invalid_argument("direction must be backward or forward");
  }
  if (mode != Mode::single && mode != Mode::multi) {
    throw std::invalid_argument("mode must be single or multi");
  }
  if (n_rounds < 1) throw std::invalid_argument("n_rounds must be >= 1");
  const int d = static_cast<int>(data.n_features());
  const std::size_t n = data.n_examples();
  top_k = std::min(top_k, d);

  const double baseline = scorer(model.predict_proba(data.features), data.targets);

  // Cache all (round, feature) shuffles up front; they are reused across
  // multipass steps so every step sees identical permutations.
  std::vector<std::vector<std::size_t>> perms(static_cast<std::size_t>(n_rounds) * d);
  parallel_for(perms.size(), workers, [&](std::size_t k) {
    const int r = static_cast<int>(k) / d;
    const int f = static_cast<int>(k) % d;
    perms[k] = feature_permutation(seed, r, f, n);
  });
  auto perm_of = [&](int round, int feature) -> const std::vector<std::size_t>& {
    return perms[static_cast<std::size_t>(round) * d + feature];
  };

  // Level with a feature subset permuted (backward) or with everything except
  // the kept subset permuted (forward).
  auto level_for = [&](int round, const std::vector<int>& permuted_set) {
    std::vector<std::pair<int, const std::vector<std::size_t>*>> entries;
    entries.reserve(permuted_set.size());
    for (int f : permuted_set) entries.emplace_back(f, &perm_of(round, f));
    return permuted_level(model, data, entries, scorer);
  };

  ImportanceResult out;
  out.method_id = direction == Direction::backward ? (mode == Mode::single ? "bsp" : "bmp")
                                                   : (mode == Mode::single ? "fsp" : "fmp");
  out.unit_names = data.feature_names;
  out.baseline_score = baseline;
  out.direction = direction;
  out.mode = mode;
  out.per_round_scores = Matrix(n_rounds, d);
  out.per_round_levels = Matrix(n_rounds, d);
  out.individually_selected.assign(d, 1);

  std::vector<int> all_features(d);
  std::iota(all_features.begin(), all_features.end(), 0);

  // Per-round all-permuted level, needed by the forward variants.
  std::vector<double> all_permuted(n_rounds, 0.0);
  if (direction == Direction::forward) {
    parallel_for(n_rounds, workers,
                 [&](std::size_t r) { all_permuted[r] = level_for(static_cast<int>(r), all_features); });
  }

  if (mode == Mode::single) {
    parallel_for(static_cast<std::size_t>(n_rounds) * d, workers, [&](std::size_t k) {
      const int r = static_cast<int>(k) / d;
      const int f = static_cast<int>(k) % d;
      if (direction == Direction::backward) {
        const double level = level_for(r, {f});
        out.per_round_levels(r, f) = level;
        out.per_round_scores(r, f) = baseline - level;
      } else {
        std::vector<int> permuted_set;
        permuted_set.reserve(d - 1);
        for (int j = 0; j < d; ++j) {
          if (j != f) permuted_set.push_back(j);
        }
        const double level = level_for(r, permuted_set);
        out.per_round_levels(r, f) = level;
        out.per_round_scores(r, f) = level - all_permuted[r];
      }
    });
    out.scores.resize(d);
    for (int f = 0; f < d; ++f) {
      double sum = 0.0;
      for (int r = 0; r < n_rounds; ++r) sum += out.per_round_scores(r, f);
      out.scores[f] = sum / n_rounds;
    }
    out.rank = rank_descending(out.scores);
    return out;
  }

  // Multipass: greedily fix each step's winner. prev_level[r] is the score
  // level of the current fixed set at round r.
  std::vector<double> prev_level(n_rounds, baseline);
  if (direction == Direction::forward) prev_level = all_permuted;

  std::vector<int> fixed;  // winners in selection order
  std::vector<char> selected(d, 0);
  out.scores.assign(d, 0.0);

  for (int step = 0; step < top_k; ++step) {
    std::vector<int> candidates;
    for (int f = 0; f < d; ++f) {
      if (!selected[f]) candidates.push_back(f);
    }
    Matrix levels(n_rounds, static_cast<std::size_t>(candidates.size()));
    parallel_for(static_cast<std::size_t>(n_rounds) * candidates.size(), workers,
                 [&](std::size_t k) {
                   const int r = static_cast<int>(k / candidates.size());
                   const int ci = static_cast<int>(k % candidates.size());
                   const int f = candidates[ci];
                   std::vector<int> permuted_set;
                   if (direction == Direction::backward) {
                     permuted_set = fixed;
                     permuted_set.push_back(f);
                   } else {
                     for (int j = 0; j < d; ++j) {
                       const bool kept = selected[j] || j == f;
                       if (!kept) permuted_set.push_back(j);
                     }
                   }
                   levels(r, ci) = level_for(r, permuted_set);
                 });

    // Candidate score: mean marginal change from the current fixed level.
    int winner_ci = 0;
    double winner_score = -std::numeric_limits<double>::infinity();
    std::vector<double> step_scores(candidates.size());
    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
      double sum = 0.0;
      for (int r = 0; r < n_rounds; ++r) {
        const double delta = direction == Direction::backward ? prev_level[r] - levels(r, ci)
                                                              : levels(r, ci) - prev_level[r];
        sum += delta;
      }
      step_scores[ci] = sum / n_rounds;
      if (step_scores[ci] > winner_score) {
        winner_score = step_scores[ci];
        winner_ci = static_cast<int>(ci);
      }
    }

    const bool last_step = step == top_k - 1;
    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
      const int f = candidates[ci];
      const bool record = static_cast<int>(ci) == winner_ci || last_step;
      if (!record) continue;
      for (int r = 0; r < n_rounds; ++r) {
        const double delta = direction == Direction::backward ? prev_level[r] - levels(r, ci)
                                                              : levels(r, ci) - prev_level[r];
        out.per_round_scores(r, f) = delta;
        out.per_round_levels(r, f) = levels(r, ci);
      }
      out.scores[f] = step_scores[ci];
    }

    const int winner = candidates[winner_ci];
    selected[winner] = 1;
    fixed.push_back(winner);
    for (int r = 0; r < n_rounds; ++r) prev_level[r] = levels(r, winner_ci);
  }

  // Selection order first, then never-selected units by final-step score.
  std::vector<int> rest;
  for (int f = 0; f < d; ++f) {
    if (!selected[f]) {
      rest.push_back(f);
      out.individually_selected[f] = 0;
    }
  }
  std::stable_sort(rest.begin(), rest.end(),
                   [&](int a, int b) { return out.scores[a] > out.scores[b]; });
  out.rank = fixed;
  out.rank.insert(out.rank.end(), rest.begin(), rest.end());
  return out;
}

ImportanceResult grouped_permutation_importance(const ProbabilisticClassifier& model,
                                                const TabularDataset& data,
                                                const FeatureGroups& groups,
                                                GroupedVariant variant, int n_rounds,
                                                std::uint64_t seed, int workers,
                                                Scorer scorer) {
  scorer = resolve_scorer(std::move(scorer));
  if (n_rounds < 1) throw std::invalid_argument("n_rounds must be >= 1");
  validate_groups(groups, data.n_features());
  const std::size_t n_units = groups.groups.size();
  const std::size_t n = data.n_examples();
  const int d = static_cast<int>(data.n_features());

  const double baseline = scorer(model.predict_proba(data.features), data.targets);

  std::vector<int> all_features(d);
  std::iota(all_features.begin(), all_features.end(), 0);

  // One shared shuffle per (round, permuted set); the stream is keyed by the
  // set itself so the same set always reuses the same permutation.
  auto joint_level = [&](int round, const std::vector<int>& permuted_set) {
    if (permuted_set.empty()) return baseline;
    const std::vector<std::size_t> perm = joint_permutation(seed, round, permuted_set, n);
    std::vector<std::pair<int, const std::vector<std::size_t>*>> entries;
    entries.reserve(permuted_set.size());
    for (int f : permuted_set) entries.emplace_back(f, &perm);
    return permuted_level(model, data, entries, scorer);
  };

  std::vector<double> all_permuted(n_rounds, 0.0);
  if (variant == GroupedVariant::grouped_only) {
    parallel_for(n_rounds, workers, [&](std::size_t r) {
      all_permuted[r] = joint_level(static_cast<int>(r), all_features);
    });
  }

  ImportanceResult out;
  out.method_id = variant == GroupedVariant::grouped ? "grouped" : "grouped_only";
  out.baseline_score = baseline;
  out.direction = variant == GroupedVariant::grouped ? Direction::backward : Direction::forward;
  out.mode = variant == GroupedVariant::grouped ? Mode::grouped : Mode::grouped_only;
  out.per_round_scores = Matrix(n_rounds, n_units);
  out.per_round_levels = Matrix(n_rounds, n_units);
  out.individually_selected.assign(n_units, 1);
  for (const auto& [name, members] : groups.groups) out.unit_names.push_back(name);

  parallel_for(static_cast<std::size_t>(n_rounds) * n_units, workers, [&](std::size_t k) {
    const int r = static_cast<int>(k / n_units);
    const std::size_t u = k % n_units;
    const std::vector<int>& members = groups.groups[u].second;
    std::vector<int> permuted_set;
    if (variant == GroupedVariant::grouped) {
      permuted_set = members;
    } else {
      std::vector<char> in_group(d, 0);
      for (int f : members) in_group[f] = 1;
      for (int f = 0; f < d; ++f) {
        if (!in_group[f]) permuted_set.push_back(f);
      }
    }
    const double level = joint_level(r, permuted_set);
    out.per_round_levels(r, u) = level;
    out.per_round_scores(r, u) =
        variant == GroupedVariant::grouped ? baseline - level : level - all_permuted[r];
  });

  out.scores.resize(n_units);
  for (std::size_t u = 0; u < n_units; ++u) {
    double sum = 0.0;
    for (int r = 0; r < n_rounds; ++r) sum += out.per_round_scores(r, u);
    out.scores[u] = sum / n_rounds;
  }
  out.rank = rank_descending(out.scores);
  return out;
}

}  // namespace explain
