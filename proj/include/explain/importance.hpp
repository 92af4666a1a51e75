#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "explain/dataset.hpp"
#include "explain/importance_result.hpp"
#include "explain/models.hpp"

namespace explain {

enum class GroupedVariant { grouped, grouped_only };

// Performance score for permutation importance. Receives the model's full
// probability vector and the true labels; defaults to NAUPDC when empty.
using Scorer =
    std::function<double(std::span<const double> probs, std::span<const int> labels)>;

// Permutation importance scored by NAUPDC on the provided dataset.
//
// backward/single: per-feature score is baseline minus the mean permuted
// score. forward/single: mean score with everything-but-the-feature permuted
// minus the all-permuted score. multi modes run the greedy sequential
// variant up to top_k, fixing each step's winner (backward: left permuted,
// forward: left unpermuted); scores are the marginal change recorded at
// selection time, and unselected units keep their final-step scores with
// individually_selected = false.
//
// Each (round, feature) pair owns a seed substream, so per-feature shuffles
// are independent and results do not depend on scheduling or worker count.
ImportanceResult permutation_importance(const ProbabilisticClassifier& model,
                                        const TabularDataset& data, Direction direction,
                                        Mode mode, int n_rounds = 30, int top_k = 10,
                                        std::uint64_t seed = 0, int workers = 1,
                                        Scorer scorer = {});

// Joint permutation importance for feature groups: one shared row shuffle is
// applied to every feature in the permuted set, preserving the set's joint
// distribution. grouped permutes the group itself (score = baseline - level);
// grouped_only permutes the complement (score = level - all-permuted level).
// Shuffle streams are keyed by the permuted index set, so any two calls that
// permute the same set at the same round reuse the exact same permutation.
ImportanceResult grouped_permutation_importance(const ProbabilisticClassifier& model,
                                                const TabularDataset& data,
                                                const FeatureGroups& groups,
                                                GroupedVariant variant, int n_rounds = 30,
                                                std::uint64_t seed = 0, int workers = 1,
                                                Scorer scorer = {});

}  // namespace explain
