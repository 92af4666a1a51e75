#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "explain/dataset.hpp"
#include "explain/effects.hpp"
#include "explain/importance_result.hpp"
#include "explain/matrix.hpp"

namespace explain {

enum class MethodCategory { importance, relevance };
enum class AgreementStatistic { top_k, rank, effect };

const char* to_string(AgreementStatistic s);

// Pairwise agreement between explanation methods. Ranking statistics live in
// [0, 1] with unit diagonal; the effect statistic (1 - weighted RMSD) can dip
// below 0, recorded unclamped with below_zero set.
struct AgreementMatrix {
  std::vector<std::string> method_ids;
  Matrix values;  // m x m, symmetric
  AgreementStatistic statistic = AgreementStatistic::top_k;
  double overall_mean = 0.0;                 // mean over off-diagonal pairs
  double importance_vs_relevance_mean = 0.0; // mean over cross-category pairs; 0 if none
  bool below_zero = false;
};

// Fraction of shared features between the two top-k sets.
double top_k_feature_agreement(const ImportanceResult& a, const ImportanceResult& b, int k = 10);

// Fraction of top-k features whose positions differ by at most `tolerance`,
// averaged over both directions.
double rank_agreement(const ImportanceResult& a, const ImportanceResult& b, int k = 10,
                      int tolerance = 1);

// 1 - variance-weighted RMSD between two per-feature curve sets interpolated
// onto shared grids. Weights are the mean of the two methods' per-feature
// curve variances.
double effect_agreement(const std::vector<EffectCurve>& curves_a,
                        const std::vector<EffectCurve>& curves_b,
                        const std::vector<BinGrid>& common_grid_per_feature);

// Pairwise ranking-agreement matrix (statistic top_k or rank).
AgreementMatrix agreement_matrix(const std::vector<ImportanceResult>& results,
                                 AgreementStatistic statistic,
                                 const std::map<std::string, MethodCategory>& method_category,
                                 int k = 10, int tolerance = 1);

// Pairwise effect-agreement matrix over per-method curve sets.
AgreementMatrix effect_agreement_matrix(
    const std::vector<std::pair<std::string, std::vector<EffectCurve>>>& method_curves,
    const std::vector<BinGrid>& common_grid_per_feature,
    const std::map<std::string, MethodCategory>& method_category);

}  // namespace explain
