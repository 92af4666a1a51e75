#include "explain/disagreement.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace explain {

const char* to_string(AgreementStatistic s) {
  switch (s) {
    case AgreementStatistic::top_k: return "top_k";
    case AgreementStatistic::rank: return "rank";
    case AgreementStatistic::effect: return "effect";
  }
  return "top_k";
}

namespace {

void check_same_universe(const ImportanceResult& a, const ImportanceResult& b) {
  if (a.unit_names != b.unit_names) {
    throw std::invalid_argument("rankings cover different feature universes");
  }
}

}  // namespace

double top_k_feature_agreement(const ImportanceResult& a, const ImportanceResult& b, int k) {
  check_same_universe(a, b);
  const int n = static_cast<int>(a.unit_names.size());
  k = std::min(k, n);
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  std::vector<char> in_a(n, 0);
  for (int i = 0; i < k; ++i) in_a[a.rank[i]] = 1;
  int shared = 0;
  for (int i = 0; i < k; ++i) shared += in_a[b.rank[i]];
  return static_cast<double>(shared) / static_cast<double>(k);
}

double rank_agreement(const ImportanceResult& a, const ImportanceResult& b, int k,
                      int tolerance) {
  check_same_universe(a, b);
  const int n = static_cast<int>(a.unit_names.size());
  k = std::min(k, n);
  if (k < 1) throw std::invalid_argument("k must be >= 1");

  std::vector<int> pos_a(n), pos_b(n);
  for (int i = 0; i < n; ++i) {
    pos_a[a.rank[i]] = i;
    pos_b[b.rank[i]] = i;
  }
  auto directed = [&](const std::vector<int>& top_of, const std::vector<int>& p1,
                      const std::vector<int>& p2) {
    int agree = 0;
    for (int i = 0; i < k; ++i) {
      const int unit = top_of[i];
      if (std::abs(p1[unit] - p2[unit]) <= tolerance) ++agree;
    }
    return static_cast<double>(agree) / static_cast<double>(k);
  };
  return 0.5 * (directed(a.rank, pos_a, pos_b) + directed(b.rank, pos_a, pos_b));
}

double effect_agreement(const std::vector<EffectCurve>& curves_a,
                        const std::vector<EffectCurve>& curves_b,
                        const std::vector<BinGrid>& common_grid_per_feature) {
  if (common_grid_per_feature.size() < curves_a.size()) {
    throw std::invalid_argument("one common grid per curve in curves_a required");
  }
  std::unordered_map<int, const EffectCurve*> by_feature_b;
  for (const auto& c : curves_b) by_feature_b[c.feature_index] = &c;

  double weighted_rmsd = 0.0;
  double weight_total = 0.0;
  double plain_rmsd = 0.0;
  int matched = 0;
  for (std::size_t a_idx = 0; a_idx < curves_a.size(); ++a_idx) {
    const EffectCurve& ca = curves_a[a_idx];
    const auto hit = by_feature_b.find(ca.feature_index);
    if (hit == by_feature_b.end()) continue;
    const EffectCurve& cb = *hit->second;
    const BinGrid& grid = common_grid_per_feature[a_idx];
    const std::size_t m = grid.centers.size();

    double sq_diff = 0.0, mean_a = 0.0, mean_b = 0.0;
    std::vector<double> ya(m), yb(m);
    for (std::size_t i = 0; i < m; ++i) {
      ya[i] = interpolate_curve(ca, grid.centers[i]);
      yb[i] = interpolate_curve(cb, grid.centers[i]);
      sq_diff += (ya[i] - yb[i]) * (ya[i] - yb[i]);
      mean_a += ya[i];
      mean_b += yb[i];
    }
    mean_a /= static_cast<double>(m);
    mean_b /= static_cast<double>(m);
    double var_a = 0.0, var_b = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      var_a += (ya[i] - mean_a) * (ya[i] - mean_a);
      var_b += (yb[i] - mean_b) * (yb[i] - mean_b);
    }
    var_a /= static_cast<double>(m);
    var_b /= static_cast<double>(m);

    const double rmsd = std::sqrt(sq_diff / static_cast<double>(m));
    const double weight = 0.5 * (var_a + var_b);
    weighted_rmsd += weight * rmsd;
    weight_total += weight;
    plain_rmsd += rmsd;
    ++matched;
  }
  if (matched == 0) throw std::invalid_argument("empty intersection of features");
  // All-flat curve sets carry no variance weight; fall back to a plain mean.
  const double rmsd = weight_total > 0.0 ? weighted_rmsd / weight_total
                                         : plain_rmsd / static_cast<double>(matched);
  return 1.0 - rmsd;
}

namespace {

AgreementMatrix summarize(AgreementMatrix matrix,
                          const std::map<std::string, MethodCategory>& method_category) {
  const std::size_t m = matrix.method_ids.size();
  double total = 0.0, cross = 0.0;
  int total_n = 0, cross_n = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      total += matrix.values(i, j);
      ++total_n;
      const auto ci = method_category.find(matrix.method_ids[i]);
      const auto cj = method_category.find(matrix.method_ids[j]);
      if (ci != method_category.end() && cj != method_category.end() &&
          ci->second != cj->second) {
        cross += matrix.values(i, j);
        ++cross_n;
      }
      if (matrix.values(i, j) < 0.0) matrix.below_zero = true;
    }
  }
  matrix.overall_mean = total_n > 0 ? total / total_n : 0.0;
  matrix.importance_vs_relevance_mean = cross_n > 0 ? cross / cross_n : 0.0;
  return matrix;
}

}  // namespace

AgreementMatrix agreement_matrix(const std::vector<ImportanceResult>& results,
                                 AgreementStatistic statistic,
                                 const std::map<std::string, MethodCategory>& method_category,
                                 int k, int tolerance) {
  if (results.size() < 2) throw std::invalid_argument("need at least 2 methods");
  if (statistic == AgreementStatistic::effect) {
    throw std::invalid_argument("effect statistic requires curve sets");
  }
  const std::size_t m = results.size();
  AgreementMatrix out;
  out.statistic = statistic;
  for (const auto& r : results) out.method_ids.push_back(r.method_id);
  out.values = Matrix(m, m, 1.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const double v = statistic == AgreementStatistic::top_k
                           ? top_k_feature_agreement(results[i], results[j], k)
                           : rank_agreement(results[i], results[j], k, tolerance);
      out.values(i, j) = v;
      out.values(j, i) = v;
    }
  }
  return summarize(std::move(out), method_category);
}

AgreementMatrix effect_agreement_matrix(
    const std::vector<std::pair<std::string, std::vector<EffectCurve>>>& method_curves,
    const std::vector<BinGrid>& common_grid_per_feature,
    const std::map<std::string, MethodCategory>& method_category) {
  if (method_curves.size() < 2) throw std::invalid_argument("need at least 2 methods");
  const std::size_t m = method_curves.size();
  AgreementMatrix out;
  out.statistic = AgreementStatistic::effect;
  for (const auto& [id, curves] : method_curves) out.method_ids.push_back(id);
  out.values = Matrix(m, m, 1.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const double v = effect_agreement(method_curves[i].second, method_curves[j].second,
                                        common_grid_per_feature);
      out.values(i, j) = v;
      out.values(j, i) = v;
    }
  }
  return summarize(std::move(out), method_category);
}

}  // namespace explain
