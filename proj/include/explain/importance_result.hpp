#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "explain/matrix.hpp"

namespace explain {

enum class Direction { backward, forward, none };
enum class Mode { single, multi, grouped, grouped_only, model_specific, relevance };

const char* to_string(Direction d);
const char* to_string(Mode m);
Direction direction_from_string(const std::string& s);
Mode mode_from_string(const std::string& s);

// Per-feature (or per-group) scores and ranks from one ranking method.
// Larger score = more important. `scores` is always the per-unit mean of
// `per_round_scores` rows.
struct ImportanceResult {
  std::string method_id;
  std::vector<std::string> unit_names;
  std::vector<double> scores;
  Matrix per_round_scores;  // n_rounds x n_units
  std::vector<int> rank;    // unit indices, most important first
  double baseline_score = 0.0;
  Direction direction = Direction::none;
  Mode mode = Mode::relevance;

  // Raw permuted-metric level per (round, unit) for permutation methods;
  // empty otherwise. For grouped variants this is the quantity shared by the
  // grouped/grouped-only duality.
  Matrix per_round_levels;

  // Multipass: false for units never individually selected (score taken from
  // the final completed step).
  std::vector<std::uint8_t> individually_selected;

  // Sampling-based estimators (SAGE) may stop at the budget cap.
  bool converged = true;

  const std::vector<int>& top_units() const { return rank; }
};

// Unit indices sorted by descending score; ties broken by lowest index.
std::vector<int> rank_descending(const std::vector<double>& scores);

// Builds the common fields of a single-round relevance-style result.
ImportanceResult make_single_round_result(std::string method_id,
                                          std::vector<std::string> unit_names,
                                          std::vector<double> scores, Mode mode);

}  // namespace explain
