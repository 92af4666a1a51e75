#include "explain/importance_result.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace explain {

const char* to_string(Direction d) {
  switch (d) {
    case Direction::backward: return "backward";
    case Direction::forward: return "forward";
    case Direction::none: return "none";
  }
  return "none";
}

const char* to_string(Mode m) {
  switch (m) {
    case Mode::single: return "single";
    case Mode::multi: return "multi";
    case Mode::grouped: return "grouped";
    case Mode::grouped_only: return "grouped_only";
    case Mode::model_specific: return "model_specific";
    case Mode::relevance: return "relevance";
  }
  return "relevance";
}

Direction direction_from_string(const std::string& s) {
  if (s == "backward") return Direction::backward;
  if (s == "forward") return Direction::forward;
  if (s == "none") return Direction::none;
  throw std::invalid_argument("unknown direction: " + s);
}

Mode mode_from_string(const std::string& s) {
  if (s == "single") return Mode::single;
  if (s == "multi") return Mode::multi;
  if (s == "grouped") return Mode::grouped;
  if (s == "grouped_only") return Mode::grouped_only;
  if (s == "model_specific") return Mode::model_specific;
  if (s == "relevance") return Mode::relevance;
  throw std::invalid_argument("unknown mode: " + s);
}

std::vector<int> rank_descending(const std::vector<double>& scores) {
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  return idx;
}

ImportanceResult make_single_round_result(std::string method_id,
                                          std::vector<std::string> unit_names,
                                          std::vector<double> scores, Mode mode) {
  ImportanceResult out;
  out.method_id = std::move(method_id);
  out.unit_names = std::move(unit_names);
  out.per_round_scores = Matrix(1, scores.size());
  for (std::size_t j = 0; j < scores.size(); ++j) out.per_round_scores(0, j) = scores[j];
  out.rank = rank_descending(scores);
  out.scores = std::move(scores);
  out.mode = mode;
  out.individually_selected.assign(out.scores.size(), 1);
  return out;
}

}  // namespace explain
