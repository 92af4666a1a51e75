#include "explain/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "explain/errors.hpp"

namespace explain {

TabularDataset make_dataset(Matrix features, std::vector<std::string> feature_names,
                            std::vector<int> targets) {
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  if (n < 1) throw DataError("dataset must contain at least one example");
  if (targets.size() != n) throw DataError("target length does not match feature rows");
  if (feature_names.size() != d) throw DataError("feature name count does not match columns");
  std::set<std::string> seen(feature_names.begin(), feature_names.end());
  if (seen.size() != feature_names.size()) throw DataError("duplicate feature names");
  for (double v : features.data()) {
    if (!std::isfinite(v)) throw DataError("non-finite feature value");
  }
  long positives = 0;
  for (int t : targets) {
    if (t != 0 && t != 1) throw DataError("non-binary target");
    positives += t;
  }
  TabularDataset out{std::move(features), std::move(feature_names), std::move(targets), 0.0};
  out.base_rate = static_cast<double>(positives) / static_cast<double>(n);
  return out;
}

void validate_groups(const FeatureGroups& groups, std::size_t n_features) {
  std::vector<char> used(n_features, 0);
  for (const auto& [name, members] : groups.groups) {
    if (members.empty()) throw std::invalid_argument("empty feature group: " + name);
    for (int idx : members) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= n_features)
        throw std::invalid_argument("feature index out of range in group: " + name);
      if (used[idx]) throw std::invalid_argument("feature groups are not disjoint");
      used[idx] = 1;
    }
  }
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string trimmed(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw, std::size_t row, const std::string& column) {
  const std::string cell = trimmed(raw);
  if (cell.empty()) {
    throw DataError("missing value at row " + std::to_string(row) + ", column " + column);
  }
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw DataError("non-numeric cell at row " + std::to_string(row) + ", column " + column +
                    ": '" + cell + "'");
  }
  return value;
}

}  // namespace

TabularDataset load_csv(const std::string& path, const std::string& target_column) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file: " + path);
  const std::vector<std::string> header = split_line(line);

  std::vector<std::string> names;
  int target_idx = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name = trimmed(header[c]);
    if (name.empty()) throw DataError("empty column name in header");
    if (name == target_column) {
      if (target_idx >= 0) throw DataError("duplicate column name: " + name);
      target_idx = static_cast<int>(c);
    } else {
      names.push_back(name);
    }
  }
  if (target_idx < 0) throw DataError("target column not found: " + target_column);
  {
    std::set<std::string> seen(names.begin(), names.end());
    if (seen.size() != names.size()) throw DataError("duplicate column names in header");
  }

  std::vector<std::vector<double>> rows;
  std::vector<int> targets;
  std::size_t row_number = 1;  // header is row 0
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != header.size()) {
      throw DataError("row " + std::to_string(row_number) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(header.size()));
    }
    std::vector<double> feature_row;
    feature_row.reserve(names.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const double v = parse_cell(fields[c], row_number, trimmed(header[c]));
      if (static_cast<int>(c) == target_idx) {
        if (v != 0.0 && v != 1.0) throw DataError("non-binary target");
        targets.push_back(static_cast<int>(v));
      } else {
        feature_row.push_back(v);
      }
    }
    rows.push_back(std::move(feature_row));
    ++row_number;
  }
  if (rows.empty()) throw DataError("no data rows in " + path);
  return make_dataset(Matrix::from_rows(rows), std::move(names), std::move(targets));
}

std::pair<TabularDataset, StandardizationParams> standardize(const TabularDataset& data) {
  const std::size_t n = data.n_examples();
  const std::size_t d = data.n_features();
  if (n < 2) throw std::invalid_argument("standardize requires at least 2 examples");

  StandardizationParams params;
  params.means.resize(d);
  params.stds.resize(d);
  Matrix out = data.features;
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += out(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = out(i, j) - mean;
      var += diff * diff;
    }
    var /= static_cast<double>(n);
    const double std_dev = std::sqrt(var);
    params.means[j] = mean;
    params.stds[j] = std_dev;
    for (std::size_t i = 0; i < n; ++i) {
      out(i, j) = std_dev > 0.0 ? (out(i, j) - mean) / std_dev : 0.0;
    }
  }
  TabularDataset standardized = data;
  standardized.features = std::move(out);
  return {std::move(standardized), std::move(params)};
}

Matrix correlation_matrix(const TabularDataset& data) {
  const std::size_t n = data.n_examples();
  const std::size_t d = data.n_features();
  if (n < 2) throw std::invalid_argument("correlation requires at least 2 examples");

  std::vector<double> means(d, 0.0), stds(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += data.features(i, j);
    means[j] = mean / static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = data.features(i, j) - means[j];
      var += diff * diff;
    }
    stds[j] = std::sqrt(var / static_cast<double>(n));
  }

  Matrix corr(d, d, 0.0);
  for (std::size_t a = 0; a < d; ++a) {
    if (stds[a] == 0.0) continue;  // constant feature: whole row stays 0
    corr(a, a) = 1.0;
    for (std::size_t b = a + 1; b < d; ++b) {
      if (stds[b] == 0.0) continue;
      double cov = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        cov += (data.features(i, a) - means[a]) * (data.features(i, b) - means[b]);
      }
      cov /= static_cast<double>(n);
      const double r = cov / (stds[a] * stds[b]);
      corr(a, b) = r;
      corr(b, a) = r;
    }
  }
  return corr;
}

namespace {

struct LinkageState {
  // Active clusters as sorted member lists; complete-linkage distance between
  // clusters is the max pairwise 1 - |corr|.
  std::vector<std::vector<int>> members;
  std::vector<int> node_id;  // dendrogram node id per active cluster

  double complete_distance(const Matrix& corr, std::size_t a, std::size_t b) const {
    double worst = 0.0;
    for (int i : members[a]) {
      for (int j : members[b]) {
        worst = std::max(worst, 1.0 - std::abs(corr(i, j)));
      }
    }
    return worst;
  }
};

}  // namespace

std::vector<std::pair<int, int>> linkage_merges(const Matrix& corr) {
  const std::size_t d = corr.rows();
  if (corr.cols() != d) throw std::invalid_argument("correlation matrix must be square");
  LinkageState st;
  st.members.resize(d);
  st.node_id.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    st.members[i] = {static_cast<int>(i)};
    st.node_id[i] = static_cast<int>(i);
  }
  std::vector<std::pair<int, int>> merges;
  int next_node = static_cast<int>(d);
  while (st.members.size() > 1) {
    std::size_t best_a = 0, best_b = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < st.members.size(); ++a) {
      for (std::size_t b = a + 1; b < st.members.size(); ++b) {
        const double dist = st.complete_distance(corr, a, b);
        if (dist < best) {
          best = dist;
          best_a = a;
          best_b = b;
        }
      }
    }
    merges.emplace_back(st.node_id[best_a], st.node_id[best_b]);
    std::vector<int> merged = st.members[best_a];
    merged.insert(merged.end(), st.members[best_b].begin(), st.members[best_b].end());
    std::sort(merged.begin(), merged.end());
    st.members.erase(st.members.begin() + best_b);
    st.members[best_a] = std::move(merged);
    st.node_id.erase(st.node_id.begin() + best_b);
    st.node_id[best_a] = next_node++;
  }
  return merges;
}

FeatureGroups cluster_features(const Matrix& corr, double threshold,
                               const std::vector<std::string>& feature_names) {
  const std::size_t d = corr.rows();
  if (corr.cols() != d) throw std::invalid_argument("correlation matrix must be square");
  const double cut = 1.0 - threshold;

  LinkageState st;
  st.members.resize(d);
  for (std::size_t i = 0; i < d; ++i) st.members[i] = {static_cast<int>(i)};

  while (st.members.size() > 1) {
    std::size_t best_a = 0, best_b = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < st.members.size(); ++a) {
      for (std::size_t b = a + 1; b < st.members.size(); ++b) {
        const double dist = st.complete_distance(corr, a, b);
        if (dist < best) {
          best = dist;
          best_a = a;
          best_b = b;
        }
      }
    }
    if (!(best < cut)) break;
    std::vector<int> merged = st.members[best_a];
    merged.insert(merged.end(), st.members[best_b].begin(), st.members[best_b].end());
    std::sort(merged.begin(), merged.end());
    st.members.erase(st.members.begin() + best_b);
    st.members[best_a] = std::move(merged);
  }

  std::sort(st.members.begin(), st.members.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  FeatureGroups out;
  for (const auto& members : st.members) {
    std::string name;
    if (feature_names.empty()) {
      name = "group_" + std::to_string(out.groups.size());
    } else {
      for (int idx : members) {
        if (!name.empty()) name += "+";
        name += feature_names[idx];
      }
    }
    out.groups.emplace_back(std::move(name), members);
  }
  return out;
}

double quantile_sorted(std::span<const double> sorted_values, double q) {
  const std::size_t n = sorted_values.size();
  if (n == 0) throw std::invalid_argument("quantile of empty vector");
  if (n == 1) return sorted_values[0];
  const double h = q * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= n) return sorted_values[n - 1];
  const double frac = h - static_cast<double>(lo);
  return sorted_values[lo] + frac * (sorted_values[lo + 1] - sorted_values[lo]);
}

BinGrid quantile_bins(std::span<const double> values, int n_bins) {
  if (values.empty()) throw std::invalid_argument("quantile_bins on empty values");
  if (n_bins < 1) throw std::invalid_argument("n_bins must be >= 1");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) throw DataError("degenerate feature: zero spread");

  std::vector<double> edges;
  edges.reserve(n_bins + 1);
  for (int k = 0; k <= n_bins; ++k) {
    const double q = static_cast<double>(k) / static_cast<double>(n_bins);
    const double e = quantile_sorted(sorted, q);
    if (edges.empty() || e > edges.back()) edges.push_back(e);
  }

  const double span_width = edges.back() - edges.front();
  const double margin = 1e-9 * std::max(1.0, span_width);
  edges.front() -= margin;
  edges.back() += margin;

  BinGrid grid;
  grid.edges = std::move(edges);
  const std::size_t n_cells = grid.edges.size() - 1;
  grid.centers.resize(n_cells);
  for (std::size_t k = 0; k < n_cells; ++k) {
    grid.centers[k] = 0.5 * (grid.edges[k] + grid.edges[k + 1]);
  }
  grid.counts.assign(n_cells, 0);
  for (double v : values) grid.counts[bin_index(grid, v)] += 1;
  return grid;
}

int bin_index(const BinGrid& grid, double value) {
  // First edge strictly greater than value, minus one; clamped to valid bins.
  const auto it = std::upper_bound(grid.edges.begin(), grid.edges.end(), value);
  long idx = static_cast<long>(it - grid.edges.begin()) - 1;
  idx = std::clamp<long>(idx, 0, static_cast<long>(grid.edges.size()) - 2);
  return static_cast<int>(idx);
}

}  // namespace explain
