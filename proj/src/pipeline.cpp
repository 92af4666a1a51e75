#include "explain/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "explain/errors.hpp"
#include "explain/metrics.hpp"
#include "explain/parallel.hpp"
#include "explain/rng.hpp"

namespace explain {

using nlohmann::json;

namespace {

constexpr const char* kLibraryVersion = "1.0.0";
constexpr std::uint64_t kStreamRowSample = 0x726f7773;
constexpr std::uint64_t kStreamBackground = 0x6261636b;
constexpr std::uint64_t kStreamSplit = 0x73706c74;
constexpr std::uint64_t kStreamLimeRow = 0x6c726f77;

template <typename T>
T get_known(json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  T value = obj.at(key).get<T>();
  obj.erase(key);
  return value;
}

void reject_unknown(const json& obj, const std::string& where) {
  if (!obj.empty()) {
    throw ConfigError("unknown config key in " + where + ": " + obj.begin().key());
  }
}

}  // namespace

const std::vector<std::string>& all_method_ids() {
  static const std::vector<std::string> ids = {
      "coef", "gini", "bsp",  "fsp",  "bmp",  "fmp",  "grouped", "grouped_only", "pd",
      "ale",  "ale_var", "shap", "owen", "lime", "ti", "sage", "event_rate"};
  return ids;
}

const std::map<std::string, MethodCategory>& method_categories() {
  static const std::map<std::string, MethodCategory> map = {
      {"bsp", MethodCategory::importance},  {"fsp", MethodCategory::importance},
      {"bmp", MethodCategory::importance},  {"fmp", MethodCategory::importance},
      {"grouped", MethodCategory::importance}, {"grouped_only", MethodCategory::importance},
      {"sage", MethodCategory::importance}, {"gini", MethodCategory::importance},
      {"coef", MethodCategory::relevance},  {"shap", MethodCategory::relevance},
      {"owen", MethodCategory::relevance},  {"lime", MethodCategory::relevance},
      {"ti", MethodCategory::relevance},    {"ale_var", MethodCategory::relevance},
      {"ale", MethodCategory::relevance}};
  return map;
}

RunConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  json obj = doc;
  RunConfig cfg;

  if (!obj.contains("dataset")) throw ConfigError("missing 'dataset'");
  {
    json ds = obj.at("dataset");
    obj.erase("dataset");
    if (!ds.is_object()) throw ConfigError("'dataset' must be an object");
    cfg.dataset_path = get_known<std::string>(ds, "path", "");
    cfg.target_column = get_known<std::string>(ds, "target_column", "");
    reject_unknown(ds, "dataset");
    if (cfg.dataset_path.empty()) throw ConfigError("dataset.path is required");
    if (cfg.target_column.empty()) throw ConfigError("dataset.target_column is required");
  }

  if (!obj.contains("model")) throw ConfigError("missing 'model'");
  {
    json ms = obj.at("model");
    obj.erase("model");
    if (!ms.is_object()) throw ConfigError("'model' must be an object");
    cfg.model.path = get_known<std::string>(ms, "path", "");
    cfg.model.type = get_known<std::string>(ms, "type", "");
    if (cfg.model.path.empty()) {
      if (cfg.model.type == "logistic") {
        cfg.model.logistic.l1_penalty = get_known<double>(ms, "l1_penalty", 0.0);
        cfg.model.logistic.l2_penalty = get_known<double>(ms, "l2_penalty", 1e-4);
        cfg.model.logistic.max_iters = get_known<int>(ms, "max_iters", 500);
        cfg.model.logistic.tol = get_known<double>(ms, "tol", 1e-8);
      } else if (cfg.model.type == "random_forest") {
        cfg.model.forest.n_trees = get_known<int>(ms, "n_trees", 50);
        cfg.model.forest.max_depth = get_known<int>(ms, "max_depth", 8);
        cfg.model.forest.min_leaf = get_known<int>(ms, "min_leaf", 5);
        cfg.model.forest.bootstrap = get_known<bool>(ms, "bootstrap", true);
      } else {
        throw ConfigError("model.type must be 'logistic' or 'random_forest'");
      }
    }
    reject_unknown(ms, "model");
  }

  cfg.methods = get_known<std::vector<std::string>>(obj, "methods", all_method_ids());
  {
    const auto& known = all_method_ids();
    for (const auto& m : cfg.methods) {
      if (std::find(known.begin(), known.end(), m) == known.end()) {
        throw ConfigError("unknown method: " + m);
      }
    }
    std::set<std::string> dedup(cfg.methods.begin(), cfg.methods.end());
    if (dedup.size() != cfg.methods.size()) throw ConfigError("duplicate method requested");
  }

  if (!obj.contains("seed")) throw ConfigError("missing 'seed'");
  cfg.seed = get_known<std::uint64_t>(obj, "seed", 0);

  cfg.n_rounds = get_known<int>(obj, "n_rounds", 30);
  cfg.top_k = get_known<int>(obj, "top_k", 10);
  cfg.n_bins = get_known<int>(obj, "n_bins", 30);
  cfg.sample_cap = get_known<std::size_t>(obj, "sample_cap", 50000);
  cfg.correlation_threshold = get_known<double>(obj, "correlation_threshold", 0.5);
  cfg.output_dir = get_known<std::string>(obj, "output_dir", "out");
  cfg.workers = get_known<int>(obj, "workers", 1);
  cfg.eval_fraction = get_known<double>(obj, "eval_fraction", 0.0);
  cfg.background_size = get_known<int>(obj, "background_size", 100);
  cfg.lime_samples = get_known<int>(obj, "lime_samples", 2500);
  cfg.sage_outer_samples = get_known<int>(obj, "sage_outer_samples", 2048);
  cfg.sage_batch = get_known<int>(obj, "sage_batch", 128);
  reject_unknown(obj, "config");

  if (cfg.n_rounds < 1) throw ConfigError("n_rounds must be >= 1");
  if (cfg.top_k < 1) throw ConfigError("top_k must be >= 1");
  if (cfg.n_bins < 1) throw ConfigError("n_bins must be >= 1");
  if (cfg.workers < 1) throw ConfigError("workers must be >= 1");
  if (cfg.eval_fraction < 0.0 || cfg.eval_fraction >= 1.0) {
    throw ConfigError("eval_fraction must be in [0, 1)");
  }
  if (cfg.background_size < 1) throw ConfigError("background_size must be >= 1");
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("malformed config JSON: " + std::string(e.what()));
  }
  return parse_config(doc);
}

AnyModel build_model(const RunConfig& config, const TabularDataset& train) {
  if (!config.model.path.empty()) return load_model(config.model.path);
  if (config.model.type == "logistic") {
    const auto& s = config.model.logistic;
    return train_logistic(train, s.l1_penalty, s.l2_penalty, s.max_iters, s.tol);
  }
  const auto& s = config.model.forest;
  return train_random_forest(train, s.n_trees, s.max_depth, s.min_leaf, config.seed,
                             s.bootstrap);
}

namespace {

struct MethodTimer {
  std::map<std::string, double>& sink;
  std::string key;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  ~MethodTimer() {
    sink[key] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

TabularDataset subset_rows(const TabularDataset& data, const std::vector<std::size_t>& rows) {
  Matrix features(rows.size(), data.n_features());
  std::vector<int> targets(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = data.features.row(rows[i]);
    std::copy(src.begin(), src.end(), features.row(i).begin());
    targets[i] = data.targets[rows[i]];
  }
  return make_dataset(std::move(features), data.feature_names, std::move(targets));
}

// Curve-producing attribution run over the sampled explanation rows.
AttributionSet explain_rows(const std::string& method, const ProbabilisticClassifier& model,
                            const RandomForestModel* forest, const TabularDataset& data,
                            const std::vector<std::size_t>& row_sample, const Matrix& background,
                            const PartitionTree* partition, const LimeDiscretizer* discretizer,
                            const RunConfig& config) {
  AttributionSet set;
  set.method_id = method;
  set.phi = Matrix(row_sample.size(), data.n_features());
  set.phi0.resize(row_sample.size());
  set.explained_features = Matrix(row_sample.size(), data.n_features());
  std::vector<std::uint8_t> fallback(row_sample.size(), 0);
  for (std::size_t r : row_sample) set.explained_row_indices.push_back(static_cast<int>(r));

  parallel_for(row_sample.size(), config.workers, [&](std::size_t i) {
    const auto instance = data.features.row(row_sample[i]);
    std::copy(instance.begin(), instance.end(), set.explained_features.row(i).begin());
    Attribution attr;
    if (method == "shap") {
      attr = exact_shapley(model, instance, background);
    } else if (method == "owen") {
      attr = owen_values(model, instance, background, *partition);
    } else if (method == "lime") {
      attr = lime_explain(model, instance, *discretizer, config.lime_samples, -1.0,
                          Rng::substream(config.seed, {kStreamLimeRow, row_sample[i]}).next());
    } else {
      attr = tree_interpreter(*forest, instance);
    }
    for (std::size_t j = 0; j < attr.phi.size(); ++j) set.phi(i, j) = attr.phi[j];
    set.phi0[i] = attr.phi0;
    fallback[i] = attr.ridge_fallback ? 1 : 0;
  });
  set.any_ridge_fallback =
      std::any_of(fallback.begin(), fallback.end(), [](std::uint8_t f) { return f != 0; });
  return set;
}

}  // namespace

RunReport run_pipeline(const RunConfig& config) {
  RunReport report;
  report.library_version = kLibraryVersion;

  TabularDataset full = load_csv(config.dataset_path, config.target_column);

  // Optional evaluation split: train on the remainder, explain on the split.
  TabularDataset train = full;
  TabularDataset explain_data = full;
  if (config.eval_fraction > 0.0) {
    Rng rng = Rng::substream(config.seed, {kStreamSplit});
    std::vector<std::size_t> order = rng.permutation(full.n_examples());
    const std::size_t n_eval = std::max<std::size_t>(
        1, static_cast<std::size_t>(config.eval_fraction * full.n_examples()));
    std::vector<std::size_t> eval_rows(order.begin(), order.begin() + n_eval);
    std::vector<std::size_t> train_rows(order.begin() + n_eval, order.end());
    std::sort(eval_rows.begin(), eval_rows.end());
    std::sort(train_rows.begin(), train_rows.end());
    if (train_rows.empty()) throw ConfigError("eval_fraction leaves no training rows");
    train = subset_rows(full, train_rows);
    explain_data = subset_rows(full, eval_rows);
  }

  const AnyModel model = build_model(config, train);
  const ProbabilisticClassifier& clf = as_classifier(model);
  if (clf.n_features() != full.n_features()) {
    throw DataError("model feature count does not match dataset");
  }
  const auto* logistic = std::get_if<LogisticRegressionModel>(&model);
  const auto* forest = std::get_if<RandomForestModel>(&model);

  const std::size_t d = explain_data.n_features();
  auto requested = [&](const std::string& m) {
    return std::find(config.methods.begin(), config.methods.end(), m) != config.methods.end();
  };

  // Shared structures, built once on demand.
  std::optional<Matrix> corr;
  auto correlation = [&]() -> const Matrix& {
    if (!corr) corr = correlation_matrix(explain_data);
    return *corr;
  };
  std::vector<BinGrid> grids(d);
  std::vector<bool> grid_ok(d, false);
  auto grid_for = [&](int j) -> const BinGrid* {
    if (!grid_ok[j]) {
      try {
        grids[j] = quantile_bins(explain_data.features.column(j), config.n_bins);
        grid_ok[j] = true;
      } catch (const std::exception&) {
        return nullptr;  // constant feature: no grid, no curve
      }
    }
    return &grids[j];
  };

  // Seeded row sample for attribution methods and background for imputation.
  std::vector<std::size_t> row_sample;
  {
    const std::size_t n = explain_data.n_examples();
    if (n <= config.sample_cap) {
      row_sample.resize(n);
      std::iota(row_sample.begin(), row_sample.end(), 0);
    } else {
      Rng rng = Rng::substream(config.seed, {kStreamRowSample});
      row_sample = rng.sample_without_replacement(n, config.sample_cap);
    }
  }
  Matrix background;
  {
    Rng rng = Rng::substream(config.seed, {kStreamBackground});
    const std::size_t n_bg =
        std::min<std::size_t>(config.background_size, explain_data.n_examples());
    const std::vector<std::size_t> bg_rows =
        rng.sample_without_replacement(explain_data.n_examples(), n_bg);
    background = Matrix(bg_rows.size(), d);
    for (std::size_t i = 0; i < bg_rows.size(); ++i) {
      const auto src = explain_data.features.row(bg_rows[i]);
      std::copy(src.begin(), src.end(), background.row(i).begin());
    }
  }

  std::optional<PartitionTree> partition;
  std::optional<LimeDiscretizer> discretizer;
  std::vector<EffectCurve> ale_curves;

  auto skip = [&](const std::string& m, const std::string& reason) {
    report.skipped.push_back({m, reason});
  };

  for (const std::string& method : all_method_ids()) {
    if (!requested(method)) continue;
    MethodTimer timer{report.timings_seconds, method};

    if (method == "coef") {
      if (!logistic) {
        skip(method, "model-specific method: requires a logistic model");
        continue;
      }
      report.rankings.push_back(coefficient_relevance(
          *logistic, presented_input_stds(logistic->standardization), full.feature_names));
    } else if (method == "gini") {
      if (!forest) {
        skip(method, "model-specific method: requires a random forest model");
        continue;
      }
      report.rankings.push_back(gini_importance(*forest, full.feature_names));
    } else if (method == "bsp" || method == "fsp" || method == "bmp" || method == "fmp") {
      const Direction dir =
          method[0] == 'b' ? Direction::backward : Direction::forward;
      const Mode mode = method[1] == 's' ? Mode::single : Mode::multi;
      report.rankings.push_back(permutation_importance(clf, explain_data, dir, mode,
                                                       config.n_rounds, config.top_k,
                                                       config.seed, config.workers));
    } else if (method == "grouped" || method == "grouped_only") {
      const FeatureGroups groups =
          cluster_features(correlation(), config.correlation_threshold, full.feature_names);
      const GroupedVariant variant =
          method == "grouped" ? GroupedVariant::grouped : GroupedVariant::grouped_only;
      report.rankings.push_back(grouped_permutation_importance(
          clf, explain_data, groups, variant, config.n_rounds, config.seed, config.workers));
    } else if (method == "pd") {
      for (std::size_t j = 0; j < d; ++j) {
        const BinGrid* grid = grid_for(static_cast<int>(j));
        if (!grid) continue;
        report.effects.push_back(
            partial_dependence(clf, explain_data, static_cast<int>(j), *grid, config.workers));
      }
    } else if (method == "ale" || method == "ale_var") {
      if (ale_curves.empty()) {
        for (std::size_t j = 0; j < d; ++j) {
          const BinGrid* grid = grid_for(static_cast<int>(j));
          if (!grid) continue;
          ale_curves.push_back(
              ale_first_order(clf, explain_data, static_cast<int>(j), *grid, config.workers));
        }
      }
      if (ale_curves.empty()) {
        skip(method, "no usable effect grids");
        continue;
      }
      if (method == "ale") {
        for (const auto& c : ale_curves) report.effects.push_back(c);
        // ale carries its variance ranking unless ale_var is requested on
        // its own and will add it under that id.
        if (!requested("ale_var")) {
          ImportanceResult ranking = ale_variance_ranking(ale_curves, full.feature_names);
          ranking.method_id = "ale";
          report.rankings.push_back(std::move(ranking));
        }
      } else {
        report.rankings.push_back(ale_variance_ranking(ale_curves, full.feature_names));
      }
    } else if (method == "shap" || method == "owen" || method == "lime" || method == "ti") {
      if (method == "shap" && d > 12) {
        skip(method, "exact enumeration requires n_features <= 12; use owen");
        continue;
      }
      if (method == "ti" && !forest) {
        skip(method, "model-specific method: requires a random forest model");
        continue;
      }
      if (method == "owen" && !partition) {
        partition = PartitionTree::from_linkage(linkage_merges(correlation()),
                                                static_cast<int>(d));
      }
      if (method == "lime" && !discretizer) discretizer.emplace(explain_data);

      AttributionSet set = explain_rows(method, clf, forest, explain_data, row_sample,
                                        background, partition ? &*partition : nullptr,
                                        discretizer ? &*discretizer : nullptr, config);
      report.rankings.push_back(
          aggregate_global_relevance(set, full.feature_names, config.sample_cap));
      for (std::size_t j = 0; j < d; ++j) {
        const BinGrid* grid = grid_for(static_cast<int>(j));
        if (!grid) continue;
        report.effects.push_back(aggregate_binned_effect(set, explain_data, static_cast<int>(j),
                                                         *grid, config.sample_cap));
      }
      report.attributions.push_back(std::move(set));
    } else if (method == "sage") {
      report.rankings.push_back(sage_values(clf, explain_data, SageLoss::log_loss,
                                            config.sage_outer_samples, config.sage_batch,
                                            config.seed));
    } else if (method == "event_rate") {
      bool any = false;
      for (std::size_t j = 0; j < d; ++j) {
        try {
          report.event_rate.push_back(
              event_rate_histogram(explain_data, static_cast<int>(j), config.n_bins));
          any = true;
        } catch (const std::exception&) {
          // constant feature: no histogram
        }
      }
      if (!any) skip(method, "no feature with usable spread");
    }
  }

  // Agreement matrices over feature-level rankings (grouped rankings cover a
  // different unit universe and are excluded).
  {
    std::vector<ImportanceResult> feature_rankings;
    for (const auto& r : report.rankings) {
      if (r.mode != Mode::grouped && r.mode != Mode::grouped_only) feature_rankings.push_back(r);
    }
    if (feature_rankings.size() >= 2) {
      report.agreement.push_back(agreement_matrix(feature_rankings, AgreementStatistic::top_k,
                                                  method_categories(), config.top_k, 1));
      report.agreement.push_back(agreement_matrix(feature_rankings, AgreementStatistic::rank,
                                                  method_categories(), config.top_k, 1));
    }
  }
  {
    std::map<std::string, std::vector<EffectCurve>> by_method;
    for (const auto& c : report.effects) {
      if (c.method_id != "avg") by_method[c.method_id].push_back(c);
    }
    if (by_method.size() >= 2) {
      // Common grids follow the first method's curve order.
      std::vector<std::pair<std::string, std::vector<EffectCurve>>> sets(by_method.begin(),
                                                                         by_method.end());
      std::vector<BinGrid> common;
      for (const auto& c : sets.front().second) common.push_back(grids[c.feature_index]);
      report.agreement.push_back(effect_agreement_matrix(sets, common, method_categories()));

      // Method-average effect per feature over every curve-producing method.
      for (const auto& c : sets.front().second) {
        std::vector<EffectCurve> for_feature;
        for (const auto& [id, curves] : sets) {
          for (const auto& cc : curves) {
            if (cc.feature_index == c.feature_index) for_feature.push_back(cc);
          }
        }
        if (for_feature.size() >= 2) {
          auto [avg, spread] = method_average_effect(for_feature, grids[c.feature_index]);
          report.effects.push_back(std::move(avg));
        }
      }
    }
  }

  // Execution knobs (workers, output_dir) are excluded: the report bytes are
  // a function of the experiment parameters and seed only.
  report.config_echo = json{{"dataset", {{"path", config.dataset_path},
                                         {"target_column", config.target_column}}},
                            {"methods", config.methods},
                            {"n_rounds", config.n_rounds},
                            {"top_k", config.top_k},
                            {"n_bins", config.n_bins},
                            {"sample_cap", config.sample_cap},
                            {"correlation_threshold", config.correlation_threshold},
                            {"seed", config.seed},
                            {"eval_fraction", config.eval_fraction},
                            {"background_size", config.background_size},
                            {"lime_samples", config.lime_samples},
                            {"sage_outer_samples", config.sage_outer_samples},
                            {"sage_batch", config.sage_batch}};
  return report;
}

namespace {

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  if (j.empty()) return {};
  Matrix m(j.size(), j.at(0).size());
  for (std::size_t r = 0; r < j.size(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

}  // namespace

json importance_to_json(const ImportanceResult& r) {
  json j;
  j["method"] = r.method_id;
  j["names"] = r.unit_names;
  j["scores"] = r.scores;
  j["rank"] = r.rank;
  j["per_round"] = matrix_to_json(r.per_round_scores);
  j["baseline"] = r.baseline_score;
  j["direction"] = to_string(r.direction);
  j["mode"] = to_string(r.mode);
  j["converged"] = r.converged;
  if (!r.per_round_levels.empty()) j["per_round_levels"] = matrix_to_json(r.per_round_levels);
  bool all_selected = true;
  for (auto f : r.individually_selected) all_selected = all_selected && f;
  if (!all_selected) {
    std::vector<int> flags(r.individually_selected.begin(), r.individually_selected.end());
    j["individually_selected"] = flags;
  }
  return j;
}

ImportanceResult importance_from_json(const json& j) {
  ImportanceResult r;
  r.method_id = j.at("method").get<std::string>();
  r.unit_names = j.at("names").get<std::vector<std::string>>();
  r.scores = j.at("scores").get<std::vector<double>>();
  r.rank = j.at("rank").get<std::vector<int>>();
  r.per_round_scores = matrix_from_json(j.at("per_round"));
  r.baseline_score = j.at("baseline").get<double>();
  r.direction = direction_from_string(j.at("direction").get<std::string>());
  r.mode = mode_from_string(j.at("mode").get<std::string>());
  r.converged = j.value("converged", true);
  if (j.contains("per_round_levels")) {
    r.per_round_levels = matrix_from_json(j.at("per_round_levels"));
  }
  if (j.contains("individually_selected")) {
    const auto flags = j.at("individually_selected").get<std::vector<int>>();
    r.individually_selected.assign(flags.begin(), flags.end());
  } else {
    r.individually_selected.assign(r.scores.size(), 1);
  }
  return r;
}

json curve_to_json(const EffectCurve& c) {
  json j;
  j["feature"] = c.feature_index;
  j["method"] = c.method_id;
  j["grid"] = c.grid;
  j["values"] = c.values;
  j["counts"] = c.bin_counts;
  if (!c.spread.empty()) j["spread"] = c.spread;
  return j;
}

EffectCurve curve_from_json(const json& j) {
  EffectCurve c;
  c.feature_index = j.at("feature").get<int>();
  c.method_id = j.at("method").get<std::string>();
  c.grid = j.at("grid").get<std::vector<double>>();
  c.values = j.at("values").get<std::vector<double>>();
  c.bin_counts = j.at("counts").get<std::vector<int>>();
  if (j.contains("spread")) c.spread = j.at("spread").get<std::vector<double>>();
  return c;
}

json attribution_set_to_json(const AttributionSet& a) {
  json j;
  j["method"] = a.method_id;
  j["rows"] = a.explained_row_indices;
  j["phi0"] = a.phi0;
  j["phi"] = matrix_to_json(a.phi);
  j["values"] = matrix_to_json(a.explained_features);
  j["ridge_fallback"] = a.any_ridge_fallback;
  return j;
}

AttributionSet attribution_set_from_json(const json& j) {
  AttributionSet a;
  a.method_id = j.at("method").get<std::string>();
  a.explained_row_indices = j.at("rows").get<std::vector<int>>();
  a.phi0 = j.at("phi0").get<std::vector<double>>();
  a.phi = matrix_from_json(j.at("phi"));
  if (j.contains("values")) a.explained_features = matrix_from_json(j.at("values"));
  a.any_ridge_fallback = j.value("ridge_fallback", false);
  return a;
}

json agreement_to_json(const AgreementMatrix& m) {
  json j;
  j["statistic"] = to_string(m.statistic);
  j["methods"] = m.method_ids;
  j["values"] = matrix_to_json(m.values);
  j["overall_mean"] = m.overall_mean;
  j["importance_vs_relevance_mean"] = m.importance_vs_relevance_mean;
  j["below_zero"] = m.below_zero;
  return j;
}

AgreementMatrix agreement_from_json(const json& j) {
  AgreementMatrix m;
  const std::string stat = j.at("statistic").get<std::string>();
  m.statistic = stat == "top_k" ? AgreementStatistic::top_k
                                : (stat == "rank" ? AgreementStatistic::rank
                                                  : AgreementStatistic::effect);
  m.method_ids = j.at("methods").get<std::vector<std::string>>();
  m.values = matrix_from_json(j.at("values"));
  m.overall_mean = j.at("overall_mean").get<double>();
  m.importance_vs_relevance_mean = j.at("importance_vs_relevance_mean").get<double>();
  m.below_zero = j.at("below_zero").get<bool>();
  return m;
}

json event_rate_to_json(const EventRateCurve& c) {
  json j;
  j["feature"] = c.feature_index;
  j["edges"] = c.bin_edges;
  j["posterior_mean"] = c.posterior_mean;
  j["ci_low"] = c.ci_low;
  j["ci_high"] = c.ci_high;
  j["prior_alpha"] = c.prior_alpha;
  j["prior_beta"] = c.prior_beta;
  return j;
}

EventRateCurve event_rate_from_json(const json& j) {
  EventRateCurve c;
  c.feature_index = j.at("feature").get<int>();
  c.bin_edges = j.at("edges").get<std::vector<double>>();
  c.posterior_mean = j.at("posterior_mean").get<std::vector<double>>();
  c.ci_low = j.at("ci_low").get<std::vector<double>>();
  c.ci_high = j.at("ci_high").get<std::vector<double>>();
  c.prior_alpha = j.at("prior_alpha").get<double>();
  c.prior_beta = j.at("prior_beta").get<double>();
  return c;
}

json report_to_json(const RunReport& report) {
  json j;
  j["manifest"] = {{"config", report.config_echo},
                   {"format_version", 1},
                   {"library_version", report.library_version}};
  j["rankings"] = json::array();
  for (const auto& r : report.rankings) j["rankings"].push_back(importance_to_json(r));
  j["effects"] = json::array();
  for (const auto& c : report.effects) j["effects"].push_back(curve_to_json(c));
  j["attributions"] = json::array();
  for (const auto& a : report.attributions) j["attributions"].push_back(attribution_set_to_json(a));
  j["agreement"] = json::array();
  for (const auto& m : report.agreement) j["agreement"].push_back(agreement_to_json(m));
  j["event_rate"] = json::array();
  for (const auto& c : report.event_rate) j["event_rate"].push_back(event_rate_to_json(c));
  j["skipped"] = json::array();
  for (const auto& s : report.skipped) {
    j["skipped"].push_back({{"method", s.method_id}, {"reason", s.reason}});
  }
  return j;
}

RunReport report_from_json(const json& doc) {
  RunReport report;
  report.config_echo = doc.at("manifest").at("config");
  report.library_version = doc.at("manifest").at("library_version").get<std::string>();
  for (const auto& r : doc.at("rankings")) report.rankings.push_back(importance_from_json(r));
  for (const auto& c : doc.at("effects")) report.effects.push_back(curve_from_json(c));
  for (const auto& a : doc.at("attributions")) {
    report.attributions.push_back(attribution_set_from_json(a));
  }
  for (const auto& m : doc.at("agreement")) report.agreement.push_back(agreement_from_json(m));
  for (const auto& c : doc.at("event_rate")) report.event_rate.push_back(event_rate_from_json(c));
  for (const auto& s : doc.at("skipped")) {
    report.skipped.push_back(
        {s.at("method").get<std::string>(), s.at("reason").get<std::string>()});
  }
  return report;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& content,
                std::vector<FileEntry>& manifest, const std::filesystem::path& base) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
  out.close();
  manifest.push_back({std::filesystem::relative(path, base).string(), hex64(fnv1a64(content))});
}

std::string format_double(double v) {
  // Shortest round-trip representation, matching the JSON emitter.
  return json(v).dump();
}

}  // namespace

std::vector<FileEntry> emit_report(const RunReport& report, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const fs::path base(out_dir);
  fs::create_directories(base);
  std::vector<FileEntry> manifest;

  write_file(base / "report.json", report_to_json(report).dump(2) + "\n", manifest, base);

  {
    std::ostringstream csv;
    csv << "method,unit,score,rank\n";
    for (const auto& r : report.rankings) {
      std::vector<int> position(r.unit_names.size());
      for (std::size_t i = 0; i < r.rank.size(); ++i) position[r.rank[i]] = static_cast<int>(i);
      for (std::size_t u = 0; u < r.unit_names.size(); ++u) {
        csv << r.method_id << "," << r.unit_names[u] << "," << format_double(r.scores[u]) << ","
            << position[u] + 1 << "\n";
      }
    }
    write_file(base / "rankings.csv", csv.str(), manifest, base);
  }

  {
    std::ostringstream csv;
    csv << "feature,method,x,y\n";
    for (const auto& c : report.effects) {
      for (std::size_t k = 0; k < c.grid.size(); ++k) {
        csv << c.feature_index << "," << c.method_id << "," << format_double(c.grid[k]) << ","
            << format_double(c.values[k]) << "\n";
      }
      if (!c.spread.empty()) {
        for (std::size_t k = 0; k < c.grid.size(); ++k) {
          csv << c.feature_index << "," << c.method_id << "_spread,"
              << format_double(c.grid[k]) << "," << format_double(c.spread[k]) << "\n";
        }
      }
    }
    write_file(base / "effects.csv", csv.str(), manifest, base);
  }

  for (const auto& m : report.agreement) {
    std::ostringstream csv;
    csv << "row,col,value\n";
    for (std::size_t i = 0; i < m.method_ids.size(); ++i) {
      for (std::size_t j = 0; j < m.method_ids.size(); ++j) {
        csv << m.method_ids[i] << "," << m.method_ids[j] << ","
            << format_double(m.values(i, j)) << "\n";
      }
    }
    write_file(base / ("agreement_" + std::string(to_string(m.statistic)) + ".csv"), csv.str(),
               manifest, base);
  }

  if (!report.attributions.empty()) {
    fs::create_directories(base / "attributions");
    for (const auto& a : report.attributions) {
      write_file(base / "attributions" / (a.method_id + ".json"),
                 attribution_set_to_json(a).dump(2) + "\n", manifest, base);
      // Explanation cards for the first explained rows.
      std::ostringstream csv;
      csv << "row,feature,value,phi\n";
      const std::size_t n_cards = std::min<std::size_t>(a.phi.rows(), 50);
      const bool have_values = a.explained_features.rows() == a.phi.rows();
      for (std::size_t i = 0; i < n_cards; ++i) {
        for (std::size_t j = 0; j < a.phi.cols(); ++j) {
          csv << a.explained_row_indices[i] << "," << j << ","
              << (have_values ? format_double(a.explained_features(i, j)) : "") << ","
              << format_double(a.phi(i, j)) << "\n";
        }
      }
      write_file(base / "attributions" / (a.method_id + "_cards.csv"), csv.str(), manifest,
                 base);
    }
  }

  json manifest_doc;
  manifest_doc["files"] = json::array();
  for (const auto& f : manifest) {
    manifest_doc["files"].push_back({{"path", f.path}, {"hash", f.hash}});
  }
  manifest_doc["timings_seconds"] = report.timings_seconds;
  {
    std::ofstream out(base / "manifest.json", std::ios::binary);
    if (!out) throw DataError("cannot write manifest.json");
    out << manifest_doc.dump(2) << "\n";
  }
  return manifest;
}

}  // namespace explain
