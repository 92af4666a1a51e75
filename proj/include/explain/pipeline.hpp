#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "explain/attributions.hpp"
#include "explain/dataset.hpp"
#include "explain/disagreement.hpp"
#include "explain/effects.hpp"
#include "explain/importance.hpp"
#include "explain/importance_result.hpp"
#include "explain/models.hpp"

#include "json.hpp"

namespace explain {

// Known method ids, in canonical execution order.
const std::vector<std::string>& all_method_ids();

struct LogisticSpec {
  double l1_penalty = 0.0;
  double l2_penalty = 1e-4;
  int max_iters = 500;
  double tol = 1e-8;
};

struct ForestSpec {
  int n_trees = 50;
  int max_depth = 8;
  int min_leaf = 5;
  bool bootstrap = true;
};

struct ModelSpec {
  std::string type;  // "logistic" | "random_forest"; empty when loading from path
  std::string path;  // serialized model to load instead of training
  LogisticSpec logistic;
  ForestSpec forest;
};

struct RunConfig {
  std::string dataset_path;
  std::string target_column;
  ModelSpec model;
  std::vector<std::string> methods;
  int n_rounds = 30;
  int top_k = 10;
  int n_bins = 30;
  std::size_t sample_cap = 50000;
  double correlation_threshold = 0.5;
  std::uint64_t seed = 0;  // mandatory in config
  std::string output_dir;
  int workers = 1;
  double eval_fraction = 0.0;  // 0: explain on the training set (default)
  int background_size = 100;
  int lime_samples = 2500;
  int sage_outer_samples = 2048;
  int sage_batch = 128;
};

// Parses and validates a config document; unknown keys are rejected.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

struct SkippedMethod {
  std::string method_id;
  std::string reason;
};

struct RunReport {
  nlohmann::json config_echo;
  std::string library_version;
  std::vector<ImportanceResult> rankings;
  std::vector<EffectCurve> effects;
  std::vector<AttributionSet> attributions;
  std::vector<AgreementMatrix> agreement;
  std::vector<EventRateCurve> event_rate;
  std::vector<SkippedMethod> skipped;
  std::map<std::string, double> timings_seconds;  // not serialized into report.json
};

// Trains or loads the model, runs every requested method on the explanation
// split, derives rankings from attribution methods, and builds the agreement
// matrices. Incompatible method/model pairs are skipped with a reason;
// dataset problems abort. Fully deterministic given (config, seed).
RunReport run_pipeline(const RunConfig& config);

// Trains (or loads) just the model described by the config.
AnyModel build_model(const RunConfig& config, const TabularDataset& train);

struct FileEntry {
  std::string path;  // relative to the output directory
  std::string hash;  // fnv1a-64 of the file bytes, hex
};

// Writes report.json, rankings.csv, effects.csv, agreement CSVs and
// per-method attribution files, then manifest.json listing each file with a
// content hash. Returns the manifest entries (manifest.json excluded).
std::vector<FileEntry> emit_report(const RunReport& report, const std::string& out_dir);

nlohmann::json report_to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& doc);

nlohmann::json importance_to_json(const ImportanceResult& r);
ImportanceResult importance_from_json(const nlohmann::json& j);
nlohmann::json curve_to_json(const EffectCurve& c);
EffectCurve curve_from_json(const nlohmann::json& j);
nlohmann::json attribution_set_to_json(const AttributionSet& a);
AttributionSet attribution_set_from_json(const nlohmann::json& j);
nlohmann::json agreement_to_json(const AgreementMatrix& m);
AgreementMatrix agreement_from_json(const nlohmann::json& j);
nlohmann::json event_rate_to_json(const EventRateCurve& c);
EventRateCurve event_rate_from_json(const nlohmann::json& j);

// Method categories used for the agreement summaries.
const std::map<std::string, MethodCategory>& method_categories();

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace explain
