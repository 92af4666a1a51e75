#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>

#include "explain/errors.hpp"
#include "explain/pipeline.hpp"
#include "explain/rng.hpp"
#include "helpers.hpp"

using namespace explain;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("explain_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string write_synthetic_csv(const fs::path& dir, std::size_t n, std::uint64_t seed) {
  const TabularDataset data =
      testutil::logistic_dataset(n, {1.5, -1.0, 0.6, 0.0}, -0.2, seed);
  const fs::path file = dir / "data.csv";
  std::ofstream out(file);
  out << "x0,x1,x2,x3,label\n";
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < 4; ++j) out << data.features(i, j) << ",";
    out << data.targets[i] << "\n";
  }
  return file.string();
}

nlohmann::json base_config(const std::string& csv, const std::string& out_dir) {
  return nlohmann::json{
      {"dataset", {{"path", csv}, {"target_column", "label"}}},
      {"model", {{"type", "logistic"}, {"l2_penalty", 1e-4}}},
      {"methods", {"coef", "bsp", "ale", "shap"}},
      {"n_rounds", 5},
      {"top_k", 4},
      {"n_bins", 10},
      {"sample_cap", 64},
      {"seed", 91},
      {"background_size", 32},
      {"lime_samples", 500},
      {"sage_outer_samples", 64},
      {"sage_batch", 16},
      {"output_dir", out_dir}};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config parsing is strict") {
  TempDir dir("cfg");
  const std::string csv = write_synthetic_csv(dir.path, 50, 1);
  nlohmann::json doc = base_config(csv, (dir.path / "out").string());

  SUBCASE("valid config parses") { CHECK_NOTHROW(parse_config(doc)); }
  SUBCASE("unknown keys are rejected") {
    doc["n_round"] = 3;
    CHECK_THROWS_AS(parse_config(doc), ConfigError);
  }
  SUBCASE("unknown nested keys are rejected") {
    doc["model"]["tol_x"] = 1;
    CHECK_THROWS_AS(parse_config(doc), ConfigError);
  }
  SUBCASE("seed is mandatory") {
    doc.erase("seed");
    CHECK_THROWS_AS(parse_config(doc), ConfigError);
  }
  SUBCASE("unknown method is rejected") {
    doc["methods"] = {"coef", "mystery"};
    CHECK_THROWS_AS(parse_config(doc), ConfigError);
  }
  SUBCASE("bad model type is rejected") {
    doc["model"] = {{"type", "svm"}};
    CHECK_THROWS_AS(parse_config(doc), ConfigError);
  }
}

TEST_CASE("run_pipeline produces the requested artifacts") {
  TempDir dir("run");
  const std::string csv = write_synthetic_csv(dir.path, 400, 2);
  const RunConfig cfg = parse_config(base_config(csv, (dir.path / "out").string()));
  const RunReport report = run_pipeline(cfg);

  // coef, bsp, shap-derived, and ale's variance ranking.
  REQUIRE(report.rankings.size() == 4);
  std::set<std::string> ranking_ids;
  for (const auto& r : report.rankings) ranking_ids.insert(r.method_id);
  CHECK(ranking_ids == std::set<std::string>{"coef", "bsp", "shap", "ale"});

  // Effect curves from ale and shap for every feature, plus method averages.
  std::set<std::string> curve_ids;
  for (const auto& c : report.effects) curve_ids.insert(c.method_id);
  CHECK(curve_ids == std::set<std::string>{"ale", "shap", "avg"});

  // top_k + rank + effect agreement.
  REQUIRE(report.agreement.size() == 3);
  CHECK(report.agreement[0].statistic == AgreementStatistic::top_k);
  CHECK(report.agreement[1].statistic == AgreementStatistic::rank);
  CHECK(report.agreement[2].statistic == AgreementStatistic::effect);
  for (const auto& m : report.agreement) {
    for (std::size_t i = 0; i < m.method_ids.size(); ++i) {
      for (std::size_t j = 0; j < m.method_ids.size(); ++j) {
        CHECK(m.values(i, j) == m.values(j, i));
      }
    }
  }
  CHECK(report.skipped.empty());
}

TEST_CASE("incompatible methods are skipped with a reason") {
  TempDir dir("skip");
  const std::string csv = write_synthetic_csv(dir.path, 200, 3);
  nlohmann::json doc = base_config(csv, (dir.path / "out").string());
  doc["methods"] = {"coef", "ti", "gini"};
  const RunReport report = run_pipeline(parse_config(doc));
  REQUIRE(report.rankings.size() == 1);  // coef only
  REQUIRE(report.skipped.size() == 2);
  for (const auto& s : report.skipped) {
    CHECK(s.reason.find("model-specific") != std::string::npos);
  }
}

TEST_CASE("pipeline determinism and emission") {
  TempDir dir("det");
  const std::string csv = write_synthetic_csv(dir.path, 300, 4);

  SUBCASE("same config and seed produce byte-identical reports") {
    const RunConfig cfg = parse_config(base_config(csv, (dir.path / "out1").string()));
    const RunReport a = run_pipeline(cfg);
    const RunReport b = run_pipeline(cfg);
    CHECK(report_to_json(a).dump() == report_to_json(b).dump());
  }
  SUBCASE("worker count does not change the report bytes") {
    nlohmann::json doc = base_config(csv, (dir.path / "out2").string());
    doc["workers"] = 1;
    const RunReport a = run_pipeline(parse_config(doc));
    doc["workers"] = 4;
    const RunReport b = run_pipeline(parse_config(doc));
    CHECK(report_to_json(a).dump() == report_to_json(b).dump());
  }
  SUBCASE("emit_report writes every artifact and re-emits identical hashes") {
    const RunConfig cfg = parse_config(base_config(csv, (dir.path / "out3").string()));
    const RunReport report = run_pipeline(cfg);
    const auto manifest1 = emit_report(report, cfg.output_dir);
    CHECK(fs::exists(fs::path(cfg.output_dir) / "report.json"));
    CHECK(fs::exists(fs::path(cfg.output_dir) / "rankings.csv"));
    CHECK(fs::exists(fs::path(cfg.output_dir) / "effects.csv"));
    CHECK(fs::exists(fs::path(cfg.output_dir) / "agreement_top_k.csv"));
    CHECK(fs::exists(fs::path(cfg.output_dir) / "attributions" / "shap.json"));
    CHECK(fs::exists(fs::path(cfg.output_dir) / "manifest.json"));

    // rankings.csv: one row per method and feature plus the header.
    std::istringstream csv_in(slurp(fs::path(cfg.output_dir) / "rankings.csv"));
    std::string line;
    int lines = 0;
    while (std::getline(csv_in, line)) ++lines;
    CHECK(lines == 1 + 4 * 4);

    // A report round-trips through JSON and re-emits the same hashes.
    const RunReport reloaded = report_from_json(report_to_json(report));
    const auto manifest2 = emit_report(reloaded, cfg.output_dir);
    REQUIRE(manifest1.size() == manifest2.size());
    for (std::size_t i = 0; i < manifest1.size(); ++i) {
      CHECK(manifest1[i].path == manifest2[i].path);
      CHECK(manifest1[i].hash == manifest2[i].hash);
    }
  }
}

TEST_CASE("trained model round-trips through the model file") {
  TempDir dir("model");
  const std::string csv = write_synthetic_csv(dir.path, 200, 5);
  nlohmann::json doc = base_config(csv, (dir.path / "out").string());
  const RunConfig cfg = parse_config(doc);

  const TabularDataset data = load_csv(cfg.dataset_path, cfg.target_column);
  const AnyModel trained = build_model(cfg, data);
  const std::string model_path = (dir.path / "model.json").string();
  save_model(trained, model_path);

  nlohmann::json doc2 = base_config(csv, (dir.path / "out2").string());
  doc2["model"] = {{"path", model_path}};
  doc2["methods"] = {"bsp"};
  const RunReport report = run_pipeline(parse_config(doc2));
  REQUIRE(report.rankings.size() == 1);

  nlohmann::json doc3 = base_config(csv, (dir.path / "out3").string());
  doc3["methods"] = {"bsp"};
  const RunReport direct = run_pipeline(parse_config(doc3));
  CHECK(report.rankings[0].scores == direct.rankings[0].scores);
}

TEST_CASE("event_rate and grouped methods flow through the pipeline") {
  TempDir dir("evr");
  const std::string csv = write_synthetic_csv(dir.path, 400, 6);
  nlohmann::json doc = base_config(csv, (dir.path / "out").string());
  doc["methods"] = {"event_rate", "grouped", "grouped_only", "lime"};
  const RunReport report = run_pipeline(parse_config(doc));
  CHECK(report.event_rate.size() == 4);
  int grouped_count = 0;
  for (const auto& r : report.rankings) {
    if (r.mode == Mode::grouped || r.mode == Mode::grouped_only) ++grouped_count;
  }
  CHECK(grouped_count == 2);
  // lime is the only feature-level ranking, so no ranking agreement matrices;
  // no curve pair either (lime curves alone).
  for (const auto& m : report.agreement) {
    CHECK(m.statistic != AgreementStatistic::top_k);
  }
}

TEST_CASE("dataset errors abort the run") {
  TempDir dir("bad");
  nlohmann::json doc = base_config((dir.path / "missing.csv").string(),
                                   (dir.path / "out").string());
  CHECK_THROWS_AS(run_pipeline(parse_config(doc)), DataError);
}

TEST_CASE("every requested method is produced once or skipped with a reason") {
  TempDir dir("cover");
  const std::string csv = write_synthetic_csv(dir.path, 250, 7);
  nlohmann::json doc = base_config(csv, (dir.path / "out").string());
  doc["methods"] = all_method_ids();  // everything, on a logistic model
  doc["n_rounds"] = 3;
  doc["sage_outer_samples"] = 48;
  const RunConfig cfg = parse_config(doc);
  const RunReport report = run_pipeline(cfg);

  std::set<std::string> produced;
  for (const auto& r : report.rankings) produced.insert(r.method_id);
  for (const auto& c : report.effects) produced.insert(c.method_id);
  if (!report.event_rate.empty()) produced.insert("event_rate");
  for (const auto& s : report.skipped) produced.insert(s.method_id);
  produced.erase("avg");  // derived method-average curves

  const std::set<std::string> requested(cfg.methods.begin(), cfg.methods.end());
  CHECK(produced == requested);

  // Each ranking method id appears exactly once among rankings.
  std::set<std::string> ranking_ids;
  for (const auto& r : report.rankings) {
    CHECK(ranking_ids.insert(r.method_id).second);
  }
  // gini and ti are the expected skips for a logistic model.
  std::set<std::string> skipped_ids;
  for (const auto& s : report.skipped) skipped_ids.insert(s.method_id);
  CHECK(skipped_ids == std::set<std::string>{"gini", "ti"});
}

TEST_CASE("sample_cap bounds the explained rows") {
  TempDir dir("cap");
  const std::string csv = write_synthetic_csv(dir.path, 300, 8);
  nlohmann::json doc = base_config(csv, (dir.path / "out").string());
  doc["methods"] = {"shap"};
  doc["sample_cap"] = 40;
  const RunReport report = run_pipeline(parse_config(doc));
  REQUIRE(report.attributions.size() == 1);
  CHECK(report.attributions[0].phi.rows() == 40);
  CHECK(report.attributions[0].explained_row_indices.size() == 40);
}

TEST_CASE("an evaluation split explains on held-out rows") {
  TempDir dir("eval");
  const std::string csv = write_synthetic_csv(dir.path, 400, 9);
  nlohmann::json doc = base_config(csv, (dir.path / "out").string());
  doc["methods"] = {"bsp", "shap"};
  doc["eval_fraction"] = 0.25;
  doc["sample_cap"] = 50000;
  const RunReport report = run_pipeline(parse_config(doc));
  REQUIRE(report.attributions.size() == 1);
  // 25% of 400 rows are explained rather than the full dataset.
  CHECK(report.attributions[0].phi.rows() == 100);
}

TEST_CASE("emit_report handles an empty report") {
  TempDir dir("empty");
  RunReport report;
  report.config_echo = nlohmann::json::object();
  const auto manifest = emit_report(report, (dir.path / "out").string());
  CHECK(fs::exists(dir.path / "out" / "report.json"));
  CHECK(fs::exists(dir.path / "out" / "manifest.json"));
  CHECK(manifest.size() >= 3);  // report.json + header-only CSVs
}
