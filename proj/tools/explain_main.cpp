#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "explain/dataset.hpp"
#include "explain/disagreement.hpp"
#include "explain/errors.hpp"
#include "explain/models.hpp"
#include "explain/pipeline.hpp"

namespace {

using explain::RunConfig;
using nlohmann::json;

struct CommonFlags {
  std::string config_path;
  std::string out_override;
  std::string methods_override;
  std::int64_t seed_override = -1;
  int workers_override = 0;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "Run configuration JSON")->required();
  cmd->add_option("--seed", flags.seed_override, "Override the config seed");
  cmd->add_option("--out", flags.out_override, "Override the output directory");
  cmd->add_option("--methods", flags.methods_override,
                  "Override the method list (comma-separated ids)");
  cmd->add_option("--workers", flags.workers_override, "Override the worker count");
}

RunConfig resolve_config(const CommonFlags& flags) {
  RunConfig cfg = explain::load_config(flags.config_path);
  if (flags.seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(flags.seed_override);
  if (!flags.out_override.empty()) cfg.output_dir = flags.out_override;
  if (flags.workers_override > 0) cfg.workers = flags.workers_override;
  if (!flags.methods_override.empty()) {
    std::vector<std::string> methods;
    std::string cur;
    for (char ch : flags.methods_override + ",") {
      if (ch == ',') {
        if (!cur.empty()) methods.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    const auto& known = explain::all_method_ids();
    for (const auto& m : methods) {
      if (std::find(known.begin(), known.end(), m) == known.end()) {
        throw explain::ConfigError("unknown method: " + m);
      }
    }
    cfg.methods = std::move(methods);
  }
  return cfg;
}

json read_report(const RunConfig& cfg) {
  const std::string path = cfg.output_dir + "/report.json";
  std::ifstream in(path);
  if (!in) throw explain::DataError("cannot open " + path + " (run 'explain' first)");
  json doc;
  in >> doc;
  return doc;
}

int cmd_train(const CommonFlags& flags) {
  const RunConfig cfg = resolve_config(flags);
  const explain::TabularDataset data =
      explain::load_csv(cfg.dataset_path, cfg.target_column);
  const explain::AnyModel model = explain::build_model(cfg, data);
  std::filesystem::create_directories(cfg.output_dir);
  const std::string path = cfg.output_dir + "/model.json";
  explain::save_model(model, path);
  std::cout << "wrote " << path << "\n";
  return 0;
}

int cmd_explain(const CommonFlags& flags) {
  const RunConfig cfg = resolve_config(flags);
  const explain::RunReport report = explain::run_pipeline(cfg);
  const auto manifest = explain::emit_report(report, cfg.output_dir);
  std::cout << "methods: " << report.rankings.size() << " rankings, "
            << report.effects.size() << " effect curves, " << report.agreement.size()
            << " agreement matrices";
  if (!report.skipped.empty()) {
    std::cout << " (" << report.skipped.size() << " skipped)";
  }
  std::cout << "\n";
  for (const auto& s : report.skipped) {
    std::cout << "skipped " << s.method_id << ": " << s.reason << "\n";
  }
  std::cout << "wrote " << manifest.size() << " files to " << cfg.output_dir << "\n";
  return 0;
}

int cmd_agree(const CommonFlags& flags) {
  const RunConfig cfg = resolve_config(flags);
  explain::RunReport report = explain::report_from_json(read_report(cfg));
  report.agreement.clear();

  std::vector<explain::ImportanceResult> feature_rankings;
  for (const auto& r : report.rankings) {
    if (r.mode != explain::Mode::grouped && r.mode != explain::Mode::grouped_only) {
      feature_rankings.push_back(r);
    }
  }
  if (feature_rankings.size() >= 2) {
    report.agreement.push_back(explain::agreement_matrix(
        feature_rankings, explain::AgreementStatistic::top_k, explain::method_categories(),
        cfg.top_k, 1));
    report.agreement.push_back(explain::agreement_matrix(
        feature_rankings, explain::AgreementStatistic::rank, explain::method_categories(),
        cfg.top_k, 1));
  }

  // Effect agreement over the report's curves; the first method's curve
  // grids serve as the common interpolation grids.
  std::map<std::string, std::vector<explain::EffectCurve>> by_method;
  for (const auto& c : report.effects) {
    if (c.method_id != "avg") by_method[c.method_id].push_back(c);
  }
  if (by_method.size() >= 2) {
    std::vector<std::pair<std::string, std::vector<explain::EffectCurve>>> sets(
        by_method.begin(), by_method.end());
    std::vector<explain::BinGrid> grids;
    for (const auto& c : sets.front().second) {
      explain::BinGrid grid;
      grid.centers = c.grid;
      grid.counts = c.bin_counts;
      grids.push_back(std::move(grid));
    }
    report.agreement.push_back(
        explain::effect_agreement_matrix(sets, grids, explain::method_categories()));
  }

  if (report.agreement.empty()) {
    throw explain::DataError("report has neither 2 rankings nor 2 curve methods");
  }
  explain::emit_report(report, cfg.output_dir);
  for (const auto& m : report.agreement) {
    std::cout << to_string(m.statistic) << ": overall mean " << m.overall_mean
              << ", importance-vs-relevance mean " << m.importance_vs_relevance_mean << "\n";
  }
  return 0;
}

int cmd_report(const CommonFlags& flags) {
  const RunConfig cfg = resolve_config(flags);
  const explain::RunReport report = explain::report_from_json(read_report(cfg));
  const auto manifest = explain::emit_report(report, cfg.output_dir);
  std::cout << "re-emitted " << manifest.size() << " files to " << cfg.output_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model-agnostic explainability toolkit for binary tabular classifiers"};
  app.require_subcommand(1);

  CommonFlags train_flags, explain_flags, agree_flags, report_flags;
  CLI::App* train = app.add_subcommand("train", "Train a model and save it as JSON");
  add_common(train, train_flags);
  CLI::App* run = app.add_subcommand("explain", "Run the configured explanation pipeline");
  add_common(run, explain_flags);
  CLI::App* agree = app.add_subcommand("agree", "Recompute agreement matrices from a report");
  add_common(agree, agree_flags);
  CLI::App* report = app.add_subcommand("report", "Re-emit report artifacts");
  add_common(report, report_flags);

  try {
    app.parse(argc, argv);
    if (train->parsed()) return cmd_train(train_flags);
    if (run->parsed()) return cmd_explain(explain_flags);
    if (agree->parsed()) return cmd_agree(agree_flags);
    if (report->parsed()) return cmd_report(report_flags);
    return 0;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const explain::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const explain::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
