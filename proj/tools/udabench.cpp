// Command-line entry point: generate data, run the grid, analyze, report.
#include "tsuda/tsuda.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

tsuda::ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  nlohmann::json j;
  in >> j;
  return j.get<tsuda::ExperimentConfig>();
}

std::string resolve_output(const std::string& flag, const tsuda::ExperimentConfig* cfg) {
  if (!flag.empty()) return flag;
  if (cfg && !cfg->output_dir.empty()) return cfg->output_dir;
  if (const char* env = std::getenv("UDA_BENCH_OUTPUT"); env && *env) return env;
  throw std::runtime_error("no output directory: pass --output, set output_dir in the config, "
                           "or export UDA_BENCH_OUTPUT");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"time-series unsupervised domain adaptation benchmark"};
  app.require_subcommand(1);

  std::string config_path, output_dir;
  int parallel = 1;
  bool force = false;
  std::uint64_t seed_offset = 0;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* opt = cmd->add_option("--config", config_path, "experiment config (JSON)");
    if (needs_config) opt->required();
    cmd->add_option("--output", output_dir, "output directory");
  };

  auto* cmd_generate = app.add_subcommand("generate", "write the configured synthetic scenario to disk");
  add_common(cmd_generate, true);

  auto* cmd_run = app.add_subcommand("run", "execute the experiment grid");
  add_common(cmd_run, true);
  cmd_run->add_option("--parallel", parallel, "worker threads")->check(CLI::PositiveNumber);
  cmd_run->add_flag("--force", force, "redo completed keys");
  cmd_run->add_option("--seed-offset", seed_offset, "added to every configured seed");

  auto* cmd_analyze = app.add_subcommand("analyze", "summarize results on stdout");
  add_common(cmd_analyze, false);

  auto* cmd_report = app.add_subcommand("report", "write CSV/JSON/markdown reports");
  add_common(cmd_report, false);

  auto* cmd_validate = app.add_subcommand("validate-config", "check a config file");
  add_common(cmd_validate, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_validate->parsed()) {
      auto cfg = load_config(config_path);
      auto issues = tsuda::validate_config(cfg);
      if (issues.empty()) {
        std::cout << "config ok\n";
        return 0;
      }
      for (const auto& s : issues) std::cout << "issue: " << s << "\n";
      return 1;
    }

    if (cmd_generate->parsed()) {
      auto cfg = load_config(config_path);
      const std::string out = resolve_output(output_dir, &cfg);
      if (cfg.dataset.kind != "synthetic")
        throw std::runtime_error("generate needs a synthetic dataset config");
      tsuda::Scenario sc =
          tsuda::generate_synthetic_scenario(cfg.dataset.spec, cfg.dataset.data_seed);
      const std::string base = out + "/" + cfg.dataset.name;
      tsuda::save_domain(base + "/" + sc.source.domain_id, sc.source);
      tsuda::save_domain(base + "/" + sc.target.domain_id, sc.target);
      std::cout << "wrote " << base << "/" << sc.source.domain_id << " and "
                << base << "/" << sc.target.domain_id << "\n";
      return 0;
    }

    if (cmd_run->parsed()) {
      auto cfg = load_config(config_path);
      cfg.output_dir = resolve_output(output_dir, &cfg);
      if (seed_offset != 0)
        for (auto& s : cfg.seeds) s += seed_offset;
      auto summary = tsuda::run(cfg, force, parallel);
      std::cout << "completed " << summary.completed << ", skipped " << summary.skipped
                << ", failed " << summary.failed << "\n";
      for (const auto& e : summary.errors) std::cout << "error: " << e << "\n";
      return summary.failed == 0 ? 0 : 1;
    }

    // analyze / report share the bundle
    std::unique_ptr<tsuda::ExperimentConfig> cfg;
    if (!config_path.empty()) cfg = std::make_unique<tsuda::ExperimentConfig>(load_config(config_path));
    const std::string out = resolve_output(output_dir, cfg.get());
    auto bundle = tsuda::analyze(out);

    if (cmd_analyze->parsed()) {
      std::cout << bundle.records.size() << " evaluation records\n";
      for (const auto& t : bundle.tables) {
        if (t.name != "accuracy_by_tuner") continue;
        std::cout << "mean target accuracy:\n";
        for (std::size_t i = 0; i < t.row_labels.size(); ++i) {
          std::cout << "  " << t.row_labels[i] << ":";
          for (Eigen::Index j = 0; j < t.values.cols(); ++j)
            std::cout << " " << t.col_labels[j] << "=" << tsuda::format_cell(t.values(i, j));
          std::cout << "\n";
        }
      }
      for (const auto& [tuner, fr] : bundle.friedman)
        std::cout << "friedman " << tuner << ": chi2=" << fr.statistic
                  << " p=" << fr.p_value << "\n";
      for (const auto& n : bundle.notices) std::cout << "notice: " << n << "\n";
      return 0;
    }

    auto files = tsuda::report(bundle, out + "/report");
    for (const auto& f : files) std::cout << "wrote " << f << "\n";
    return 0;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
}
