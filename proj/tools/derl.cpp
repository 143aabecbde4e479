#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "derl/commands.hpp"
#include "derl/errors.hpp"

namespace {

int dispatch(const std::function<void()>& fn) {
  try {
    fn();
    return 0;
  } catch (const derl::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const derl::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const derl::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"derl - dynamic-embedding reinforcement learning portfolio "
               "research tool"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override;
  std::optional<std::uint64_t> seed_override;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run configuration")
        ->required();
    cmd->add_option("--out", out_override, "override the output directory");
    cmd->add_option("--seed-override", seed_override,
                    "offset added to every configured seed");
  };

  auto* sim = app.add_subcommand("simulate", "write a synthetic OHLCV panel");
  add_common(sim);

  auto* embed = app.add_subcommand("train-embed",
                                   "train the initial state embedding");
  add_common(embed);

  auto* back = app.add_subcommand("backtest", "run the rolling-window backtest");
  add_common(back);
  bool no_meta = false, no_embed = false;
  std::optional<int> jobs;
  back->add_flag("--no-meta", no_meta, "disable online meta-learning");
  back->add_flag("--no-embed", no_embed,
                 "run the agent on raw states (no embedding)");
  back->add_option("--jobs", jobs, "parallel segments");

  auto* analyze = app.add_subcommand("analyze", "post-run statistical reports");
  derl::cli::AnalyzeArgs aargs;
  double vix_threshold = -1.0;
  analyze->add_option("--results", aargs.results_dir,
                      "directory holding results.csv")->required();
  analyze->add_option("--factors", aargs.factors_csv,
                      "factor file: date,mkt_rf,smb,hml[,mom],rf");
  analyze->add_option("--vix", aargs.vix_csv, "date,value volatility index");
  analyze->add_option("--panel", aargs.panel_csv,
                      "OHLCV panel for stock characteristics");
  analyze->add_option("--ablated", aargs.ablated_dir,
                      "second results directory for the contribution study");
  analyze->add_option("--out", aargs.out_dir, "report directory");
  analyze->add_option("--vix-threshold", vix_threshold,
                      "regime threshold (default: sample median)");
  analyze->add_option("--seed", aargs.seed, "seed for the lasso CV folds");

  CLI11_PARSE(app, argc, argv);

  auto load_config = [&]() {
    auto cfg = derl::cli::RunConfig::from_json_file(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (seed_override) {
      cfg.seeds.data += *seed_override;
      cfg.seeds.wae += *seed_override;
      cfg.seeds.foml += *seed_override;
      cfg.seeds.td3 += *seed_override;
      cfg.seeds.backtest += *seed_override;
      cfg.seeds.analysis += *seed_override;
    }
    return cfg;
  };

  if (sim->parsed())
    return dispatch([&] { derl::cli::cmd_simulate(load_config()); });
  if (embed->parsed())
    return dispatch([&] { derl::cli::cmd_train_embed(load_config()); });
  if (back->parsed()) {
    return dispatch([&] {
      derl::cli::BacktestFlags flags;
      flags.no_meta = no_meta;
      flags.no_embed = no_embed;
      flags.jobs = jobs;
      // seed offsets are already applied by load_config
      derl::cli::cmd_backtest(load_config(), flags);
    });
  }
  if (analyze->parsed()) {
    if (vix_threshold >= 0.0) aargs.vix_threshold = vix_threshold;
    return dispatch([&] { derl::cli::cmd_analyze(aargs); });
  }
  return 1;
}
