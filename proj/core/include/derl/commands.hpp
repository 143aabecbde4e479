#pragma once

#include <optional>
#include <string>

#include "derl/config.hpp"

namespace derl::cli {

struct BacktestFlags {
  bool no_meta = false;
  bool no_embed = false;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed_override;  // offsets every seed
  std::string out_override;
};

// Writes panel.csv, market.csv and vix.csv derived from the synthetic
// market; byte-identical across runs with the same config.
void cmd_simulate(const RunConfig& config);

// Trains the initial embedding on random-policy transitions from the first
// segment's training span; writes embedding.ckpt and curve.csv. Honors
// config.resume_from for continued step numbering.
void cmd_train_embed(const RunConfig& config);

// Full rolling-window run; writes results.csv, windows.csv, metrics.json,
// foml_log.csv, td3_log.csv, curve.csv and resolved_config.json.
void cmd_backtest(const RunConfig& config, const BacktestFlags& flags = {});

struct AnalyzeArgs {
  std::string results_dir;
  std::string factors_csv;   // date,mkt_rf,smb,hml[,mom],rf
  std::string vix_csv;       // date,value
  std::string panel_csv;     // characteristics inputs
  std::string ablated_dir;   // second results.csv for the contribution study
  std::string out_dir = "reports";
  std::optional<double> vix_threshold;  // default: sample median
  std::uint64_t seed = 6;
};

// Factor regressions, regime splits, period-by-period lasso on stock
// characteristics and the ablation-contribution regression; writes
// report.json plus CSV mirrors.
void cmd_analyze(const AnalyzeArgs& args);

}  // namespace derl::cli
