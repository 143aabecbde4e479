#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "derl/backtest.hpp"
#include "derl/market.hpp"

namespace derl::cli {

struct DataPaths {
  std::string panel_csv;
  std::string riskfree_csv;
  std::string vix_csv;
  std::string market_csv;
  // Extra date,value CSVs appended to the state's metrics block.
  std::vector<std::pair<std::string, std::string>> state_series;
};

struct SimulateConfig {
  int assets = 5;
  int days = 2520;
  std::vector<double> drift;  // scalar broadcast when size 1
  std::vector<double> vol;
  double momentum_strength = 0.0;
  int momentum_window = 5;
  int regime_shift_time = -1;
  bool with_market_cap = true;
};

struct Seeds {
  std::uint64_t data = 1;
  std::uint64_t wae = 2;
  std::uint64_t foml = 3;
  std::uint64_t td3 = 4;
  std::uint64_t backtest = 5;
  std::uint64_t analysis = 6;
};

// Single JSON configuration; every field carries the reference default and
// absent keys keep it.
struct RunConfig {
  std::string out_dir = "out";
  DataPaths data;
  int universe_size = 0;
  std::vector<bt::SegmentDates> segments;
  int window_days = 42;
  int train_years = 3;
  double cost_rate = 0.001;
  double risk_free_rate = 0.0;
  int reward_window = 42;
  std::vector<std::string> indicators{"default"};
  bt::EmbeddingConfig embedding;
  foml::Rates foml_rates;
  int foml_update_every = 42;
  int foml_history = 5;
  int foml_epochs = 5;
  double foml_train_fraction = 0.8;
  td3::Config td3;
  long train_steps_per_window = 2000;
  SimulateConfig simulate;
  Seeds seeds;
  int jobs = 1;
  int log_every = 100;
  int curve_every = 50;
  std::string resume_from;

  static RunConfig from_json_file(const std::string& path);
  static RunConfig from_json_text(const std::string& text);
  std::string to_json_text() const;

  // Assemble the pipeline configuration (flags applied by the caller).
  bt::PipelineConfig pipeline() const;
  std::vector<ind::IndicatorSpec> indicator_specs() const;
};

ind::IndicatorSpec parse_indicator(const std::string& name);

}  // namespace derl::cli
