#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "derl/data.hpp"
#include "derl/foml.hpp"
#include "derl/indicators.hpp"
#include "derl/market.hpp"
#include "derl/td3.hpp"
#include "derl/checkpoint.hpp"
#include "derl/wae.hpp"

namespace derl::bt {

// Calendar-index segment: validation span [val_start, val_end), training
// data available from train_start.
struct SegmentSpec {
  int train_start = 0;
  int val_start = 0;
  int val_end = 0;
};

// Rolling window inside a segment; validation span [vals, vale). The chain
// identity vals_i = vale_{i-1} = tre_i holds for consecutive windows.
struct Window {
  int segment = 0;
  int trs = 0;
  int tre = 0;
  int vals = 0;
  int vale = 0;
};

struct WindowSchedule {
  std::vector<Window> windows;
  int window_days = 42;
  int train_days = 756;
};

// Windows tile each segment's validation span; the final partial window is
// truncated. Training windows roll with fixed length, clamped at the
// segment's training start.
WindowSchedule build_schedule(int calendar_size,
                              const std::vector<SegmentSpec>& segments,
                              int train_days = 756, int window_days = 42);

struct MetricsReport {
  double mean_ann = 0.0;
  double std_ann = 0.0;
  double skewness = 0.0;
  double kurtosis = 0.0;  // raw (normal = 3)
  double sharpe = 0.0;
  double sortino = 0.0;   // NaN when there are no negative excess returns
};

// Computed on excess returns: mean_ann = ppy * mean, std_ann = sqrt(ppy) *
// sample std, Sortino over the downside with a full-sample denominator.
// Throws DegenerateError on zero dispersion.
MetricsReport metrics(const Eigen::VectorXd& returns,
                      const Eigen::VectorXd& risk_free,
                      int periods_per_year = 252);

// One-sided stationary-block-bootstrap test of H0: SR_a <= SR_b. The two
// series are resampled independently (expected block length block_len);
// p = (1 + #{dSR* - dSR >= dSR}) / (n_boot + 1). Deterministic per seed.
double bootstrap_sr_test(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                         int n_boot, double block_len, std::uint64_t seed);

struct RegimeSplit {
  std::vector<int> low;   // vix < threshold
  std::vector<int> high;  // vix >= threshold
  double threshold = 0.0;
};

// Partition by vix < threshold; the default threshold is the sample median.
RegimeSplit regime_split(const Eigen::VectorXd& returns,
                         const Eigen::VectorXd& vix,
                         std::optional<double> threshold = std::nullopt);

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<int>& idx);

// Componentwise standardization fitted on training-span states; applied to
// every state before encoding and to reconstruction targets.
struct StateScaler {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;  // std floored at 1e-8

  static StateScaler fit(const Eigen::MatrixXd& states);  // dim x n
  static StateScaler identity(Eigen::Index dim);
  Eigen::VectorXd apply(const Eigen::VectorXd& s) const;
  Eigen::MatrixXd apply_batch(const Eigen::MatrixXd& s) const;
};

struct SegmentDates {
  data::Date train_start;
  data::Date val_start;
  data::Date val_end;  // inclusive
};

struct EmbeddingConfig {
  int dim_z = 500;
  std::vector<int> hidden = {512, 512};
  double lambda = 2.0;
  double kernel_scale = 0.0;  // 0 -> dim_z
  int batch_size = 40;
  long initial_steps = 50000;
  long initial_pool = 2000;   // transitions collected with a random policy
  double learning_rate = 1e-3;
};

struct PipelineConfig {
  std::vector<SegmentDates> segments;
  int universe_size = 0;  // 0 = every name in the panel
  int window_days = 42;
  int train_days = 756;
  double cost_rate = 0.001;
  double risk_free_rate = 0.0;
  int reward_window = 42;
  std::vector<ind::IndicatorSpec> indicators;
  std::vector<std::pair<std::string, data::Series>> market_series;
  EmbeddingConfig embedding;
  foml::Rates foml_rates;
  foml::StreamConfig stream;
  td3::Config td3;
  long train_steps_per_window = 2000;
  bool use_embedding = true;
  bool use_meta = true;
  int jobs = 1;
  int log_every = 100;
  int curve_every = 50;
  std::uint64_t seed_wae = 11;
  std::uint64_t seed_foml = 12;
  std::uint64_t seed_td3 = 13;
  std::uint64_t seed_backtest = 14;
};

struct WindowRow {
  int segment = 0;
  int index = 0;  // global window index
  data::Date trs, tre, vals, vale;
  long inherited_updates = 0;  // agent updates carried into this window
};

struct CurveRow {
  int segment = 0;
  long step = 0;
  double loss = 0.0, recon = 0.0, mmd = 0.0;
};

struct BacktestResult {
  std::vector<data::Date> dates;     // traded days across all segments
  Eigen::VectorXd returns;           // daily net returns
  Eigen::VectorXd wealth;            // compounded from 1.0 per segment chain
  Eigen::MatrixXd weights;           // day x weight_names
  std::vector<std::string> weight_names;  // "CASH" + union of tickers
  Eigen::VectorXd ew_returns;
  Eigen::VectorXd vw_returns;
  bool has_vw = false;
  std::vector<WindowRow> window_rows;
  std::vector<foml::WindowUpdateLog> foml_log;
  std::vector<td3::StepLogRow> td3_log;
  std::vector<CurveRow> curve;
  std::vector<std::string> indicator_manifests;  // JSON, one per segment
  // Final parameters per segment, names "seg<k>/<net>" (actor, critics,
  // encoder, decoder, anchors), in the shared checkpoint format.
  ckpt::Checkpoint final_params;
  long degenerate_rewards = 0;
  int lookahead_violations = 0;
};

// End-to-end rolling-window run: per segment, train the initial embedding on
// random-policy transitions, then per window continue TD3 training from the
// inherited parameters (with online meta-learning refreshes every |U|
// interactions when enabled) and trade the validation span out-of-sample.
BacktestResult run_backtest(const data::Panel& panel,
                            const PipelineConfig& config);

}  // namespace derl::bt
