#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "derl/commands.hpp"
#include "derl/config.hpp"
#include "derl/errors.hpp"

using namespace derl;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / name;
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

// Tiny deterministic config exercising the full pipeline in seconds.
cli::RunConfig tiny_config(const std::string& dir) {
  cli::RunConfig cfg = cli::RunConfig::from_json_text(R"({
    "out_dir": ")" + dir + R"(",
    "universe_size": 0,
    "window_days": 21,
    "train_years": 1,
    "cost_rate": 0.001,
    "reward_window": 10,
    "indicators": ["SMA21"],
    "segments": [],
    "embedding": {"dim_z": 4, "hidden": [16], "lambda": 2.0,
                  "batch_size": 16, "initial_steps": 60, "initial_pool": 120,
                  "learning_rate": 0.001},
    "foml": {"update_every": 21, "history": 3, "epochs": 2},
    "td3": {"hidden": [12, 12], "batch_size": 12, "warmup_steps": 24,
            "train_steps_per_window": 60},
    "simulate": {"assets": 2, "days": 260, "drift": 0.0005, "vol": 0.01,
                 "with_market_cap": true},
    "log_every": 50
  })");
  return cfg;
}

void add_segments(cli::RunConfig& cfg, const std::string& panel_csv) {
  const auto panel = data::load_panel(panel_csv);
  bt::SegmentDates seg;
  seg.train_start = panel.calendar.front();
  seg.val_start = panel.calendar[130];
  seg.val_end = panel.calendar.back();
  cfg.segments = {seg};
  cfg.data.panel_csv = panel_csv;
}

}  // namespace

TEST_CASE("RunConfig: defaults and round trip") {
  const auto cfg = cli::RunConfig::from_json_text("{}");
  CHECK(cfg.window_days == 42);
  CHECK(cfg.cost_rate == 0.001);
  CHECK(cfg.embedding.dim_z == 500);
  CHECK(cfg.embedding.lambda == 2.0);
  CHECK(cfg.embedding.batch_size == 40);
  CHECK(cfg.foml_rates.alpha1 == 0.0001);
  CHECK(cfg.foml_rates.beta1 == 0.001);
  CHECK(cfg.foml_rates.alpha2 == 0.0005);
  CHECK(cfg.foml_rates.beta2 == 0.005);
  CHECK(cfg.foml_update_every == 42);
  CHECK(cfg.td3.gamma == 0.999);
  CHECK(cfg.td3.actor_lr == 0.0002);
  CHECK(cfg.td3.tau == 0.005);
  CHECK(cfg.td3.policy_delay == 5);
  CHECK(cfg.td3.hidden == std::vector<int>{256, 256, 256});

  const auto round = cli::RunConfig::from_json_text(cfg.to_json_text());
  CHECK(round.window_days == cfg.window_days);
  CHECK(round.embedding.dim_z == cfg.embedding.dim_z);

  CHECK_THROWS_AS(cli::RunConfig::from_json_text("{no json"), ConfigError);
}

TEST_CASE("indicator name parsing") {
  const auto sma = cli::parse_indicator("SMA21");
  CHECK(sma.kind == ind::Kind::Sma);
  CHECK(sma.window == 21);
  const auto macd = cli::parse_indicator("MACD");
  CHECK(macd.kind == ind::Kind::Macd);
  CHECK_THROWS_AS(cli::parse_indicator("SMA"), ConfigError);
  CHECK_THROWS_AS(cli::parse_indicator("MACD12"), ConfigError);
  CHECK_THROWS_AS(cli::parse_indicator("NOPE"), ConfigError);
}

TEST_CASE("cmd_simulate is idempotent per seed and honors the asset count") {
  TempDir dir("derl_cli_sim");
  auto cfg = tiny_config(dir.str());
  cli::cmd_simulate(cfg);
  const std::string first = slurp(dir.str() + "/panel.csv");
  cli::cmd_simulate(cfg);
  CHECK(slurp(dir.str() + "/panel.csv") == first);  // byte-identical

  const auto panel = data::load_panel(dir.str() + "/panel.csv");
  CHECK(panel.tickers.size() == 2);
  CHECK(fs::exists(dir.str() + "/market.csv"));
  CHECK(fs::exists(dir.str() + "/vix.csv"));

  cfg.simulate.assets = 0;  // invalid spec
  cfg.simulate.drift = {};
  cfg.simulate.vol = {};
  CHECK_THROWS_AS(cli::cmd_simulate(cfg), ConfigError);
}

TEST_CASE("cmd_train_embed: descending curve, resume, missing paths") {
  TempDir dir("derl_cli_embed");
  auto cfg = tiny_config(dir.str());
  cli::cmd_simulate(cfg);
  add_segments(cfg, dir.str() + "/panel.csv");

  cli::cmd_train_embed(cfg);
  const std::string curve = slurp(dir.str() + "/curve.csv");
  // First and last logged losses: training must make progress.
  std::vector<double> losses;
  std::vector<long> steps;
  std::istringstream ss(curve);
  std::string line;
  std::getline(ss, line);  // header
  while (std::getline(ss, line)) {
    const auto comma = line.find(',');
    steps.push_back(std::stol(line.substr(0, comma)));
    losses.push_back(std::stod(line.substr(comma + 1)));
  }
  REQUIRE(losses.size() >= 2);
  CHECK(losses.back() < losses.front());
  for (double l : losses) CHECK(std::isfinite(l));
  CHECK(steps.front() == 1);

  // Resume continues numbering after the checkpoint's step counter.
  cfg.resume_from = dir.str() + "/embedding.ckpt";
  cli::cmd_train_embed(cfg);
  std::istringstream ss2(slurp(dir.str() + "/curve.csv"));
  std::getline(ss2, line);
  std::getline(ss2, line);
  CHECK(std::stol(line.substr(0, line.find(','))) == 61);

  cfg.resume_from.clear();
  cfg.data.panel_csv = dir.str() + "/missing.csv";
  CHECK_THROWS_AS(cli::cmd_train_embed(cfg), ConfigError);
}

TEST_CASE("cmd_backtest writes consistent artifacts") {
  TempDir dir("derl_cli_backtest");
  auto cfg = tiny_config(dir.str());
  cli::cmd_simulate(cfg);
  add_segments(cfg, dir.str() + "/panel.csv");

  cli::cmd_backtest(cfg);
  for (const char* f : {"results.csv", "windows.csv", "metrics.json",
                        "foml_log.csv", "td3_log.csv", "curve.csv",
                        "indicator_manifest.json", "resolved_config.json"})
    CHECK_MESSAGE(fs::exists(dir.path / f), f);

  // windows.csv row count equals the schedule arithmetic.
  const auto panel = data::load_panel(dir.str() + "/panel.csv");
  int vs = 0, ve = 0;
  for (const auto& d : panel.calendar) {
    if (d < cfg.segments[0].val_start) ++vs;
    if (d <= cfg.segments[0].val_end) ++ve;
  }
  const int expected = (ve - vs + cfg.window_days - 1) / cfg.window_days;
  std::istringstream ss(slurp(dir.str() + "/windows.csv"));
  std::string line;
  int rows = -1;  // header
  while (std::getline(ss, line))
    if (!line.empty()) ++rows;
  CHECK(rows == expected);

  const std::string metrics = slurp(dir.str() + "/metrics.json");
  CHECK(metrics.find("\"derl\"") != std::string::npos);
  CHECK(metrics.find("\"equal_weight\"") != std::string::npos);
  CHECK(metrics.find("\"lookahead_violations\": 0") != std::string::npos);
}

TEST_CASE("cmd_backtest ablation flags and analyze pipeline") {
  TempDir dir("derl_cli_ablate");
  auto cfg = tiny_config(dir.str());
  cli::cmd_simulate(cfg);
  add_segments(cfg, dir.str() + "/panel.csv");

  cli::BacktestFlags full;
  full.out_override = dir.str() + "/full";
  cli::cmd_backtest(cfg, full);

  cli::BacktestFlags no_embed;
  no_embed.no_embed = true;
  no_embed.out_override = dir.str() + "/no_embed";
  cli::cmd_backtest(cfg, no_embed);

  cli::BacktestFlags no_meta;
  no_meta.no_meta = true;
  no_meta.out_override = dir.str() + "/no_meta";
  cli::cmd_backtest(cfg, no_meta);

  CHECK(fs::exists(dir.path / "full/results.csv"));
  CHECK(fs::exists(dir.path / "no_embed/results.csv"));
  CHECK(fs::exists(dir.path / "no_meta/results.csv"));
  // The no-meta arm skips every FOML update.
  CHECK(slurp(dir.str() + "/no_meta/foml_log.csv")
            .find("\n") == slurp(dir.str() + "/no_meta/foml_log.csv").size() - 1);

  cli::AnalyzeArgs args;
  args.results_dir = dir.str() + "/full";
  args.ablated_dir = dir.str() + "/no_embed";
  args.vix_csv = dir.str() + "/vix.csv";
  args.panel_csv = dir.str() + "/panel.csv";
  args.out_dir = dir.str() + "/reports";
  cli::cmd_analyze(args);
  const std::string report = slurp(dir.str() + "/reports/report.json");
  CHECK(report.find("\"regimes\"") != std::string::npos);
  CHECK(report.find("\"ablation\"") != std::string::npos);
  CHECK(report.find("\"lasso_selection\"") != std::string::npos);
  CHECK(fs::exists(dir.path / "reports/selection.csv"));
}

TEST_CASE("cmd_analyze: unit loading when returns equal the market factor") {
  TempDir dir("derl_cli_factor");

  // Hand-built results.csv whose returns equal mkt_rf exactly (rf = 0).
  Rng rng(5);
  std::ofstream results(dir.str() + "/results.csv");
  results << "date,return,wealth,ew_return,vw_return\n";
  std::ofstream factors(dir.str() + "/factors.csv");
  factors << "date,mkt_rf,smb,hml,rf\n";
  data::Date d = data::Date::from_ymd(2020, 1, 1);
  double wealth = 1.0;
  for (int t = 0; t < 120; ++t) {
    const double mkt = 0.01 * rng.normal();
    const double smb = 0.005 * rng.normal();
    const double hml = 0.005 * rng.normal();
    wealth *= 1.0 + mkt;
    results << d.to_string() << "," << mkt << "," << wealth << "," << mkt
            << ",\n";
    factors << d.to_string() << "," << mkt << "," << smb << "," << hml
            << ",0\n";
    d = d.add_days(1);
  }
  results.close();
  factors.close();

  cli::AnalyzeArgs args;
  args.results_dir = dir.str();
  args.factors_csv = dir.str() + "/factors.csv";
  args.out_dir = dir.str() + "/reports";
  cli::cmd_analyze(args);

  const std::string report = slurp(dir.str() + "/reports/report.json");
  CHECK(report.find("factor_regression") != std::string::npos);
  // Market loading 1, alpha 0 (exact construction).
  const auto pos = report.find("\"beta\"");
  REQUIRE(pos != std::string::npos);
  CHECK(report.find("1.0") != std::string::npos);
}
