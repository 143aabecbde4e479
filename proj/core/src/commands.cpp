#include "derl/commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "derl/analysis.hpp"
#include "derl/backtest.hpp"
#include "derl/checkpoint.hpp"
#include "derl/errors.hpp"

namespace derl::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json json_number(double v) {
  if (std::isnan(v) || std::isinf(v)) return nullptr;
  return v;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir);
}

data::Panel load_or_simulate_panel(const RunConfig& cfg) {
  if (!cfg.data.panel_csv.empty()) {
    if (!fs::exists(cfg.data.panel_csv))
      throw ConfigError("panel_csv does not exist: " + cfg.data.panel_csv);
    return data::load_panel(cfg.data.panel_csv);
  }
  throw ConfigError("config has no data.panel_csv (run `simulate` first)");
}

env::SynthSpec synth_spec_from(const SimulateConfig& sim) {
  env::SynthSpec spec;
  spec.drift = Eigen::Map<const Eigen::VectorXd>(
      sim.drift.data(), static_cast<Eigen::Index>(sim.drift.size()));
  spec.vol = Eigen::Map<const Eigen::VectorXd>(
      sim.vol.data(), static_cast<Eigen::Index>(sim.vol.size()));
  spec.momentum_strength = sim.momentum_strength;
  spec.momentum_window = sim.momentum_window;
  spec.regime_shift_time = sim.regime_shift_time;
  spec.with_market_cap = sim.with_market_cap;
  return spec;
}

std::vector<std::pair<std::string, data::Series>> load_state_series(
    const RunConfig& cfg) {
  std::vector<std::pair<std::string, data::Series>> out;
  for (const auto& [name, csv] : cfg.data.state_series) {
    if (!fs::exists(csv))
      throw ConfigError("state series csv does not exist: " + csv);
    out.emplace_back(name, data::load_series(csv));
  }
  return out;
}

struct ResultsFile {
  std::vector<data::Date> dates;
  Eigen::VectorXd returns;
  Eigen::VectorXd ew_returns;
  std::vector<std::string> weight_names;
  Eigen::MatrixXd weights;
};

ResultsFile read_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) header.push_back(f);
  }
  ResultsFile rf;
  std::vector<int> weight_cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i].rfind("w_", 0) == 0) {
      rf.weight_names.push_back(header[i].substr(2));
      weight_cols.push_back(static_cast<int>(i));
    }
  }
  std::vector<double> rets, ews;
  std::vector<std::vector<double>> wrows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    rf.dates.push_back(data::Date::from_string(f[0]));
    rets.push_back(std::stod(f[1]));
    ews.push_back(f[3].empty() ? kNaN : std::stod(f[3]));
    std::vector<double> w;
    for (int c : weight_cols)
      w.push_back(f[static_cast<std::size_t>(c)].empty()
                      ? 0.0
                      : std::stod(f[static_cast<std::size_t>(c)]));
    wrows.push_back(std::move(w));
  }
  const auto T = static_cast<Eigen::Index>(rets.size());
  rf.returns = Eigen::Map<Eigen::VectorXd>(rets.data(), T);
  rf.ew_returns = Eigen::Map<Eigen::VectorXd>(ews.data(), T);
  rf.weights.resize(T, static_cast<Eigen::Index>(rf.weight_names.size()));
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index j = 0; j < rf.weights.cols(); ++j)
      rf.weights(t, j) = wrows[static_cast<std::size_t>(t)]
                              [static_cast<std::size_t>(j)];
  return rf;
}

json metrics_to_json(const bt::MetricsReport& m) {
  return json{{"mean_ann", json_number(m.mean_ann)},
              {"std_ann", json_number(m.std_ann)},
              {"skewness", json_number(m.skewness)},
              {"kurtosis", json_number(m.kurtosis)},
              {"sharpe", json_number(m.sharpe)},
              {"sortino", json_number(m.sortino)}};
}

}  // namespace

void cmd_simulate(const RunConfig& cfg) {
  ensure_dir(cfg.out_dir);
  const auto spec = synth_spec_from(cfg.simulate);
  const auto synth = env::synth_market(cfg.seeds.data, cfg.simulate.assets,
                                       cfg.simulate.days, spec);
  data::write_panel(synth.panel, cfg.out_dir + "/panel.csv");

  // Equal-weight market return and a realized-volatility index.
  const Eigen::Index T = synth.returns.rows();
  data::Series market;
  market.dates = synth.panel.calendar;
  market.values = synth.returns.rowwise().mean();
  data::write_series(market, cfg.out_dir + "/market.csv");

  data::Series vix;
  vix.dates = synth.panel.calendar;
  vix.values.resize(T);
  const int w = 21;
  double first_valid = kNaN;
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::Index lo = std::max<Eigen::Index>(1, t - w + 1);
    const Eigen::Index n = t - lo + 1;
    if (n >= 2) {
      const Eigen::VectorXd seg = market.values.segment(lo, n);
      const double mean = seg.mean();
      const double sd = std::sqrt((seg.array() - mean).square().sum() /
                                  static_cast<double>(n - 1));
      vix.values[t] = 100.0 * std::sqrt(252.0) * sd;
      if (std::isnan(first_valid)) first_valid = vix.values[t];
    } else {
      vix.values[t] = kNaN;
    }
  }
  for (Eigen::Index t = 0; t < T; ++t)
    if (std::isnan(vix.values[t])) vix.values[t] = first_valid;
  data::write_series(vix, cfg.out_dir + "/vix.csv");
}

void cmd_train_embed(const RunConfig& cfg) {
  ensure_dir(cfg.out_dir);
  if (cfg.segments.empty())
    throw ConfigError("train-embed: config has no segments");
  const data::Panel panel = load_or_simulate_panel(cfg);
  const auto& seg = cfg.segments.front();

  std::vector<std::string> tickers = panel.tickers;
  if (cfg.universe_size > 0 && panel.has_market_cap) {
    data::Date as_of = panel.calendar.front();
    for (const auto& d : panel.calendar)
      if (d < seg.val_start) as_of = d;
    tickers = data::select_universe(panel, as_of, cfg.universe_size).tickers;
  }
  const auto aligned = data::align(panel, tickers, seg.train_start,
                                   seg.val_start);
  std::vector<std::pair<std::string, Eigen::VectorXd>> market_cols;
  for (const auto& [name, series] : load_state_series(cfg))
    market_cols.emplace_back(name, series.align_to(aligned.dates));
  const auto metrics_block =
      ind::build_metrics_block(aligned, cfg.indicator_specs(), market_cols);

  env::MarketEnv::Options opts;
  opts.cost.rate = cfg.cost_rate;
  opts.risk_free_rate = cfg.risk_free_rate;
  opts.reward_window = cfg.reward_window;
  env::MarketEnv env(aligned, metrics_block.values, opts);

  Rng rng(cfg.seeds.wae);
  std::vector<env::TransitionTuple> pool;
  env.reset();
  while (static_cast<long>(pool.size()) < cfg.embedding.initial_pool) {
    if (env.done()) env.reset();
    const auto a = env::project_long_only(rng.normal_vector(env.assets()));
    const auto sr = env.step_action(a);
    if (sr.bankrupt) {
      env.reset();
      continue;
    }
    pool.push_back(sr.transition);
  }

  Eigen::MatrixXd states(pool[0].state.size(),
                         static_cast<Eigen::Index>(pool.size()));
  for (Eigen::Index i = 0; i < states.cols(); ++i)
    states.col(i) = pool[static_cast<std::size_t>(i)].state;
  const bt::StateScaler scaler = bt::StateScaler::fit(states);

  wae::Autoencoder ae;
  std::uint64_t start_step = 0;
  if (!cfg.resume_from.empty()) {
    const auto ckpt = ckpt::load_checkpoint(cfg.resume_from);
    ae.encoder = ckpt.get("encoder");
    ae.decoder = ckpt.get("decoder");
    ae.validate();
    start_step = ckpt.step;
  } else {
    ae = wae::make_autoencoder(static_cast<int>(env.state_dim()),
                               static_cast<int>(env.assets()),
                               cfg.embedding.dim_z, cfg.embedding.hidden,
                               cfg.seeds.wae + 17);
  }
  const wae::KernelSpec kernel{cfg.embedding.kernel_scale > 0.0
                                   ? cfg.embedding.kernel_scale
                                   : static_cast<double>(cfg.embedding.dim_z)};
  auto enc_opt = nn::OptimizerState::adam(cfg.embedding.learning_rate);
  auto dec_opt = nn::OptimizerState::adam(cfg.embedding.learning_rate);

  std::ofstream curve(cfg.out_dir + "/curve.csv");
  curve << "step,loss,recon,mmd\n";
  for (long s = 1; s <= cfg.embedding.initial_steps; ++s) {
    std::vector<std::size_t> idx(
        static_cast<std::size_t>(cfg.embedding.batch_size));
    for (auto& i : idx) i = rng.integer(pool.size());
    wae::Batch batch = wae::batch_from_transitions(pool, idx);
    batch.states = scaler.apply_batch(batch.states);
    batch.next_states = scaler.apply_batch(batch.next_states);
    const auto parts = wae::wae_train_step(ae, batch, cfg.embedding.lambda,
                                           kernel, enc_opt, dec_opt, rng);
    const long global = static_cast<long>(start_step) + s;
    if (s == 1 || s % cfg.curve_every == 0 || s == cfg.embedding.initial_steps)
      curve << global << "," << fmt(parts.total) << "," << fmt(parts.recon)
            << "," << fmt(parts.mmd) << "\n";
  }

  ckpt::Checkpoint out;
  out.step = start_step + static_cast<std::uint64_t>(cfg.embedding.initial_steps);
  out.networks.emplace_back("encoder", ae.encoder);
  out.networks.emplace_back("decoder", ae.decoder);
  out.networks.emplace_back("anchor_encoder", ae.encoder);
  out.networks.emplace_back("anchor_decoder", ae.decoder);
  ckpt::save_checkpoint(out, cfg.out_dir + "/embedding.ckpt");
}

void cmd_backtest(const RunConfig& cfg, const BacktestFlags& flags) {
  const std::string out_dir =
      flags.out_override.empty() ? cfg.out_dir : flags.out_override;
  ensure_dir(out_dir);
  const data::Panel panel = load_or_simulate_panel(cfg);

  bt::PipelineConfig p = cfg.pipeline();
  p.market_series = load_state_series(cfg);
  p.use_meta = !flags.no_meta;
  p.use_embedding = !flags.no_embed;
  if (flags.jobs) p.jobs = *flags.jobs;
  if (flags.seed_override) {
    p.seed_wae += *flags.seed_override;
    p.seed_foml += *flags.seed_override;
    p.seed_td3 += *flags.seed_override;
    p.seed_backtest += *flags.seed_override;
  }

  const bt::BacktestResult result = bt::run_backtest(panel, p);

  {
    std::ofstream out(out_dir + "/results.csv");
    out << "date,return,wealth,ew_return,vw_return";
    for (const auto& n : result.weight_names) out << ",w_" << n;
    out << "\n";
    for (Eigen::Index t = 0; t < result.returns.size(); ++t) {
      out << result.dates[static_cast<std::size_t>(t)].to_string() << ","
          << fmt(result.returns[t]) << "," << fmt(result.wealth[t]) << ","
          << fmt(result.ew_returns[t]) << ",";
      if (result.has_vw) out << fmt(result.vw_returns[t]);
      for (Eigen::Index j = 0; j < result.weights.cols(); ++j)
        out << "," << fmt(result.weights(t, j));
      out << "\n";
    }
  }
  {
    std::ofstream out(out_dir + "/windows.csv");
    out << "window,segment,trs,tre,vals,vale,inherited_updates\n";
    for (const auto& w : result.window_rows)
      out << w.index << "," << w.segment << "," << w.trs.to_string() << ","
          << w.tre.to_string() << "," << w.vals.to_string() << ","
          << w.vale.to_string() << "," << w.inherited_updates << "\n";
  }
  {
    std::ofstream out(out_dir + "/foml_log.csv");
    out << "window,loss_before,loss_after,param_delta_norm,anchor_delta_norm\n";
    for (const auto& r : result.foml_log)
      out << r.window << "," << fmt(r.loss_before) << "," << fmt(r.loss_after)
          << "," << fmt(r.param_delta_norm) << ","
          << fmt(r.anchor_delta_norm) << "\n";
  }
  {
    std::ofstream out(out_dir + "/td3_log.csv");
    out << "step,reward,td_loss,actor_loss,buffer_size\n";
    for (const auto& r : result.td3_log)
      out << r.step << "," << fmt(r.reward) << "," << fmt(r.td_loss) << ","
          << fmt(r.actor_loss) << "," << r.buffer_size << "\n";
  }
  {
    std::ofstream out(out_dir + "/curve.csv");
    out << "segment,step,loss,recon,mmd\n";
    for (const auto& r : result.curve)
      out << r.segment << "," << r.step << "," << fmt(r.loss) << ","
          << fmt(r.recon) << "," << fmt(r.mmd) << "\n";
  }
  {
    std::ofstream out(out_dir + "/indicator_manifest.json");
    out << "{";
    for (std::size_t s = 0; s < result.indicator_manifests.size(); ++s) {
      if (s) out << ",";
      out << "\"segment_" << s << "\":" << result.indicator_manifests[s];
    }
    out << "}\n";
  }

  ckpt::save_checkpoint(result.final_params, out_dir + "/checkpoint.ckpt");

  json report;
  const Eigen::VectorXd rf =
      Eigen::VectorXd::Constant(result.returns.size(), cfg.risk_free_rate);
  report["days"] = result.returns.size();
  report["lookahead_violations"] = result.lookahead_violations;
  report["degenerate_reward_windows"] = result.degenerate_rewards;
  try {
    report["derl"] = metrics_to_json(bt::metrics(result.returns, rf));
  } catch (const DegenerateError&) {
    report["derl"] = nullptr;
  }
  try {
    report["equal_weight"] = metrics_to_json(bt::metrics(result.ew_returns, rf));
  } catch (const DegenerateError&) {
    report["equal_weight"] = nullptr;
  }
  if (result.has_vw) {
    try {
      report["value_weight"] = metrics_to_json(bt::metrics(result.vw_returns, rf));
    } catch (const DegenerateError&) {
      report["value_weight"] = nullptr;
    }
  }
  if (result.returns.size() >= 50) {
    try {
      report["bootstrap_p_derl_le_ew"] = bt::bootstrap_sr_test(
          result.returns, result.ew_returns, 10000, 10.0, cfg.seeds.analysis);
    } catch (const DegenerateError&) {
      report["bootstrap_p_derl_le_ew"] = nullptr;
    }
  }
  std::ofstream(out_dir + "/metrics.json") << report.dump(2) << "\n";

  RunConfig resolved = cfg;
  resolved.out_dir = out_dir;
  std::ofstream(out_dir + "/resolved_config.json") << resolved.to_json_text()
                                                   << "\n";
}

void cmd_analyze(const AnalyzeArgs& args) {
  ensure_dir(args.out_dir);
  const ResultsFile results = read_results(args.results_dir + "/results.csv");
  const Eigen::Index T = results.returns.size();
  json report;

  Eigen::VectorXd rf = Eigen::VectorXd::Zero(T);
  Eigen::VectorXd market;
  // Factor regression when a factor file is supplied.
  if (!args.factors_csv.empty()) {
    std::ifstream in(args.factors_csv);
    if (!in) throw DataError("cannot open " + args.factors_csv);
    std::string line;
    std::getline(in, line);
    std::vector<std::string> header;
    {
      std::stringstream ss(line);
      std::string f;
      while (std::getline(ss, f, ',')) header.push_back(f);
    }
    std::map<data::Date, std::vector<double>> rows;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string f;
      std::vector<std::string> fields;
      while (std::getline(ss, f, ',')) fields.push_back(f);
      std::vector<double> vals;
      for (std::size_t i = 1; i < fields.size(); ++i)
        vals.push_back(std::stod(fields[i]));
      rows[data::Date::from_string(fields[0])] = vals;
    }
    const int k_factors = static_cast<int>(header.size()) - 2;  // minus date, rf
    Eigen::MatrixXd X(T, 1 + k_factors);
    X.col(0).setOnes();
    for (Eigen::Index t = 0; t < T; ++t) {
      auto it = rows.find(results.dates[static_cast<std::size_t>(t)]);
      if (it == rows.end())
        throw DataError("factors missing date " +
                        results.dates[static_cast<std::size_t>(t)].to_string());
      for (int j = 0; j < k_factors; ++j) X(t, 1 + j) = it->second[j];
      rf[t] = it->second.back();
    }
    market = X.col(1);
    const Eigen::VectorXd excess = results.returns - rf;
    const auto reg = stats::ols_newey_west(
        excess, X, stats::default_nw_lags(static_cast<int>(T)));
    json fj;
    fj["names"] = json::array();
    fj["names"].push_back("alpha");
    for (int j = 0; j < k_factors; ++j) fj["names"].push_back(header[1 + j]);
    fj["beta"] = json::array();
    fj["t"] = json::array();
    for (Eigen::Index j = 0; j < reg.beta.size(); ++j) {
      fj["beta"].push_back(json_number(reg.beta[j]));
      fj["t"].push_back(json_number(reg.t_values[j]));
    }
    fj["adj_r2"] = json_number(reg.adj_r2);
    report["factor_regression"] = fj;
  }

  // Regime split on a VIX series.
  Eigen::VectorXd vix;
  if (!args.vix_csv.empty()) {
    const data::Series series = data::load_series(args.vix_csv);
    vix = series.align_to(results.dates);
    const auto split = bt::regime_split(results.returns, vix,
                                        args.vix_threshold);
    json rj;
    rj["threshold"] = split.threshold;
    rj["low_days"] = split.low.size();
    rj["high_days"] = split.high.size();
    auto regime_metrics = [&](const std::vector<int>& idx) -> json {
      if (idx.size() < 2) return nullptr;
      try {
        return metrics_to_json(bt::metrics(bt::gather(results.returns, idx),
                                           bt::gather(rf, idx)));
      } catch (const DegenerateError&) {
        return nullptr;
      }
    };
    rj["low"] = regime_metrics(split.low);
    rj["high"] = regime_metrics(split.high);
    report["regimes"] = rj;
  }

  // Period-by-period lasso of scaled weights on stock characteristics.
  if (!args.panel_csv.empty() && !results.weight_names.empty()) {
    const data::Panel panel = data::load_panel(args.panel_csv);
    std::vector<std::string> tickers;
    for (const auto& n : results.weight_names)
      if (n != "CASH") tickers.push_back(n);
    const auto aligned = data::align(panel, tickers, panel.calendar.front(),
                                     panel.calendar.back());
    const Eigen::Index PT = static_cast<Eigen::Index>(aligned.dates.size());
    const Eigen::Index N = static_cast<Eigen::Index>(tickers.size());

    stats::CharacteristicsInput ci;
    ci.dates = aligned.dates;
    ci.returns = Eigen::MatrixXd::Constant(PT, N, kNaN);
    ci.returns.bottomRows(PT - 1) = aligned.returns;
    ci.volume = aligned.volume;
    ci.dollar_volume = aligned.volume.cwiseProduct(aligned.close);
    ci.high = aligned.high;
    ci.low = aligned.low;
    ci.shrout = Eigen::MatrixXd::Constant(PT, N, kNaN);
    if (aligned.market_cap.allFinite())
      ci.shrout = aligned.market_cap.cwiseQuotient(aligned.close);
    ci.market = Eigen::VectorXd::Zero(PT);
    for (Eigen::Index t = 1; t < PT; ++t)
      ci.market[t] = aligned.returns.row(t - 1).mean();
    ci.risk_free = Eigen::VectorXd::Zero(PT);

    std::vector<int> windows{7, 14, 30};
    std::vector<std::string> feat_names;
    std::vector<std::pair<int, int>> feat_map;  // (window index, characteristic)
    for (std::size_t wi = 0; wi < windows.size(); ++wi) {
      const int n_chars = windows[wi] == 30 ? 8 : 6;
      for (int c = 0; c < n_chars; ++c) {
        feat_names.push_back(
            stats::characteristic_name(static_cast<stats::Characteristic>(c)) +
            "_" + std::to_string(windows[wi]) + "d");
        feat_map.emplace_back(static_cast<int>(wi), c);
      }
    }
    std::vector<stats::CharacteristicsMatrix> chars;
    for (int w : windows) chars.push_back(stats::compute_characteristics(ci, w));

    // One lasso per traded day.
    Eigen::MatrixXd coef_series(T, static_cast<Eigen::Index>(feat_names.size()));
    coef_series.setConstant(kNaN);
    std::map<data::Date, Eigen::Index> date_index;
    for (Eigen::Index t = 0; t < PT; ++t) date_index[aligned.dates[t]] = t;
    Rng cv_rng(args.seed);
    for (Eigen::Index t = 0; t < T; ++t) {
      auto it = date_index.find(results.dates[static_cast<std::size_t>(t)]);
      if (it == date_index.end()) continue;
      const Eigen::Index pt = it->second;
      std::vector<Eigen::Index> names;
      for (Eigen::Index j = 0; j < N; ++j) {
        bool ok = true;
        for (std::size_t fi = 0; fi < feat_map.size(); ++fi) {
          const auto& [wi, c] = feat_map[fi];
          if (std::isnan(chars[static_cast<std::size_t>(wi)]
                             .standardized[static_cast<std::size_t>(c)](pt, j)))
            ok = false;
        }
        if (ok) names.push_back(j);
      }
      if (static_cast<int>(names.size()) < 3) continue;
      Eigen::MatrixXd X(static_cast<Eigen::Index>(names.size()),
                        static_cast<Eigen::Index>(feat_names.size()));
      Eigen::VectorXd y(static_cast<Eigen::Index>(names.size()));
      for (std::size_t r = 0; r < names.size(); ++r) {
        // Weight columns follow the results header order: CASH then names.
        Eigen::Index wcol = 0;
        for (std::size_t k = 0; k < results.weight_names.size(); ++k)
          if (results.weight_names[k] == tickers[static_cast<std::size_t>(
                  names[r])])
            wcol = static_cast<Eigen::Index>(k);
        y[static_cast<Eigen::Index>(r)] = 100.0 * results.weights(t, wcol);
        for (std::size_t fi = 0; fi < feat_map.size(); ++fi) {
          const auto& [wi, c] = feat_map[fi];
          X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(fi)) =
              chars[static_cast<std::size_t>(wi)]
                  .standardized[static_cast<std::size_t>(c)](pt, names[r]);
        }
      }
      double lam;
      if (X.rows() >= 10) {
        lam = stats::lasso_cv_lambda(y, X, 5, 20, args.seed + t);
      } else {
        double lam_max = 0.0;
        const Eigen::VectorXd yc = y.array() - y.mean();
        for (Eigen::Index j = 0; j < X.cols(); ++j)
          lam_max = std::max(lam_max,
                             std::abs(X.col(j).dot(yc)) / X.rows());
        lam = 0.1 * lam_max;
      }
      try {
        const auto fit = stats::lasso(y, X, lam);
        coef_series.row(t) = fit.beta.transpose();
      } catch (const NumericError&) {
        // leave the period missing
      }
    }
    const auto rep = stats::selection_report(coef_series, feat_names);
    json lj;
    std::ofstream csv(args.out_dir + "/selection.csv");
    csv << "feature,selection_rate,mean_coef,t\n";
    for (std::size_t j = 0; j < feat_names.size(); ++j) {
      const auto ji = static_cast<Eigen::Index>(j);
      lj[feat_names[j]] = {{"rate", json_number(rep.selection_rate[ji])},
                           {"mean", json_number(rep.mean_coef[ji])},
                           {"t", json_number(rep.t_values[ji])}};
      csv << feat_names[j] << "," << fmt(rep.selection_rate[ji]) << ","
          << fmt(rep.mean_coef[ji]) << "," << fmt(rep.t_values[ji]) << "\n";
    }
    report["lasso_selection"] = lj;
  }

  // Ablation contribution regressed on market and VIX.
  if (!args.ablated_dir.empty()) {
    const ResultsFile ablated =
        read_results(args.ablated_dir + "/results.csv");
    if (ablated.returns.size() != T)
      throw DataError("ablated results length mismatch");
    const Eigen::VectorXd contribution =
        stats::ablation_contribution(results.returns, ablated.returns);
    if (market.size() != T) {
      // Without a factor file the equal-weight return column stands in for
      // the market series.
      if (!results.ew_returns.allFinite())
        throw ConfigError("ablation regression needs --factors for a market "
                          "series");
      market = results.ew_returns;
    }
    if (vix.size() != T)
      throw ConfigError("ablation regression needs --vix");
    const auto reg = stats::regress_on_market(contribution, market, vix);
    report["ablation"] = {
        {"b0", json_number(reg.beta[0])},   {"t0", json_number(reg.t_values[0])},
        {"b_market", json_number(reg.beta[1])},
        {"t_market", json_number(reg.t_values[1])},
        {"b_vix", json_number(reg.beta[2])},
        {"t_vix", json_number(reg.t_values[2])},
        {"adj_r2", json_number(reg.adj_r2)}};

    // Second form: absolute standardized deviations of the market variables
    // proxy structural change. Moments come from the first three trading
    // years (full sample when shorter).
    const Eigen::Index train_span = std::min<Eigen::Index>(T, 756);
    auto deviation_series = [&](const Eigen::VectorXd& x) {
      const Eigen::VectorXd head = x.head(train_span);
      const double mean = head.mean();
      const double sd = std::sqrt((head.array() - mean).square().sum() /
                                  static_cast<double>(train_span - 1));
      return stats::structural_deviation(x, mean, sd);
    };
    try {
      const Eigen::VectorXd dmkt = deviation_series(market);
      const Eigen::VectorXd dvix = deviation_series(vix);
      const auto sreg = stats::regress_on_market(contribution, dmkt, dvix);
      report["ablation_structural"] = {
          {"b0", json_number(sreg.beta[0])},
          {"b_dmkt", json_number(sreg.beta[1])},
          {"t_dmkt", json_number(sreg.t_values[1])},
          {"b_dvix", json_number(sreg.beta[2])},
          {"t_dvix", json_number(sreg.t_values[2])},
          {"adj_r2", json_number(sreg.adj_r2)}};
    } catch (const DegenerateError&) {
      report["ablation_structural"] = nullptr;
    }
  }

  std::ofstream(args.out_dir + "/report.json") << report.dump(2) << "\n";
}

}  // namespace derl::cli
