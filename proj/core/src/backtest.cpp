#include "derl/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>

#include "derl/errors.hpp"

namespace derl::bt {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

WindowSchedule build_schedule(int calendar_size,
                              const std::vector<SegmentSpec>& segments,
                              int train_days, int window_days) {
  if (window_days < 1) throw ConfigError("build_schedule: window_days >= 1");
  if (segments.empty()) throw ConfigError("build_schedule: no segments");
  WindowSchedule sched;
  sched.window_days = window_days;
  sched.train_days = train_days;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto& seg = segments[s];
    if (seg.train_start > seg.val_start || seg.val_start >= seg.val_end ||
        seg.val_end > calendar_size || seg.train_start < 0)
      throw ConfigError("build_schedule: segment " + std::to_string(s) +
                        " does not fit the calendar");
    int vals = seg.val_start;
    while (vals < seg.val_end) {
      Window w;
      w.segment = static_cast<int>(s);
      w.vals = vals;
      w.vale = std::min(vals + window_days, seg.val_end);
      w.tre = w.vals;
      w.trs = std::max(seg.train_start, w.vals - train_days);
      sched.windows.push_back(w);
      vals = w.vale;
    }
  }
  return sched;
}

MetricsReport metrics(const Eigen::VectorXd& returns,
                      const Eigen::VectorXd& risk_free, int periods_per_year) {
  const Eigen::Index T = returns.size();
  if (T < 2) throw ShapeError("metrics: need at least two observations");
  if (risk_free.size() != T)
    throw ShapeError("metrics: risk-free series length mismatch");

  const Eigen::VectorXd excess = returns - risk_free;
  const double mean = excess.mean();
  const Eigen::ArrayXd centered = excess.array() - mean;
  const double var_sample = centered.square().sum() / static_cast<double>(T - 1);
  if (var_sample <= 0.0)
    throw DegenerateError("metrics: zero dispersion");

  const double ppy = static_cast<double>(periods_per_year);
  MetricsReport r;
  r.mean_ann = ppy * mean;
  r.std_ann = std::sqrt(ppy) * std::sqrt(var_sample);
  r.sharpe = r.mean_ann / r.std_ann;

  const double m2 = centered.square().mean();
  const double m3 = centered.cube().mean();
  const double m4 = centered.square().square().mean();
  r.skewness = m3 / std::pow(m2, 1.5);
  r.kurtosis = m4 / (m2 * m2);

  // Downside uses raw negative excess returns with a full-sample denominator.
  const Eigen::ArrayXd neg = excess.array().min(0.0);
  const double dd_var = neg.square().sum() / static_cast<double>(T - 1);
  const double dd_ann = std::sqrt(ppy) * std::sqrt(dd_var);
  r.sortino = dd_ann > 0.0 ? r.mean_ann / dd_ann : kNaN;
  return r;
}

namespace {

double sharpe_ratio(const Eigen::VectorXd& x) {
  const double mean = x.mean();
  const double var = (x.array() - mean).square().sum() /
                     static_cast<double>(x.size() - 1);
  if (var <= 0.0) throw DegenerateError("bootstrap: degenerate series");
  return mean / std::sqrt(var);
}

Eigen::VectorXd stationary_resample(const Eigen::VectorXd& x, double p,
                                    Rng& rng) {
  const Eigen::Index T = x.size();
  Eigen::VectorXd out(T);
  Eigen::Index idx = static_cast<Eigen::Index>(rng.integer(T));
  out[0] = x[idx];
  for (Eigen::Index t = 1; t < T; ++t) {
    if (rng.uniform() < p) idx = static_cast<Eigen::Index>(rng.integer(T));
    else idx = (idx + 1) % T;
    out[t] = x[idx];
  }
  return out;
}

}  // namespace

double bootstrap_sr_test(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                         int n_boot, double block_len, std::uint64_t seed) {
  if (a.size() != b.size()) throw ShapeError("bootstrap: length mismatch");
  if (a.size() < 50) throw ShapeError("bootstrap: need T >= 50");
  if (n_boot < 1 || block_len < 1.0)
    throw ConfigError("bootstrap: bad parameters");

  const double delta_hat = sharpe_ratio(a) - sharpe_ratio(b);
  const double p_new = 1.0 / block_len;
  Rng rng(seed);
  int exceed = 0;
  for (int i = 0; i < n_boot; ++i) {
    const Eigen::VectorXd as = stationary_resample(a, p_new, rng);
    const Eigen::VectorXd bs = stationary_resample(b, p_new, rng);
    double delta_star;
    try {
      delta_star = sharpe_ratio(as) - sharpe_ratio(bs);
    } catch (const DegenerateError&) {
      delta_star = 0.0;
    }
    if (delta_star - delta_hat >= delta_hat) ++exceed;
  }
  return (1.0 + exceed) / static_cast<double>(n_boot + 1);
}

RegimeSplit regime_split(const Eigen::VectorXd& returns,
                         const Eigen::VectorXd& vix,
                         std::optional<double> threshold) {
  if (returns.size() != vix.size())
    throw ShapeError("regime_split: calendar misalignment");
  RegimeSplit split;
  if (threshold) {
    split.threshold = *threshold;
  } else {
    std::vector<double> v(vix.data(), vix.data() + vix.size());
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    split.threshold = (n % 2 == 1) ? v[n / 2]
                                   : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }
  for (Eigen::Index i = 0; i < vix.size(); ++i) {
    if (vix[i] < split.threshold) split.low.push_back(static_cast<int>(i));
    else split.high.push_back(static_cast<int>(i));
  }
  return split;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = v[idx[i]];
  return out;
}

StateScaler StateScaler::fit(const Eigen::MatrixXd& states) {
  if (states.cols() < 2) throw ShapeError("StateScaler: need >= 2 samples");
  StateScaler sc;
  sc.mean = states.rowwise().mean();
  const Eigen::MatrixXd centered = states.colwise() - sc.mean;
  sc.scale = (centered.array().square().rowwise().sum() /
              static_cast<double>(states.cols() - 1))
                 .sqrt()
                 .max(1e-8)
                 .matrix();
  return sc;
}

StateScaler StateScaler::identity(Eigen::Index dim) {
  StateScaler sc;
  sc.mean = Eigen::VectorXd::Zero(dim);
  sc.scale = Eigen::VectorXd::Ones(dim);
  return sc;
}

Eigen::VectorXd StateScaler::apply(const Eigen::VectorXd& s) const {
  return ((s - mean).array() / scale.array()).matrix();
}

Eigen::MatrixXd StateScaler::apply_batch(const Eigen::MatrixXd& s) const {
  return ((s.colwise() - mean).array().colwise() / scale.array()).matrix();
}

namespace {

struct SegmentOutput {
  std::vector<data::Date> dates;
  std::vector<std::pair<std::string, nn::DenseNet>> final_params;
  long degenerate_rewards = 0;
  std::vector<double> returns, ew_returns, vw_returns;
  std::vector<std::string> tickers;          // risky names
  std::vector<Eigen::VectorXd> weights;      // per day, CASH + tickers
  std::vector<WindowRow> window_rows;
  std::vector<foml::WindowUpdateLog> foml_log;
  std::vector<td3::StepLogRow> td3_log;
  std::vector<CurveRow> curve;
  std::string indicator_manifest;
  bool has_vw = false;
  int lookahead_violations = 0;
};

env::TransitionTuple scale_transition(const StateScaler& sc,
                                      const env::TransitionTuple& t) {
  env::TransitionTuple out = t;
  out.state = sc.apply(t.state);
  out.next_state = sc.apply(t.next_state);
  return out;
}

// Daily greedy trading over [env.span_begin, span_end) with per-decision
// look-ahead auditing.
template <typename PolicyFn>
void trade_span(env::MarketEnv& env, PolicyFn&& policy, SegmentOutput* out,
                std::vector<double>* returns_sink,
                std::vector<Eigen::VectorXd>* weights_sink,
                const std::vector<data::Date>* dates,
                td3::ReplayBuffer* buffer, foml::StreamBuffer* stream,
                const StateScaler* scaler, int* violations) {
  while (!env.done()) {
    const int t = env.cursor();
    const env::PortfolioAction a = policy(env.state(), t);
    if (violations && env.max_data_index() > t) ++(*violations);
    const auto sr = env.step_action(a);
    if (sr.bankrupt)
      throw BankruptcyError("trading wealth hit zero at index " +
                            std::to_string(t));
    returns_sink->push_back(sr.net_return);
    if (weights_sink) weights_sink->push_back(sr.transition.action);
    if (out && dates) out->dates.push_back((*dates)[t + 1]);
    if (buffer) buffer->push(sr.transition);
    if (stream && scaler) stream->push(scale_transition(*scaler, sr.transition));
  }
}

SegmentOutput run_segment(const data::Panel& panel, const PipelineConfig& cfg,
                          int seg_index, const SegmentDates& seg,
                          int global_window_offset) {
  SegmentOutput out;

  // Universe: names ranked by market cap on the last trading day before the
  // validation start; otherwise every name in the panel.
  std::vector<std::string> tickers;
  if (cfg.universe_size > 0 && panel.has_market_cap) {
    data::Date as_of = panel.calendar.front();
    for (const data::Date& d : panel.calendar)
      if (d < seg.val_start) as_of = d;
    tickers = data::select_universe(panel, as_of, cfg.universe_size).tickers;
  } else {
    tickers = panel.tickers;
  }
  out.tickers = tickers;

  const data::AlignedPanel aligned =
      data::align(panel, tickers, seg.train_start, seg.val_end);

  std::vector<std::pair<std::string, Eigen::VectorXd>> market_cols;
  for (const auto& [name, series] : cfg.market_series)
    market_cols.emplace_back(name, series.align_to(aligned.dates));
  const ind::IndicatorMatrix metrics_block =
      ind::build_metrics_block(aligned, cfg.indicators, market_cols);
  out.indicator_manifest = metrics_block.manifest_json();

  env::MarketEnv::Options env_opts;
  env_opts.cost.rate = cfg.cost_rate;
  env_opts.risk_free_rate = cfg.risk_free_rate;
  env_opts.reward_window = cfg.reward_window;
  env::MarketEnv train_env(aligned, metrics_block.values, env_opts);
  env::MarketEnv trade_env(aligned, metrics_block.values, env_opts);
  env::MarketEnv ew_env(aligned, metrics_block.values, env_opts);
  env::MarketEnv vw_env(aligned, metrics_block.values, env_opts);

  // Segment schedule on the aligned calendar.
  auto index_of = [&](const data::Date& d, bool exclusive_end) {
    auto it = exclusive_end
                  ? std::upper_bound(aligned.dates.begin(), aligned.dates.end(), d)
                  : std::lower_bound(aligned.dates.begin(), aligned.dates.end(), d);
    return static_cast<int>(it - aligned.dates.begin());
  };
  SegmentSpec spec;
  spec.train_start = 0;
  spec.val_start = index_of(seg.val_start, false);
  spec.val_end = index_of(seg.val_end, true);
  const WindowSchedule sched = build_schedule(
      static_cast<int>(aligned.dates.size()), {spec}, cfg.train_days,
      cfg.window_days);

  const int first_ok = train_env.first_decision();
  if (spec.val_start <= first_ok)
    throw StateError("segment " + std::to_string(seg_index) +
                     ": validation span begins before the indicator warm-up");

  // ---- Initial embedding, trained on random-policy transitions. ----
  Rng wae_rng(cfg.seed_wae + 1000003ULL * static_cast<std::uint64_t>(seg_index));
  const int init_end = std::max(first_ok + 2, sched.windows.front().tre);
  train_env.set_span(first_ok, std::min(init_end, train_env.last_decision()));

  std::vector<env::TransitionTuple> pool;
  train_env.reset();
  while (static_cast<long>(pool.size()) < cfg.embedding.initial_pool) {
    if (train_env.done()) train_env.reset();
    const Eigen::Index d = train_env.assets();
    const env::PortfolioAction a =
        env::project_long_only(wae_rng.normal_vector(d));
    const auto sr = train_env.step_action(a);
    if (sr.bankrupt) {
      train_env.reset();
      continue;
    }
    pool.push_back(sr.transition);
  }

  Eigen::MatrixXd pool_states(pool[0].state.size(),
                              static_cast<Eigen::Index>(pool.size()));
  for (Eigen::Index i = 0; i < pool_states.cols(); ++i)
    pool_states.col(i) = pool[static_cast<std::size_t>(i)].state;
  const StateScaler scaler = StateScaler::fit(pool_states);

  const int dim_s = static_cast<int>(train_env.state_dim());
  const int dim_a = static_cast<int>(train_env.assets());
  wae::Autoencoder ae =
      wae::make_autoencoder(dim_s, dim_a, cfg.embedding.dim_z,
                            cfg.embedding.hidden, cfg.seed_wae + 17);
  const wae::KernelSpec kernel{cfg.embedding.kernel_scale > 0.0
                                   ? cfg.embedding.kernel_scale
                                   : static_cast<double>(cfg.embedding.dim_z)};

  if (cfg.use_embedding) {
    nn::OptimizerState enc_opt =
        nn::OptimizerState::adam(cfg.embedding.learning_rate);
    nn::OptimizerState dec_opt =
        nn::OptimizerState::adam(cfg.embedding.learning_rate);
    for (long step = 1; step <= cfg.embedding.initial_steps; ++step) {
      std::vector<std::size_t> idx(
          static_cast<std::size_t>(cfg.embedding.batch_size));
      for (auto& i : idx) i = wae_rng.integer(pool.size());
      wae::Batch batch = wae::batch_from_transitions(pool, idx);
      batch.states = scaler.apply_batch(batch.states);
      batch.next_states = scaler.apply_batch(batch.next_states);
      const auto parts = wae::wae_train_step(ae, batch, cfg.embedding.lambda,
                                             kernel, enc_opt, dec_opt, wae_rng);
      if (step == 1 || step % cfg.curve_every == 0 ||
          step == cfg.embedding.initial_steps)
        out.curve.push_back({seg_index, step, parts.total, parts.recon,
                             parts.mmd});
    }
  }
  wae::Autoencoder anchor = ae;

  // ---- Agent and meta-learning state. ----
  const int dim_z = cfg.use_embedding ? cfg.embedding.dim_z : dim_s;
  td3::Agent agent = td3::make_agent(
      dim_z, dim_a, cfg.td3,
      cfg.seed_td3 + 7919ULL * static_cast<std::uint64_t>(seg_index));
  td3::ReplayBuffer buffer(cfg.td3.buffer_capacity);
  Rng td3_rng(cfg.seed_td3 + 104729ULL * static_cast<std::uint64_t>(seg_index));
  foml::StreamBuffer stream(
      cfg.stream,
      cfg.seed_foml + 15485863ULL * static_cast<std::uint64_t>(seg_index));

  const td3::EmbedFn embed =
      cfg.use_embedding
          ? td3::EmbedFn([&ae, &scaler](const Eigen::VectorXd& s) {
              return wae::encode_mean(ae, scaler.apply(s));
            })
          : td3::EmbedFn([&scaler](const Eigen::VectorXd& s) {
              return scaler.apply(s);
            });

  td3::TrainHooks hooks;
  if (cfg.use_meta && cfg.use_embedding) {
    hooks.refresh_every = cfg.stream.stream_size;
    hooks.encoder_refresh =
        [&](const std::vector<env::TransitionTuple>& recent) {
          for (const auto& t : recent)
            stream.push(scale_transition(scaler, t));
          while (stream.stream_ready())
            out.foml_log.push_back(
                stream.run_window_update(ae, anchor, cfg.foml_rates));
        };
  }

  // The last calendar day has no following return, so the final decision
  // index is capped by the environment.
  const int last_decision = trade_env.last_decision();
  const int val_end_cap = std::min(spec.val_end, last_decision);
  trade_env.set_span(spec.val_start, val_end_cap);
  trade_env.reset();
  ew_env.set_span(spec.val_start, val_end_cap);
  ew_env.reset();
  vw_env.set_span(spec.val_start, val_end_cap);
  vw_env.reset();

  const bool has_caps = aligned.market_cap.allFinite();
  out.has_vw = has_caps;

  for (std::size_t wi = 0; wi < sched.windows.size(); ++wi) {
    const Window& w = sched.windows[wi];
    WindowRow row;
    row.segment = seg_index;
    row.index = global_window_offset + static_cast<int>(wi);
    row.trs = aligned.dates[std::max(w.trs, first_ok)];
    row.tre = aligned.dates[w.tre];
    row.vals = aligned.dates[w.vals];
    row.vale = aligned.dates[w.vale - 1];
    row.inherited_updates = agent.update_count;
    out.window_rows.push_back(row);

    // Continue training from inherited parameters on this window's span.
    const int tb = std::max(w.trs, first_ok);
    if (w.tre > tb + 1) {
      train_env.set_span(tb, std::min(w.tre, last_decision));
      auto tr = td3::train_loop(train_env, embed, buffer, agent,
                                cfg.train_steps_per_window, td3_rng, hooks,
                                cfg.log_every);
      for (auto& lr : tr.log) out.td3_log.push_back(lr);
    }

    // Trade the validation span out-of-sample with the frozen policy.
    const int vale_cap = std::min(w.vale, last_decision);
    if (w.vals >= vale_cap) continue;
    trade_env.set_span(w.vals, vale_cap);
    trade_span(
        trade_env,
        [&](const env::MarketState& s, int) {
          const Eigen::VectorXd z = embed(env::flatten(s));
          return env::project_long_only(nn::forward(agent.actor, z));
        },
        &out, &out.returns, &out.weights, &aligned.dates, &buffer, nullptr,
        &scaler, &out.lookahead_violations);

    ew_env.set_span(w.vals, vale_cap);
    trade_span(
        ew_env,
        [&](const env::MarketState&, int) {
          Eigen::VectorXd w_ew = Eigen::VectorXd::Zero(dim_a);
          w_ew.tail(dim_a - 1).setConstant(1.0 / (dim_a - 1));
          return env::PortfolioAction{w_ew};
        },
        nullptr, &out.ew_returns, nullptr, nullptr, nullptr, nullptr, nullptr,
        nullptr);

    if (has_caps) {
      vw_env.set_span(w.vals, vale_cap);
      trade_span(
          vw_env,
          [&](const env::MarketState&, int t) {
            Eigen::VectorXd w_vw = Eigen::VectorXd::Zero(dim_a);
            const Eigen::VectorXd caps = aligned.market_cap.row(t).transpose();
            w_vw.tail(dim_a - 1) = caps / caps.sum();
            return env::PortfolioAction{w_vw};
          },
          nullptr, &out.vw_returns, nullptr, nullptr, nullptr, nullptr,
          nullptr, nullptr);
    }
  }

  out.final_params.emplace_back("actor", agent.actor);
  out.final_params.emplace_back("critic1", agent.critic1);
  out.final_params.emplace_back("critic2", agent.critic2);
  out.final_params.emplace_back("encoder", ae.encoder);
  out.final_params.emplace_back("decoder", ae.decoder);
  out.final_params.emplace_back("anchor_encoder", anchor.encoder);
  out.final_params.emplace_back("anchor_decoder", anchor.decoder);
  out.degenerate_rewards =
      train_env.degenerate_rewards() + trade_env.degenerate_rewards();
  return out;
}

}  // namespace

BacktestResult run_backtest(const data::Panel& panel,
                            const PipelineConfig& cfg) {
  if (cfg.segments.empty()) throw ConfigError("run_backtest: no segments");

  std::vector<SegmentOutput> outputs(cfg.segments.size());
  std::vector<int> offsets(cfg.segments.size(), 0);

  // Window offsets need the per-segment window counts up front.
  {
    int total = 0;
    for (std::size_t s = 0; s < cfg.segments.size(); ++s) {
      offsets[s] = total;
      const auto& seg = cfg.segments[s];
      int vs = 0, ve = 0;
      for (const auto& d : panel.calendar) {
        if (d < seg.val_start) ++vs;
        if (d <= seg.val_end) ++ve;
      }
      total += (ve - vs + cfg.window_days - 1) / cfg.window_days;
    }
  }

  auto run_one = [&](std::size_t s) {
    outputs[s] = run_segment(panel, cfg, static_cast<int>(s), cfg.segments[s],
                             offsets[s]);
  };

  if (cfg.jobs > 1 && cfg.segments.size() > 1) {
    std::vector<std::future<void>> futures;
    for (std::size_t s = 0; s < cfg.segments.size(); ++s)
      futures.push_back(std::async(std::launch::async, run_one, s));
    for (auto& f : futures) f.get();
  } else {
    for (std::size_t s = 0; s < cfg.segments.size(); ++s) run_one(s);
  }

  BacktestResult result;
  std::vector<std::string> union_tickers;
  for (const auto& o : outputs)
    for (const auto& t : o.tickers) union_tickers.push_back(t);
  std::sort(union_tickers.begin(), union_tickers.end());
  union_tickers.erase(
      std::unique(union_tickers.begin(), union_tickers.end()),
      union_tickers.end());
  result.weight_names.push_back("CASH");
  for (auto& t : union_tickers) result.weight_names.push_back(t);

  std::size_t total_days = 0;
  for (const auto& o : outputs) total_days += o.returns.size();
  result.returns.resize(static_cast<Eigen::Index>(total_days));
  result.wealth.resize(static_cast<Eigen::Index>(total_days));
  result.ew_returns.resize(static_cast<Eigen::Index>(total_days));
  result.weights = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(total_days),
      static_cast<Eigen::Index>(result.weight_names.size()));
  result.has_vw = !outputs.empty();
  for (const auto& o : outputs) result.has_vw = result.has_vw && o.has_vw;
  if (result.has_vw)
    result.vw_returns.resize(static_cast<Eigen::Index>(total_days));

  Eigen::Index row = 0;
  double wealth = 1.0;
  for (std::size_t s = 0; s < outputs.size(); ++s) {
    const auto& o = outputs[s];
    for (const auto& [name, net] : o.final_params)
      result.final_params.networks.emplace_back(
          "seg" + std::to_string(s) + "/" + name, net);
    std::vector<Eigen::Index> cols(o.tickers.size());
    for (std::size_t j = 0; j < o.tickers.size(); ++j) {
      const auto it = std::lower_bound(union_tickers.begin(),
                                       union_tickers.end(), o.tickers[j]);
      cols[j] = 1 + (it - union_tickers.begin());
    }
    for (std::size_t i = 0; i < o.returns.size(); ++i, ++row) {
      result.dates.push_back(o.dates[i]);
      result.returns[row] = o.returns[i];
      wealth *= 1.0 + o.returns[i];
      result.wealth[row] = wealth;
      result.ew_returns[row] = o.ew_returns[i];
      if (result.has_vw) result.vw_returns[row] = o.vw_returns[i];
      result.weights(row, 0) = o.weights[i][0];
      for (std::size_t j = 0; j < o.tickers.size(); ++j)
        result.weights(row, cols[j]) = o.weights[i][1 + j];
    }
    for (const auto& r : o.window_rows) result.window_rows.push_back(r);
    for (const auto& r : o.foml_log) result.foml_log.push_back(r);
    for (const auto& r : o.td3_log) result.td3_log.push_back(r);
    for (const auto& r : o.curve) result.curve.push_back(r);
    result.indicator_manifests.push_back(o.indicator_manifest);
    result.degenerate_rewards += o.degenerate_rewards;
    result.lookahead_violations += o.lookahead_violations;
  }
  return result;
}

}  // namespace derl::bt
