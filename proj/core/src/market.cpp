#include "derl/market.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "derl/errors.hpp"
#include "derl/nn.hpp"

namespace derl::env {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

void PortfolioAction::validate_long_only(double tol) const {
  if (weights.size() == 0) throw ShapeError("empty action");
  if (weights.minCoeff() < -tol)
    throw NumericError("action has negative weight");
  if (std::abs(weights.sum() - 1.0) > tol)
    throw NumericError("action weights do not sum to 1");
}

Eigen::VectorXd flatten(const MarketState& s) {
  const Eigen::Index d = s.returns.size();
  const Eigen::Index h = s.metrics.size();
  Eigen::VectorXd v(2 * d + h + 1);
  v.segment(0, d) = s.returns;
  v.segment(d, d) = s.weights;
  v.segment(2 * d, h) = s.metrics;
  v[2 * d + h] = s.wealth;
  return v;
}

MarketState unflatten(const Eigen::VectorXd& v, Eigen::Index assets,
                      Eigen::Index metrics) {
  if (v.size() != 2 * assets + metrics + 1)
    throw ShapeError("unflatten: vector length does not match 2D + h + 1");
  MarketState s;
  s.returns = v.segment(0, assets);
  s.weights = v.segment(assets, assets);
  s.metrics = v.segment(2 * assets, metrics);
  s.wealth = v[2 * assets + metrics];
  return s;
}

MarketState assemble_state(const Eigen::VectorXd& returns,
                           const Eigen::VectorXd& holdings,
                           const Eigen::VectorXd& metrics, double wealth) {
  if (returns.size() != holdings.size())
    throw ShapeError("assemble_state: returns/holdings size mismatch");
  if (!metrics.allFinite())
    throw StateError("assemble_state: metrics contain missing values "
                     "(indicator warm-up not satisfied)");
  if (!(wealth > 0.0)) throw NumericError("assemble_state: wealth must be > 0");
  MarketState s;
  s.returns = returns;
  s.weights = holdings;
  s.metrics = metrics;
  s.wealth = wealth;
  return s;
}

PortfolioAction project_long_only(const Eigen::VectorXd& logits) {
  return PortfolioAction{nn::softmax(logits)};
}

PortfolioAction project_long_short(const Eigen::VectorXd& raw) {
  if (raw.size() == 0) throw ShapeError("project_long_short: empty input");
  const double shift = (raw.sum() - 1.0) / static_cast<double>(raw.size());
  return PortfolioAction{
      (raw.array() - shift).matrix()};
}

double transaction_cost(const CostModel& model, const Eigen::VectorXd& action,
                        const Eigen::VectorXd& holdings, double wealth) {
  if (action.size() != holdings.size())
    throw ShapeError("transaction_cost: action/holdings size mismatch");
  return model.rate * wealth * (action - holdings).lpNorm<1>();
}

MarketState step(const MarketState& s, const PortfolioAction& a,
                 const Eigen::VectorXd& realized_returns,
                 const Eigen::VectorXd& realized_metrics,
                 const CostModel& cost) {
  if (a.weights.size() != s.returns.size() ||
      realized_returns.size() != s.returns.size())
    throw ShapeError("step: dimension mismatch");
  const double c = transaction_cost(cost, a.weights, s.weights, s.wealth);
  // On the simplex sum_d (1 + delta_d) a_d == 1 + <delta, a>; the latter is
  // exact when returns vanish.
  const double gross = 1.0 + realized_returns.dot(a.weights);
  const double wealth_next = gross * s.wealth - c;
  if (!(wealth_next > 0.0))
    throw BankruptcyError("step: wealth dropped to " +
                          std::to_string(wealth_next));
  MarketState next;
  next.returns = realized_returns;
  next.weights = a.weights;
  next.metrics = realized_metrics;
  next.wealth = wealth_next;
  return next;
}

double reward_sharpe(const Eigen::VectorXd& realized,
                     const Eigen::VectorXd& risk_free) {
  const Eigen::Index k = realized.size();
  if (k < 2 || risk_free.size() != k)
    throw ShapeError("reward_sharpe: need k >= 2 matched observations");
  const Eigen::VectorXd excess = realized - risk_free;
  const double mean = excess.mean();
  const double var =
      (excess.array() - mean).square().sum() / static_cast<double>(k - 1);
  if (var <= 0.0)
    throw DegenerateError("reward_sharpe: zero dispersion in reward window");
  return mean / std::sqrt(var);
}

SynthSpec SynthSpec::uniform(int assets, double drift, double vol) {
  SynthSpec s;
  s.drift = Eigen::VectorXd::Constant(assets, drift);
  s.vol = Eigen::VectorXd::Constant(assets, vol);
  return s;
}

SynthMarket synth_market(std::uint64_t seed, int assets, int days,
                         const SynthSpec& spec) {
  if (assets < 1 || days < 1)
    throw ConfigError("synth_market: need assets >= 1 and days >= 1");
  if (spec.drift.size() != assets || spec.vol.size() != assets)
    throw ConfigError("synth_market: drift/vol must have one entry per asset");

  Rng rng(seed);
  const int D = assets;
  const int T = days;

  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(T, D);
  Eigen::MatrixXd close(T, D), open(T, D), high(T, D), low(T, D), vol(T, D);

  for (int t = 0; t < T; ++t) {
    const double sign =
        (spec.regime_shift_time >= 0 && t >= spec.regime_shift_time) ? -1.0
                                                                     : 1.0;
    for (int d = 0; d < D; ++d) {
      double momentum = 0.0;
      if (t >= 1 && spec.momentum_strength != 0.0) {
        const int lo = std::max(1, t - spec.momentum_window);
        for (int i = lo; i < t; ++i) momentum += r(i, d);
        if (t - lo > 0) momentum /= static_cast<double>(t - lo);
      }
      const double eps = rng.normal();
      const double n1 = std::abs(rng.normal());
      const double n2 = std::abs(rng.normal());
      const double n3 = rng.normal();

      double ret = 0.0;
      if (t >= 1) {
        ret = spec.drift[d] + spec.momentum_strength * sign * momentum +
              spec.vol[d] * eps;
        ret = std::max(ret, -0.95);  // keeps prices positive
      }
      r(t, d) = ret;

      const double prev = (t == 0) ? spec.start_price : close(t - 1, d);
      close(t, d) = (t == 0) ? spec.start_price : prev * (1.0 + ret);
      open(t, d) = prev;
      const double hi_pad = 1.0 + 0.25 * spec.vol[d] * n1;
      const double lo_pad = 1.0 - std::min(0.9, 0.25 * spec.vol[d] * n2);
      high(t, d) = std::max(open(t, d), close(t, d)) * hi_pad;
      low(t, d) = std::min(open(t, d), close(t, d)) * lo_pad;
      vol(t, d) = 1e6 * std::exp(0.25 * n3);
    }
  }

  SynthMarket out;
  out.returns = r;
  data::Panel& p = out.panel;
  p.tickers.resize(D);
  for (int d = 0; d < D; ++d) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "T%03d", d);
    p.tickers[d] = buf;
  }
  // Consecutive weekdays starting Monday 2000-01-03.
  p.calendar.reserve(T);
  data::Date d0 = data::Date::from_ymd(2000, 1, 3);
  int serial = d0.serial;
  while (static_cast<int>(p.calendar.size()) < T) {
    const int dow = ((serial % 7) + 7) % 7;  // 1970-01-01 was a Thursday (4)
    const int weekday = (dow + 4) % 7;       // 0 = Sunday
    if (weekday != 0 && weekday != 6) p.calendar.push_back(data::Date{serial});
    ++serial;
  }
  p.open = open;
  p.high = high;
  p.low = low;
  p.close = close;
  p.volume = vol;
  p.has_market_cap = spec.with_market_cap;
  if (spec.with_market_cap) {
    p.market_cap.resize(T, D);
    for (int d = 0; d < D; ++d)
      p.market_cap.col(d) = close.col(d) * (1e7 * static_cast<double>(D - d));
  } else {
    p.market_cap = Eigen::MatrixXd::Constant(T, D, kNaN);
  }
  return out;
}

MarketEnv::MarketEnv(const data::AlignedPanel& aligned,
                     const Eigen::MatrixXd& metrics, Options options)
    : panel_(aligned), metrics_(metrics), opt_(options) {
  const Eigen::Index T = static_cast<Eigen::Index>(aligned.dates.size());
  if (metrics_.size() == 0) metrics_ = Eigen::MatrixXd::Zero(T, 0);
  if (metrics_.rows() != T)
    throw ShapeError("MarketEnv: metrics rows must match the calendar");
  n_assets_ = static_cast<Eigen::Index>(aligned.tickers.size()) + 1;

  first_ = -1;
  for (Eigen::Index t = 1; t < T; ++t) {
    if (metrics_.row(t).allFinite()) {
      first_ = static_cast<int>(t);
      break;
    }
  }
  if (first_ < 0)
    throw StateError("MarketEnv: no date satisfies the indicator warm-up");
  last_ = static_cast<int>(T) - 1;
  if (first_ >= last_)
    throw StateError("MarketEnv: no tradable days after warm-up");
  span_begin_ = first_;
  span_end_ = last_;
  reset(first_);
}

void MarketEnv::set_span(int begin, int end) {
  if (begin < first_ || end > last_ || begin >= end)
    throw StateError("MarketEnv::set_span: invalid span [" +
                     std::to_string(begin) + ", " + std::to_string(end) +
                     "), tradable range is [" + std::to_string(first_) + ", " +
                     std::to_string(last_) + ")");
  span_begin_ = begin;
  span_end_ = end;
}

Eigen::Index MarketEnv::state_dim() const {
  return 2 * n_assets_ + metrics_.cols() + 1;
}

Eigen::VectorXd MarketEnv::realized_returns(int t) const {
  Eigen::VectorXd delta(n_assets_);
  delta[kRiskFreeIndex] = opt_.risk_free_rate;
  delta.tail(n_assets_ - 1) = panel_.returns.row(t - 1).transpose();
  return delta;
}

Eigen::VectorXd MarketEnv::metrics_row(int t) const {
  return metrics_.row(t).transpose();
}

MarketState MarketEnv::make_state(int t, const Eigen::VectorXd& holdings,
                                  double wealth) const {
  max_data_index_ = std::max(max_data_index_, t);
  return assemble_state(realized_returns(t), holdings, metrics_row(t), wealth);
}

void MarketEnv::reset(int t, double wealth) {
  if (t < 0) t = span_begin_;
  if (t < span_begin_ || t >= span_end_)
    throw StateError("MarketEnv::reset: index outside the active span");
  cursor_ = t;
  max_data_index_ = 0;
  Eigen::VectorXd cash = Eigen::VectorXd::Zero(n_assets_);
  cash[kRiskFreeIndex] = 1.0;
  state_ = make_state(t, cash, wealth);
}

Eigen::VectorXd MarketEnv::sanitize(const PortfolioAction& action,
                                    int t) const {
  if (action.weights.size() != n_assets_)
    throw ShapeError("MarketEnv: action size mismatch");
  Eigen::VectorXd w = action.weights;
  for (Eigen::Index j = 0; j + 1 < n_assets_; ++j) {
    if (t >= panel_.delisted_at[static_cast<std::size_t>(j)]) {
      w[kRiskFreeIndex] += w[j + 1];
      w[j + 1] = 0.0;
    }
  }
  return w;
}

double MarketEnv::forward_sharpe(int t, const Eigen::VectorXd& weights,
                                 double cost_fraction) const {
  const int horizon = std::min(opt_.reward_window, span_end_ - t);
  if (horizon < 2) return opt_.degenerate_reward;
  Eigen::VectorXd realized(horizon), rf(horizon);
  for (int i = 1; i <= horizon; ++i) {
    realized[i - 1] = realized_returns(t + i).dot(weights);
    rf[i - 1] = opt_.risk_free_rate;
  }
  realized[0] -= cost_fraction;
  try {
    return reward_sharpe(realized, rf);
  } catch (const DegenerateError&) {
    ++degenerate_rewards_;
    return opt_.degenerate_reward;
  }
}

MarketEnv::StepResult MarketEnv::step_action(const PortfolioAction& action) {
  if (done()) throw StateError("MarketEnv: episode is finished");
  const int t = cursor_;
  Eigen::VectorXd target = sanitize(action, t);

  const MarketState& s = state_;
  const double cost =
      transaction_cost(opt_.cost, target, s.weights, s.wealth);
  const Eigen::VectorXd delta_next = realized_returns(t + 1);
  const double gross = 1.0 + delta_next.dot(target);
  const double wealth_next = gross * s.wealth - cost;

  StepResult out;
  if (!(wealth_next > 0.0)) {
    out.bankrupt = true;
    cursor_ = last_;
    return out;
  }

  const double reward = forward_sharpe(t, target, cost / s.wealth);
  MarketState next;
  next.returns = delta_next;
  next.weights = target;
  next.metrics = metrics_row(t + 1);
  next.wealth = wealth_next;
  max_data_index_ = std::max(max_data_index_, t + 1);

  out.transition.state = flatten(s);
  out.transition.action = target;
  out.transition.reward = reward;
  out.transition.next_state = flatten(next);
  out.net_return = (wealth_next - s.wealth) / s.wealth;

  state_ = next;
  ++cursor_;
  return out;
}

}  // namespace derl::env
