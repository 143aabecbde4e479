#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "derl/data.hpp"
#include "derl/rng.hpp"

namespace derl::env {

// Raw market state s = (delta, w, l, x): per-asset gross-period simple
// returns, current portfolio weights, metrics block and account wealth.
// The risk-free asset sits at index 0 of every per-asset vector; its return
// is the configured per-period risk-free rate.
struct MarketState {
  Eigen::VectorXd returns;  // delta, size D
  Eigen::VectorXd weights;  // w, size D, on the simplex
  Eigen::VectorXd metrics;  // l, size h
  double wealth = 1.0;      // x > 0

  Eigen::Index assets() const { return returns.size(); }
  Eigen::Index dim() const { return 2 * returns.size() + metrics.size() + 1; }
};

struct PortfolioAction {
  Eigen::VectorXd weights;  // size D

  void validate_long_only(double tol = 1e-9) const;
};

struct TransitionTuple {
  Eigen::VectorXd state;       // flattened s
  Eigen::VectorXd action;      // a
  double reward = 0.0;         // r
  Eigen::VectorXd next_state;  // flattened s'
};

struct CostModel {
  double rate = 0.001;  // proportional cost on turnover
};

inline constexpr int kRiskFreeIndex = 0;

// Flattened layout: [delta (D), w (D), l (h), x]; unflatten is its inverse.
Eigen::VectorXd flatten(const MarketState& s);
MarketState unflatten(const Eigen::VectorXd& v, Eigen::Index assets,
                      Eigen::Index metrics);

// assemble_state: build s from a realized return row, holdings, metrics row
// and wealth. Throws StateError when metrics contain NaN (warm-up violated).
MarketState assemble_state(const Eigen::VectorXd& returns,
                           const Eigen::VectorXd& holdings,
                           const Eigen::VectorXd& metrics, double wealth);

// Softmax projection of raw logits onto the long-only simplex.
PortfolioAction project_long_only(const Eigen::VectorXd& logits);

// a_d <- a_d - (1/D) (sum_i a_i - 1); weights sum to one, sign-free.
PortfolioAction project_long_short(const Eigen::VectorXd& raw);

// cost = rate * x * sum_d |a_d - w_d| (risk-free leg included in turnover).
double transaction_cost(const CostModel& model, const Eigen::VectorXd& action,
                        const Eigen::VectorXd& holdings, double wealth);

// One transition: w' = a, x' = (sum_d (1 + delta'_d) a_d) x - c(a, w, x).
// Throws BankruptcyError when x' <= 0.
MarketState step(const MarketState& s, const PortfolioAction& a,
                 const Eigen::VectorXd& realized_returns,
                 const Eigen::VectorXd& realized_metrics,
                 const CostModel& cost);

// Rolling Sharpe reward: mean / sample-std of (realized - rf) over k >= 2
// periods. Throws DegenerateError on zero dispersion; callers map that to
// the configured cap (0 by default).
double reward_sharpe(const Eigen::VectorXd& realized,
                     const Eigen::VectorXd& risk_free);

struct SynthSpec {
  Eigen::VectorXd drift;        // per-asset daily drift (size D)
  Eigen::VectorXd vol;          // per-asset daily volatility (size D)
  double momentum_strength = 0.0;
  int momentum_window = 5;
  int regime_shift_time = -1;    // flips the momentum sign; -1 = never
  double start_price = 100.0;
  bool with_market_cap = false;

  static SynthSpec uniform(int assets, double drift, double vol);
};

struct SynthMarket {
  data::Panel panel;
  Eigen::MatrixXd returns;  // T x D, returns(t) realized over day t
};

// Deterministic synthetic OHLCV market:
//   r_t = drift + momentum_strength * sign_t * trailing_mean + vol * eps_t
// where sign_t flips at regime_shift_time. Close prices compound the
// returns; open/high/low/volume are derived deterministically.
SynthMarket synth_market(std::uint64_t seed, int assets, int days,
                         const SynthSpec& spec);

// Trading environment over an aligned panel slice. Decisions at date index t
// see data up to and including t; rewards are the k-day forward Sharpe of
// holding the chosen weights. Asset 0 is the risk-free leg.
class MarketEnv {
public:
  struct Options {
    CostModel cost;
    double risk_free_rate = 0.0;    // per period
    int reward_window = 42;         // k
    double degenerate_reward = 0.0; // value used when the window has zero std
  };

  // metrics: T x h block aligned with `aligned.dates`; rows with NaN are
  // invalid (warm-up). first/last: tradable decision index range [first,last).
  MarketEnv(const data::AlignedPanel& aligned, const Eigen::MatrixXd& metrics,
            Options options);

  Eigen::Index assets() const { return n_assets_; }     // includes risk-free
  Eigen::Index state_dim() const;
  int first_decision() const { return first_; }
  int last_decision() const { return last_; }

  // Restrict episodes to decisions in [begin, end); reward windows are
  // clamped at `end` so training never scores actions on later data.
  void set_span(int begin, int end);
  int span_begin() const { return span_begin_; }
  int span_end() const { return span_end_; }

  // Reset holdings to all-cash at decision index t (span start by default).
  void reset(int t = -1, double wealth = 1.0);

  const MarketState& state() const { return state_; }
  int cursor() const { return cursor_; }
  bool done() const { return cursor_ >= span_end_; }

  struct StepResult {
    TransitionTuple transition;
    double net_return = 0.0;  // (x' - x) / x
    bool bankrupt = false;
  };

  // Advance one day with the given action. Weights on delisted names are
  // redirected to the risk-free leg before costs are charged.
  StepResult step_action(const PortfolioAction& action);

  // Largest date index consumed when assembling the current decision state;
  // the no-look-ahead audit asserts max_data_index() <= cursor().
  int max_data_index() const { return max_data_index_; }

  // Times a zero-dispersion reward window was mapped to the configured cap.
  long degenerate_rewards() const { return degenerate_rewards_; }

  // Per-asset return vector delta_t realized over day t (indexable for
  // t >= 1); index 0 is the risk-free rate.
  Eigen::VectorXd realized_returns(int t) const;

private:
  Eigen::VectorXd metrics_row(int t) const;
  MarketState make_state(int t, const Eigen::VectorXd& holdings,
                         double wealth) const;
  double forward_sharpe(int t, const Eigen::VectorXd& weights,
                        double cost_fraction) const;
  Eigen::VectorXd sanitize(const PortfolioAction& action, int t) const;

  const data::AlignedPanel& panel_;
  Eigen::MatrixXd metrics_;
  Options opt_;
  Eigen::Index n_assets_ = 0;  // risky names + 1
  int first_ = 0;
  int last_ = 0;
  int span_begin_ = 0;
  int span_end_ = 0;
  int cursor_ = 0;
  mutable int max_data_index_ = 0;
  mutable long degenerate_rewards_ = 0;
  MarketState state_;
};

}  // namespace derl::env
