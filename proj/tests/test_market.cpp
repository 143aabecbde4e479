#include <doctest.h>

#include <cmath>
#include <memory>

#include "derl/errors.hpp"
#include "derl/market.hpp"

using namespace derl;

TEST_CASE("project_long_only: uniform on equal logits, exact on [ln3, 0]") {
  const auto uniform = env::project_long_only(Eigen::VectorXd::Zero(4));
  for (int i = 0; i < 4; ++i)
    CHECK(uniform.weights[i] == doctest::Approx(0.25));

  Eigen::VectorXd logits(2);
  logits << std::log(3.0), 0.0;
  const auto a = env::project_long_only(logits);
  CHECK(a.weights[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(a.weights[1] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("project_long_only output is always on the simplex") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = env::project_long_only(10.0 * rng.normal_vector(6));
    CHECK(std::abs(a.weights.sum() - 1.0) < 1e-12);
    a.validate_long_only();
  }
}

TEST_CASE("project_long_short: formula and idempotence") {
  Eigen::VectorXd already(3);
  already << 0.2, 0.5, 0.3;
  CHECK(env::project_long_short(already).weights.isApprox(already, 1e-15));

  Eigen::VectorXd two(2);
  two << 1.0, 1.0;
  const auto p2 = env::project_long_short(two);
  CHECK(p2.weights[0] == doctest::Approx(0.5));
  CHECK(p2.weights[1] == doctest::Approx(0.5));

  const auto p3 = env::project_long_short(Eigen::VectorXd::Zero(3));
  for (int i = 0; i < 3; ++i)
    CHECK(p3.weights[i] == doctest::Approx(1.0 / 3));

  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto once = env::project_long_short(rng.normal_vector(5));
    const auto twice = env::project_long_short(once.weights);
    CHECK(once.weights.isApprox(twice.weights, 1e-12));
    CHECK(once.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("transaction_cost formula") {
  env::CostModel cm{0.001};
  Eigen::VectorXd w(2), a(2);
  w << 1.0, 0.0;
  a << 0.0, 1.0;
  CHECK(env::transaction_cost(cm, w, w, 100.0) == 0.0);
  // Full rotation: turnover 2, cost = 0.001 * 100 * 2.
  CHECK(env::transaction_cost(cm, a, w, 100.0) == doctest::Approx(0.2));
  CHECK(env::transaction_cost(env::CostModel{0.0}, a, w, 100.0) == 0.0);
}

TEST_CASE("transaction_cost is nondecreasing in turnover") {
  env::CostModel cm{0.002};
  Eigen::VectorXd w(3);
  w << 0.5, 0.3, 0.2;
  double last = 0.0;
  for (double shift : {0.0, 0.1, 0.2, 0.3}) {
    Eigen::VectorXd a = w;
    a[0] += shift;
    a[1] -= shift;
    const double c = env::transaction_cost(cm, a, w, 50.0);
    CHECK(c >= last);
    last = c;
  }
}

TEST_CASE("step: wealth transition and w' = a") {
  env::MarketState s;
  s.returns = Eigen::VectorXd::Zero(2);
  s.weights = Eigen::VectorXd::Constant(2, 0.5);
  s.metrics = Eigen::VectorXd(0);
  s.wealth = 100.0;

  env::PortfolioAction a{Eigen::VectorXd::Constant(2, 0.5)};
  Eigen::VectorXd delta(2);
  delta << 0.02, 0.0;
  const auto next = env::step(s, a, delta, Eigen::VectorXd(0),
                              env::CostModel{0.0});
  CHECK(next.wealth == doctest::Approx(101.0).epsilon(1e-12));
  CHECK(next.weights == a.weights);
  CHECK(next.returns == delta);

  // No-op market conserves wealth.
  const auto flat = env::step(s, a, Eigen::VectorXd::Zero(2),
                              Eigen::VectorXd(0), env::CostModel{0.0});
  CHECK(flat.wealth == 100.0);
}

TEST_CASE("step throws on bankruptcy") {
  env::MarketState s;
  s.returns = Eigen::VectorXd::Zero(1);
  s.weights = Eigen::VectorXd::Ones(1);
  s.metrics = Eigen::VectorXd(0);
  s.wealth = 1.0;
  env::PortfolioAction a{Eigen::VectorXd::Ones(1)};
  Eigen::VectorXd crash(1);
  crash << -1.0;
  CHECK_THROWS_AS(
      env::step(s, a, crash, Eigen::VectorXd(0), env::CostModel{0.0}),
      BankruptcyError);
}

TEST_CASE("reward_sharpe: hand oracle and edge cases") {
  Eigen::VectorXd r(3);
  r << 0.01, 0.02, 0.03;
  // mean 0.02, sample std 0.01 -> 2.0
  CHECK(env::reward_sharpe(r, Eigen::VectorXd::Zero(3)) ==
        doctest::Approx(2.0).epsilon(1e-12));

  Eigen::VectorXd alt(4);
  alt << 0.01, -0.01, 0.01, -0.01;
  CHECK(env::reward_sharpe(alt, Eigen::VectorXd::Zero(4)) ==
        doctest::Approx(0.0));

  CHECK_THROWS_AS(
      env::reward_sharpe(Eigen::VectorXd::Constant(5, 0.01),
                         Eigen::VectorXd::Zero(5)),
      DegenerateError);
  CHECK_THROWS_AS(env::reward_sharpe(Eigen::VectorXd::Constant(1, 0.01),
                                     Eigen::VectorXd::Zero(1)),
                  ShapeError);
}

TEST_CASE("reward_sharpe is invariant to a common shift") {
  Rng rng(9);
  const Eigen::VectorXd r = 0.01 * rng.normal_vector(20);
  const Eigen::VectorXd rf = 0.001 * rng.normal_vector(20);
  const double base = env::reward_sharpe(r, rf);
  const Eigen::VectorXd shift = Eigen::VectorXd::Constant(20, 0.42);
  CHECK(env::reward_sharpe(r + shift, rf + shift) ==
        doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("assemble_state dimensions and flatten round trip") {
  // 2D + h + 1 with D = 2, h = 0 gives length 5.
  const auto s = env::assemble_state(Eigen::VectorXd::Zero(2),
                                     Eigen::VectorXd::Constant(2, 0.5),
                                     Eigen::VectorXd(0), 1.0);
  CHECK(s.dim() == 5);
  CHECK(env::flatten(s).size() == 5);

  // Full-scale arithmetic: D = 501 assets and h = 14503 metrics.
  CHECK(2 * 501 + 14503 + 1 == 15506);

  Rng rng(10);
  env::MarketState big;
  big.returns = rng.normal_vector(3);
  big.weights = env::project_long_only(rng.normal_vector(3)).weights;
  big.metrics = rng.normal_vector(7);
  big.wealth = 2.5;
  const auto round = env::unflatten(env::flatten(big), 3, 7);
  CHECK(round.returns.isApprox(big.returns, 0.0));
  CHECK(round.weights.isApprox(big.weights, 0.0));
  CHECK(round.metrics.isApprox(big.metrics, 0.0));
  CHECK(round.wealth == big.wealth);
}

TEST_CASE("assemble_state rejects NaN metrics") {
  Eigen::VectorXd metrics(1);
  metrics << std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(env::assemble_state(Eigen::VectorXd::Zero(2),
                                      Eigen::VectorXd::Constant(2, 0.5),
                                      metrics, 1.0),
                  StateError);
}

TEST_CASE("synth_market: determinism and degenerate spec") {
  auto spec = env::SynthSpec::uniform(3, 0.0, 0.02);
  spec.vol[1] = 0.0;
  spec.drift[1] = 0.0;
  const auto a = env::synth_market(123, 3, 50, spec);
  const auto b = env::synth_market(123, 3, 50, spec);
  CHECK(a.panel.close == b.panel.close);
  CHECK(a.returns == b.returns);

  // Zero-vol asset keeps a constant price.
  for (int t = 0; t < 50; ++t)
    CHECK(a.panel.close(t, 1) == doctest::Approx(100.0));
}

TEST_CASE("synth_market returns are consistent with closes") {
  const auto m =
      env::synth_market(7, 2, 300, env::SynthSpec::uniform(2, 0.001, 0.02));
  for (int t = 1; t < 300; ++t)
    for (int d = 0; d < 2; ++d)
      CHECK(m.panel.close(t, d) / m.panel.close(t - 1, d) - 1.0 ==
            doctest::Approx(m.returns(t, d)).epsilon(1e-10));
}

TEST_CASE("synth_market drift matches its Monte-Carlo mean") {
  const double mu = 0.0005, vol = 0.01;
  const int T = 100000;
  const auto m =
      env::synth_market(99, 1, T, env::SynthSpec::uniform(1, mu, vol));
  const double mean = m.returns.col(0).tail(T - 1).mean();
  const double se = vol / std::sqrt(static_cast<double>(T - 1));
  CHECK(std::abs(mean - mu) < 3.0 * se);
}

namespace {

struct EnvFixture {
  std::unique_ptr<data::AlignedPanel> panel;
  std::unique_ptr<env::MarketEnv> env_;

  EnvFixture(int assets, int days, double drift, double vol,
             env::MarketEnv::Options opts = {}) {
    const auto m = env::synth_market(
        31, assets, days, env::SynthSpec::uniform(assets, drift, vol));
    panel = std::make_unique<data::AlignedPanel>(
        data::align(m.panel, m.panel.tickers, m.panel.calendar.front(),
                    m.panel.calendar.back()));
    env_ = std::make_unique<env::MarketEnv>(*panel, Eigen::MatrixXd(), opts);
  }
};

}  // namespace

TEST_CASE("MarketEnv: transitions satisfy s_next.w == a and audit holds") {
  env::MarketEnv::Options opts;
  opts.cost.rate = 0.001;
  opts.reward_window = 5;
  EnvFixture f(3, 60, 0.0005, 0.01, opts);
  auto& e = *f.env_;
  Rng rng(17);
  e.reset();
  while (!e.done()) {
    const int t = e.cursor();
    const auto a = env::project_long_only(rng.normal_vector(e.assets()));
    CHECK(e.max_data_index() <= t);
    const auto sr = e.step_action(a);
    REQUIRE(!sr.bankrupt);
    const auto next = env::unflatten(sr.transition.next_state, e.assets(), 0);
    CHECK(next.weights.isApprox(a.weights, 1e-12));
  }
}

TEST_CASE("MarketEnv: zero-rate flat market conserves wealth") {
  env::MarketEnv::Options opts;
  opts.cost.rate = 0.0;
  EnvFixture f(2, 30, 0.0, 0.0, opts);
  auto& e = *f.env_;
  Rng rng(18);
  e.reset();
  while (!e.done()) {
    const auto a = env::project_long_only(rng.normal_vector(e.assets()));
    const auto sr = e.step_action(a);
    CHECK(sr.net_return == 0.0);
  }
  CHECK(e.state().wealth == 1.0);
}

TEST_CASE("MarketEnv spans restrict episodes") {
  EnvFixture f(2, 50, 0.0, 0.01);
  auto& e = *f.env_;
  e.set_span(10, 20);
  e.reset();
  CHECK(e.cursor() == 10);
  CHECK_THROWS_AS(e.set_span(20, 10), StateError);
  CHECK_THROWS_AS(e.reset(25), StateError);
  int steps = 0;
  Rng rng(19);
  while (!e.done()) {
    e.step_action(env::project_long_only(rng.normal_vector(e.assets())));
    ++steps;
  }
  CHECK(steps == 10);
}
