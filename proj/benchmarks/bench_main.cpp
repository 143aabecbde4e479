#include <benchmark/benchmark.h>

#include "derl/analysis.hpp"
#include "derl/indicators.hpp"
#include "derl/market.hpp"
#include "derl/nn.hpp"
#include "derl/rng.hpp"
#include "derl/wae.hpp"

namespace {

using namespace derl;

void BM_ForwardBatch(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  const auto net = nn::init_mlp({64, width, width, 8}, 1, 0.1);
  Rng rng(2);
  const Eigen::MatrixXd xs = rng.normal_matrix(64, 40);
  for (auto _ : state) {
    auto out = nn::forward_batch(net, xs);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_ForwardBatch)->Arg(64)->Arg(256)->Arg(512);

void BM_Backward(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  const auto net = nn::init_mlp({64, width, width, 8}, 1, 0.1);
  Rng rng(2);
  const Eigen::MatrixXd xs = rng.normal_matrix(64, 40);
  const Eigen::MatrixXd up = rng.normal_matrix(8, 40);
  for (auto _ : state) {
    auto grads = nn::backward(net, xs, up);
    benchmark::DoNotOptimize(grads.input.data());
  }
}
BENCHMARK(BM_Backward)->Arg(64)->Arg(256)->Arg(512);

void BM_MmdEstimator(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(3);
  const Eigen::MatrixXd a = rng.normal_matrix(n, 8);
  const Eigen::MatrixXd b = rng.normal_matrix(n, 8);
  const wae::KernelSpec kernel{8.0};
  for (auto _ : state) {
    benchmark::DoNotOptimize(wae::mmd(a, b, kernel));
  }
}
BENCHMARK(BM_MmdEstimator)->Arg(40)->Arg(128);

void BM_WaeTrainStep(benchmark::State& state) {
  auto ae = wae::make_autoencoder(128, 6, 16, {128, 128}, 7);
  Rng rng(8);
  wae::Batch batch;
  batch.states = rng.normal_matrix(128, 40);
  batch.actions = rng.normal_matrix(6, 40);
  batch.next_states = rng.normal_matrix(128, 40);
  auto enc_opt = nn::OptimizerState::adam(1e-3);
  auto dec_opt = nn::OptimizerState::adam(1e-3);
  const wae::KernelSpec kernel{16.0};
  for (auto _ : state) {
    auto parts =
        wae::wae_train_step(ae, batch, 2.0, kernel, enc_opt, dec_opt, rng);
    benchmark::DoNotOptimize(parts.total);
  }
}
BENCHMARK(BM_WaeTrainStep);

void BM_IndicatorBlock(benchmark::State& state) {
  const int names = static_cast<int>(state.range(0));
  const auto m = env::synth_market(
      9, names, 756, env::SynthSpec::uniform(names, 3e-4, 0.015));
  const auto aligned =
      data::align(m.panel, m.panel.tickers, m.panel.calendar.front(),
                  m.panel.calendar.back());
  const auto specs = ind::default_indicator_set();
  for (auto _ : state) {
    auto block = ind::build_metrics_block(aligned, specs, {});
    benchmark::DoNotOptimize(block.values.data());
  }
}
BENCHMARK(BM_IndicatorBlock)->Arg(5)->Arg(25);

void BM_LassoFit(benchmark::State& state) {
  Rng rng(10);
  const int T = 500, k = 24;
  Eigen::MatrixXd X = rng.normal_matrix(T, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    X.col(j).array() -= X.col(j).mean();
    X.col(j) /= std::sqrt(X.col(j).squaredNorm() / T);
  }
  Eigen::VectorXd y(T);
  for (int t = 0; t < T; ++t)
    y[t] = 1.5 * X(t, 0) - 0.6 * X(t, 5) + 0.5 * rng.normal();
  for (auto _ : state) {
    auto fit = stats::lasso(y, X, 0.05);
    benchmark::DoNotOptimize(fit.beta.data());
  }
}
BENCHMARK(BM_LassoFit);

void BM_NeweyWest(benchmark::State& state) {
  Rng rng(11);
  const int T = 2000;
  Eigen::MatrixXd X(T, 4);
  Eigen::VectorXd y(T);
  for (int t = 0; t < T; ++t) {
    X(t, 0) = 1.0;
    for (int j = 1; j < 4; ++j) X(t, j) = rng.normal();
    y[t] = X.row(t).sum() + rng.normal();
  }
  for (auto _ : state) {
    auto reg = stats::ols_newey_west(y, X, stats::default_nw_lags(T));
    benchmark::DoNotOptimize(reg.beta.data());
  }
}
BENCHMARK(BM_NeweyWest);

void BM_EnvStep(benchmark::State& state) {
  const auto m =
      env::synth_market(12, 10, 500, env::SynthSpec::uniform(10, 3e-4, 0.01));
  const auto aligned =
      data::align(m.panel, m.panel.tickers, m.panel.calendar.front(),
                  m.panel.calendar.back());
  env::MarketEnv::Options opts;
  opts.reward_window = 42;
  env::MarketEnv environment(aligned, Eigen::MatrixXd(), opts);
  Rng rng(13);
  environment.reset();
  for (auto _ : state) {
    if (environment.done()) environment.reset();
    auto sr = environment.step_action(
        env::project_long_only(rng.normal_vector(environment.assets())));
    benchmark::DoNotOptimize(sr.net_return);
  }
}
BENCHMARK(BM_EnvStep);

}  // namespace

BENCHMARK_MAIN();
