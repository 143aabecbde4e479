#include <doctest.h>

#include <cmath>

#include "derl/analysis.hpp"
#include "derl/errors.hpp"
#include "derl/rng.hpp"

using namespace derl;

TEST_CASE("ols: exact fit recovers the slope with zero residuals") {
  const int T = 50;
  Eigen::MatrixXd X(T, 1);
  Eigen::VectorXd y(T);
  for (int t = 0; t < T; ++t) {
    X(t, 0) = 0.1 * t;
    y[t] = 2.0 * X(t, 0);
  }
  const auto r = stats::ols_newey_west(y, X, 3);
  CHECK(r.beta[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.residuals.isZero(1e-10));
  CHECK(r.adj_r2 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ols: lag 0 equals White standard errors") {
  Rng rng(3);
  const int T = 200;
  Eigen::MatrixXd X(T, 2);
  Eigen::VectorXd y(T);
  for (int t = 0; t < T; ++t) {
    X(t, 0) = 1.0;
    X(t, 1) = rng.normal();
    y[t] = 0.5 + 0.8 * X(t, 1) + (1.0 + 0.5 * std::abs(X(t, 1))) * rng.normal();
  }
  const auto r = stats::ols_newey_west(y, X, 0);

  // Direct White covariance: (X'X)^-1 (sum e^2 x x') (X'X)^-1.
  const Eigen::MatrixXd xtx_inv = (X.transpose() * X).inverse();
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(2, 2);
  for (int t = 0; t < T; ++t) {
    const Eigen::Vector2d xt = X.row(t).transpose();
    meat += r.residuals[t] * r.residuals[t] * xt * xt.transpose();
  }
  const Eigen::MatrixXd white = xtx_inv * meat * xtx_inv;
  CHECK((r.covariance - white).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("ols: NW shrinks t-values under positive autocorrelation") {
  // Simulation oracle with AR(1) errors, fixed seed.
  Rng rng(11);
  const int T = 600;
  Eigen::MatrixXd X(T, 2);
  Eigen::VectorXd y(T);
  double u = 0.0;
  for (int t = 0; t < T; ++t) {
    X(t, 0) = 1.0;
    X(t, 1) = rng.normal();
    u = 0.8 * u + rng.normal();
    y[t] = 1.0 + 0.5 * X(t, 1) + u;
  }
  const auto naive = stats::ols_newey_west(y, X, 0);
  const auto hac = stats::ols_newey_west(y, X, stats::default_nw_lags(T));
  CHECK(std::abs(hac.t_values[0]) < std::abs(naive.t_values[0]));
}

TEST_CASE("ols rejects rank-deficient designs") {
  Eigen::MatrixXd X(10, 2);
  X.col(0).setOnes();
  X.col(1).setOnes();  // duplicate column
  CHECK_THROWS_AS(stats::ols_newey_west(Eigen::VectorXd::Zero(10), X, 0),
                  NumericError);
}

TEST_CASE("default_nw_lags follows the floor(4 (T/100)^{2/9}) rule") {
  CHECK(stats::default_nw_lags(100) == 4);
  CHECK(stats::default_nw_lags(50) == 3);
  CHECK(stats::default_nw_lags(1000) == 6);
}

namespace {

// Population-standardized columns, centered response.
void standardize_columns(Eigen::MatrixXd& X) {
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double mean = X.col(j).mean();
    X.col(j).array() -= mean;
    const double scale =
        std::sqrt(X.col(j).squaredNorm() / static_cast<double>(X.rows()));
    if (scale > 0) X.col(j) /= scale;
  }
}

}  // namespace

TEST_CASE("lasso: full shrinkage at large lambda") {
  Rng rng(21);
  Eigen::MatrixXd X = rng.normal_matrix(80, 4);
  standardize_columns(X);
  Eigen::VectorXd y(80);
  for (int t = 0; t < 80; ++t) y[t] = 3.0 + X(t, 0) + 0.2 * rng.normal();
  const auto fit = stats::lasso(y, X, 1e6);
  CHECK(fit.beta.isZero(0.0));
  CHECK(fit.intercept == doctest::Approx(y.mean()));
}

TEST_CASE("lasso: lambda 0 equals OLS") {
  Rng rng(22);
  const int T = 120;
  Eigen::MatrixXd X = rng.normal_matrix(T, 3);
  standardize_columns(X);
  Eigen::VectorXd y(T);
  for (int t = 0; t < T; ++t)
    y[t] = 0.7 + 1.5 * X(t, 0) - 0.4 * X(t, 2) + 0.3 * rng.normal();

  const auto fit = stats::lasso(y, X, 0.0);
  Eigen::MatrixXd Xd(T, 4);
  Xd.col(0).setOnes();
  Xd.rightCols(3) = X;
  const auto ols = stats::ols_newey_west(y, Xd, 0);
  CHECK(std::abs(fit.intercept - ols.beta[0]) < 1e-6);
  for (int j = 0; j < 3; ++j)
    CHECK(std::abs(fit.beta[j] - ols.beta[j + 1]) < 1e-6);
}

TEST_CASE("lasso: univariate closed form is the soft threshold") {
  Rng rng(23);
  const int T = 300;
  Eigen::MatrixXd X = rng.normal_matrix(T, 1);
  standardize_columns(X);
  Eigen::VectorXd y(T);
  for (int t = 0; t < T; ++t) y[t] = 0.8 * X(t, 0) + 0.2 * rng.normal();
  y.array() -= y.mean();

  const double cov = X.col(0).dot(y) / T;
  for (double lambda : {0.01, 0.2, 2.0}) {
    const auto fit = stats::lasso(y, X, lambda);
    const double expected =
        (cov > lambda) ? cov - lambda : (cov < -lambda ? cov + lambda : 0.0);
    CHECK(fit.beta[0] == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("lasso: KKT conditions hold at the solution") {
  Rng rng(24);
  const int T = 150;
  Eigen::MatrixXd X = rng.normal_matrix(T, 6);
  standardize_columns(X);
  Eigen::VectorXd y(T);
  for (int t = 0; t < T; ++t)
    y[t] = 2.0 * X(t, 0) - 1.0 * X(t, 1) + 0.5 * rng.normal();

  const double lambda = 0.1;
  const auto fit = stats::lasso(y, X, lambda);
  const Eigen::VectorXd resid =
      y - Eigen::VectorXd::Constant(T, fit.intercept) - X * fit.beta;
  for (int j = 0; j < 6; ++j) {
    const double grad_j = X.col(j).dot(resid) / T;  // -d(smooth)/d(beta_j)
    if (fit.beta[j] == 0.0) {
      CHECK(std::abs(grad_j) <= lambda + 1e-6);
    } else {
      CHECK(grad_j == doctest::Approx(lambda * (fit.beta[j] > 0 ? 1.0 : -1.0))
                          .epsilon(1e-6));
    }
  }
}

TEST_CASE("lasso_cv picks a lambda that keeps the planted signal") {
  Rng rng(25);
  const int T = 100;
  Eigen::MatrixXd X = rng.normal_matrix(T, 5);
  standardize_columns(X);
  Eigen::VectorXd y(T);
  for (int t = 0; t < T; ++t) y[t] = 1.8 * X(t, 2) + 0.3 * rng.normal();
  const double lambda = stats::lasso_cv_lambda(y, X, 5, 20, 7);
  const auto fit = stats::lasso(y, X, lambda);
  CHECK(fit.beta[2] != 0.0);
}

TEST_CASE("selection_report: rates, means, planted signal") {
  const int P = 60;
  Eigen::MatrixXd coef = Eigen::MatrixXd::Zero(P, 3);
  Rng rng(31);
  for (int p = 0; p < P; ++p) {
    coef(p, 0) = 0.0;                      // never selected
    coef(p, 1) = 1.5;                      // always selected, constant
    coef(p, 2) = rng.uniform() < 0.3 ? 0.5 : 0.0;
  }
  const auto rep =
      stats::selection_report(coef, {"dead", "constant", "sometimes"});
  CHECK(rep.selection_rate[0] == 0.0);
  CHECK(rep.mean_coef[0] == 0.0);
  CHECK(rep.selection_rate[1] == 100.0);
  CHECK(rep.mean_coef[1] == doctest::Approx(1.5));
  CHECK(rep.selection_rate[2] > 0.0);
  CHECK(rep.selection_rate[2] < 100.0);

  // Planted-signal design: the true predictor tops the selection rates.
  const int T = 80, periods = 40;
  Eigen::MatrixXd rates_coef(periods, 4);
  Rng sim(32);
  for (int p = 0; p < periods; ++p) {
    Eigen::MatrixXd X = sim.normal_matrix(T, 4);
    standardize_columns(X);
    Eigen::VectorXd y(T);
    for (int t = 0; t < T; ++t) y[t] = 2.0 * X(t, 1) + 0.5 * sim.normal();
    const auto fit = stats::lasso(y, X, 0.3);
    rates_coef.row(p) = fit.beta.transpose();
  }
  const auto planted =
      stats::selection_report(rates_coef, {"a", "signal", "c", "d"});
  int best = 0;
  for (int j = 1; j < 4; ++j)
    if (planted.selection_rate[j] > planted.selection_rate[best]) best = j;
  CHECK(best == 1);
}

TEST_CASE("ablation contribution and market regression") {
  Rng rng(41);
  const int T = 400;
  Eigen::VectorXd market(T), vix(T);
  for (int t = 0; t < T; ++t) {
    market[t] = 0.01 * rng.normal();
    vix[t] = 18.0 + 3.0 * rng.normal();
  }

  // Identical runs: contribution and slopes vanish.
  Eigen::VectorXd full = market * 0.5;
  const auto zero = stats::ablation_contribution(full, full);
  CHECK(zero.isZero(0.0));
  const auto reg0 = stats::regress_on_market(zero, market, vix, 4);
  CHECK(reg0.beta.isZero(1e-12));

  // Exact linear dependence on the market.
  const Eigen::VectorXd contrib = -0.5 * market;
  const auto reg1 = stats::regress_on_market(contrib, market, vix, 4);
  CHECK(reg1.beta[1] == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(reg1.adj_r2 == doctest::Approx(1.0).epsilon(1e-9));

  // Planted VIX dependence recovered within 2 NW standard errors.
  Eigen::VectorXd noisy(T);
  const double b_vix = 3e-4;
  for (int t = 0; t < T; ++t)
    noisy[t] = b_vix * vix[t] + 0.002 * rng.normal();
  const auto reg2 = stats::regress_on_market(noisy, market, vix, 4);
  const double se = reg2.beta[2] / reg2.t_values[2];
  CHECK(std::abs(reg2.beta[2] - b_vix) < 2.0 * std::abs(se));
}

TEST_CASE("structural deviation") {
  Eigen::VectorXd x(3);
  x << 10.0, 12.0, 6.0;
  const auto d = stats::structural_deviation(x, 10.0, 2.0);
  CHECK(d[0] == 0.0);
  CHECK(d[1] == 1.0);
  CHECK(d[2] == 2.0);
  CHECK(d.minCoeff() >= 0.0);
  CHECK_THROWS_AS(stats::structural_deviation(x, 10.0, 0.0), DegenerateError);
}

namespace {

stats::CharacteristicsInput small_input(int T, int N, std::uint64_t seed) {
  Rng rng(seed);
  stats::CharacteristicsInput in;
  in.dates.reserve(T);
  data::Date d = data::Date::from_ymd(2021, 3, 1);
  for (int t = 0; t < T; ++t) in.dates.push_back(d.add_days(t));
  in.returns = 0.02 * rng.normal_matrix(T, N);
  in.volume = 1000.0 * Eigen::MatrixXd::Ones(T, N);
  in.dollar_volume = 50000.0 * Eigen::MatrixXd::Ones(T, N);
  in.shrout = 1e6 * Eigen::MatrixXd::Ones(T, N);
  in.high = Eigen::MatrixXd::Constant(T, N, 101.0);
  in.low = Eigen::MatrixXd::Constant(T, N, 99.0);
  in.market = 0.01 * rng.normal_vector(T);
  in.risk_free = Eigen::VectorXd::Zero(T);
  return in;
}

}  // namespace

TEST_CASE("characteristics: windowed oracles") {
  const int T = 40, N = 4;
  auto in = small_input(T, N, 51);

  // Zero-volume days count into Ztrade.
  in.volume.col(1).setZero();
  // Zero returns give a zero Trend.
  in.returns.col(2).setZero();

  const auto c7 = stats::compute_characteristics(in, 7);
  CHECK(c7.min_obs == 3);
  const int t = T - 1;
  // Seven consecutive calendar days hold exactly 7 daily rows here.
  CHECK(c7.raw[3](t, 1) == doctest::Approx(7.0));  // Ztrade
  CHECK(c7.raw[4](t, 2) == doctest::Approx(0.0));  // Trend

  // Retvol with 3 known returns.
  auto tiny = small_input(3, 3, 52);
  tiny.returns.col(0) << 0.01, 0.02, 0.03;
  const auto c = stats::compute_characteristics(tiny, 7);
  CHECK(c.raw[5](2, 0) == doctest::Approx(0.01).epsilon(1e-9));
  // Only two observations at t = 1: below the minimum, so missing.
  CHECK(std::isnan(c.raw[5](1, 0)));
}

TEST_CASE("characteristics: scale behavior under doubled shares") {
  const int T = 40, N = 5;
  auto base = small_input(T, N, 61);
  auto doubled = base;
  doubled.shrout *= 2.0;
  const auto a = stats::compute_characteristics(base, 14);
  const auto b = stats::compute_characteristics(doubled, 14);
  const int t = T - 1;
  for (int j = 0; j < N; ++j) {
    CHECK(b.raw[2](t, j) == doctest::Approx(0.5 * a.raw[2](t, j)));  // Turn
    CHECK(b.raw[4](t, j) == doctest::Approx(a.raw[4](t, j)));        // Trend
    CHECK(b.raw[5](t, j) == doctest::Approx(a.raw[5](t, j)));        // Retvol
    CHECK(b.raw[6](t, j) == doctest::Approx(a.raw[6](t, j)));        // Beta
  }
}

TEST_CASE("characteristics: cross-sectional standardization") {
  const int T = 35, N = 8;
  const auto in = small_input(T, N, 71);
  const auto c = stats::compute_characteristics(in, 14);
  const int t = T - 1;
  for (int ch : {4, 5, 6}) {
    double mean = 0.0;
    int n = 0;
    for (int j = 0; j < N; ++j) {
      const double v = c.standardized[ch](t, j);
      if (!std::isnan(v)) {
        mean += v;
        ++n;
      }
    }
    REQUIRE(n >= 2);
    mean /= n;
    CHECK(std::abs(mean) < 1e-8);
    double ss = 0.0;
    for (int j = 0; j < N; ++j) {
      const double v = c.standardized[ch](t, j);
      if (!std::isnan(v)) ss += (v - mean) * (v - mean);
    }
    CHECK(std::sqrt(ss / (n - 1)) == doctest::Approx(1.0).epsilon(1e-8));
  }
}
