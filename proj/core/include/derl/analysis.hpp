#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "derl/data.hpp"

namespace derl::stats {

struct RegressionResult {
  Eigen::VectorXd beta;
  Eigen::VectorXd t_values;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd residuals;
  double r2 = 0.0;
  double adj_r2 = 0.0;
};

// OLS with a Bartlett-kernel HAC covariance at the given lag; lags = 0
// reduces to White standard errors. Throws on rank deficiency.
RegressionResult ols_newey_west(const Eigen::VectorXd& y,
                                const Eigen::MatrixXd& X, int lags);

// floor(4 (T/100)^{2/9})
int default_nw_lags(int T);

struct LassoResult {
  Eigen::VectorXd beta;
  double intercept = 0.0;
  int iterations = 0;
};

// Coordinate descent on (1/2T)|y - b0 - X beta|^2 + lambda |beta|_1 with an
// unpenalized intercept; converges when the largest coefficient change drops
// below tol. Throws NumericError when max_iter is exhausted.
LassoResult lasso(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                  double lambda, double tol = 1e-8, int max_iter = 100000);

// 5-fold cross-validated lambda on a logarithmic grid under lambda_max.
double lasso_cv_lambda(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                       int folds = 5, int grid_size = 30,
                       std::uint64_t seed = 0);

struct SelectionReport {
  std::vector<std::string> names;
  Eigen::VectorXd selection_rate;  // percent of periods with nonzero coef
  Eigen::VectorXd mean_coef;       // zeros included
  Eigen::VectorXd t_values;        // NW t of the coefficient series mean
};

// coef_series: periods x features, NaN rows are skipped.
SelectionReport selection_report(const Eigen::MatrixXd& coef_series,
                                 const std::vector<std::string>& names);

Eigen::VectorXd ablation_contribution(const Eigen::VectorXd& returns_full,
                                      const Eigen::VectorXd& returns_ablated);

// contribution_t = b0 + b1 market_t + b2 vix_t + u_t with NW t-values.
RegressionResult regress_on_market(const Eigen::VectorXd& contribution,
                                   const Eigen::VectorXd& market,
                                   const Eigen::VectorXd& vix, int lags = -1);

// |(x - mean) / std| using unconditional training-period moments.
Eigen::VectorXd structural_deviation(const Eigen::VectorXd& series,
                                     double train_mean, double train_std);

enum class Characteristic {
  Illiq, Spread, Turn, Ztrade, Trend, Retvol, Beta, Ivol
};

std::string characteristic_name(Characteristic c);
inline constexpr int kNumCharacteristics = 8;

struct CharacteristicsInput {
  std::vector<data::Date> dates;
  Eigen::MatrixXd returns;        // T x N, day-over-day simple returns
  Eigen::MatrixXd dollar_volume;  // T x N
  Eigen::MatrixXd volume;         // T x N, shares
  Eigen::MatrixXd shrout;         // T x N, shares outstanding
  Eigen::MatrixXd high, low;      // T x N, spread proxy inputs
  Eigen::VectorXd market;         // T, market return
  Eigen::VectorXd risk_free;      // T
};

struct CharacteristicsMatrix {
  int window_days = 0;
  int min_obs = 0;
  // raw[c] and standardized[c]: T x N, NaN where below the observation
  // minimum. Standardization is cross-sectional per date.
  std::vector<Eigen::MatrixXd> raw;
  std::vector<Eigen::MatrixXd> standardized;
};

// Rolling calendar-day windows (7/14/30 days require 3/6/10 valid
// observations). Beta and Ivol come from a per-window CAPM regression of
// excess returns on market excess returns.
CharacteristicsMatrix compute_characteristics(const CharacteristicsInput& in,
                                              int window_days);

int min_observations(int window_days);

}  // namespace derl::stats
