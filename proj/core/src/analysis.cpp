#include "derl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "derl/errors.hpp"
#include "derl/rng.hpp"

namespace derl::stats {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

RegressionResult ols_newey_west(const Eigen::VectorXd& y,
                                const Eigen::MatrixXd& X, int lags) {
  const Eigen::Index T = X.rows();
  const Eigen::Index k = X.cols();
  if (y.size() != T) throw ShapeError("ols: y/X row mismatch");
  if (T <= k) throw ShapeError("ols: need more rows than columns");
  if (lags < 0) throw ConfigError("ols: lags must be >= 0");

  const Eigen::MatrixXd xtx = X.transpose() * X;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(xtx);
  if (!lu.isInvertible())
    throw NumericError("ols: singular design matrix");
  const Eigen::MatrixXd xtx_inv = lu.inverse();

  RegressionResult r;
  r.beta = xtx_inv * (X.transpose() * y);
  r.residuals = y - X * r.beta;

  // Bartlett-kernel HAC meat.
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::VectorXd xe = X.row(t).transpose() * r.residuals[t];
    meat += xe * xe.transpose();
  }
  for (int l = 1; l <= lags; ++l) {
    const double w = 1.0 - static_cast<double>(l) / (lags + 1.0);
    Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index t = l; t < T; ++t) {
      const Eigen::VectorXd a = X.row(t).transpose() * r.residuals[t];
      const Eigen::VectorXd b = X.row(t - l).transpose() * r.residuals[t - l];
      gamma += a * b.transpose();
    }
    meat += w * (gamma + gamma.transpose());
  }
  r.covariance = xtx_inv * meat * xtx_inv;

  r.t_values.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double se = std::sqrt(r.covariance(j, j));
    r.t_values[j] = se > 0.0 ? r.beta[j] / se : kNaN;
  }

  const double tss = (y.array() - y.mean()).square().sum();
  const double rss = r.residuals.squaredNorm();
  r.r2 = tss > 0.0 ? 1.0 - rss / tss : 0.0;
  r.adj_r2 = 1.0 - (1.0 - r.r2) * static_cast<double>(T - 1) /
                       static_cast<double>(T - k);
  return r;
}

int default_nw_lags(int T) {
  return static_cast<int>(
      std::floor(4.0 * std::pow(static_cast<double>(T) / 100.0, 2.0 / 9.0)));
}

namespace {
double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}
}  // namespace

LassoResult lasso(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                  double lambda, double tol, int max_iter) {
  const Eigen::Index T = X.rows();
  const Eigen::Index k = X.cols();
  if (y.size() != T) throw ShapeError("lasso: y/X row mismatch");
  if (lambda < 0.0) throw ConfigError("lasso: lambda must be >= 0");
  const double invT = 1.0 / static_cast<double>(T);

  Eigen::VectorXd col_ms(k);  // (1/T) sum x_j^2
  for (Eigen::Index j = 0; j < k; ++j)
    col_ms[j] = invT * X.col(j).squaredNorm();

  LassoResult res;
  res.beta = Eigen::VectorXd::Zero(k);
  res.intercept = y.mean();
  Eigen::VectorXd resid = y.array() - res.intercept;

  for (int it = 1; it <= max_iter; ++it) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (col_ms[j] == 0.0) continue;
      const double old = res.beta[j];
      const double rho = invT * X.col(j).dot(resid) + col_ms[j] * old;
      const double updated = soft_threshold(rho, lambda) / col_ms[j];
      if (updated != old) {
        resid -= (updated - old) * X.col(j);
        res.beta[j] = updated;
        max_change = std::max(max_change, std::abs(updated - old));
      }
    }
    // Unpenalized intercept re-centering.
    const double shift = resid.mean();
    if (shift != 0.0) {
      res.intercept += shift;
      resid.array() -= shift;
      max_change = std::max(max_change, std::abs(shift));
    }
    res.iterations = it;
    if (max_change < tol) return res;
  }
  throw NumericError("lasso: no convergence after " +
                     std::to_string(max_iter) + " iterations");
}

double lasso_cv_lambda(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                       int folds, int grid_size, std::uint64_t seed) {
  const Eigen::Index T = X.rows();
  if (T < folds) throw ShapeError("lasso_cv: need at least `folds` rows");
  const double invT = 1.0 / static_cast<double>(T);
  const Eigen::VectorXd yc = y.array() - y.mean();
  double lambda_max = 0.0;
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    lambda_max = std::max(lambda_max, std::abs(invT * X.col(j).dot(yc)));
  if (lambda_max <= 0.0) return 0.0;

  // Deterministic shuffled fold assignment.
  Rng rng(seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(T));
  for (Eigen::Index i = 0; i < T; ++i) order[static_cast<std::size_t>(i)] = i;
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.integer(i)]);

  std::vector<double> grid(static_cast<std::size_t>(grid_size));
  for (int g = 0; g < grid_size; ++g)
    grid[static_cast<std::size_t>(g)] =
        lambda_max * std::pow(1e-3, static_cast<double>(g) / (grid_size - 1));

  double best_lambda = grid.front();
  double best_mse = std::numeric_limits<double>::infinity();
  for (double lam : grid) {
    double mse = 0.0;
    long count = 0;
    for (int f = 0; f < folds; ++f) {
      std::vector<Eigen::Index> train_idx, test_idx;
      for (std::size_t i = 0; i < order.size(); ++i) {
        if (static_cast<int>(i % static_cast<std::size_t>(folds)) == f)
          test_idx.push_back(order[i]);
        else
          train_idx.push_back(order[i]);
      }
      if (train_idx.size() < 2 || test_idx.empty()) continue;
      Eigen::MatrixXd Xtr(static_cast<Eigen::Index>(train_idx.size()), X.cols());
      Eigen::VectorXd ytr(static_cast<Eigen::Index>(train_idx.size()));
      for (std::size_t i = 0; i < train_idx.size(); ++i) {
        Xtr.row(static_cast<Eigen::Index>(i)) = X.row(train_idx[i]);
        ytr[static_cast<Eigen::Index>(i)] = y[train_idx[i]];
      }
      const LassoResult fit = lasso(ytr, Xtr, lam);
      for (Eigen::Index i : test_idx) {
        const double pred = fit.intercept + X.row(i).dot(fit.beta);
        mse += (y[i] - pred) * (y[i] - pred);
        ++count;
      }
    }
    if (count == 0) continue;
    mse /= static_cast<double>(count);
    if (mse < best_mse) {
      best_mse = mse;
      best_lambda = lam;
    }
  }
  return best_lambda;
}

SelectionReport selection_report(const Eigen::MatrixXd& coef_series,
                                 const std::vector<std::string>& names) {
  const Eigen::Index P = coef_series.rows();
  const Eigen::Index k = coef_series.cols();
  if (static_cast<Eigen::Index>(names.size()) != k)
    throw ShapeError("selection_report: name/column mismatch");
  if (P < 2) throw ShapeError("selection_report: need >= 2 periods");

  SelectionReport rep;
  rep.names = names;
  rep.selection_rate.resize(k);
  rep.mean_coef.resize(k);
  rep.t_values.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    std::vector<double> vals;
    int nonzero = 0;
    for (Eigen::Index p = 0; p < P; ++p) {
      const double c = coef_series(p, j);
      if (std::isnan(c)) continue;
      vals.push_back(c);
      if (c != 0.0) ++nonzero;
    }
    if (vals.empty()) {
      rep.selection_rate[j] = 0.0;
      rep.mean_coef[j] = 0.0;
      rep.t_values[j] = kNaN;
      continue;
    }
    rep.selection_rate[j] =
        100.0 * static_cast<double>(nonzero) / static_cast<double>(vals.size());
    Eigen::Map<Eigen::VectorXd> series(vals.data(),
                                       static_cast<Eigen::Index>(vals.size()));
    rep.mean_coef[j] = series.mean();
    if (vals.size() >= 3) {
      const Eigen::MatrixXd ones =
          Eigen::MatrixXd::Ones(series.size(), 1);
      try {
        const auto reg = ols_newey_west(
            series, ones, default_nw_lags(static_cast<int>(series.size())));
        rep.t_values[j] = reg.t_values[0];
      } catch (const NumericError&) {
        rep.t_values[j] = kNaN;
      }
    } else {
      rep.t_values[j] = kNaN;
    }
  }
  return rep;
}

Eigen::VectorXd ablation_contribution(const Eigen::VectorXd& returns_full,
                                      const Eigen::VectorXd& returns_ablated) {
  if (returns_full.size() != returns_ablated.size())
    throw ShapeError("ablation_contribution: series misalignment");
  return returns_full - returns_ablated;
}

RegressionResult regress_on_market(const Eigen::VectorXd& contribution,
                                   const Eigen::VectorXd& market,
                                   const Eigen::VectorXd& vix, int lags) {
  const Eigen::Index T = contribution.size();
  if (market.size() != T || vix.size() != T)
    throw ShapeError("regress_on_market: series misalignment");
  Eigen::MatrixXd X(T, 3);
  X.col(0).setOnes();
  X.col(1) = market;
  X.col(2) = vix;
  return ols_newey_west(contribution, X,
                        lags < 0 ? default_nw_lags(static_cast<int>(T)) : lags);
}

Eigen::VectorXd structural_deviation(const Eigen::VectorXd& series,
                                     double train_mean, double train_std) {
  if (!(train_std > 0.0))
    throw DegenerateError("structural_deviation: sigma must be > 0");
  return ((series.array() - train_mean) / train_std).abs().matrix();
}

std::string characteristic_name(Characteristic c) {
  switch (c) {
    case Characteristic::Illiq: return "Illiq";
    case Characteristic::Spread: return "Spread";
    case Characteristic::Turn: return "Turn";
    case Characteristic::Ztrade: return "Ztrade";
    case Characteristic::Trend: return "Trend";
    case Characteristic::Retvol: return "Retvol";
    case Characteristic::Beta: return "Beta";
    case Characteristic::Ivol: return "Ivol";
  }
  return "?";
}

int min_observations(int window_days) {
  switch (window_days) {
    case 7: return 3;
    case 14: return 6;
    case 30: return 10;
    default: return std::max(3, (window_days + 2) / 3);
  }
}

CharacteristicsMatrix compute_characteristics(const CharacteristicsInput& in,
                                              int window_days) {
  const Eigen::Index T = in.returns.rows();
  const Eigen::Index N = in.returns.cols();
  if (static_cast<Eigen::Index>(in.dates.size()) != T)
    throw ShapeError("characteristics: date/row mismatch");

  CharacteristicsMatrix out;
  out.window_days = window_days;
  out.min_obs = min_observations(window_days);
  out.raw.assign(kNumCharacteristics,
                 Eigen::MatrixXd::Constant(T, N, kNaN));

  for (Eigen::Index t = 0; t < T; ++t) {
    // Calendar-day window (t_date - window, t_date].
    Eigen::Index lo = t;
    while (lo > 0 &&
           in.dates[static_cast<std::size_t>(t)] -
                   in.dates[static_cast<std::size_t>(lo - 1)] <
               window_days)
      --lo;

    for (Eigen::Index j = 0; j < N; ++j) {
      std::vector<double> rets, dvols, vols, shrs, sprd, mkts, rfs;
      for (Eigen::Index i = lo; i <= t; ++i) {
        const double r = in.returns(i, j);
        if (std::isnan(r)) continue;
        rets.push_back(r);
        dvols.push_back(in.dollar_volume(i, j));
        vols.push_back(in.volume(i, j));
        shrs.push_back(in.shrout(i, j));
        const double mid = (in.high(i, j) + in.low(i, j)) / 2.0;
        sprd.push_back(mid > 0.0 ? (in.high(i, j) - in.low(i, j)) / mid : kNaN);
        mkts.push_back(in.market[i]);
        rfs.push_back(in.risk_free[i]);
      }
      const int n_obs = static_cast<int>(rets.size());
      if (n_obs < out.min_obs) continue;

      // Illiq: mean |R| / $V * 1e6 over days with positive dollar volume.
      double illiq = 0.0;
      int illiq_n = 0;
      for (int i = 0; i < n_obs; ++i) {
        if (dvols[static_cast<std::size_t>(i)] > 0.0) {
          illiq += std::abs(rets[static_cast<std::size_t>(i)]) /
                   dvols[static_cast<std::size_t>(i)] * 1e6;
          ++illiq_n;
        }
      }
      out.raw[0](t, j) = illiq_n > 0 ? illiq / illiq_n : kNaN;

      double spread = 0.0;
      int spread_n = 0;
      for (double s : sprd)
        if (!std::isnan(s)) {
          spread += s;
          ++spread_n;
        }
      out.raw[1](t, j) = spread_n > 0 ? spread / spread_n : kNaN;

      double turn = 0.0;
      int turn_n = 0;
      for (int i = 0; i < n_obs; ++i)
        if (shrs[static_cast<std::size_t>(i)] > 0.0) {
          turn += vols[static_cast<std::size_t>(i)] /
                  shrs[static_cast<std::size_t>(i)];
          ++turn_n;
        }
      out.raw[2](t, j) = turn_n > 0 ? turn / turn_n : kNaN;

      double ztrade = 0.0;
      for (double v : vols)
        if (v == 0.0) ztrade += 1.0;
      out.raw[3](t, j) = ztrade;

      double trend = 1.0;
      for (double r : rets) trend *= 1.0 + r;
      out.raw[4](t, j) = trend - 1.0;

      double mean_r = 0.0;
      for (double r : rets) mean_r += r;
      mean_r /= n_obs;
      if (n_obs >= 2) {
        double ss = 0.0;
        for (double r : rets) ss += (r - mean_r) * (r - mean_r);
        out.raw[5](t, j) = std::sqrt(ss / (n_obs - 1));
      }

      // CAPM beta and idiosyncratic volatility over the window.
      if (n_obs >= 3) {
        double mx = 0.0;
        for (int i = 0; i < n_obs; ++i)
          mx += mkts[static_cast<std::size_t>(i)] -
                rfs[static_cast<std::size_t>(i)];
        mx /= n_obs;
        double sxx = 0.0, sxy = 0.0, my = 0.0;
        for (int i = 0; i < n_obs; ++i)
          my += rets[static_cast<std::size_t>(i)] -
                rfs[static_cast<std::size_t>(i)];
        my /= n_obs;
        for (int i = 0; i < n_obs; ++i) {
          const double xe = mkts[static_cast<std::size_t>(i)] -
                            rfs[static_cast<std::size_t>(i)] - mx;
          const double ye = rets[static_cast<std::size_t>(i)] -
                            rfs[static_cast<std::size_t>(i)] - my;
          sxx += xe * xe;
          sxy += xe * ye;
        }
        if (sxx > 0.0) {
          const double beta = sxy / sxx;
          out.raw[6](t, j) = beta;
          const double alpha = my - beta * mx;
          double ssr = 0.0;
          for (int i = 0; i < n_obs; ++i) {
            const double xe = mkts[static_cast<std::size_t>(i)] -
                              rfs[static_cast<std::size_t>(i)];
            const double ye = rets[static_cast<std::size_t>(i)] -
                              rfs[static_cast<std::size_t>(i)];
            const double resid = ye - alpha - beta * xe;
            ssr += resid * resid;
          }
          out.raw[7](t, j) = std::sqrt(ssr / (n_obs - 1));
        }
      }
    }
  }

  // Cross-sectional standardization, sample std, per date and characteristic.
  out.standardized = out.raw;
  for (int c = 0; c < kNumCharacteristics; ++c) {
    for (Eigen::Index t = 0; t < T; ++t) {
      std::vector<Eigen::Index> valid;
      double mean = 0.0;
      for (Eigen::Index j = 0; j < N; ++j)
        if (!std::isnan(out.raw[static_cast<std::size_t>(c)](t, j))) {
          valid.push_back(j);
          mean += out.raw[static_cast<std::size_t>(c)](t, j);
        }
      if (valid.size() < 2) {
        for (Eigen::Index j = 0; j < N; ++j)
          out.standardized[static_cast<std::size_t>(c)](t, j) = kNaN;
        continue;
      }
      mean /= static_cast<double>(valid.size());
      double ss = 0.0;
      for (Eigen::Index j : valid) {
        const double d = out.raw[static_cast<std::size_t>(c)](t, j) - mean;
        ss += d * d;
      }
      const double sd = std::sqrt(ss / static_cast<double>(valid.size() - 1));
      for (Eigen::Index j = 0; j < N; ++j) {
        auto& cell = out.standardized[static_cast<std::size_t>(c)](t, j);
        if (std::isnan(cell)) continue;
        cell = sd > 0.0 ? (cell - mean) / sd : kNaN;
      }
    }
  }
  return out;
}

}  // namespace derl::stats
