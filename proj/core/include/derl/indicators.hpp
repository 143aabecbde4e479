#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "derl/data.hpp"

namespace derl::ind {

enum class Kind { Sma, Ema, Macd, Rsi, Boll, Cci, Adx, Obv, Stoch, Cmf, Adl, Willr };

std::string kind_name(Kind k);
Kind kind_from_name(const std::string& name);

// Formulas (documented here; BOLL emits the middle band):
//   SMA(w)   mean of the last w closes
//   EMA(w)   alpha = 2/(w+1), seeded with the SMA of the first w closes
//   MACD     EMA(12) - EMA(26)
//   RSI(w)   Wilder smoothing of gains/losses; 100 when losses are zero
//   BOLL     SMA(20) middle band
//   CCI(w)   (TP - SMA(TP,w)) / (0.015 * mean deviation), TP = (H+L+C)/3
//   ADX(w)   Wilder-smoothed DX of +DI/-DI
//   OBV      cumulative volume signed by the close-to-close tick, starting
//            at the first day's volume
//   STOCH    %K over 14 days; 50 when the range is degenerate
//   CMF      Chaikin money flow over 20 days
//   ADL      cumulative money-flow volume
//   WILLR    Williams %R over 14 days; -50 when the range is degenerate
struct IndicatorSpec {
  Kind kind;
  int window = 0;  // 21/42/63 for windowed kinds, fixed defaults otherwise

  std::string name() const;  // e.g. "SMA21", "MACD"
};

struct Bars {
  Eigen::VectorXd open, high, low, close, volume;
};

// Leading warm-up entries are NaN; this returns how many.
int warmup_length(const IndicatorSpec& spec);

// Throws StateError when the series is shorter than the warm-up.
Eigen::VectorXd compute_indicator(const Bars& bars, const IndicatorSpec& spec);

struct IndicatorColumn {
  std::string ticker;        // empty for market-level series
  std::string name;
  bool market_level = false;
};

struct IndicatorMatrix {
  Eigen::MatrixXd values;    // T x h, NaN warm-up prefix
  std::vector<IndicatorColumn> manifest;
  int warmup = 0;            // max warm-up across columns

  std::string manifest_json() const;
};

// Per-asset indicator columns (ticker-major, spec order within a ticker)
// followed by the market-level series: h = #tickers * #specs + #series.
IndicatorMatrix build_metrics_block(
    const data::AlignedPanel& panel, const std::vector<IndicatorSpec>& specs,
    const std::vector<std::pair<std::string, Eigen::VectorXd>>& market_series);

// The full per-asset set: SMA/EMA/RSI/CCI/ADX at 21/42/63 plus
// MACD, BOLL, OBV, STOCH, CMF, ADL, WILLR at conventional windows.
std::vector<IndicatorSpec> default_indicator_set();

}  // namespace derl::ind
