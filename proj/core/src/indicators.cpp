#include "derl/indicators.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "derl/errors.hpp"

namespace derl::ind {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::VectorXd nan_vector(Eigen::Index n) {
  return Eigen::VectorXd::Constant(n, kNaN);
}

Eigen::VectorXd sma(const Eigen::VectorXd& x, int w) {
  const Eigen::Index T = x.size();
  Eigen::VectorXd out = nan_vector(T);
  double acc = 0.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    acc += x[t];
    if (t >= w) acc -= x[t - w];
    if (t >= w - 1) out[t] = acc / w;
  }
  return out;
}

Eigen::VectorXd ema(const Eigen::VectorXd& x, int w) {
  const Eigen::Index T = x.size();
  Eigen::VectorXd out = nan_vector(T);
  if (T < w) return out;
  const double alpha = 2.0 / (w + 1.0);
  double value = x.head(w).mean();
  out[w - 1] = value;
  for (Eigen::Index t = w; t < T; ++t) {
    value = alpha * x[t] + (1.0 - alpha) * value;
    out[t] = value;
  }
  return out;
}

Eigen::VectorXd rsi(const Eigen::VectorXd& close, int w) {
  const Eigen::Index T = close.size();
  Eigen::VectorXd out = nan_vector(T);
  if (T < w + 1) return out;
  double gain = 0.0, loss = 0.0;
  for (Eigen::Index t = 1; t <= w; ++t) {
    const double d = close[t] - close[t - 1];
    if (d > 0) gain += d;
    else loss -= d;
  }
  gain /= w;
  loss /= w;
  auto emit = [&](Eigen::Index t) {
    out[t] = (loss == 0.0) ? 100.0 : 100.0 - 100.0 / (1.0 + gain / loss);
  };
  emit(w);
  for (Eigen::Index t = w + 1; t < T; ++t) {
    const double d = close[t] - close[t - 1];
    gain = (gain * (w - 1) + std::max(d, 0.0)) / w;
    loss = (loss * (w - 1) + std::max(-d, 0.0)) / w;
    emit(t);
  }
  return out;
}

Eigen::VectorXd cci(const Bars& b, int w) {
  const Eigen::Index T = b.close.size();
  Eigen::VectorXd tp = (b.high + b.low + b.close) / 3.0;
  Eigen::VectorXd tpsma = sma(tp, w);
  Eigen::VectorXd out = nan_vector(T);
  for (Eigen::Index t = w - 1; t < T; ++t) {
    double dev = 0.0;
    for (Eigen::Index i = t - w + 1; i <= t; ++i)
      dev += std::abs(tp[i] - tpsma[t]);
    dev /= w;
    out[t] = (dev == 0.0) ? 0.0 : (tp[t] - tpsma[t]) / (0.015 * dev);
  }
  return out;
}

Eigen::VectorXd adx(const Bars& b, int w) {
  const Eigen::Index T = b.close.size();
  Eigen::VectorXd out = nan_vector(T);
  if (T < 2 * w) return out;

  Eigen::VectorXd tr(T), dmp(T), dmm(T);
  tr[0] = dmp[0] = dmm[0] = 0.0;
  for (Eigen::Index t = 1; t < T; ++t) {
    const double up = b.high[t] - b.high[t - 1];
    const double down = b.low[t - 1] - b.low[t];
    dmp[t] = (up > down && up > 0) ? up : 0.0;
    dmm[t] = (down > up && down > 0) ? down : 0.0;
    tr[t] = std::max({b.high[t] - b.low[t],
                      std::abs(b.high[t] - b.close[t - 1]),
                      std::abs(b.low[t] - b.close[t - 1])});
  }

  // Wilder smoothing: seed with the sum over t = 1..w.
  double str = tr.segment(1, w).sum();
  double sdp = dmp.segment(1, w).sum();
  double sdm = dmm.segment(1, w).sum();
  Eigen::VectorXd dx = nan_vector(T);
  auto dx_at = [&](double p, double m) {
    const double s = p + m;
    return s == 0.0 ? 0.0 : 100.0 * std::abs(p - m) / s;
  };
  dx[w] = dx_at(sdp, sdm);
  for (Eigen::Index t = w + 1; t < T; ++t) {
    str = str - str / w + tr[t];
    sdp = sdp - sdp / w + dmp[t];
    sdm = sdm - sdm / w + dmm[t];
    const double dip = str == 0.0 ? 0.0 : 100.0 * sdp / str;
    const double dim = str == 0.0 ? 0.0 : 100.0 * sdm / str;
    dx[t] = dx_at(dip, dim);
  }
  double adx_val = dx.segment(w, w).mean();
  out[2 * w - 1] = adx_val;
  for (Eigen::Index t = 2 * w; t < T; ++t) {
    adx_val = (adx_val * (w - 1) + dx[t]) / w;
    out[t] = adx_val;
  }
  return out;
}

Eigen::VectorXd obv(const Bars& b) {
  const Eigen::Index T = b.close.size();
  Eigen::VectorXd out(T);
  double acc = b.volume[0];
  out[0] = acc;
  for (Eigen::Index t = 1; t < T; ++t) {
    if (b.close[t] > b.close[t - 1]) acc += b.volume[t];
    else if (b.close[t] < b.close[t - 1]) acc -= b.volume[t];
    out[t] = acc;
  }
  return out;
}

Eigen::VectorXd stoch(const Bars& b, int w) {
  const Eigen::Index T = b.close.size();
  Eigen::VectorXd out = nan_vector(T);
  for (Eigen::Index t = w - 1; t < T; ++t) {
    const double hh = b.high.segment(t - w + 1, w).maxCoeff();
    const double ll = b.low.segment(t - w + 1, w).minCoeff();
    out[t] = (hh == ll) ? 50.0 : 100.0 * (b.close[t] - ll) / (hh - ll);
  }
  return out;
}

Eigen::VectorXd money_flow_volume(const Bars& b) {
  const Eigen::Index T = b.close.size();
  Eigen::VectorXd mfv(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double range = b.high[t] - b.low[t];
    const double mult =
        range == 0.0
            ? 0.0
            : ((b.close[t] - b.low[t]) - (b.high[t] - b.close[t])) / range;
    mfv[t] = mult * b.volume[t];
  }
  return mfv;
}

Eigen::VectorXd cmf(const Bars& b, int w) {
  const Eigen::Index T = b.close.size();
  Eigen::VectorXd mfv = money_flow_volume(b);
  Eigen::VectorXd out = nan_vector(T);
  for (Eigen::Index t = w - 1; t < T; ++t) {
    const double v = b.volume.segment(t - w + 1, w).sum();
    out[t] = v == 0.0 ? 0.0 : mfv.segment(t - w + 1, w).sum() / v;
  }
  return out;
}

Eigen::VectorXd adl(const Bars& b) {
  Eigen::VectorXd mfv = money_flow_volume(b);
  for (Eigen::Index t = 1; t < mfv.size(); ++t) mfv[t] += mfv[t - 1];
  return mfv;
}

Eigen::VectorXd willr(const Bars& b, int w) {
  const Eigen::Index T = b.close.size();
  Eigen::VectorXd out = nan_vector(T);
  for (Eigen::Index t = w - 1; t < T; ++t) {
    const double hh = b.high.segment(t - w + 1, w).maxCoeff();
    const double ll = b.low.segment(t - w + 1, w).minCoeff();
    out[t] = (hh == ll) ? -50.0 : -100.0 * (hh - b.close[t]) / (hh - ll);
  }
  return out;
}

}  // namespace

std::string kind_name(Kind k) {
  switch (k) {
    case Kind::Sma: return "SMA";
    case Kind::Ema: return "EMA";
    case Kind::Macd: return "MACD";
    case Kind::Rsi: return "RSI";
    case Kind::Boll: return "BOLL";
    case Kind::Cci: return "CCI";
    case Kind::Adx: return "ADX";
    case Kind::Obv: return "OBV";
    case Kind::Stoch: return "STOCH";
    case Kind::Cmf: return "CMF";
    case Kind::Adl: return "ADL";
    case Kind::Willr: return "WILLR";
  }
  return "?";
}

Kind kind_from_name(const std::string& name) {
  for (Kind k : {Kind::Sma, Kind::Ema, Kind::Macd, Kind::Rsi, Kind::Boll,
                 Kind::Cci, Kind::Adx, Kind::Obv, Kind::Stoch, Kind::Cmf,
                 Kind::Adl, Kind::Willr})
    if (kind_name(k) == name) return k;
  throw ConfigError("unknown indicator: " + name);
}

std::string IndicatorSpec::name() const {
  switch (kind) {
    case Kind::Sma:
    case Kind::Ema:
    case Kind::Rsi:
    case Kind::Cci:
    case Kind::Adx:
      return kind_name(kind) + std::to_string(window);
    default:
      return kind_name(kind);
  }
}

int warmup_length(const IndicatorSpec& spec) {
  switch (spec.kind) {
    case Kind::Sma: return spec.window - 1;
    case Kind::Ema: return spec.window - 1;
    case Kind::Macd: return 25;       // EMA(26) seed
    case Kind::Rsi: return spec.window;
    case Kind::Boll: return 19;       // SMA(20)
    case Kind::Cci: return spec.window - 1;
    case Kind::Adx: return 2 * spec.window - 1;
    case Kind::Obv: return 0;
    case Kind::Stoch: return 13;
    case Kind::Cmf: return 19;
    case Kind::Adl: return 0;
    case Kind::Willr: return 13;
  }
  return 0;
}

Eigen::VectorXd compute_indicator(const Bars& bars, const IndicatorSpec& spec) {
  const Eigen::Index T = bars.close.size();
  if (T <= warmup_length(spec))
    throw StateError(spec.name() + ": series of length " + std::to_string(T) +
                     " is shorter than its warm-up");
  switch (spec.kind) {
    case Kind::Sma: return sma(bars.close, spec.window);
    case Kind::Ema: return ema(bars.close, spec.window);
    case Kind::Macd: return (ema(bars.close, 12) - ema(bars.close, 26)).eval();
    case Kind::Rsi: return rsi(bars.close, spec.window);
    case Kind::Boll: return sma(bars.close, 20);
    case Kind::Cci: return cci(bars, spec.window);
    case Kind::Adx: return adx(bars, spec.window);
    case Kind::Obv: return obv(bars);
    case Kind::Stoch: return stoch(bars, 14);
    case Kind::Cmf: return cmf(bars, 20);
    case Kind::Adl: return adl(bars);
    case Kind::Willr: return willr(bars, 14);
  }
  throw ConfigError("unknown indicator kind");
}

IndicatorMatrix build_metrics_block(
    const data::AlignedPanel& panel, const std::vector<IndicatorSpec>& specs,
    const std::vector<std::pair<std::string, Eigen::VectorXd>>& market_series) {
  const auto T = static_cast<Eigen::Index>(panel.dates.size());
  const auto N = static_cast<Eigen::Index>(panel.tickers.size());
  const auto S = static_cast<Eigen::Index>(specs.size());
  const auto M = static_cast<Eigen::Index>(market_series.size());

  IndicatorMatrix out;
  out.values.resize(T, N * S + M);
  Eigen::Index col = 0;
  for (Eigen::Index j = 0; j < N; ++j) {
    Bars b{panel.open.col(j), panel.high.col(j), panel.low.col(j),
           panel.close.col(j), panel.volume.col(j)};
    for (const auto& spec : specs) {
      out.values.col(col) = compute_indicator(b, spec);
      out.manifest.push_back({panel.tickers[j], spec.name(), false});
      out.warmup = std::max(out.warmup, warmup_length(spec));
      ++col;
    }
  }
  for (const auto& [name, series] : market_series) {
    if (series.size() != T)
      throw DataError("market series '" + name +
                      "' is not aligned with the panel calendar");
    out.values.col(col) = series;
    out.manifest.push_back({"", name, true});
    ++col;
  }
  return out;
}

std::string IndicatorMatrix::manifest_json() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& c = manifest[i];
    if (i) os << ",";
    os << "{\"ticker\":\"" << c.ticker << "\",\"name\":\"" << c.name
       << "\",\"market_level\":" << (c.market_level ? "true" : "false") << "}";
  }
  os << "]";
  return os.str();
}

std::vector<IndicatorSpec> default_indicator_set() {
  std::vector<IndicatorSpec> specs;
  for (int w : {21, 42, 63}) specs.push_back({Kind::Sma, w});
  for (int w : {21, 42, 63}) specs.push_back({Kind::Ema, w});
  specs.push_back({Kind::Macd, 0});
  for (int w : {21, 42, 63}) specs.push_back({Kind::Rsi, w});
  specs.push_back({Kind::Boll, 0});
  for (int w : {21, 42, 63}) specs.push_back({Kind::Cci, w});
  for (int w : {21, 42, 63}) specs.push_back({Kind::Adx, w});
  specs.push_back({Kind::Obv, 0});
  specs.push_back({Kind::Stoch, 0});
  specs.push_back({Kind::Cmf, 0});
  specs.push_back({Kind::Adl, 0});
  specs.push_back({Kind::Willr, 0});
  return specs;
}

}  // namespace derl::ind
