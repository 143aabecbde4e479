#include "derl/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

#include "derl/errors.hpp"

namespace derl::data {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Howard Hinnant's civil-day algorithms.
int days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2u) / 5u + d - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097 + static_cast<int>(doe) - 719468;
}

void civil_from_days(int z, int& y, int& m, int& d) {
  z += 719468;
  const int era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<int>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y += m <= 2;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_double(const std::string& s, const std::string& what, long lineno) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw DataError("line " + std::to_string(lineno) + ": bad " + what + " '" +
                    s + "'");
  return value;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

Date Date::from_string(const std::string& iso) {
  int y, m, d;
  if (std::sscanf(iso.c_str(), "%d-%d-%d", &y, &m, &d) != 3)
    throw DataError("bad date '" + iso + "', expected YYYY-MM-DD");
  if (m < 1 || m > 12 || d < 1 || d > 31)
    throw DataError("date out of range: " + iso);
  return Date{days_from_civil(y, m, d)};
}

Date Date::from_ymd(int year, int month, int day) {
  return Date{days_from_civil(year, month, day)};
}

std::string Date::to_string() const {
  int y, m, d;
  civil_from_days(serial, y, m, d);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
  return buf;
}

bool Panel::has_bar(Eigen::Index t, Eigen::Index k) const {
  return !std::isnan(close(t, k));
}

int Panel::date_index(const Date& d) const {
  auto it = std::lower_bound(calendar.begin(), calendar.end(), d);
  if (it == calendar.end() || !(*it == d)) return -1;
  return static_cast<int>(it - calendar.begin());
}

int Panel::ticker_index(const std::string& ticker) const {
  auto it = std::lower_bound(tickers.begin(), tickers.end(), ticker);
  if (it == tickers.end() || *it != ticker) return -1;
  return static_cast<int>(it - tickers.begin());
}

Eigen::VectorXd Series::align_to(const std::vector<Date>& calendar) const {
  if (dates.empty()) throw DataError("cannot align an empty series");
  Eigen::VectorXd out(static_cast<Eigen::Index>(calendar.size()));
  std::size_t j = 0;
  double last = values[0];
  for (std::size_t i = 0; i < calendar.size(); ++i) {
    while (j < dates.size() && dates[j] <= calendar[i]) {
      last = values[static_cast<Eigen::Index>(j)];
      ++j;
    }
    out[static_cast<Eigen::Index>(i)] = last;
  }
  return out;
}

Panel load_panel(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);

  struct Row {
    double open, high, low, close, volume, mcap;
  };
  std::map<Date, std::unordered_map<std::string, Row>> rows;
  std::vector<std::string> ticker_set;
  bool any_mcap = false;

  std::string line;
  long lineno = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (!saw_header) {
      saw_header = true;
      if (fields.size() < 7)
        throw DataError("line 1: expected header "
                        "date,ticker,open,high,low,close,volume[,market_cap]");
      continue;
    }
    if (fields.size() != 7 && fields.size() != 8)
      throw DataError("line " + std::to_string(lineno) + ": expected 7 or 8 "
                      "fields, got " + std::to_string(fields.size()));
    Date d = Date::from_string(trim(fields[0]));
    std::string ticker = trim(fields[1]);
    if (ticker.empty())
      throw DataError("line " + std::to_string(lineno) + ": empty ticker");
    Row r;
    r.open = parse_double(trim(fields[2]), "open", lineno);
    r.high = parse_double(trim(fields[3]), "high", lineno);
    r.low = parse_double(trim(fields[4]), "low", lineno);
    r.close = parse_double(trim(fields[5]), "close", lineno);
    r.volume = parse_double(trim(fields[6]), "volume", lineno);
    r.mcap = kNaN;
    if (fields.size() == 8 && !trim(fields[7]).empty()) {
      r.mcap = parse_double(trim(fields[7]), "market_cap", lineno);
      any_mcap = true;
    }
    if (r.open <= 0 || r.high <= 0 || r.low <= 0 || r.close <= 0)
      throw DataError("line " + std::to_string(lineno) +
                      ": non-positive price");
    if (r.volume < 0)
      throw DataError("line " + std::to_string(lineno) + ": negative volume");
    auto& by_ticker = rows[d];
    if (by_ticker.count(ticker))
      throw DataError("line " + std::to_string(lineno) + ": duplicate key (" +
                      d.to_string() + ", " + ticker + ")");
    by_ticker.emplace(ticker, r);
    ticker_set.push_back(std::move(ticker));
  }
  if (rows.empty()) throw DataError(path + ": no data rows");

  std::sort(ticker_set.begin(), ticker_set.end());
  ticker_set.erase(std::unique(ticker_set.begin(), ticker_set.end()),
                   ticker_set.end());

  Panel p;
  p.tickers = std::move(ticker_set);
  p.calendar.reserve(rows.size());
  for (const auto& [d, _] : rows) p.calendar.push_back(d);
  const auto T = static_cast<Eigen::Index>(p.calendar.size());
  const auto K = static_cast<Eigen::Index>(p.tickers.size());
  p.open = p.high = p.low = p.close = p.volume = p.market_cap =
      Eigen::MatrixXd::Constant(T, K, kNaN);
  p.has_market_cap = any_mcap;

  Eigen::Index t = 0;
  for (const auto& [d, by_ticker] : rows) {
    for (const auto& [ticker, r] : by_ticker) {
      const auto k = static_cast<Eigen::Index>(p.ticker_index(ticker));
      p.open(t, k) = r.open;
      p.high(t, k) = r.high;
      p.low(t, k) = r.low;
      p.close(t, k) = r.close;
      p.volume(t, k) = r.volume;
      p.market_cap(t, k) = r.mcap;
    }
    ++t;
  }
  return p;
}

void write_panel(const Panel& panel, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "date,ticker,open,high,low,close,volume";
  if (panel.has_market_cap) out << ",market_cap";
  out << "\n";
  char buf[512];
  for (Eigen::Index t = 0; t < panel.days(); ++t) {
    for (Eigen::Index k = 0; k < panel.names(); ++k) {
      if (!panel.has_bar(t, k)) continue;
      std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,%.17g,%.17g,%.17g,%.17g",
                    panel.calendar[t].to_string().c_str(),
                    panel.tickers[k].c_str(), panel.open(t, k),
                    panel.high(t, k), panel.low(t, k), panel.close(t, k),
                    panel.volume(t, k));
      out << buf;
      if (panel.has_market_cap) {
        if (std::isnan(panel.market_cap(t, k))) {
          out << ",";
        } else {
          std::snprintf(buf, sizeof(buf), ",%.17g", panel.market_cap(t, k));
          out << buf;
        }
      }
      out << "\n";
    }
  }
}

Series load_series(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  Series s;
  std::vector<double> vals;
  std::string line;
  long lineno = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (!saw_header) {
      saw_header = true;
      continue;
    }
    if (fields.size() != 2)
      throw DataError("line " + std::to_string(lineno) +
                      ": expected date,value");
    s.dates.push_back(Date::from_string(trim(fields[0])));
    vals.push_back(parse_double(trim(fields[1]), "value", lineno));
  }
  if (s.dates.empty()) throw DataError(path + ": no data rows");
  for (std::size_t i = 1; i < s.dates.size(); ++i)
    if (!(s.dates[i - 1] < s.dates[i]))
      throw DataError(path + ": dates must be strictly increasing");
  s.values = Eigen::Map<Eigen::VectorXd>(vals.data(),
                                         static_cast<Eigen::Index>(vals.size()));
  return s;
}

void write_series(const Series& series, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "date,value\n";
  char buf[64];
  for (std::size_t i = 0; i < series.dates.size(); ++i) {
    std::snprintf(buf, sizeof(buf), ",%.17g",
                  series.values[static_cast<Eigen::Index>(i)]);
    out << series.dates[i].to_string() << buf << "\n";
  }
}

Universe select_universe(const Panel& panel, const Date& as_of, int n) {
  if (n < 1) throw ConfigError("universe size must be >= 1");
  if (!panel.has_market_cap)
    throw DataError("select_universe: panel has no market_cap column");
  const int t = panel.date_index(as_of);
  if (t < 0) throw DataError("select_universe: " + as_of.to_string() +
                             " is not on the panel calendar");
  std::vector<std::pair<double, std::string>> caps;
  for (Eigen::Index k = 0; k < panel.names(); ++k) {
    const double c = panel.market_cap(t, k);
    if (!std::isnan(c)) caps.emplace_back(c, panel.tickers[k]);
  }
  if (static_cast<int>(caps.size()) < n)
    throw DataError("select_universe: only " + std::to_string(caps.size()) +
                    " names with market cap at " + as_of.to_string() +
                    ", need " + std::to_string(n));
  std::sort(caps.begin(), caps.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  Universe u;
  u.as_of = as_of;
  for (int i = 0; i < n; ++i) u.tickers.push_back(caps[i].second);
  return u;
}

AlignedPanel align(const Panel& panel, const std::vector<std::string>& tickers,
                   const Date& start, const Date& end, int max_gap) {
  if (start > end) throw DataError("align: start > end");
  AlignedPanel a;
  for (const Date& d : panel.calendar)
    if (start <= d && d <= end) a.dates.push_back(d);
  if (a.dates.empty()) throw DataError("align: no calendar days in range");
  a.tickers = tickers;

  const auto T = static_cast<Eigen::Index>(a.dates.size());
  const auto N = static_cast<Eigen::Index>(tickers.size());
  a.open.resize(T, N);
  a.high.resize(T, N);
  a.low.resize(T, N);
  a.close.resize(T, N);
  a.volume.resize(T, N);
  a.market_cap = Eigen::MatrixXd::Constant(T, N, kNaN);
  a.filled = Eigen::MatrixXi::Zero(T, N);
  a.delisted_at.assign(tickers.size(), static_cast<int>(T));

  const int t0 = panel.date_index(a.dates.front());

  for (Eigen::Index j = 0; j < N; ++j) {
    const int k = panel.ticker_index(tickers[j]);
    if (k < 0) throw DataError("align: unknown ticker " + tickers[j]);

    // Last real bar inside the range decides the delisting cut.
    int last_real = -1;
    for (Eigen::Index t = 0; t < T; ++t)
      if (panel.has_bar(t0 + t, k)) last_real = static_cast<int>(t);
    if (last_real < 0)
      throw DataError("align: " + tickers[j] + " has no data in range");
    if (last_real + 1 < static_cast<int>(T))
      a.delisted_at[static_cast<std::size_t>(j)] = last_real + 1;

    int gap = 0;
    bool seen = false;
    double lo = kNaN, lh = kNaN, ll = kNaN, lc = kNaN;
    for (Eigen::Index t = 0; t < T; ++t) {
      const Eigen::Index pt = t0 + t;
      if (panel.has_bar(pt, k)) {
        seen = true;
        gap = 0;
        lo = panel.open(pt, k);
        lh = panel.high(pt, k);
        ll = panel.low(pt, k);
        lc = panel.close(pt, k);
        a.open(t, j) = lo;
        a.high(t, j) = lh;
        a.low(t, j) = ll;
        a.close(t, j) = lc;
        a.volume(t, j) = panel.volume(pt, k);
        a.market_cap(t, j) = panel.market_cap(pt, k);
      } else {
        if (!seen)
          throw DataError("align: " + tickers[j] + " missing at range start " +
                          a.dates[static_cast<std::size_t>(t)].to_string());
        ++gap;
        if (t <= last_real && gap > max_gap)
          throw DataError("align: " + tickers[j] + " gap exceeds " +
                          std::to_string(max_gap) + " days at " +
                          a.dates[static_cast<std::size_t>(t)].to_string());
        // Forward fill: flat price, zero volume.
        a.open(t, j) = lc;
        a.high(t, j) = lc;
        a.low(t, j) = lc;
        a.close(t, j) = lc;
        a.volume(t, j) = 0.0;
        a.filled(t, j) = 1;
      }
    }
  }

  a.returns.resize(T - 1, N);
  for (Eigen::Index t = 0; t + 1 < T; ++t)
    for (Eigen::Index j = 0; j < N; ++j)
      a.returns(t, j) = a.close(t + 1, j) / a.close(t, j) - 1.0;
  return a;
}

}  // namespace derl::data
