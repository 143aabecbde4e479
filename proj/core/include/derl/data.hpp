#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace derl::data {

// Calendar date backed by a day serial (days since 1970-01-01, civil).
struct Date {
  int serial = 0;

  static Date from_string(const std::string& iso);  // "YYYY-MM-DD"
  static Date from_ymd(int year, int month, int day);
  std::string to_string() const;

  auto operator<=>(const Date&) const = default;
  int operator-(const Date& other) const { return serial - other.serial; }
  Date add_days(int n) const { return Date{serial + n}; }
};

// Rectangular daily bar container. Cells are NaN where a ticker has no bar.
struct Panel {
  std::vector<Date> calendar;           // sorted, unique
  std::vector<std::string> tickers;     // sorted, unique
  Eigen::MatrixXd open, high, low, close, volume;  // T x K
  Eigen::MatrixXd market_cap;                      // T x K, NaN if absent
  bool has_market_cap = false;

  Eigen::Index days() const { return static_cast<Eigen::Index>(calendar.size()); }
  Eigen::Index names() const { return static_cast<Eigen::Index>(tickers.size()); }
  bool has_bar(Eigen::Index t, Eigen::Index k) const;
  int date_index(const Date& d) const;  // -1 if not on calendar
  int ticker_index(const std::string& ticker) const;  // -1 if unknown
};

// date,value series (risk-free rate, VIX, market return, ...).
struct Series {
  std::vector<Date> dates;
  Eigen::VectorXd values;

  // Values matched to `calendar`; missing dates forward-filled, leading
  // missing filled with the first observation.
  Eigen::VectorXd align_to(const std::vector<Date>& calendar) const;
};

struct Universe {
  Date as_of;
  std::vector<std::string> tickers;  // descending market cap, ties by name
};

// Dense per-segment view with a shared calendar.
struct AlignedPanel {
  std::vector<Date> dates;              // panel calendar clipped to [start,end]
  std::vector<std::string> tickers;
  Eigen::MatrixXd open, high, low, close, volume;  // T x N
  Eigen::MatrixXd market_cap;                      // T x N (NaN if absent)
  // returns(t, k) = close(t+1, k) / close(t, k) - 1, shape (T-1) x N;
  // row t belongs to dates[t+1].
  Eigen::MatrixXd returns;
  Eigen::MatrixXi filled;               // 1 where a gap was forward-filled
  std::vector<int> delisted_at;         // first index with no further real bar,
                                        // dates.size() if never delisted
};

// Schema: date,ticker,open,high,low,close,volume[,market_cap]; ISO dates.
// Throws DataError with the offending line number on malformed rows,
// duplicate (date,ticker) keys, non-positive prices or negative volume.
Panel load_panel(const std::string& path);
void write_panel(const Panel& panel, const std::string& path);

// Schema: date,value.
Series load_series(const std::string& path);
void write_series(const Series& series, const std::string& path);

// N largest names by market cap at as_of; ties broken lexicographically.
Universe select_universe(const Panel& panel, const Date& as_of, int n);

// Gaps of at most max_gap days are forward-filled at the previous close with
// zero volume and flagged; longer interior gaps raise DataError. A ticker
// whose data ends before `end` is treated as delisted: trailing rows are
// filled and delisted_at records the cut.
AlignedPanel align(const Panel& panel, const std::vector<std::string>& tickers,
                   const Date& start, const Date& end, int max_gap = 5);

}  // namespace derl::data
