#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "telscope/timeseries.hpp"

namespace telscope {

struct LagEntry {
  std::int64_t lag_seconds = 0;
  int points = 1;

  friend bool operator==(const LagEntry&, const LagEntry&) = default;
};

/// Lags strictly increasing, points >= 1. Validated on construction.
class LagSpec {
 public:
  LagSpec() = default;
  explicit LagSpec(std::vector<LagEntry> entries);

  std::span<const LagEntry> entries() const { return entries_; }
  std::size_t columns_per_channel() const;

  static LagSpec model1_default();  // 15 min and 1 h, one point each
  static LagSpec model2_default();  // 30 min, 4 h and 24 h, three points each

  friend bool operator==(const LagSpec&, const LagSpec&) = default;

 private:
  std::vector<LagEntry> entries_;
};

LagSpec parse_lag_spec(std::istream& in);

/// Dense row-major design matrix. Column names encode `<channel>@-<seconds>`.
struct FeatureMatrix {
  std::vector<std::string> column_names;
  std::vector<double> values;
  std::vector<Timestamp> row_timestamps;
  std::optional<std::vector<double>> target;

  std::size_t rows() const { return row_timestamps.size(); }
  std::size_t cols() const { return column_names.size(); }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols(), cols()}; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  /// Rows whose timestamps fall in [begin, end).
  FeatureMatrix select_time_range(Timestamp begin, Timestamp end) const;
};

std::string lag_column_name(std::string_view channel, std::int64_t seconds);

/// Self-lag offsets: max(1, round-half-up(lag / step)) per entry, then consecutive points.
std::vector<std::int64_t> self_lag_offsets(const LagSpec& lags, std::int64_t step);
/// Covariate offsets: round-half-up(lag / step) per entry, then consecutive points.
std::vector<std::int64_t> covariate_lag_offsets(const LagSpec& lags, std::int64_t step);

FeatureMatrix build_self_lag(const TimeSeries& target, const LagSpec& lags);

/// Lagged covariate columns for rows with timestamps in [row_begin, row_end).
/// History before `row_begin` is used when the frame holds it; rows without full history are dropped.
FeatureMatrix build_covariate_features(const TelemetryFrame& frame, const LagSpec& spec, Timestamp row_begin,
                                       Timestamp row_end);

/// `timestamp,<feature>...` CSV as consumed by `telscope explain`.
void write_feature_csv(std::ostream& out, const FeatureMatrix& m);
FeatureMatrix parse_feature_csv(std::istream& in);

}  // namespace telscope
