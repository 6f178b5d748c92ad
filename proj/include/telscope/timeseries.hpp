#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace telscope {

/// Whole seconds since 1970-01-01T00:00:00Z.
struct Timestamp {
  std::int64_t seconds = 0;

  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
  Timestamp operator+(std::int64_t delta) const { return Timestamp{seconds + delta}; }
  std::int64_t operator-(const Timestamp& other) const { return seconds - other.seconds; }
};

/// Parses `YYYY-MM-DDTHH:MM:SSZ`. Throws SchemaError on anything else.
Timestamp parse_iso8601(std::string_view text);
std::string format_iso8601(Timestamp t);

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
bool is_missing(double v);

/// Shortest decimal text that parses back to the same double. Missing values format as "".
std::string format_real(double v);

/// One named channel on a uniform grid. Missing samples are NaN.
class TimeSeries {
 public:
  TimeSeries(std::string name, Timestamp start, std::int64_t step, std::vector<double> values);

  const std::string& name() const { return name_; }
  Timestamp start() const { return start_; }
  std::int64_t step() const { return step_; }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  Timestamp time_at(std::size_t i) const { return start_ + static_cast<std::int64_t>(i) * step_; }

 private:
  std::string name_;
  Timestamp start_;
  std::int64_t step_;
  std::vector<double> values_;
};

struct Grid {
  Timestamp start;
  std::int64_t step = 1;
  std::size_t length = 0;

  Timestamp time_at(std::size_t i) const { return start + static_cast<std::int64_t>(i) * step; }
  /// Index of `t` on the grid, or npos when off-grid or out of range.
  std::size_t index_of(Timestamp t) const;

  friend bool operator==(const Grid&, const Grid&) = default;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

enum class Role { target, covariate };

struct Channel {
  std::string name;
  Role role = Role::covariate;
  std::vector<double> values;

  friend bool operator==(const Channel&, const Channel&) = default;
};

/// Names grouped by role, as read from the roles sidecar JSON.
struct Roles {
  std::vector<std::string> targets;
  std::vector<std::string> covariates;
};

Roles parse_roles(std::istream& in);
void write_roles(std::ostream& out, const Roles& roles);

/// Aligned collection of target and covariate channels on one grid.
class TelemetryFrame {
 public:
  TelemetryFrame(Grid grid, std::vector<Channel> channels);

  const Grid& grid() const { return grid_; }
  std::size_t length() const { return grid_.length; }
  std::span<const Channel> channels() const { return channels_; }

  const Channel* find(std::string_view name) const;
  /// Throws SchemaError when absent.
  const Channel& channel(std::string_view name) const;
  std::vector<std::string> names(Role role) const;
  Roles roles() const;

  TimeSeries series(std::string_view name) const;
  /// Samples [begin, end) of every channel.
  TelemetryFrame slice(std::size_t begin, std::size_t end) const;

  friend bool operator==(const TelemetryFrame&, const TelemetryFrame&) = default;

 private:
  Grid grid_;
  std::vector<Channel> channels_;
};

/// Reads `timestamp,<name>...` CSV. Columns absent from `roles` are dropped;
/// names listed in `roles` but absent from the header raise SchemaError.
TelemetryFrame parse_csv(std::istream& in, const Roles& roles);
void write_csv(std::ostream& out, const TelemetryFrame& frame);

/// Bin means over `new_step / series.step()` consecutive samples, ignoring missing ones.
TimeSeries resample_mean(const TimeSeries& series, std::int64_t new_step);
TelemetryFrame resample_mean(const TelemetryFrame& frame, std::int64_t new_step);

/// First floor(fraction * length) samples, then the rest.
std::pair<TelemetryFrame, TelemetryFrame> split_fraction(const TelemetryFrame& frame, double fraction);
std::size_t split_point(std::size_t length, double fraction);

/// Last observation carried forward; leading gaps take the first observation.
TimeSeries fill_missing(const TimeSeries& series);
TelemetryFrame fill_missing(const TelemetryFrame& frame);

}  // namespace telscope
