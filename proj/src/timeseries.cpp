#include "telscope/timeseries.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "telscope/errors.hpp"

namespace telscope {

namespace {

bool parse_digits(std::string_view text, std::size_t pos, std::size_t count, int& out) {
  if (pos + count > text.size()) return false;
  const char* first = text.data() + pos;
  auto [ptr, ec] = std::from_chars(first, first + count, out);
  return ec == std::errc{} && ptr == first + count;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t begin = 0;
  while (true) {
    const std::size_t comma = line.find(',', begin);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(begin));
      return cells;
    }
    cells.push_back(line.substr(begin, comma - begin));
    begin = comma + 1;
  }
}

std::string_view trim_line_end(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  return line;
}

}  // namespace

Timestamp parse_iso8601(std::string_view text) {
  // 2024-02-15T00:00:00Z
  int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
  const bool shape_ok = text.size() == 20 && text[4] == '-' && text[7] == '-' && text[10] == 'T' &&
                        text[13] == ':' && text[16] == ':' && text[19] == 'Z';
  if (!shape_ok || !parse_digits(text, 0, 4, year) || !parse_digits(text, 5, 2, month) ||
      !parse_digits(text, 8, 2, day) || !parse_digits(text, 11, 2, hour) ||
      !parse_digits(text, 14, 2, minute) || !parse_digits(text, 17, 2, second)) {
    throw SchemaError("invalid ISO-8601 UTC timestamp '" + std::string(text) + "'");
  }
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                           std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok() || hour > 23 || minute > 59 || second > 59) {
    throw SchemaError("invalid ISO-8601 UTC timestamp '" + std::string(text) + "'");
  }
  const auto secs = sys_days{ymd}.time_since_epoch().count() * 86400LL + hour * 3600LL + minute * 60LL + second;
  if (secs < 0) throw SchemaError("timestamp before 1970 '" + std::string(text) + "'");
  return Timestamp{secs};
}

std::string format_iso8601(Timestamp t) {
  using namespace std::chrono;
  const auto days_since = t.seconds >= 0 ? t.seconds / 86400 : (t.seconds - 86399) / 86400;
  const std::int64_t rem = t.seconds - days_since * 86400;
  const year_month_day ymd{sys_days{std::chrono::days{days_since}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / 3600), static_cast<int>(rem / 60 % 60), static_cast<int>(rem % 60));
  return buf;
}

bool is_missing(double v) { return std::isnan(v); }

std::string format_real(double v) {
  if (is_missing(v)) return {};
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

TimeSeries::TimeSeries(std::string name, Timestamp start, std::int64_t step, std::vector<double> values)
    : name_(std::move(name)), start_(start), step_(step), values_(std::move(values)) {
  if (step_ <= 0) throw GridError("series '" + name_ + "': step must be positive");
  if (values_.empty()) throw EmptySeriesError("series '" + name_ + "' has no samples");
}

std::size_t Grid::index_of(Timestamp t) const {
  const std::int64_t offset = t - start;
  if (offset < 0 || offset % step != 0) return npos;
  const auto index = static_cast<std::size_t>(offset / step);
  return index < length ? index : npos;
}

Roles parse_roles(std::istream& in) {
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("roles document is not valid JSON: ") + e.what());
  }
  Roles roles;
  try {
    roles.targets = doc.value("targets", std::vector<std::string>{});
    roles.covariates = doc.value("covariates", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("roles document: ") + e.what());
  }
  return roles;
}

void write_roles(std::ostream& out, const Roles& roles) {
  nlohmann::ordered_json doc;
  doc["targets"] = roles.targets;
  doc["covariates"] = roles.covariates;
  out << doc.dump(2) << '\n';
}

TelemetryFrame::TelemetryFrame(Grid grid, std::vector<Channel> channels)
    : grid_(grid), channels_(std::move(channels)) {
  if (grid_.step <= 0) throw GridError("grid step must be positive");
  std::set<std::string_view> seen;
  bool has_target = false;
  for (const auto& ch : channels_) {
    if (!seen.insert(ch.name).second) throw SchemaError("duplicate channel '" + ch.name + "'");
    if (ch.values.size() != grid_.length) {
      throw GridError("channel '" + ch.name + "' has " + std::to_string(ch.values.size()) +
                      " samples, grid has " + std::to_string(grid_.length));
    }
    has_target = has_target || ch.role == Role::target;
  }
  if (!has_target) throw SchemaError("frame has no target channel");
}

const Channel* TelemetryFrame::find(std::string_view name) const {
  for (const auto& ch : channels_) {
    if (ch.name == name) return &ch;
  }
  return nullptr;
}

const Channel& TelemetryFrame::channel(std::string_view name) const {
  const Channel* ch = find(name);
  if (ch == nullptr) throw SchemaError("no channel named '" + std::string(name) + "'");
  return *ch;
}

std::vector<std::string> TelemetryFrame::names(Role role) const {
  std::vector<std::string> out;
  for (const auto& ch : channels_) {
    if (ch.role == role) out.push_back(ch.name);
  }
  return out;
}

Roles TelemetryFrame::roles() const { return Roles{names(Role::target), names(Role::covariate)}; }

TimeSeries TelemetryFrame::series(std::string_view name) const {
  const Channel& ch = channel(name);
  return TimeSeries(ch.name, grid_.start, grid_.step, ch.values);
}

TelemetryFrame TelemetryFrame::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > grid_.length) throw GridError("slice out of range");
  std::vector<Channel> out;
  out.reserve(channels_.size());
  for (const auto& ch : channels_) {
    out.push_back(Channel{ch.name, ch.role,
                          std::vector<double>(ch.values.begin() + static_cast<std::ptrdiff_t>(begin),
                                              ch.values.begin() + static_cast<std::ptrdiff_t>(end))});
  }
  return TelemetryFrame(Grid{grid_.time_at(begin), grid_.step, end - begin}, std::move(out));
}

TelemetryFrame parse_csv(std::istream& in, const Roles& roles) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("telemetry CSV is empty");
  const auto header = split_commas(trim_line_end(line));
  if (header.empty() || header.front() != "timestamp") {
    throw SchemaError("telemetry CSV header must start with 'timestamp'");
  }

  std::unordered_map<std::string_view, Role> role_of;
  for (const auto& n : roles.targets) role_of.emplace(n, Role::target);
  for (const auto& n : roles.covariates) {
    if (!role_of.emplace(n, Role::covariate).second) {
      throw SchemaError("channel '" + n + "' listed as both target and covariate");
    }
  }

  std::set<std::string_view> seen;
  std::vector<std::size_t> kept_columns;
  std::vector<Channel> channels;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c].empty()) throw SchemaError("empty column name at column " + std::to_string(c));
    if (!seen.insert(header[c]).second) {
      throw SchemaError("duplicate column name '" + std::string(header[c]) + "'");
    }
    const auto it = role_of.find(header[c]);
    if (it == role_of.end()) continue;
    kept_columns.push_back(c);
    channels.push_back(Channel{std::string(header[c]), it->second, {}});
  }
  for (const auto& [name, role] : role_of) {
    if (seen.count(name) == 0) throw SchemaError("role names channel '" + std::string(name) + "' absent from CSV");
  }

  std::vector<Timestamp> times;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    const auto trimmed = trim_line_end(line);
    if (trimmed.empty()) continue;
    const auto cells = split_commas(trimmed);
    if (cells.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()),
                       row, cells.size());
    }
    Timestamp t;
    try {
      t = parse_iso8601(cells[0]);
    } catch (const SchemaError& e) {
      throw ParseError(e.what(), row, 0);
    }
    if (!times.empty()) {
      const std::int64_t delta = t - times.back();
      if (delta <= 0) throw GridError("timestamps not strictly increasing at row " + std::to_string(row));
      if (times.size() >= 2 && delta != times[1] - times[0]) {
        throw GridError("non-uniform grid at row " + std::to_string(row));
      }
    }
    times.push_back(t);
    for (std::size_t k = 0; k < kept_columns.size(); ++k) {
      const std::string_view cell = cells[kept_columns[k]];
      double value = kMissing;
      if (!cell.empty()) {
        auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
        if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
          throw ParseError("unparseable cell '" + std::string(cell) + "'", row, kept_columns[k]);
        }
      }
      channels[k].values.push_back(value);
    }
  }
  if (times.size() < 2) throw GridError("telemetry CSV needs at least two rows to infer the grid");
  return TelemetryFrame(Grid{times[0], times[1] - times[0], times.size()}, std::move(channels));
}

void write_csv(std::ostream& out, const TelemetryFrame& frame) {
  out << "timestamp";
  for (const auto& ch : frame.channels()) out << ',' << ch.name;
  out << '\n';
  for (std::size_t i = 0; i < frame.length(); ++i) {
    out << format_iso8601(frame.grid().time_at(i));
    for (const auto& ch : frame.channels()) out << ',' << format_real(ch.values[i]);
    out << '\n';
  }
}

namespace {

std::vector<double> resample_values(std::span<const double> values, std::size_t factor) {
  std::vector<double> out(values.size() / factor);
  for (std::size_t j = 0; j < out.size(); ++j) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = j * factor; i < (j + 1) * factor; ++i) {
      if (is_missing(values[i])) continue;
      sum += values[i];
      ++count;
    }
    out[j] = count == 0 ? kMissing : sum / static_cast<double>(count);
  }
  return out;
}

std::size_t resample_factor(std::int64_t step, std::int64_t new_step) {
  if (new_step <= 0 || new_step % step != 0) {
    throw ResampleError("new step " + std::to_string(new_step) + " s is not a positive multiple of " +
                        std::to_string(step) + " s");
  }
  return static_cast<std::size_t>(new_step / step);
}

}  // namespace

TimeSeries resample_mean(const TimeSeries& series, std::int64_t new_step) {
  const std::size_t factor = resample_factor(series.step(), new_step);
  if (factor == 1) return series;
  return TimeSeries(series.name(), series.start(), new_step, resample_values(series.values(), factor));
}

TelemetryFrame resample_mean(const TelemetryFrame& frame, std::int64_t new_step) {
  const std::size_t factor = resample_factor(frame.grid().step, new_step);
  if (factor == 1) return frame;
  std::vector<Channel> out;
  for (const auto& ch : frame.channels()) out.push_back(Channel{ch.name, ch.role, resample_values(ch.values, factor)});
  return TelemetryFrame(Grid{frame.grid().start, new_step, frame.length() / factor}, std::move(out));
}

std::size_t split_point(std::size_t length, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must lie in (0, 1)");
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(length)));
}

std::pair<TelemetryFrame, TelemetryFrame> split_fraction(const TelemetryFrame& frame, double fraction) {
  if (frame.length() == 0) throw GridError("cannot split an empty frame");
  const std::size_t cut = split_point(frame.length(), fraction);
  return {frame.slice(0, cut), frame.slice(cut, frame.length())};
}

namespace {

std::vector<double> carry_forward(std::span<const double> values, const std::string& name) {
  std::vector<double> out(values.begin(), values.end());
  std::size_t first = 0;
  while (first < out.size() && is_missing(out[first])) ++first;
  if (first == out.size()) throw EmptySeriesError("series '" + name + "' has no observed values");
  for (std::size_t i = 0; i < first; ++i) out[i] = out[first];
  for (std::size_t i = first + 1; i < out.size(); ++i) {
    if (is_missing(out[i])) out[i] = out[i - 1];
  }
  return out;
}

}  // namespace

TimeSeries fill_missing(const TimeSeries& series) {
  return TimeSeries(series.name(), series.start(), series.step(), carry_forward(series.values(), series.name()));
}

TelemetryFrame fill_missing(const TelemetryFrame& frame) {
  std::vector<Channel> out;
  for (const auto& ch : frame.channels()) out.push_back(Channel{ch.name, ch.role, carry_forward(ch.values, ch.name)});
  return TelemetryFrame(frame.grid(), std::move(out));
}

}  // namespace telscope
