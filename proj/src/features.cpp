#include "telscope/features.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "telscope/errors.hpp"

namespace telscope {

LagSpec::LagSpec(std::vector<LagEntry> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].lag_seconds <= 0) throw ConfigError("lag must be positive");
    if (entries_[i].points < 1) throw ConfigError("lag points must be >= 1");
    if (i > 0 && entries_[i].lag_seconds <= entries_[i - 1].lag_seconds) {
      throw ConfigError("lags must be strictly increasing");
    }
  }
}

std::size_t LagSpec::columns_per_channel() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.points);
  return n;
}

LagSpec LagSpec::model1_default() { return LagSpec({{900, 1}, {3600, 1}}); }

LagSpec LagSpec::model2_default() { return LagSpec({{1800, 3}, {14400, 3}, {86400, 3}}); }

LagSpec parse_lag_spec(std::istream& in) {
  try {
    nlohmann::json doc;
    in >> doc;
    std::vector<LagEntry> entries;
    for (const auto& e : doc.at("entries")) {
      entries.push_back(LagEntry{e.at("lag_seconds").get<std::int64_t>(), e.value("points", 1)});
    }
    return LagSpec(std::move(entries));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("lag spec: ") + e.what());
  }
}

std::string lag_column_name(std::string_view channel, std::int64_t seconds) {
  return std::string(channel) + "@-" + std::to_string(seconds);
}

namespace {

std::int64_t round_half_up(std::int64_t num, std::int64_t den) { return (2 * num + den) / (2 * den); }

std::vector<std::int64_t> expand_offsets(const LagSpec& lags, std::int64_t step, std::int64_t floor) {
  std::vector<std::int64_t> offsets;
  for (const auto& e : lags.entries()) {
    const std::int64_t base = std::max(floor, round_half_up(e.lag_seconds, step));
    for (int p = 0; p < e.points; ++p) offsets.push_back(base + p);
  }
  return offsets;
}

}  // namespace

std::vector<std::int64_t> self_lag_offsets(const LagSpec& lags, std::int64_t step) {
  return expand_offsets(lags, step, 1);
}

std::vector<std::int64_t> covariate_lag_offsets(const LagSpec& lags, std::int64_t step) {
  return expand_offsets(lags, step, 0);
}

FeatureMatrix FeatureMatrix::select_time_range(Timestamp begin, Timestamp end) const {
  FeatureMatrix out;
  out.column_names = column_names;
  if (target) out.target.emplace();
  for (std::size_t r = 0; r < rows(); ++r) {
    if (row_timestamps[r] < begin || !(row_timestamps[r] < end)) continue;
    out.row_timestamps.push_back(row_timestamps[r]);
    const auto x = row(r);
    out.values.insert(out.values.end(), x.begin(), x.end());
    if (target) out.target->push_back((*target)[r]);
  }
  return out;
}

FeatureMatrix build_self_lag(const TimeSeries& target, const LagSpec& lags) {
  const auto offsets = self_lag_offsets(lags, target.step());
  if (offsets.empty()) throw ConfigError("self-lag spec has no entries");
  const auto max_offset = static_cast<std::size_t>(*std::max_element(offsets.begin(), offsets.end()));
  if (target.size() <= max_offset) {
    throw InsufficientHistoryError("series '" + target.name() + "' has " + std::to_string(target.size()) +
                                   " samples, needs more than " + std::to_string(max_offset));
  }

  FeatureMatrix m;
  for (auto o : offsets) m.column_names.push_back(lag_column_name(target.name(), o * target.step()));
  m.target.emplace();
  const auto values = target.values();
  const std::size_t n_rows = target.size() - max_offset;
  m.values.reserve(n_rows * offsets.size());
  m.row_timestamps.reserve(n_rows);
  m.target->reserve(n_rows);
  for (std::size_t i = max_offset; i < target.size(); ++i) {
    for (auto o : offsets) m.values.push_back(values[i - static_cast<std::size_t>(o)]);
    m.row_timestamps.push_back(target.time_at(i));
    m.target->push_back(values[i]);
  }
  return m;
}

FeatureMatrix build_covariate_features(const TelemetryFrame& frame, const LagSpec& spec, Timestamp row_begin,
                                       Timestamp row_end) {
  const Grid& grid = frame.grid();
  const auto offsets = covariate_lag_offsets(spec, grid.step);
  if (offsets.empty()) throw ConfigError("covariate lag spec has no entries");
  const auto max_offset = static_cast<std::size_t>(*std::max_element(offsets.begin(), offsets.end()));

  std::vector<const Channel*> covariates;
  for (const auto& ch : frame.channels()) {
    if (ch.role == Role::covariate) covariates.push_back(&ch);
  }

  FeatureMatrix m;
  for (const Channel* ch : covariates) {
    for (auto o : offsets) m.column_names.push_back(lag_column_name(ch->name, o * grid.step));
  }

  for (std::size_t i = max_offset; i < grid.length; ++i) {
    const Timestamp t = grid.time_at(i);
    if (t < row_begin || !(t < row_end)) continue;
    for (const Channel* ch : covariates) {
      for (auto o : offsets) m.values.push_back(ch->values[i - static_cast<std::size_t>(o)]);
    }
    m.row_timestamps.push_back(t);
  }
  if (m.row_timestamps.empty() || m.column_names.empty()) {
    throw InsufficientHistoryError("no covariate feature rows with full lag history in the requested range");
  }
  return m;
}

void write_feature_csv(std::ostream& out, const FeatureMatrix& m) {
  out << "timestamp";
  for (const auto& name : m.column_names) out << ',' << name;
  out << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << format_iso8601(m.row_timestamps[r]);
    for (double v : m.row(r)) out << ',' << format_real(v);
    out << '\n';
  }
}

FeatureMatrix parse_feature_csv(std::istream& in) {
  // Same cell rules as telemetry CSV, but columns are features rather than channels
  // and the grid need not be uniform.
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("feature CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  FeatureMatrix m;
  std::size_t pos = 0;
  bool first = true;
  while (true) {
    const auto comma = line.find(',', pos);
    const std::string cell = line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (first) {
      if (cell != "timestamp") throw SchemaError("feature CSV header must start with 'timestamp'");
      first = false;
    } else {
      m.column_names.push_back(cell);
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }

  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t col = 0;
    pos = 0;
    while (true) {
      const auto comma = line.find(',', pos);
      const std::string_view cell =
          std::string_view(line).substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      if (col == 0) {
        Timestamp t;
        try {
          t = parse_iso8601(cell);
        } catch (const SchemaError& e) {
          throw ParseError(e.what(), row, 0);
        }
        if (!m.row_timestamps.empty() && !(m.row_timestamps.back() < t)) {
          throw ParseError("timestamps must be strictly increasing", row, 0);
        }
        m.row_timestamps.push_back(t);
      } else {
        if (col > m.cols()) throw ParseError("too many cells", row, col);
        double v = kMissing;
        if (!cell.empty()) {
          auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
          if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
            throw ParseError("unparseable cell '" + std::string(cell) + "'", row, col);
          }
        }
        m.values.push_back(v);
      }
      ++col;
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (col != m.cols() + 1) throw ParseError("too few cells", row, col);
  }
  return m;
}

}  // namespace telscope
