#include "telscope/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>

#include <json.hpp>

#include "telscope/errors.hpp"

namespace telscope {

namespace {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return std::min(n - 1, static_cast<std::size_t>(uniform() * static_cast<double>(n))); }

  // Box-Muller; keeps draws identical across standard libraries.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Independent streams per purpose so adding an injection never shifts the noise.
constexpr std::uint64_t kSpecStream = 0x5be0cd19137e2179ULL;
constexpr std::uint64_t kWalkStream = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kNoiseStream = 0xbf58476d1ce4e5b9ULL;

double periodic_value(const std::vector<PeriodicTerm>& terms, double t) {
  double v = 0.0;
  for (const auto& p : terms) v += p.amplitude * std::sin(2.0 * std::numbers::pi * t / p.period_seconds + p.phase);
  return v;
}

std::vector<CovariateSpec> draw_covariates(int n, std::uint64_t seed) {
  Rng rng(seed ^ kSpecStream);
  constexpr double kPeriods[] = {86400.0, 43200.0, 7.0 * 86400.0, 3.0 * 86400.0};
  std::vector<CovariateSpec> out;
  for (int c = 0; c < n; ++c) {
    CovariateSpec s;
    s.level = rng.uniform(-5.0, 5.0);
    s.periodic.push_back(PeriodicTerm{rng.uniform(0.3, 1.5), kPeriods[rng.index(4)], rng.uniform(0.0, 2.0 * std::numbers::pi)});
    s.walk_sigma = 0.05;
    s.reversion = 0.02;
    out.push_back(s);
  }
  return out;
}

std::vector<TargetSpec> draw_targets(int n, int n_covariates, std::int64_t step, std::uint64_t seed) {
  Rng rng((seed ^ kSpecStream) + 1);
  std::vector<TargetSpec> out;
  for (int t = 0; t < n; ++t) {
    TargetSpec s;
    s.baseline = rng.uniform(-20.0, 20.0);
    s.periodic.push_back(PeriodicTerm{rng.uniform(0.2, 1.0), 86400.0, rng.uniform(0.0, 2.0 * std::numbers::pi)});
    s.noise_sigma = 0.02;
    for (int k = 0; k < 2 && n_covariates > 0; ++k) {
      const auto cov = static_cast<int>(rng.index(static_cast<std::size_t>(n_covariates)));
      const std::int64_t hours = std::array<std::int64_t, 3>{0, 1, 6}[rng.index(3)];
      const std::int64_t lag = (hours * 3600 / step) * step;
      s.couplings.push_back(Coupling{cov, rng.uniform(-0.3, 0.3), lag});
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace

std::string target_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "T%02d", index);
  return buf;
}

std::string covariate_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "C%02d", index);
  return buf;
}

std::size_t SynthConfig::length() const {
  if (step_seconds <= 0 || !(duration_days > 0.0)) return 0;
  return static_cast<std::size_t>(std::floor(duration_days * 86400.0 / static_cast<double>(step_seconds)));
}

void SynthConfig::validate() const {
  if (step_seconds <= 0) throw ConfigError("step_seconds must be positive");
  if (length() < 2) throw ConfigError("duration must cover at least two samples");
  if (n_targets < 1) throw ConfigError("n_targets must be >= 1");
  if (n_covariates < 0) throw ConfigError("n_covariates must be >= 0");
  if (!targets.empty() && targets.size() != static_cast<std::size_t>(n_targets)) {
    throw ConfigError("targets list length differs from n_targets");
  }
  if (!covariates.empty() && covariates.size() != static_cast<std::size_t>(n_covariates)) {
    throw ConfigError("covariates list length differs from n_covariates");
  }
  auto check_lag = [&](std::int64_t lag) {
    if (lag < 0 || lag % step_seconds != 0) {
      throw ConfigError("lag " + std::to_string(lag) + " s is not a non-negative multiple of the step");
    }
  };
  for (const auto& t : targets) {
    for (const auto& c : t.couplings) {
      check_lag(c.lag_seconds);
      if (c.covariate < 0 || c.covariate >= n_covariates) throw ConfigError("coupling covariate index out of range");
    }
    for (const auto& p : t.periodic) {
      if (!(p.period_seconds > 0.0)) throw ConfigError("period must be positive");
    }
  }
  const Timestamp end = start + static_cast<std::int64_t>(length()) * step_seconds;
  for (const auto& inj : injections) {
    check_lag(inj.lag_seconds);
    if (inj.target < 0 || inj.target >= n_targets) throw ConfigError("injection target index out of range");
    if (inj.driver < 0 || inj.driver >= n_covariates) throw ConfigError("injection driver index out of range");
    if (!(inj.start < inj.end)) throw ConfigError("injection span is empty");
    if (inj.start < start || end < inj.end) throw ConfigError("injection span outside the generated duration");
  }
}

SynthConfig SynthConfig::desk() {
  SynthConfig c;
  c.duration_days = 14.0;
  c.step_seconds = 600;
  InjectedAnomaly inj;
  inj.target = 0;
  inj.driver = 5;
  inj.lag_seconds = 1800;
  inj.start = c.start + 11 * 86400;
  inj.end = c.start + 12 * 86400;
  inj.magnitude = 6.0;
  c.injections.push_back(inj);
  return c;
}

SynthConfig SynthConfig::paper_scale() {
  SynthConfig c;
  c.duration_days = 182.0;
  c.step_seconds = 10;
  const std::int64_t day = 86400;
  c.injections.push_back(InjectedAnomaly{0, 5, 1800, c.start + 123 * day, c.start + 133 * day, 6.0});
  c.injections.push_back(InjectedAnomaly{1, 12, 86400, c.start + 140 * day, c.start + 150 * day, 6.0});
  c.injections.push_back(InjectedAnomaly{2, 20, 14400, c.start + 160 * day, c.start + 170 * day, 6.0});
  return c;
}

SynthResult generate(const SynthConfig& config) {
  config.validate();
  const std::size_t n = config.length();
  const std::int64_t step = config.step_seconds;
  const auto covariates = config.covariates.empty() ? draw_covariates(config.n_covariates, config.seed) : config.covariates;
  const auto targets =
      config.targets.empty() ? draw_targets(config.n_targets, config.n_covariates, step, config.seed) : config.targets;
  auto seconds_at = [&](std::size_t i) { return static_cast<double>(i) * static_cast<double>(step); };

  std::vector<std::vector<double>> nominal(covariates.size(), std::vector<double>(n));
  for (std::size_t c = 0; c < covariates.size(); ++c) {
    const CovariateSpec& s = covariates[c];
    Rng rng((config.seed ^ kWalkStream) + c);
    const double hours = static_cast<double>(step) / 3600.0;
    const double keep = std::exp(-s.reversion * hours);
    const double sigma = s.walk_sigma * std::sqrt(hours);
    double walk = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0 && sigma > 0.0) walk = keep * walk + sigma * rng.normal();
      nominal[c][i] = s.level + periodic_value(s.periodic, seconds_at(i)) + walk;
    }
  }

  // Excursion per covariate, and the lagged response it induces per target.
  std::vector<std::vector<double>> excursion(covariates.size(), std::vector<double>(n, 0.0));
  std::vector<std::vector<double>> response(targets.size(), std::vector<double>(n, 0.0));
  const Grid grid{config.start, step, n};
  for (const auto& inj : config.injections) {
    auto& e = excursion[static_cast<std::size_t>(inj.driver)];
    auto& r = response[static_cast<std::size_t>(inj.target)];
    const auto lag = static_cast<std::size_t>(inj.lag_seconds / step);
    for (std::size_t i = 0; i < n; ++i) {
      const Timestamp t = grid.time_at(i);
      if (t < inj.start || !(t < inj.end)) continue;
      e[i] += inj.magnitude;
      if (i + lag < n) r[i + lag] += inj.magnitude;
    }
  }

  std::vector<Channel> channels;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const TargetSpec& s = targets[t];
    Rng rng((config.seed ^ kNoiseStream) + t);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
      double y = s.baseline + periodic_value(s.periodic, seconds_at(i));
      for (const auto& cp : s.couplings) {
        const auto lag = static_cast<std::size_t>(cp.lag_seconds / step);
        const std::size_t src = i >= lag ? i - lag : 0;
        y += cp.gain * nominal[static_cast<std::size_t>(cp.covariate)][src];
      }
      y += response[t][i];
      if (s.noise_sigma > 0.0) y += s.noise_sigma * rng.normal();
      v[i] = y;
    }
    channels.push_back(Channel{target_name(static_cast<int>(t)), Role::target, std::move(v)});
  }
  for (std::size_t c = 0; c < covariates.size(); ++c) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = nominal[c][i] + excursion[c][i];
    channels.push_back(Channel{covariate_name(static_cast<int>(c)), Role::covariate, std::move(v)});
  }
  return SynthResult{TelemetryFrame(grid, std::move(channels)), config.injections};
}

namespace {

using nlohmann::json;

std::vector<PeriodicTerm> parse_periodic(const json& j) {
  std::vector<PeriodicTerm> out;
  for (const auto& p : j) {
    out.push_back(PeriodicTerm{p.at("amplitude").get<double>(), p.at("period_seconds").get<double>(), p.value("phase", 0.0)});
  }
  return out;
}

Timestamp parse_instant(const json& j, const char* iso_key, const char* day_key, Timestamp origin) {
  if (j.contains(iso_key)) return parse_iso8601(j.at(iso_key).get<std::string>());
  if (j.contains(day_key)) {
    return origin + static_cast<std::int64_t>(std::llround(j.at(day_key).get<double>() * 86400.0));
  }
  throw ConfigError(std::string("injection needs '") + iso_key + "' or '" + day_key + "'");
}

}  // namespace

SynthConfig parse_synth_config(std::istream& in) {
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth config is not valid JSON: ") + e.what());
  }
  try {
    SynthConfig c;
    const std::string preset = doc.value("preset", "");
    if (preset == "desk") {
      c = SynthConfig::desk();
    } else if (preset == "paper") {
      c = SynthConfig::paper_scale();
    } else if (!preset.empty()) {
      throw ConfigError("unknown preset '" + preset + "'");
    }
    if (doc.contains("start")) c.start = parse_iso8601(doc.at("start").get<std::string>());
    c.duration_days = doc.value("duration_days", c.duration_days);
    c.step_seconds = doc.value("step_seconds", c.step_seconds);
    c.n_targets = doc.value("n_targets", c.n_targets);
    c.n_covariates = doc.value("n_covariates", c.n_covariates);
    c.seed = doc.value("seed", c.seed);
    if (doc.contains("targets")) {
      c.targets.clear();
      for (const auto& t : doc.at("targets")) {
        TargetSpec s;
        s.baseline = t.value("baseline", 0.0);
        s.noise_sigma = t.value("noise_sigma", 0.0);
        if (t.contains("periodic")) s.periodic = parse_periodic(t.at("periodic"));
        if (t.contains("couplings")) {
          for (const auto& cp : t.at("couplings")) {
            s.couplings.push_back(Coupling{cp.at("covariate").get<int>(), cp.at("gain").get<double>(),
                                           cp.value("lag_seconds", std::int64_t{0})});
          }
        }
        c.targets.push_back(std::move(s));
      }
    }
    if (doc.contains("covariates")) {
      c.covariates.clear();
      for (const auto& cv : doc.at("covariates")) {
        CovariateSpec s;
        s.level = cv.value("level", 0.0);
        s.walk_sigma = cv.value("walk_sigma", 0.0);
        s.reversion = cv.value("reversion", 0.0);
        if (cv.contains("periodic")) s.periodic = parse_periodic(cv.at("periodic"));
        c.covariates.push_back(std::move(s));
      }
    }
    if (doc.contains("injections")) {
      c.injections.clear();
      for (const auto& j : doc.at("injections")) {
        InjectedAnomaly inj;
        inj.target = j.at("target").get<int>();
        inj.driver = j.at("driver").get<int>();
        inj.lag_seconds = j.value("lag_seconds", std::int64_t{0});
        inj.start = parse_instant(j, "start", "start_day", c.start);
        inj.end = parse_instant(j, "end", "end_day", c.start);
        inj.magnitude = j.at("magnitude").get<double>();
        c.injections.push_back(inj);
      }
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  } catch (const SchemaError& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
}

void write_truth_json(std::ostream& out, const SynthResult& result) {
  auto list = nlohmann::ordered_json::array();
  for (const auto& inj : result.injections) {
    nlohmann::ordered_json j;
    j["target"] = target_name(inj.target);
    j["target_index"] = inj.target;
    j["driver"] = covariate_name(inj.driver);
    j["driver_index"] = inj.driver;
    j["lag_seconds"] = inj.lag_seconds;
    j["start"] = format_iso8601(inj.start);
    j["end"] = format_iso8601(inj.end);
    j["magnitude"] = inj.magnitude;
    list.push_back(std::move(j));
  }
  nlohmann::ordered_json doc;
  doc["injections"] = std::move(list);
  out << doc.dump(2) << '\n';
}

}  // namespace telscope
