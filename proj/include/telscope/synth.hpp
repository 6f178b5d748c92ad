#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "telscope/timeseries.hpp"

namespace telscope {

struct PeriodicTerm {
  double amplitude = 0.0;
  double period_seconds = 86400.0;
  double phase = 0.0;
};

/// target += gain · covariate(t − lag)
struct Coupling {
  int covariate = 0;
  double gain = 0.0;
  std::int64_t lag_seconds = 0;
};

struct TargetSpec {
  double baseline = 0.0;
  std::vector<PeriodicTerm> periodic;
  double noise_sigma = 0.0;
  std::vector<Coupling> couplings;
};

/// Sinusoids plus a mean-reverting Gaussian walk. Walk parameters are per hour.
struct CovariateSpec {
  double level = 0.0;
  std::vector<PeriodicTerm> periodic;
  double walk_sigma = 0.0;
  double reversion = 0.0;
};

/// The driver covariate takes a step of `magnitude` over [start, end); the target sees it `lag_seconds` later.
struct InjectedAnomaly {
  int target = 0;
  int driver = 0;
  std::int64_t lag_seconds = 0;
  Timestamp start;
  Timestamp end;
  double magnitude = 0.0;
};

struct SynthConfig {
  Timestamp start{1707955200};  // 2024-02-15T00:00:00Z
  double duration_days = 14.0;
  std::int64_t step_seconds = 600;
  int n_targets = 11;
  int n_covariates = 35;
  std::uint64_t seed = 1;
  /// Empty lists are drawn from `seed`.
  std::vector<TargetSpec> targets;
  std::vector<CovariateSpec> covariates;
  std::vector<InjectedAnomaly> injections;

  std::size_t length() const;
  void validate() const;

  /// 14 days at 600 s with one injected anomaly in the final third.
  static SynthConfig desk();
  /// 182 days at 10 s, 11 targets, 35 covariates.
  static SynthConfig paper_scale();
};

struct SynthResult {
  TelemetryFrame frame;
  std::vector<InjectedAnomaly> injections;
};

std::string target_name(int index);
std::string covariate_name(int index);

/// Deterministic for a given config. Throws ConfigError when the config is invalid.
SynthResult generate(const SynthConfig& config);

/// JSON with an optional `"preset": "desk" | "paper"` base, then field overrides.
SynthConfig parse_synth_config(std::istream& in);
void write_truth_json(std::ostream& out, const SynthResult& result);

}  // namespace telscope
