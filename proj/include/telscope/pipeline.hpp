#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "telscope/anomaly.hpp"
#include "telscope/attribution.hpp"
#include "telscope/features.hpp"
#include "telscope/gbdt.hpp"
#include "telscope/timeseries.hpp"

namespace telscope {

enum class Model2Target { residual, anomaly_score };

struct ScorerConfig {
  int k = 8;
  int window = 64;
  std::uint64_t seed = 0;
};

struct PipelineConfig {
  std::int64_t resample_step = 600;
  LagSpec model1_lags = LagSpec::model1_default();
  double split_fraction = 0.66;
  ScorerConfig scorer;
  LagSpec model2_lags = LagSpec::model2_default();
  double span_days = 10.0;
  int top_k = 3;
  TrainConfig model1_train;
  TrainConfig model2_train;
  Model2Target model2_target = Model2Target::residual;

  /// span_days in grid samples; ConfigError unless it is a whole number.
  std::size_t span_samples() const;
  void validate() const;
};

/// Every field optional; absent fields keep their defaults.
PipelineConfig parse_pipeline_config(std::istream& in);

/// Pearson correlation, pairwise-complete over missing samples. Row-major n × n.
struct CorrelationMatrix {
  std::vector<std::string> names;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * names.size() + j]; }
};

CorrelationMatrix correlations(const TelemetryFrame& frame, const std::vector<std::string>& names);

struct SpanReport {
  AnomalySpan span;
  AttributionMatrix attribution;
  FeatureImportance importance;
};

struct ParameterReport {
  std::string parameter;
  // Test span, Model 1.
  TimeSeries actual;
  TimeSeries predicted;
  TimeSeries residual;
  // Model 2 output in the residual mode (predicted residuals), otherwise absent.
  std::optional<TimeSeries> predicted_residual;
  TimeSeries anomaly_score;
  std::optional<TimeSeries> predicted_anomaly_score;
  std::vector<SpanReport> spans;
  FeatureImportance importance;
  CorrelationMatrix correlations;

  TreeEnsemble model1;
  KMeansScorerModel scorer;
  TreeEnsemble model2;
  FeatureMatrix model2_rows;
};

/// Resample, forecast from self-lags, score residual windows, model the anomaly signal from
/// lagged covariates over the test span, rank spans and attribute them.
ParameterReport run_parameter(const TelemetryFrame& frame, const std::string& target_name, const PipelineConfig& config);

struct ParameterOutcome {
  std::string parameter;
  std::optional<ParameterReport> report;
  std::string error;

  bool ok() const { return report.has_value(); }
};

/// One independent run per target (all targets when `parameters` is empty). Failures are
/// recorded per parameter. Output order follows the request order for any `jobs`.
std::vector<ParameterOutcome> run_all(const TelemetryFrame& frame, const PipelineConfig& config,
                                      const std::vector<std::string>& parameters = {}, int jobs = 1);

}  // namespace telscope
