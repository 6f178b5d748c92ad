#include "telscope/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <istream>
#include <thread>

#include <json.hpp>

#include "telscope/errors.hpp"

namespace telscope {

std::size_t PipelineConfig::span_samples() const {
  const double samples = span_days * 86400.0 / static_cast<double>(resample_step);
  const double rounded = std::round(samples);
  if (!(rounded >= 1.0) || std::abs(samples - rounded) > 1e-9) {
    throw ConfigError("span of " + format_real(span_days) + " days is not a whole number of " +
                      std::to_string(resample_step) + " s samples");
  }
  return static_cast<std::size_t>(rounded);
}

void PipelineConfig::validate() const {
  if (resample_step <= 0) throw ConfigError("resample_step must be positive");
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw ConfigError("split_fraction must lie in (0, 1)");
  if (scorer.k < 1 || scorer.window < 1) throw ConfigError("scorer k and window must be >= 1");
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  if (model1_lags.entries().empty() || model2_lags.entries().empty()) throw ConfigError("lag specs must not be empty");
  span_samples();
  model1_train.validate();
  model2_train.validate();
}

namespace {

using nlohmann::json;

LagSpec lags_from_json(const json& j) {
  std::vector<LagEntry> entries;
  for (const auto& e : j.at("entries")) entries.push_back(LagEntry{e.at("lag_seconds").get<std::int64_t>(), e.value("points", 1)});
  return LagSpec(std::move(entries));
}

TrainConfig train_from_json(const json& j, TrainConfig c) {
  c.rounds = j.value("rounds", c.rounds);
  c.max_depth = j.value("max_depth", c.max_depth);
  c.eta = j.value("eta", c.eta);
  c.lambda = j.value("lambda", c.lambda);
  c.gamma = j.value("gamma", c.gamma);
  c.min_child_weight = j.value("min_child_weight", c.min_child_weight);
  c.seed = j.value("seed", c.seed);
  return c;
}

}  // namespace

PipelineConfig parse_pipeline_config(std::istream& in) {
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("pipeline config is not valid JSON: ") + e.what());
  }
  PipelineConfig c;
  try {
    c.resample_step = doc.value("resample_step", c.resample_step);
    if (doc.contains("model1_lags")) c.model1_lags = lags_from_json(doc.at("model1_lags"));
    c.split_fraction = doc.value("split_fraction", c.split_fraction);
    if (doc.contains("scorer")) {
      const auto& s = doc.at("scorer");
      c.scorer.k = s.value("k", c.scorer.k);
      c.scorer.window = s.value("window", c.scorer.window);
      c.scorer.seed = s.value("seed", c.scorer.seed);
    }
    if (doc.contains("model2_lags")) c.model2_lags = lags_from_json(doc.at("model2_lags"));
    c.span_days = doc.value("span_days", c.span_days);
    c.top_k = doc.value("top_k", c.top_k);
    if (doc.contains("model1_train")) c.model1_train = train_from_json(doc.at("model1_train"), c.model1_train);
    if (doc.contains("model2_train")) c.model2_train = train_from_json(doc.at("model2_train"), c.model2_train);
    const std::string target = doc.value("model2_target", std::string("residual"));
    if (target == "residual") {
      c.model2_target = Model2Target::residual;
    } else if (target == "anomaly_score") {
      c.model2_target = Model2Target::anomaly_score;
    } else {
      throw ConfigError("model2_target must be 'residual' or 'anomaly_score'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("pipeline config: ") + e.what());
  }
  c.validate();
  return c;
}

CorrelationMatrix correlations(const TelemetryFrame& frame, const std::vector<std::string>& names) {
  CorrelationMatrix out;
  out.names = names;
  const std::size_t n = names.size();
  out.values.assign(n * n, kMissing);
  std::vector<const std::vector<double>*> cols;
  for (const auto& name : names) cols.push_back(&frame.channel(name).values);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a; b < n; ++b) {
      const auto& x = *cols[a];
      const auto& y = *cols[b];
      double sx = 0, sy = 0;
      std::size_t count = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (is_missing(x[i]) || is_missing(y[i])) continue;
        sx += x[i];
        sy += y[i];
        ++count;
      }
      if (count < 2) continue;
      const double mx = sx / static_cast<double>(count);
      const double my = sy / static_cast<double>(count);
      double sxx = 0, syy = 0, sxy = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (is_missing(x[i]) || is_missing(y[i])) continue;
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
      }
      if (!(sxx > 0.0 && syy > 0.0)) continue;
      const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
      out.values[a * n + b] = r;
      out.values[b * n + a] = r;
    }
  }
  return out;
}

namespace {

TimeSeries sub_series(const TimeSeries& s, std::size_t begin, std::size_t end, const std::string& name) {
  return TimeSeries(name, s.time_at(begin), s.step(),
                    std::vector<double>(s.values().begin() + static_cast<std::ptrdiff_t>(begin),
                                        s.values().begin() + static_cast<std::ptrdiff_t>(end)));
}

// Index of the first sample at or after `t` (size() when none).
std::size_t first_at_or_after(const TimeSeries& s, Timestamp t) {
  if (t <= s.start()) return 0;
  const std::int64_t offset = t - s.start();
  const auto idx = static_cast<std::size_t>((offset + s.step() - 1) / s.step());
  return std::min(idx, s.size());
}

ParameterReport run_checked(const TelemetryFrame& frame, const std::string& target_name, const PipelineConfig& config) {
  config.validate();
  const Channel& target_channel = frame.channel(target_name);
  if (target_channel.role != Role::target) throw SchemaError("'" + target_name + "' is not a target");

  // (1) resample the target and every covariate, keep the raw bins for correlations, then fill gaps.
  std::vector<Channel> selected{target_channel};
  for (const auto& ch : frame.channels()) {
    if (ch.role == Role::covariate) selected.push_back(ch);
  }
  if (selected.size() < 2) throw SchemaError("no covariate channels");
  const TelemetryFrame resampled = resample_mean(TelemetryFrame(frame.grid(), std::move(selected)), config.resample_step);
  const TelemetryFrame filled = fill_missing(resampled);
  const Grid& grid = filled.grid();
  const std::size_t cut = split_point(grid.length, config.split_fraction);
  if (cut == 0 || cut >= grid.length) throw InsufficientDataError("split leaves an empty train or test span");
  const Timestamp test_begin = grid.time_at(cut);
  const Timestamp grid_end = grid.time_at(grid.length);

  // (2) Model 1 on self-lags, trained on the first part.
  const TimeSeries target = filled.series(target_name);
  const FeatureMatrix self_lag = build_self_lag(target, config.model1_lags);
  const FeatureMatrix model1_train_rows = self_lag.select_time_range(grid.start, test_begin);
  if (model1_train_rows.rows() == 0) throw InsufficientHistoryError("no Model 1 training rows before the split");
  TreeEnsemble model1 = train(model1_train_rows, config.model1_train);

  // (3) one-step-ahead predictions and residuals over the full span.
  const std::vector<double> predicted_all = model1.predict(self_lag);
  const std::size_t first_row = grid.index_of(self_lag.row_timestamps.front());
  const TimeSeries actual_all = sub_series(target, first_row, grid.length, target_name);
  const TimeSeries residual_all = residuals(actual_all, predicted_all);
  const TimeSeries predicted_series(target_name, actual_all.start(), actual_all.step(), predicted_all);

  // (4) scorer fitted on training residuals, applied everywhere.
  const std::size_t residual_cut = first_at_or_after(residual_all, test_begin);
  const TimeSeries train_residual = sub_series(residual_all, 0, residual_cut, target_name);
  KMeansScorerModel scorer = fit_scorer(train_residual, config.scorer.k, config.scorer.window, config.scorer.seed);
  const TimeSeries score_all = score(scorer, residual_all);
  const std::size_t score_cut = first_at_or_after(score_all, test_begin);
  if (score_cut >= score_all.size()) throw InsufficientDataError("no anomaly scores inside the test span");
  const TimeSeries score_test = sub_series(score_all, score_cut, score_all.size(), target_name);

  // (5) Model 2 on lagged covariates over the test span.
  FeatureMatrix rows = build_covariate_features(filled, config.model2_lags, test_begin, grid_end);
  const TimeSeries& signal = config.model2_target == Model2Target::residual ? residual_all : score_all;
  {
    const Timestamp signal_begin = signal.start();
    if (rows.row_timestamps.front() < signal_begin) rows = rows.select_time_range(signal_begin, grid_end);
    if (rows.rows() == 0) throw InsufficientDataError("no Model 2 rows with a defined target signal");
    std::vector<double> y;
    y.reserve(rows.rows());
    for (Timestamp t : rows.row_timestamps) y.push_back(signal[static_cast<std::size_t>((t - signal.start()) / signal.step())]);
    rows.target = std::move(y);
  }
  TreeEnsemble model2 = train(rows, config.model2_train);

  // (6) Model 2 predictions; residual predictions pass through the scorer.
  const std::vector<double> model2_pred = model2.predict(rows);
  std::optional<TimeSeries> predicted_residual;
  std::optional<TimeSeries> predicted_score;
  const TimeSeries model2_series(target_name, rows.row_timestamps.front(), grid.step, model2_pred);
  if (config.model2_target == Model2Target::residual) {
    predicted_residual = model2_series;
    if (model2_series.size() >= static_cast<std::size_t>(scorer.window)) predicted_score = score(scorer, model2_series);
  } else {
    predicted_score = model2_series;
  }

  // (7) ranked spans, (8) attribution.
  const auto spans = rank_spans(score_test, config.span_samples(), config.top_k);
  std::vector<SpanReport> span_reports;
  for (const auto& span : spans) {
    AttributionMatrix attr = window_attribution(model2, rows, span);
    FeatureImportance imp = importance_summary(attr);
    span_reports.push_back(SpanReport{span, std::move(attr), std::move(imp)});
  }
  const FeatureImportance global_importance = importance_summary(treeshap(model2, rows));

  // (9) correlations over the resampled, unfilled grid.
  std::vector<std::string> names{target_name};
  for (const auto& n : resampled.names(Role::covariate)) names.push_back(n);
  CorrelationMatrix corr = correlations(resampled, names);

  const std::size_t test_row = first_at_or_after(actual_all, test_begin);
  return ParameterReport{
      .parameter = target_name,
      .actual = sub_series(actual_all, test_row, actual_all.size(), target_name),
      .predicted = sub_series(predicted_series, test_row, predicted_series.size(), target_name),
      .residual = sub_series(residual_all, test_row, residual_all.size(), target_name),
      .predicted_residual = std::move(predicted_residual),
      .anomaly_score = score_test,
      .predicted_anomaly_score = std::move(predicted_score),
      .spans = std::move(span_reports),
      .importance = global_importance,
      .correlations = std::move(corr),
      .model1 = std::move(model1),
      .scorer = std::move(scorer),
      .model2 = std::move(model2),
      .model2_rows = std::move(rows),
  };
}

}  // namespace

namespace {

// Rethrows the active error as the same type with the parameter name prefixed.
[[noreturn]] void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const ParseError& e) {
    throw ParseError(context + e.what(), e.row(), e.column());
  }
#define TELSCOPE_RETHROW(Type) \
  catch (const Type& e) {      \
    throw Type(context + e.what()); \
  }
  TELSCOPE_RETHROW(GridError)
  TELSCOPE_RETHROW(SchemaError)
  TELSCOPE_RETHROW(ResampleError)
  TELSCOPE_RETHROW(EmptySeriesError)
  TELSCOPE_RETHROW(InsufficientHistoryError)
  TELSCOPE_RETHROW(EmptyTrainingError)
  TELSCOPE_RETHROW(ModelFormatError)
  TELSCOPE_RETHROW(AlignmentError)
  TELSCOPE_RETHROW(InsufficientDataError)
  TELSCOPE_RETHROW(ComplexityError)
  TELSCOPE_RETHROW(EmptySpanError)
  TELSCOPE_RETHROW(ConfigError)
  TELSCOPE_RETHROW(IoError)
  TELSCOPE_RETHROW(Error)
#undef TELSCOPE_RETHROW
}

}  // namespace

ParameterReport run_parameter(const TelemetryFrame& frame, const std::string& target_name, const PipelineConfig& config) {
  try {
    return run_checked(frame, target_name, config);
  } catch (const Error&) {
    rethrow_with_context("parameter '" + target_name + "': ");
  }
}

std::vector<ParameterOutcome> run_all(const TelemetryFrame& frame, const PipelineConfig& config,
                                      const std::vector<std::string>& parameters, int jobs) {
  const std::vector<std::string> names = parameters.empty() ? frame.names(Role::target) : parameters;
  std::vector<ParameterOutcome> out(names.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < names.size(); i = next++) {
      out[i].parameter = names[i];
      try {
        out[i].report = run_parameter(frame, names[i], config);
      } catch (const std::exception& e) {
        out[i].error = e.what();
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::max(1, jobs));
  if (threads == 1 || names.size() <= 1) {
    worker();
    return out;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(threads, names.size()); ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  return out;
}

}  // namespace telscope
