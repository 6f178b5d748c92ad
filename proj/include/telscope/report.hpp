#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "telscope/pipeline.hpp"

namespace telscope {

/// Writes every artifact for one parameter under `out_dir / report.parameter`:
/// predictions.csv, residuals.csv, anomaly_scores.csv, spans.json, importance.json,
/// correlations.csv, shap_span_<rank>.csv, SVG plots, and the fitted models.
/// Throws IoError naming the path on failure.
void emit_report(const ParameterReport& report, const std::filesystem::path& out_dir);

void write_spans_json(std::ostream& out, std::span<const SpanReport> spans);
void write_correlations_csv(std::ostream& out, const CorrelationMatrix& corr);

namespace svg {

struct Line {
  std::string label;
  const TimeSeries* series;
};

struct Band {
  Timestamp start;
  Timestamp end;
  std::string label;
};

/// Self-contained line chart of one or more series over time, with shaded bands.
std::string line_plot(const std::string& title, const std::vector<Line>& lines, const std::vector<Band>& bands);

/// Rows = features, columns = attribution rows, diverging colour scale centred at zero.
/// Shows the `max_features` features with the largest mean |φ|.
std::string heatmap(const std::string& title, const AttributionMatrix& attr, std::size_t max_features = 20);

}  // namespace svg

}  // namespace telscope
