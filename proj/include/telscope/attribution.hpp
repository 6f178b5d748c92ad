#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "telscope/anomaly.hpp"
#include "telscope/features.hpp"
#include "telscope/gbdt.hpp"

namespace telscope {

/// Per-row Shapley values. For each row, base_value + Σφ equals the model prediction.
struct AttributionMatrix {
  double base_value = 0.0;
  std::vector<std::string> feature_names;
  std::vector<Timestamp> row_timestamps;
  std::vector<double> values;  // row-major, rows() × feature_names.size()

  std::size_t rows() const { return row_timestamps.size(); }
  std::size_t cols() const { return feature_names.size(); }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols(), cols()}; }
};

struct ImportanceEntry {
  std::string feature;
  std::size_t index = 0;
  double mean_abs_shap = 0.0;
};

/// Sorted by mean |φ| descending, ties by feature index.
using FeatureImportance = std::vector<ImportanceEntry>;

/// Conditional expectation of the model given the features flagged in `active`: inactive splits
/// average their children by cover. Throws ModelFormatError on a zero-cover internal node.
double expected_value(const TreeEnsemble& model, std::span<const double> x, const std::vector<bool>& active);

/// Shapley values by enumerating every feature subset. Limited to 20 features (ComplexityError).
/// `base` receives expected_value(∅) when given.
std::vector<double> shapley_oracle(const TreeEnsemble& model, std::span<const double> x, double* base = nullptr);

/// Polynomial-time exact Shapley values (path-dependent TreeSHAP) for one row.
std::vector<double> treeshap_row(const TreeEnsemble& model, std::span<const double> x);
double attribution_base_value(const TreeEnsemble& model);

AttributionMatrix treeshap(const TreeEnsemble& model, const FeatureMatrix& rows);

FeatureImportance importance_summary(const AttributionMatrix& attr);

/// treeshap over the rows with timestamps in [span.start, span.end). Throws EmptySpanError if none.
AttributionMatrix window_attribution(const TreeEnsemble& model, const FeatureMatrix& rows, const AnomalySpan& span);

/// `# base_value=<r>` line, then `timestamp,<feature>...`.
void write_attribution_csv(std::ostream& out, const AttributionMatrix& attr);
void write_importance_json(std::ostream& out, const FeatureImportance& importance);

}  // namespace telscope
