#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "telscope/timeseries.hpp"

namespace telscope {

/// actual − predicted, on the grid of `actual`. Throws AlignmentError on length mismatch.
TimeSeries residuals(const TimeSeries& actual, std::span<const double> predicted);

/// Centroids over stride-1 residual windows.
struct KMeansScorerModel {
  int k = 8;
  int window = 64;
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> centroids;
};

/// Within-cluster squared distance after each assignment step, for convergence checks.
struct KMeansTrace {
  std::vector<double> inertia;
  int iterations = 0;
  bool converged = false;
};

/// k-means++ seeding followed by Lloyd iterations (at most 300, stop when no centroid moves 1e-6 or more).
KMeansScorerModel fit_scorer(const TimeSeries& train_residuals, int k, int window, std::uint64_t seed,
                             KMeansTrace* trace = nullptr);

/// Distance from each window to its nearest centroid, indexed at the window's last sample.
TimeSeries score(const KMeansScorerModel& model, const TimeSeries& residuals);

void save_scorer(std::ostream& out, const KMeansScorerModel& model);
KMeansScorerModel load_scorer(std::istream& in);

/// A fixed-length interval [start, end) of the score series.
struct AnomalySpan {
  Timestamp start;
  Timestamp end;
  double mean_score = 0.0;
  int rank = 0;
  /// Index of the first score sample inside the span.
  std::size_t first_index = 0;
};

/// Greedy non-overlapping windows by descending mean; ties go to the earliest start.
std::vector<AnomalySpan> rank_spans(const TimeSeries& scores, std::size_t span_samples, int top_k);

}  // namespace telscope
