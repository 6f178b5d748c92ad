#include "telscope/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include <json.hpp>

#include "telscope/errors.hpp"

namespace telscope {

TimeSeries residuals(const TimeSeries& actual, std::span<const double> predicted) {
  if (predicted.size() != actual.size()) {
    throw AlignmentError("residuals: " + std::to_string(actual.size()) + " actual vs " +
                         std::to_string(predicted.size()) + " predicted samples");
  }
  std::vector<double> out(actual.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = actual[i] - predicted[i];
  return TimeSeries(actual.name(), actual.start(), actual.step(), std::move(out));
}

namespace {

// Portable draws from mt19937_64: std distributions are implementation-defined.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

struct Nearest {
  std::size_t index = 0;
  double d2 = 0.0;
};

Nearest nearest_centroid(std::span<const double> x, const std::vector<std::vector<double>>& centroids) {
  Nearest best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d2 = squared_distance(x, centroids[c]);
    if (d2 < best.d2) best = Nearest{c, d2};
  }
  return best;
}

class WindowView {
 public:
  WindowView(std::span<const double> values, std::size_t width) : values_(values), width_(width) {}
  std::size_t count() const { return values_.size() - width_ + 1; }
  std::span<const double> operator[](std::size_t i) const { return values_.subspan(i, width_); }

 private:
  std::span<const double> values_;
  std::size_t width_;
};

std::vector<std::vector<double>> kmeanspp(const WindowView& windows, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = windows.count();
  std::vector<std::vector<double>> centroids;
  const auto first = windows[uniform_index(rng, n)];
  centroids.emplace_back(first.begin(), first.end());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(windows[i], centroids[0]);

  while (centroids.size() < k) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = n - 1;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double cum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        cum += d2[i];
        if (d2[i] > 0.0 && target < cum) {
          pick = i;
          break;
        }
      }
      while (d2[pick] == 0.0 && pick > 0) --pick;
    } else {
      pick = uniform_index(rng, n);
    }
    const auto w = windows[pick];
    centroids.emplace_back(w.begin(), w.end());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(windows[i], centroids.back()));
  }
  return centroids;
}

}  // namespace

KMeansScorerModel fit_scorer(const TimeSeries& train_residuals, int k, int window, std::uint64_t seed,
                             KMeansTrace* trace) {
  if (k < 1) throw ConfigError("scorer k must be >= 1");
  if (window < 1) throw ConfigError("scorer window must be >= 1");
  const auto width = static_cast<std::size_t>(window);
  if (train_residuals.size() < width) {
    throw InsufficientDataError("scorer needs at least " + std::to_string(window) + " residuals, got " +
                                std::to_string(train_residuals.size()));
  }
  const WindowView windows(train_residuals.values(), width);
  const std::size_t n = windows.count();
  if (static_cast<std::size_t>(k) > n) {
    throw InsufficientDataError("scorer k=" + std::to_string(k) + " exceeds window count " + std::to_string(n));
  }

  std::mt19937_64 rng(seed);
  auto centroids = kmeanspp(windows, static_cast<std::size_t>(k), rng);
  std::vector<std::size_t> label(n);
  std::vector<double> d2(n);
  std::vector<std::size_t> members(centroids.size());

  KMeansTrace local;
  constexpr int kMaxIterations = 300;
  constexpr double kTolerance = 1e-6;
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    std::fill(members.begin(), members.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const Nearest nc = nearest_centroid(windows[i], centroids);
      label[i] = nc.index;
      d2[i] = nc.d2;
      ++members[nc.index];
    }
    // Reseed empty clusters at the window farthest from its centroid, taken from a cluster that can spare it.
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      if (members[c] != 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (members[label[i]] > 1 && d2[i] > 0.0 && (far == n || d2[i] > d2[far])) far = i;
      }
      if (far == n) continue;
      const auto w = windows[far];
      centroids[c].assign(w.begin(), w.end());
      --members[label[far]];
      label[far] = c;
      d2[far] = 0.0;
      members[c] = 1;
    }
    local.inertia.push_back(std::accumulate(d2.begin(), d2.end(), 0.0));

    // Mean as offset from the first member, so identical windows reproduce exactly.
    std::vector<std::vector<double>> next(centroids.size());
    std::vector<std::size_t> first_member(centroids.size(), n);
    for (std::size_t i = 0; i < n; ++i) {
      if (first_member[label[i]] == n) first_member[label[i]] = i;
    }
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      if (first_member[c] == n) {
        next[c] = centroids[c];
        continue;
      }
      const auto ref = windows[first_member[c]];
      next[c].assign(width, 0.0);
      for (std::size_t i = first_member[c]; i < n; ++i) {
        if (label[i] != c) continue;
        const auto w = windows[i];
        for (std::size_t d = 0; d < width; ++d) next[c][d] += w[d] - ref[d];
      }
      const auto count = static_cast<double>(members[c]);
      for (std::size_t d = 0; d < width; ++d) next[c][d] = ref[d] + next[c][d] / count;
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      shift = std::max(shift, std::sqrt(squared_distance(centroids[c], next[c])));
    }
    centroids = std::move(next);
    local.iterations = iter + 1;
    if (shift < kTolerance) {
      local.converged = true;
      break;
    }
  }
  if (trace != nullptr) *trace = std::move(local);
  return KMeansScorerModel{k, window, seed, std::move(centroids)};
}

TimeSeries score(const KMeansScorerModel& model, const TimeSeries& residuals) {
  const auto width = static_cast<std::size_t>(model.window);
  if (model.centroids.empty()) throw ConfigError("scorer has no centroids");
  if (residuals.size() < width) {
    throw InsufficientDataError("scoring needs at least " + std::to_string(model.window) + " residuals, got " +
                                std::to_string(residuals.size()));
  }
  const WindowView windows(residuals.values(), width);
  std::vector<double> out(windows.count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(nearest_centroid(windows[i], model.centroids).d2);
  return TimeSeries(residuals.name(), residuals.time_at(width - 1), residuals.step(), std::move(out));
}

void save_scorer(std::ostream& out, const KMeansScorerModel& model) {
  nlohmann::ordered_json doc;
  doc["k"] = model.k;
  doc["window"] = model.window;
  doc["seed"] = model.seed;
  doc["centroids"] = model.centroids;
  out << doc.dump() << '\n';
}

KMeansScorerModel load_scorer(std::istream& in) {
  try {
    nlohmann::json doc;
    in >> doc;
    KMeansScorerModel m;
    m.k = doc.at("k").get<int>();
    m.window = doc.at("window").get<int>();
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.centroids = doc.at("centroids").get<std::vector<std::vector<double>>>();
    if (m.k < 1 || m.window < 1 || m.centroids.size() != static_cast<std::size_t>(m.k)) {
      throw ModelFormatError("scorer JSON: inconsistent k/window/centroids");
    }
    for (const auto& c : m.centroids) {
      if (c.size() != static_cast<std::size_t>(m.window)) throw ModelFormatError("scorer JSON: centroid length != window");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(std::string("scorer JSON: ") + e.what());
  }
}

std::vector<AnomalySpan> rank_spans(const TimeSeries& scores, std::size_t span_samples, int top_k) {
  if (span_samples == 0) throw ConfigError("span length must be positive");
  if (scores.size() < span_samples) {
    throw InsufficientDataError("score series has " + std::to_string(scores.size()) + " samples, span needs " +
                                std::to_string(span_samples));
  }
  const auto values = scores.values();
  const std::size_t n = scores.size() - span_samples + 1;
  // Each window summed in the same order so equal inputs give equal means.
  std::vector<double> mean(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = j; i < j + span_samples; ++i) s += values[i];
    mean[j] = s / static_cast<double>(span_samples);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&mean](std::size_t a, std::size_t b) { return mean[a] > mean[b]; });

  std::vector<AnomalySpan> picked;
  for (std::size_t j : order) {
    if (static_cast<int>(picked.size()) >= top_k) break;
    const bool overlaps = std::any_of(picked.begin(), picked.end(), [&](const AnomalySpan& s) {
      const std::size_t a = s.first_index;
      return (j > a ? j - a : a - j) < span_samples;
    });
    if (overlaps) continue;
    const Timestamp start = scores.time_at(j);
    picked.push_back(AnomalySpan{start, start + static_cast<std::int64_t>(span_samples) * scores.step(), mean[j],
                                 static_cast<int>(picked.size()) + 1, j});
  }
  return picked;
}

}  // namespace telscope
