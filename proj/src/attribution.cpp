#include "telscope/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "telscope/errors.hpp"

namespace telscope {

namespace {

bool goes_left(const TreeNode& n, std::span<const double> x) {
  const double v = x[static_cast<std::size_t>(n.feature)];
  return std::isnan(v) ? n.default_left : v < n.threshold;
}

template <typename IsActive>
double tree_expectation(const Tree& tree, int id, std::span<const double> x, const IsActive& is_active) {
  const TreeNode& n = tree.nodes[static_cast<std::size_t>(id)];
  if (n.is_leaf()) return n.weight;
  if (is_active(n.feature)) return tree_expectation(tree, goes_left(n, x) ? n.left : n.right, x, is_active);
  if (!(n.cover > 0.0)) throw ModelFormatError("internal node with zero cover");
  const TreeNode& l = tree.nodes[static_cast<std::size_t>(n.left)];
  const TreeNode& r = tree.nodes[static_cast<std::size_t>(n.right)];
  return (l.cover * tree_expectation(tree, n.left, x, is_active) + r.cover * tree_expectation(tree, n.right, x, is_active)) /
         n.cover;
}

template <typename IsActive>
double ensemble_expectation(const TreeEnsemble& model, std::span<const double> x, const IsActive& is_active) {
  double total = model.base_score();
  for (const auto& t : model.trees()) total += tree_expectation(t, 0, x, is_active);
  return total;
}

// Path bookkeeping for the recursive TreeSHAP algorithm.
struct PathElement {
  int feature = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double pweight = 0.0;
};

void extend_path(PathElement* path, int depth, double zero_fraction, double one_fraction, int feature) {
  path[depth] = PathElement{feature, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0};
  for (int i = depth - 1; i >= 0; --i) {
    path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) / static_cast<double>(depth + 1);
    path[i].pweight = zero_fraction * path[i].pweight * (depth - i) / static_cast<double>(depth + 1);
  }
}

void unwind_path(PathElement* path, int depth, int index) {
  const double one_fraction = path[index].one_fraction;
  const double zero_fraction = path[index].zero_fraction;
  double next_one_portion = path[depth].pweight;
  for (int i = depth - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp = path[i].pweight;
      path[i].pweight = next_one_portion * (depth + 1) / ((i + 1) * one_fraction);
      next_one_portion = tmp - path[i].pweight * zero_fraction * (depth - i) / static_cast<double>(depth + 1);
    } else {
      path[i].pweight = path[i].pweight * (depth + 1) / (zero_fraction * (depth - i));
    }
  }
  for (int i = index; i < depth; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

// Total permutation weight of the path with element `index` removed.
double unwound_path_sum(const PathElement* path, int depth, int index) {
  const double one_fraction = path[index].one_fraction;
  const double zero_fraction = path[index].zero_fraction;
  double next_one_portion = path[depth].pweight;
  double total = 0.0;
  if (one_fraction != 0.0) {
    for (int i = depth - 1; i >= 0; --i) {
      const double tmp = next_one_portion / ((i + 1) * one_fraction);
      total += tmp;
      next_one_portion = path[i].pweight - tmp * zero_fraction * (depth - i);
    }
  } else {
    for (int i = depth - 1; i >= 0; --i) total += path[i].pweight / (zero_fraction * (depth - i));
  }
  return total * (depth + 1);
}

class TreeShap {
 public:
  TreeShap(const Tree& tree, std::span<const double> x, std::span<double> phi)
      : tree_(tree), x_(x), phi_(phi), buffer_(path_capacity(tree.depth())) {}

  void run() { recurse(0, 0, buffer_.data(), 1.0, 1.0, -1); }

 private:
  static std::size_t path_capacity(int depth) {
    const auto d = static_cast<std::size_t>(depth) + 2;
    return d * (d + 1) / 2 + 1;
  }

  void recurse(int id, int depth, PathElement* parent_path, double parent_zero, double parent_one, int parent_feature) {
    PathElement* path = parent_path + depth + 1;
    std::copy(parent_path, parent_path + depth + 1, path);
    extend_path(path, depth, parent_zero, parent_one, parent_feature);

    const TreeNode& n = tree_.nodes[static_cast<std::size_t>(id)];
    if (n.is_leaf()) {
      for (int i = 1; i <= depth; ++i) {
        const double w = unwound_path_sum(path, depth, i);
        const PathElement& el = path[i];
        phi_[static_cast<std::size_t>(el.feature)] += w * (el.one_fraction - el.zero_fraction) * n.weight;
      }
      return;
    }
    if (!(n.cover > 0.0)) throw ModelFormatError("internal node with zero cover");

    const int hot = goes_left(n, x_) ? n.left : n.right;
    const int cold = hot == n.left ? n.right : n.left;
    const double hot_zero = tree_.nodes[static_cast<std::size_t>(hot)].cover / n.cover;
    const double cold_zero = tree_.nodes[static_cast<std::size_t>(cold)].cover / n.cover;

    double incoming_zero = 1.0;
    double incoming_one = 1.0;
    int index = 0;
    while (index <= depth && path[index].feature != n.feature) ++index;
    if (index <= depth) {
      incoming_zero = path[index].zero_fraction;
      incoming_one = path[index].one_fraction;
      unwind_path(path, depth, index);
      --depth;
    }
    recurse(hot, depth + 1, path, hot_zero * incoming_zero, incoming_one, n.feature);
    recurse(cold, depth + 1, path, cold_zero * incoming_zero, 0.0, n.feature);
  }

  const Tree& tree_;
  std::span<const double> x_;
  std::span<double> phi_;
  std::vector<PathElement> buffer_;
};

void check_width(const TreeEnsemble& model, std::size_t width) {
  if (width != model.feature_count()) {
    throw SchemaError("model expects " + std::to_string(model.feature_count()) + " features, row has " +
                      std::to_string(width));
  }
}

}  // namespace

double expected_value(const TreeEnsemble& model, std::span<const double> x, const std::vector<bool>& active) {
  check_width(model, x.size());
  if (active.size() != model.feature_count()) throw SchemaError("active set size differs from feature count");
  return ensemble_expectation(model, x, [&active](int f) { return static_cast<bool>(active[static_cast<std::size_t>(f)]); });
}

std::vector<double> shapley_oracle(const TreeEnsemble& model, std::span<const double> x, double* base) {
  check_width(model, x.size());
  const std::size_t m = model.feature_count();
  if (m > 20) throw ComplexityError("subset enumeration limited to 20 features, model has " + std::to_string(m));

  const std::uint32_t subsets = 1u << m;
  std::vector<double> value(subsets);
  for (std::uint32_t s = 0; s < subsets; ++s) {
    value[s] = ensemble_expectation(model, x, [s](int f) { return ((s >> f) & 1u) != 0; });
  }
  // |S|!(M−|S|−1)!/M! by subset size
  std::vector<double> weight(m == 0 ? 1 : m);
  for (std::size_t k = 0; k + 1 <= m; ++k) {
    double w = 1.0 / static_cast<double>(m);
    for (std::size_t i = 1; i <= k; ++i) w *= static_cast<double>(i) / static_cast<double>(m - i);
    weight[k] = w;
  }
  std::vector<double> phi(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const std::uint32_t bit = 1u << j;
    double sum = 0.0;
    for (std::uint32_t s = 0; s < subsets; ++s) {
      if ((s & bit) != 0) continue;
      sum += weight[static_cast<std::size_t>(__builtin_popcount(s))] * (value[s | bit] - value[s]);
    }
    phi[j] = sum;
  }
  if (base != nullptr) *base = value[0];
  return phi;
}

std::vector<double> treeshap_row(const TreeEnsemble& model, std::span<const double> x) {
  check_width(model, x.size());
  std::vector<double> phi(model.feature_count(), 0.0);
  for (const auto& t : model.trees()) TreeShap(t, x, phi).run();
  return phi;
}

double attribution_base_value(const TreeEnsemble& model) {
  const std::vector<double> x(model.feature_count(), 0.0);
  return ensemble_expectation(model, x, [](int) { return false; });
}

AttributionMatrix treeshap(const TreeEnsemble& model, const FeatureMatrix& rows) {
  check_width(model, rows.cols());
  AttributionMatrix out;
  out.base_value = attribution_base_value(model);
  out.feature_names.assign(model.feature_names().begin(), model.feature_names().end());
  out.row_timestamps = rows.row_timestamps;
  out.values.reserve(rows.rows() * rows.cols());
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    const auto phi = treeshap_row(model, rows.row(r));
    out.values.insert(out.values.end(), phi.begin(), phi.end());
  }
  return out;
}

FeatureImportance importance_summary(const AttributionMatrix& attr) {
  FeatureImportance out(attr.cols());
  for (std::size_t j = 0; j < attr.cols(); ++j) out[j] = ImportanceEntry{attr.feature_names[j], j, 0.0};
  if (attr.rows() > 0) {
    for (std::size_t r = 0; r < attr.rows(); ++r) {
      const auto phi = attr.row(r);
      for (std::size_t j = 0; j < phi.size(); ++j) out[j].mean_abs_shap += std::abs(phi[j]);
    }
    for (auto& e : out) e.mean_abs_shap /= static_cast<double>(attr.rows());
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ImportanceEntry& a, const ImportanceEntry& b) { return a.mean_abs_shap > b.mean_abs_shap; });
  return out;
}

AttributionMatrix window_attribution(const TreeEnsemble& model, const FeatureMatrix& rows, const AnomalySpan& span) {
  const FeatureMatrix inside = rows.select_time_range(span.start, span.end);
  if (inside.rows() == 0) {
    throw EmptySpanError("no rows between " + format_iso8601(span.start) + " and " + format_iso8601(span.end));
  }
  return treeshap(model, inside);
}

void write_attribution_csv(std::ostream& out, const AttributionMatrix& attr) {
  out << "# base_value=" << format_real(attr.base_value) << '\n';
  out << "timestamp";
  for (const auto& name : attr.feature_names) out << ',' << name;
  out << '\n';
  for (std::size_t r = 0; r < attr.rows(); ++r) {
    out << format_iso8601(attr.row_timestamps[r]);
    for (double v : attr.row(r)) out << ',' << format_real(v);
    out << '\n';
  }
}

void write_importance_json(std::ostream& out, const FeatureImportance& importance) {
  auto doc = nlohmann::ordered_json::array();
  for (const auto& e : importance) {
    nlohmann::ordered_json item;
    item["feature"] = e.feature;
    item["mean_abs_shap"] = e.mean_abs_shap;
    doc.push_back(std::move(item));
  }
  out << doc.dump(2) << '\n';
}

}  // namespace telscope
