#include "telscope/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "telscope/errors.hpp"

namespace telscope {

int Tree::leaf_for(std::span<const double> x) const {
  int idx = 0;
  while (!nodes[static_cast<std::size_t>(idx)].is_leaf()) {
    const TreeNode& n = nodes[static_cast<std::size_t>(idx)];
    const double v = x[static_cast<std::size_t>(n.feature)];
    const bool go_left = std::isnan(v) ? n.default_left : v < n.threshold;
    idx = go_left ? n.left : n.right;
  }
  return idx;
}

int Tree::depth() const {
  std::function<int(int)> rec = [&](int i) -> int {
    const TreeNode& n = nodes[static_cast<std::size_t>(i)];
    return n.is_leaf() ? 0 : 1 + std::max(rec(n.left), rec(n.right));
  };
  return nodes.empty() ? 0 : rec(0);
}

TreeEnsemble::TreeEnsemble(double base_score, double eta, std::vector<std::string> feature_names,
                           std::vector<Tree> trees)
    : base_score_(base_score), eta_(eta), feature_names_(std::move(feature_names)), trees_(std::move(trees)) {}

double TreeEnsemble::predict_row(std::span<const double> x) const {
  double y = base_score_;
  for (const auto& t : trees_) y += t.predict(x);
  return y;
}

std::vector<double> TreeEnsemble::predict(const FeatureMatrix& rows) const {
  if (rows.cols() != feature_count()) {
    throw SchemaError("model expects " + std::to_string(feature_count()) + " features, rows have " +
                      std::to_string(rows.cols()));
  }
  std::vector<double> out(rows.rows());
  for (std::size_t r = 0; r < rows.rows(); ++r) out[r] = predict_row(rows.row(r));
  return out;
}

TreeEnsemble TreeEnsemble::prefix(std::size_t n) const {
  n = std::min(n, trees_.size());
  return TreeEnsemble(base_score_, eta_, feature_names_,
                      std::vector<Tree>(trees_.begin(), trees_.begin() + static_cast<std::ptrdiff_t>(n)));
}

void TrainConfig::validate() const {
  if (rounds < 0) throw ConfigError("rounds must be non-negative");
  if (max_depth < 0) throw ConfigError("max_depth must be non-negative");
  if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in (0, 1]");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be non-negative");
  if (!(min_child_weight >= 0.0)) throw ConfigError("min_child_weight must be non-negative");
}

double split_gain(double g_left, double h_left, double g_right, double h_right, double lambda, double gamma) {
  const double g = g_left + g_right;
  const double h = h_left + h_right;
  return 0.5 * (g_left * g_left / (h_left + lambda) + g_right * g_right / (h_right + lambda) - g * g / (h + lambda)) -
         gamma;
}

namespace {

struct SplitCandidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
  bool default_left = true;
  double g_left = 0.0, h_left = 0.0;
  double g_right = 0.0, h_right = 0.0;

  bool valid() const { return feature >= 0; }
};

struct NodeStats {
  double g = 0.0;
  double h = 0.0;
};

// Per-node scan state while sweeping one feature's sorted rows.
struct ScanState {
  double g = 0.0;
  double h = 0.0;
  double last = 0.0;
  bool has_last = false;
  // Sums over rows with a present value for this feature.
  double g_present = 0.0;
  double h_present = 0.0;
};

double midpoint(double lo, double hi) {
  const double mid = lo / 2 + hi / 2;
  return mid > lo ? mid : hi;
}

// Column-major copy with per-feature ascending row order (missing values excluded).
struct ColumnIndex {
  std::size_t rows = 0;
  std::vector<std::vector<double>> columns;
  std::vector<std::vector<std::uint32_t>> sorted;
  std::vector<bool> has_missing;

  explicit ColumnIndex(const FeatureMatrix& m) : rows(m.rows()) {
    const std::size_t cols = m.cols();
    columns.assign(cols, std::vector<double>(rows));
    sorted.resize(cols);
    has_missing.assign(cols, false);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) columns[c][r] = m.at(r, c);
    }
    for (std::size_t c = 0; c < cols; ++c) {
      auto& order = sorted[c];
      order.reserve(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        if (std::isnan(columns[c][r])) {
          has_missing[c] = true;
        } else {
          order.push_back(static_cast<std::uint32_t>(r));
        }
      }
      const auto& col = columns[c];
      std::stable_sort(order.begin(), order.end(), [&col](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
    }
  }
};

class TreeGrower {
 public:
  TreeGrower(const ColumnIndex& index, const TrainConfig& config, std::span<const double> grad)
      : index_(index), config_(config), grad_(grad), position_(index.rows, 0) {}

  Tree grow() {
    Tree tree;
    NodeStats root;
    for (double g : grad_) root.g += g;
    root.h = static_cast<double>(index_.rows);
    tree.nodes.push_back(TreeNode{});
    tree.nodes[0].cover = root.h;
    stats_.assign(1, root);

    std::vector<int> frontier{0};
    for (int depth = 0; depth < config_.max_depth && !frontier.empty(); ++depth) {
      const auto best = find_splits(frontier, tree.nodes.size());
      std::vector<int> next;
      for (std::size_t s = 0; s < frontier.size(); ++s) {
        const int id = frontier[s];
        const SplitCandidate& c = best[s];
        if (!c.valid() || !(c.gain > 0.0)) {
          make_leaf(tree, id);
          continue;
        }
        const int left = static_cast<int>(tree.nodes.size());
        const int right = left + 1;
        TreeNode& n = tree.nodes[static_cast<std::size_t>(id)];
        n.feature = c.feature;
        n.threshold = c.threshold;
        n.default_left = c.default_left;
        n.left = left;
        n.right = right;
        n.gain = c.gain;
        tree.nodes.push_back(TreeNode{});
        tree.nodes.push_back(TreeNode{});
        tree.nodes[static_cast<std::size_t>(left)].cover = c.h_left;
        tree.nodes[static_cast<std::size_t>(right)].cover = c.h_right;
        stats_.push_back(NodeStats{c.g_left, c.h_left});
        stats_.push_back(NodeStats{c.g_right, c.h_right});
        next.push_back(left);
        next.push_back(right);
      }
      route_rows(tree);
      frontier = std::move(next);
    }
    for (int id : frontier) make_leaf(tree, id);
    return tree;
  }

  std::span<const int> positions() const { return position_; }

 private:
  void make_leaf(Tree& tree, int id) {
    const NodeStats& s = stats_[static_cast<std::size_t>(id)];
    tree.nodes[static_cast<std::size_t>(id)].weight = -s.g / (s.h + config_.lambda) * config_.eta;
  }

  void consider(SplitCandidate& best, int feature, double threshold, bool default_left, double gl, double hl,
                double gr, double hr) const {
    if (hl < config_.min_child_weight || hr < config_.min_child_weight) return;
    const double gain = split_gain(gl, hl, gr, hr, config_.lambda, config_.gamma);
    if (!best.valid() || gain > best.gain) {
      best = SplitCandidate{gain, feature, threshold, default_left, gl, hl, gr, hr};
    }
  }

  // Exact greedy search for every frontier node at once; features in index order and
  // thresholds ascending, replacing only on strictly larger gain.
  std::vector<SplitCandidate> find_splits(const std::vector<int>& frontier, std::size_t node_count) {
    std::vector<int> slot_of(node_count, -1);
    for (std::size_t s = 0; s < frontier.size(); ++s) slot_of[static_cast<std::size_t>(frontier[s])] = static_cast<int>(s);

    std::vector<SplitCandidate> best(frontier.size());
    std::vector<ScanState> state(frontier.size());
    for (std::size_t f = 0; f < index_.columns.size(); ++f) {
      const auto& col = index_.columns[f];
      const auto& order = index_.sorted[f];
      std::fill(state.begin(), state.end(), ScanState{});
      const bool missing = index_.has_missing[f];
      if (missing) {
        for (std::uint32_t r : order) {
          const int slot = slot_of[static_cast<std::size_t>(position_[r])];
          if (slot < 0) continue;
          state[static_cast<std::size_t>(slot)].g_present += grad_[r];
          state[static_cast<std::size_t>(slot)].h_present += 1.0;
        }
      }
      for (std::uint32_t r : order) {
        const int slot = slot_of[static_cast<std::size_t>(position_[r])];
        if (slot < 0) continue;
        ScanState& st = state[static_cast<std::size_t>(slot)];
        const double v = col[r];
        if (st.has_last && v > st.last) {
          evaluate(best[static_cast<std::size_t>(slot)], st, stats_[static_cast<std::size_t>(frontier[static_cast<std::size_t>(slot)])],
                   static_cast<int>(f), midpoint(st.last, v), missing);
        }
        st.g += grad_[r];
        st.h += 1.0;
        st.last = v;
        st.has_last = true;
      }
    }
    return best;
  }

  void evaluate(SplitCandidate& best, const ScanState& st, const NodeStats& node, int feature, double threshold,
                bool feature_has_missing) const {
    const double g_miss = feature_has_missing ? node.g - st.g_present : 0.0;
    const double h_miss = feature_has_missing ? node.h - st.h_present : 0.0;
    if (h_miss > 0.0) {
      // Missing rows go right, then left.
      consider(best, feature, threshold, false, st.g, st.h, node.g - st.g, node.h - st.h);
      consider(best, feature, threshold, true, st.g + g_miss, st.h + h_miss, st.g_present - st.g,
               st.h_present - st.h);
    } else {
      const double hl = st.h;
      const double hr = node.h - st.h;
      consider(best, feature, threshold, hl >= hr, st.g, hl, node.g - st.g, hr);
    }
  }

  void route_rows(const Tree& tree) {
    for (std::size_t r = 0; r < position_.size(); ++r) {
      const TreeNode& n = tree.nodes[static_cast<std::size_t>(position_[r])];
      if (n.is_leaf()) continue;
      const double v = index_.columns[static_cast<std::size_t>(n.feature)][r];
      const bool go_left = std::isnan(v) ? n.default_left : v < n.threshold;
      position_[r] = go_left ? n.left : n.right;
    }
  }

  const ColumnIndex& index_;
  const TrainConfig& config_;
  std::span<const double> grad_;
  std::vector<int> position_;
  std::vector<NodeStats> stats_;
};

}  // namespace

TreeEnsemble train(const FeatureMatrix& features, const TrainConfig& config) {
  config.validate();
  if (!features.target) throw SchemaError("training matrix has no target");
  const auto& y = *features.target;
  if (features.rows() == 0) throw EmptyTrainingError("training matrix has no rows");
  if (y.size() != features.rows()) throw SchemaError("target length differs from row count");
  for (double v : y) {
    if (!std::isfinite(v)) throw SchemaError("training target must be finite");
  }

  const double base = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  const ColumnIndex index(features);
  std::vector<double> pred(y.size(), base);
  std::vector<double> grad(y.size());
  std::vector<Tree> trees;
  trees.reserve(static_cast<std::size_t>(config.rounds));
  for (int round = 0; round < config.rounds; ++round) {
    for (std::size_t i = 0; i < y.size(); ++i) grad[i] = pred[i] - y[i];
    TreeGrower grower(index, config, grad);
    Tree tree = grower.grow();
    const auto pos = grower.positions();
    for (std::size_t i = 0; i < y.size(); ++i) pred[i] += tree.nodes[static_cast<std::size_t>(pos[i])].weight;
    trees.push_back(std::move(tree));
  }
  return TreeEnsemble(base, config.eta, features.column_names, std::move(trees));
}

namespace {

nlohmann::ordered_json node_to_json(const Tree& tree, int id) {
  const TreeNode& n = tree.nodes[static_cast<std::size_t>(id)];
  nlohmann::ordered_json j;
  if (n.is_leaf()) {
    j["leaf"] = n.weight;
    j["cover"] = n.cover;
    return j;
  }
  j["feature"] = n.feature;
  j["threshold"] = n.threshold;
  j["default_left"] = n.default_left;
  j["cover"] = n.cover;
  j["left"] = node_to_json(tree, n.left);
  j["right"] = node_to_json(tree, n.right);
  return j;
}

int node_from_json(const nlohmann::json& j, std::size_t n_features, Tree& tree, int depth) {
  if (!j.is_object()) throw ModelFormatError("tree node must be an object");
  if (depth > 256) throw ModelFormatError("tree too deep");
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back(TreeNode{});
  const double cover = j.at("cover").get<double>();
  if (!(cover >= 0.0)) throw ModelFormatError("node cover must be non-negative");
  if (j.contains("leaf")) {
    TreeNode& n = tree.nodes.back();
    n.weight = j.at("leaf").get<double>();
    n.cover = cover;
    return id;
  }
  const int feature = j.at("feature").get<int>();
  if (feature < 0 || static_cast<std::size_t>(feature) >= n_features) {
    throw ModelFormatError("feature index " + std::to_string(feature) + " out of range");
  }
  const double threshold = j.at("threshold").get<double>();
  const bool default_left = j.at("default_left").get<bool>();
  const int left = node_from_json(j.at("left"), n_features, tree, depth + 1);
  const int right = node_from_json(j.at("right"), n_features, tree, depth + 1);
  TreeNode& n = tree.nodes[static_cast<std::size_t>(id)];
  n.feature = feature;
  n.threshold = threshold;
  n.default_left = default_left;
  n.cover = cover;
  n.left = left;
  n.right = right;
  return id;
}

}  // namespace

void save_model(std::ostream& out, const TreeEnsemble& model) {
  nlohmann::ordered_json doc;
  doc["base_score"] = model.base_score();
  doc["eta"] = model.eta();
  doc["feature_names"] = std::vector<std::string>(model.feature_names().begin(), model.feature_names().end());
  auto trees = nlohmann::ordered_json::array();
  for (const auto& t : model.trees()) trees.push_back(node_to_json(t, 0));
  doc["trees"] = std::move(trees);
  out << doc.dump() << '\n';
}

TreeEnsemble load_model(std::istream& in) {
  try {
    nlohmann::json doc;
    in >> doc;
    auto names = doc.at("feature_names").get<std::vector<std::string>>();
    std::vector<Tree> trees;
    for (const auto& jt : doc.at("trees")) {
      Tree t;
      node_from_json(jt, names.size(), t, 0);
      trees.push_back(std::move(t));
    }
    return TreeEnsemble(doc.at("base_score").get<double>(), doc.value("eta", 1.0), std::move(names), std::move(trees));
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(std::string("model JSON: ") + e.what());
  }
}

}  // namespace telscope
