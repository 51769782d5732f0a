#include "pghd/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pghd/errors.hpp"

namespace pghd::gbdt {
namespace {

using features::FeatureVector;
using features::kNumSlots;

struct Entry {
  double value;
  std::uint32_t row;
};

struct Stats {
  double g = 0.0;
  double h = 0.0;
  std::uint32_t count = 0;

  void add(double gi, double hi) {
    g += gi;
    h += hi;
    ++count;
  }
  Stats operator+(const Stats& o) const { return {g + o.g, h + o.h, count + o.count}; }
  Stats operator-(const Stats& o) const { return {g - o.g, h - o.h, count - o.count}; }
};

struct Candidate {
  bool valid = false;
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
  bool default_left = true;
  Stats left;
  Stats right;
};

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

/// Threshold strictly above `lo` and at most `hi`, so lo routes left and hi right.
double split_point(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid > lo ? mid : hi;
}

class TreeBuilder {
 public:
  TreeBuilder(std::span<const FeatureVector> rows, const std::vector<std::vector<Entry>>& columns,
              const TrainConfig& config)
      : rows_(rows), columns_(columns), config_(config), position_(rows.size()) {}

  /// Grows one tree on the given gradients. After the call, leaf_of(row)
  /// gives each training row's leaf.
  Tree build(const std::vector<double>& grad, const std::vector<double>& hess) {
    Tree tree;
    stats_.clear();
    Stats root;
    for (std::size_t i = 0; i < rows_.size(); ++i) root.add(grad[i], hess[i]);
    add_node(tree, root);
    std::fill(position_.begin(), position_.end(), 0);

    std::vector<int> frontier{0};
    for (int depth = 0; depth < config_.max_depth && !frontier.empty(); ++depth) {
      std::vector<int> slot_of(tree.nodes.size(), -1);
      for (std::size_t s = 0; s < frontier.size(); ++s) slot_of[frontier[s]] = static_cast<int>(s);
      std::vector<Candidate> best(frontier.size());

      for (std::size_t f = 0; f < kNumSlots; ++f) {
        scan_feature(static_cast<int>(f), frontier, slot_of, grad, hess, best);
      }

      std::vector<int> next;
      for (std::size_t s = 0; s < frontier.size(); ++s) {
        const Candidate& c = best[s];
        if (!c.valid) continue;
        const int id = frontier[s];
        const int left = add_node(tree, c.left);
        const int right = add_node(tree, c.right);
        TreeNode& node = tree.nodes[id];
        node.feature = c.feature;
        node.threshold = c.threshold;
        node.default_left = c.default_left;
        node.left = left;
        node.right = right;
        node.gain = c.gain;
        node.weight = 0.0;
        next.push_back(left);
        next.push_back(right);
      }
      if (next.empty()) break;
      for (std::size_t i = 0; i < rows_.size(); ++i) {
        const TreeNode& node = tree.nodes[position_[i]];
        if (node.is_leaf()) continue;
        const auto f = static_cast<std::size_t>(node.feature);
        const bool go_left =
            rows_[i].has(f) ? rows_[i][f] < node.threshold : node.default_left;
        position_[i] = go_left ? node.left : node.right;
      }
      frontier = std::move(next);
    }
    return tree;
  }

  int leaf_of(std::size_t row) const { return position_[row]; }

 private:
  int add_node(Tree& tree, const Stats& s) {
    TreeNode node;
    node.weight = -s.g / (s.h + config_.l2_lambda);
    node.cover = s.count;
    tree.nodes.push_back(node);
    stats_.push_back(s);
    return static_cast<int>(tree.nodes.size()) - 1;
  }

  void scan_feature(int f, const std::vector<int>& frontier, const std::vector<int>& slot_of,
                    const std::vector<double>& grad, const std::vector<double>& hess,
                    std::vector<Candidate>& best) const {
    const auto& column = columns_[f];
    std::vector<Stats> present(frontier.size());
    for (const Entry& e : column) {
      const int s = slot_of[position_[e.row]];
      if (s >= 0) present[s].add(grad[e.row], hess[e.row]);
    }

    struct ScanState {
      Stats left;
      double last = 0.0;
      bool started = false;
    };
    std::vector<ScanState> state(frontier.size());
    for (const Entry& e : column) {
      const int s = slot_of[position_[e.row]];
      if (s < 0) continue;
      ScanState& st = state[s];
      if (st.started && e.value != st.last) {
        const Stats& total = stats_[frontier[s]];
        const Stats missing = total - present[s];
        const Stats right = present[s] - st.left;
        const double threshold = split_point(st.last, e.value);
        if (missing.count > 0) {
          consider(best[s], total, st.left + missing, right, f, threshold, true);
          consider(best[s], total, st.left, right + missing, f, threshold, false);
        } else {
          consider(best[s], total, st.left, right, f, threshold, st.left.count >= right.count);
        }
      }
      st.left.add(grad[e.row], hess[e.row]);
      st.last = e.value;
      st.started = true;
    }
  }

  void consider(Candidate& best, const Stats& total, const Stats& left, const Stats& right,
                int feature, double threshold, bool default_left) const {
    if (left.count == 0 || right.count == 0) return;
    if (left.h < config_.min_child_hessian || right.h < config_.min_child_hessian) return;
    const double lambda = config_.l2_lambda;
    const double gain = 0.5 * (left.g * left.g / (left.h + lambda) +
                               right.g * right.g / (right.h + lambda) -
                               total.g * total.g / (total.h + lambda));
    if (!(gain > 0.0) || gain < config_.min_split_gain) return;
    // Strict improvement keeps the earliest (lowest feature, lowest threshold) on ties.
    if (best.valid && !(gain > best.gain)) return;
    best = {true, gain, feature, threshold, default_left, left, right};
  }

  std::span<const FeatureVector> rows_;
  const std::vector<std::vector<Entry>>& columns_;
  const TrainConfig& config_;
  std::vector<int> position_;
  std::vector<Stats> stats_;
};

void check_rows(std::span<const FeatureVector> rows, std::span<const int> labels) {
  if (rows.size() != labels.size()) {
    throw ValidationError("labels", "row and label counts differ");
  }
  if (rows.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw ValidationError("rows", "too many rows");
  }
  bool has_pos = false;
  bool has_neg = false;
  for (int y : labels) {
    if (y != 0 && y != 1) throw ValidationError("labels", "labels must be 0 or 1");
    (y ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) {
    throw ValidationError("labels", "training needs at least one example of each class");
  }
  const auto schema = features::canonical_fingerprint();
  for (const auto& r : rows) {
    if (r.schema != schema) throw FingerprintError("training row uses a non-canonical slot order");
    for (std::size_t f = 0; f < kNumSlots; ++f) {
      if (r.has(f) && std::isnan(r[f])) {
        throw ValidationError(std::string(features::kSlotNames[f]),
                              "NaN in a present slot; mark the slot missing instead");
      }
    }
  }
}

}  // namespace

double sigmoid(double margin) { return 1.0 / (1.0 + std::exp(-margin)); }

void validate(const TrainConfig& c) {
  if (c.n_trees < 1) throw ValidationError("n_trees", "must be at least 1");
  if (c.max_depth < 1) throw ValidationError("max_depth", "must be at least 1");
  if (!(c.learning_rate > 0.0 && c.learning_rate <= 1.0)) {
    throw ValidationError("learning_rate", "must lie in (0, 1]");
  }
  if (!(c.l2_lambda >= 0.0) || !std::isfinite(c.l2_lambda)) {
    throw ValidationError("l2_lambda", "must be non-negative");
  }
  if (!(c.min_split_gain >= 0.0)) throw ValidationError("min_split_gain", "must be non-negative");
  if (!(c.min_child_hessian >= 0.0)) {
    throw ValidationError("min_child_hessian", "must be non-negative");
  }
  if (!(c.positive_class_weight > 0.0) || !std::isfinite(c.positive_class_weight)) {
    throw ValidationError("positive_class_weight", "must be positive");
  }
}

int Tree::route(const FeatureVector& x) const {
  int i = 0;
  while (!nodes[i].is_leaf()) {
    const TreeNode& n = nodes[i];
    const auto f = static_cast<std::size_t>(n.feature);
    const bool go_left = x.has(f) ? x[f] < n.threshold : n.default_left;
    i = go_left ? n.left : n.right;
  }
  return i;
}

int Tree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  int deepest = 0;
  while (!stack.empty()) {
    const auto [i, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    if (!nodes[i].is_leaf()) {
      stack.emplace_back(nodes[i].left, d + 1);
      stack.emplace_back(nodes[i].right, d + 1);
    }
  }
  return deepest;
}

TreeEnsemble train(std::span<const FeatureVector> rows, std::span<const int> labels,
                   const TrainConfig& config, TrainingLog* log) {
  validate(config);
  check_rows(rows, labels);
  const std::size_t n = rows.size();

  std::vector<double> weight(n);
  double w_total = 0.0;
  double w_pos = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    weight[i] = labels[i] ? config.positive_class_weight : 1.0;
    w_total += weight[i];
    if (labels[i]) w_pos += weight[i];
  }
  const double prevalence = w_pos / w_total;

  TreeEnsemble model;
  model.base_score = std::log(prevalence / (1.0 - prevalence));
  model.learning_rate = config.learning_rate;
  model.train_config = config;

  std::vector<std::vector<Entry>> columns(kNumSlots);
  for (std::size_t f = 0; f < kNumSlots; ++f) {
    auto& col = columns[f];
    for (std::size_t i = 0; i < n; ++i) {
      if (rows[i].has(f)) col.push_back({rows[i][f], static_cast<std::uint32_t>(i)});
    }
    std::sort(col.begin(), col.end(), [](const Entry& a, const Entry& b) {
      return a.value < b.value || (a.value == b.value && a.row < b.row);
    });
  }

  std::vector<double> margin(n, model.base_score);
  auto loss = [&] {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += weight[i] * (labels[i] ? softplus(-margin[i]) : softplus(margin[i]));
    }
    return total / w_total;
  };
  if (log) log->loss = {loss()};

  std::vector<double> grad(n);
  std::vector<double> hess(n);
  TreeBuilder builder(rows, columns, config);
  model.trees.reserve(config.n_trees);
  for (int t = 0; t < config.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]);
      grad[i] = weight[i] * (p - labels[i]);
      hess[i] = weight[i] * p * (1.0 - p);
    }
    Tree tree = builder.build(grad, hess);
    for (std::size_t i = 0; i < n; ++i) {
      margin[i] += config.learning_rate * tree.nodes[builder.leaf_of(i)].weight;
    }
    model.trees.push_back(std::move(tree));
    if (log) log->loss.push_back(loss());
  }
  return model;
}

double predict_margin(const TreeEnsemble& model, const FeatureVector& x) {
  if (x.schema != model.fingerprint()) {
    throw FingerprintError("feature vector slot order does not match the model");
  }
  double margin = model.base_score;
  for (const Tree& tree : model.trees) {
    margin += model.learning_rate * tree.nodes[tree.route(x)].weight;
  }
  return margin;
}

double predict_proba(const TreeEnsemble& model, const FeatureVector& x) {
  return sigmoid(predict_margin(model, x));
}

std::vector<double> gain_importance(const TreeEnsemble& model) {
  std::vector<double> scores(model.feature_names.size(), 0.0);
  for (const Tree& tree : model.trees) {
    for (const TreeNode& node : tree.nodes) {
      if (!node.is_leaf()) scores[node.feature] += node.gain;
    }
  }
  return scores;
}

double logistic_loss(const TreeEnsemble& model, std::span<const FeatureVector> rows,
                     std::span<const int> labels, double positive_class_weight) {
  double total = 0.0;
  double w_total = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double m = predict_margin(model, rows[i]);
    const double w = labels[i] ? positive_class_weight : 1.0;
    total += w * (labels[i] ? softplus(-m) : softplus(m));
    w_total += w;
  }
  return total / w_total;
}

}  // namespace pghd::gbdt
