#include "pghd/explain.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <ostream>

#include "json.hpp"
#include "pghd/errors.hpp"

namespace pghd::explain {
namespace {

using features::FeatureVector;
using gbdt::Tree;
using gbdt::TreeNode;

/// Share of a parent's cover that flows into a child. Uncovered parents
/// split evenly.
double cover_fraction(const TreeNode& child, const TreeNode& parent) {
  return parent.cover > 0.0 ? child.cover / parent.cover : 0.5;
}

bool goes_left(const TreeNode& n, const FeatureVector& x) {
  const auto f = static_cast<std::size_t>(n.feature);
  return x.has(f) ? x[f] < n.threshold : n.default_left;
}

// Path bookkeeping for the polynomial algorithm. Each element records how a
// feature's presence (one_fraction) or absence (zero_fraction) scales the
// flow along the current root-to-node path; pweight holds the permutation
// weights over subset sizes.
// 1/k up to the longest possible path: repeated features are merged, so a
// path holds at most one element per slot plus the root.
constexpr int kMaxPath = static_cast<int>(features::kNumSlots) + 2;
constexpr auto kInverse = [] {
  std::array<double, kMaxPath + 1> t{};
  for (int k = 1; k <= kMaxPath; ++k) t[k] = 1.0 / k;
  return t;
}();

struct PathElement {
  int feature = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double pweight = 0.0;
};

void extend_path(PathElement* path, int depth, double zero_fraction, double one_fraction,
                 int feature) {
  path[depth] = {feature, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0};
  const double inv = kInverse[depth + 1];
  for (int i = depth - 1; i >= 0; --i) {
    path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) * inv;
    path[i].pweight = zero_fraction * path[i].pweight * (depth - i) * inv;
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
      next_one_portion = tmp - path[i].pweight * zero_fraction * (depth - i) / (depth + 1.0);
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

/// Total permutation weight with element `index` removed, without mutating.
/// This is the inner loop of the leaf update, so divisions are hoisted.
double unwound_path_sum(const PathElement* path, int depth, int index) {
  const double one_fraction = path[index].one_fraction;
  const double zero_fraction = path[index].zero_fraction;
  const double d1 = depth + 1;
  double total = 0.0;
  if (one_fraction != 0.0) {
    const double scale = d1 / one_fraction;
    const double back = zero_fraction / d1;
    double next_one_portion = path[depth].pweight;
    for (int i = depth - 1; i >= 0; --i) {
      const double tmp = next_one_portion * scale * kInverse[i + 1];
      total += tmp;
      next_one_portion = path[i].pweight - tmp * back * (depth - i);
    }
  } else if (zero_fraction != 0.0) {
    const double scale = d1 / zero_fraction;
    for (int i = depth - 1; i >= 0; --i) total += path[i].pweight * scale * kInverse[depth - i];
  }
  return total;
}

int tree_depth(const Tree& tree, int id) {
  const TreeNode& n = tree.nodes[id];
  if (n.is_leaf()) return 0;
  return 1 + std::max(tree_depth(tree, n.left), tree_depth(tree, n.right));
}

class PathShap {
 public:
  PathShap(const Tree& tree, const FeatureVector& x, double scale, std::span<double> phi,
           std::vector<PathElement>& buffer)
      : tree_(tree), x_(x), scale_(scale), phi_(phi), buffer_(buffer) {
    const int d = tree_depth(tree, 0) + 2;
    const auto need = static_cast<std::size_t>(d) * (d + 1) / 2 + d + 1;
    if (buffer_.size() < need) buffer_.resize(need);
  }

  void run() { recurse(0, 0, buffer_.data(), 1.0, 1.0, -1); }

 private:
  void recurse(int node_id, int depth, PathElement* parent_path, double zero_fraction,
               double one_fraction, int feature) {
    PathElement* path = parent_path + depth + 1;
    std::copy(parent_path, parent_path + depth + 1, path);
    extend_path(path, depth, zero_fraction, one_fraction, feature);

    const TreeNode& node = tree_.nodes[node_id];
    if (node.is_leaf()) {
      for (int i = 1; i <= depth; ++i) {
        const double w = unwound_path_sum(path, depth, i);
        const PathElement& el = path[i];
        phi_[el.feature] += w * (el.one_fraction - el.zero_fraction) * node.weight * scale_;
      }
      return;
    }

    const bool left_hot = goes_left(node, x_);
    const int hot = left_hot ? node.left : node.right;
    const int cold = left_hot ? node.right : node.left;
    const double hot_zero = cover_fraction(tree_.nodes[hot], node);
    const double cold_zero = cover_fraction(tree_.nodes[cold], node);
    double incoming_zero = 1.0;
    double incoming_one = 1.0;

    // A feature already on the path is unwound and re-extended with the
    // combined fractions.
    int index = 0;
    for (; index <= depth; ++index) {
      if (path[index].feature == node.feature) break;
    }
    if (index != depth + 1) {
      incoming_zero = path[index].zero_fraction;
      incoming_one = path[index].one_fraction;
      unwind_path(path, depth, index);
      depth -= 1;
    }
    // A branch with both fractions zero carries no weight for any subset, and
    // unwinding through it would divide by zero.
    if (hot_zero * incoming_zero != 0.0 || incoming_one != 0.0) {
      recurse(hot, depth + 1, path, hot_zero * incoming_zero, incoming_one, node.feature);
    }
    if (cold_zero * incoming_zero != 0.0) {
      recurse(cold, depth + 1, path, cold_zero * incoming_zero, 0.0, node.feature);
    }
  }

  const Tree& tree_;
  const FeatureVector& x_;
  double scale_;
  std::span<double> phi_;
  std::vector<PathElement>& buffer_;
};

double expected_from(const Tree& tree, int id) {
  const TreeNode& n = tree.nodes[id];
  if (n.is_leaf()) return n.weight;
  return cover_fraction(tree.nodes[n.left], n) * expected_from(tree, n.left) +
         cover_fraction(tree.nodes[n.right], n) * expected_from(tree, n.right);
}

/// E[tree | features in `known` fixed to x], cover-weighted elsewhere.
double conditional_expectation(const Tree& tree, int id, const FeatureVector& x,
                               const std::vector<char>& known) {
  const TreeNode& n = tree.nodes[id];
  if (n.is_leaf()) return n.weight;
  if (known[n.feature]) {
    return conditional_expectation(tree, goes_left(n, x) ? n.left : n.right, x, known);
  }
  return cover_fraction(tree.nodes[n.left], n) * conditional_expectation(tree, n.left, x, known) +
         cover_fraction(tree.nodes[n.right], n) * conditional_expectation(tree, n.right, x, known);
}

void check_schema(const gbdt::TreeEnsemble& model, const FeatureVector& x) {
  if (x.schema != model.fingerprint()) {
    throw FingerprintError("feature vector slot order does not match the model");
  }
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

double expected_value(const Tree& tree) { return expected_from(tree, 0); }

namespace {

void tree_shap(const Tree& tree, const FeatureVector& x, double scale, std::span<double> phi,
               std::vector<PathElement>& buffer) {
  if (tree.nodes.empty() || tree.nodes[0].is_leaf()) return;
  PathShap(tree, x, scale, phi, buffer).run();
}

}  // namespace

void tree_shap(const Tree& tree, const FeatureVector& x, double scale, std::span<double> phi) {
  std::vector<PathElement> buffer;
  tree_shap(tree, x, scale, phi, buffer);
}

Attribution shap_values(const gbdt::TreeEnsemble& model, const FeatureVector& x) {
  check_schema(model, x);
  Attribution a;
  a.phi.assign(model.feature_names.size(), 0.0);
  a.base_value = model.base_score;
  a.predicted_margin = model.base_score;
  std::vector<PathElement> buffer;
  for (const Tree& tree : model.trees) {
    a.base_value += model.learning_rate * expected_value(tree);
    a.predicted_margin += model.learning_rate * tree.nodes[tree.route(x)].weight;
    tree_shap(tree, x, model.learning_rate, a.phi, buffer);
  }
  return a;
}

Explainer::Explainer(std::shared_ptr<const gbdt::TreeEnsemble> model) : model_(std::move(model)) {
  if (!model_) throw ValidationError("model", "null model");
  base_value_ = model_->base_score;
  for (const Tree& tree : model_->trees) {
    base_value_ += model_->learning_rate * expected_value(tree);
    const bool tabulated =
        !tree.nodes.empty() && tree_depth(tree, 0) <= kMaxTabulatedDepth;
    const auto first = static_cast<std::uint32_t>(leaves_.size());
    if (tabulated) tabulate(tree);
    trees_.push_back({tabulated, first, static_cast<std::uint32_t>(leaves_.size())});
  }
}

void Explainer::tabulate(const Tree& tree) {
  struct Frame {
    int node;
    std::vector<Step> path;
  };
  std::vector<Frame> stack{{0, {}}};
  std::vector<PathElement> path(kMaxTabulatedDepth + 2);
  while (!stack.empty()) {
    Frame f = std::move(stack.back());
    stack.pop_back();
    const TreeNode& node = tree.nodes[f.node];
    if (!node.is_leaf()) {
      for (const bool left : {true, false}) {
        Frame child{left ? node.left : node.right, f.path};
        child.path.push_back({f.node, left, 0});
        stack.push_back(std::move(child));
      }
      continue;
    }
    if (f.path.empty()) continue;

    // Distinct features on the path, with the product of their cover fractions.
    std::vector<int> features;
    std::vector<double> zero;
    for (Step& step : f.path) {
      const TreeNode& parent = tree.nodes[step.node];
      const TreeNode& child = tree.nodes[step.left ? parent.left : parent.right];
      auto it = std::find(features.begin(), features.end(), parent.feature);
      if (it == features.end()) {
        features.push_back(parent.feature);
        zero.push_back(1.0);
        it = features.end() - 1;
      }
      const auto e = static_cast<std::size_t>(it - features.begin());
      step.element = static_cast<std::uint8_t>(e);
      zero[e] *= cover_fraction(child, parent);
    }

    const int d = static_cast<int>(features.size());
    Leaf leaf{static_cast<std::uint32_t>(steps_.size()),
              static_cast<std::uint32_t>(steps_.size() + f.path.size()),
              static_cast<std::uint32_t>(elements_.size()),
              static_cast<std::uint32_t>(tables_.size()), static_cast<std::uint8_t>(d)};
    steps_.insert(steps_.end(), f.path.begin(), f.path.end());
    elements_.insert(elements_.end(), features.begin(), features.end());

    const double value = node.weight * model_->learning_rate;
    for (unsigned mask = 0; mask < (1U << d); ++mask) {
      bool dead = false;
      path[0] = {-1, 1.0, 1.0, 1.0};
      for (int e = 0; e < d; ++e) {
        const double one = (mask >> e) & 1U ? 1.0 : 0.0;
        dead |= one == 0.0 && zero[e] == 0.0;
        extend_path(path.data(), e + 1, zero[e], one, features[e]);
      }
      for (int e = 0; e < d; ++e) {
        const PathElement& el = path[e + 1];
        tables_.push_back(dead ? 0.0
                               : unwound_path_sum(path.data(), d, e + 1) *
                                     (el.one_fraction - el.zero_fraction) * value);
      }
    }
    leaves_.push_back(leaf);
  }
}

Attribution Explainer::shap_values(const FeatureVector& x) const {
  check_schema(*model_, x);
  Attribution a;
  a.phi.assign(model_->feature_names.size(), 0.0);
  a.base_value = base_value_;
  a.predicted_margin = model_->base_score;
  std::vector<PathElement> buffer;
  for (std::size_t t = 0; t < trees_.size(); ++t) {
    const Tree& tree = model_->trees[t];
    a.predicted_margin += model_->learning_rate * tree.nodes[tree.route(x)].weight;
    const TreeIndex& index = trees_[t];
    if (!index.tabulated) {
      tree_shap(tree, x, model_->learning_rate, a.phi, buffer);
      continue;
    }
    for (std::uint32_t l = index.first_leaf; l < index.last_leaf; ++l) {
      const Leaf& leaf = leaves_[l];
      unsigned mask = (1U << leaf.n_elements) - 1;
      for (std::uint32_t s = leaf.first_step; s < leaf.last_step; ++s) {
        const Step& step = steps_[s];
        if (goes_left(tree.nodes[step.node], x) != step.left) mask &= ~(1U << step.element);
      }
      const double* row = tables_.data() + leaf.table + mask * leaf.n_elements;
      for (std::uint8_t e = 0; e < leaf.n_elements; ++e) {
        a.phi[elements_[leaf.first_element + e]] += row[e];
      }
    }
  }
  return a;
}

gbdt::TreeEnsemble recover(const gbdt::TreeEnsemble& model, std::span<const FeatureVector> rows) {
  gbdt::TreeEnsemble out = model;
  for (Tree& tree : out.trees) {
    for (TreeNode& n : tree.nodes) n.cover = 0.0;
    for (const FeatureVector& r : rows) {
      int id = 0;
      for (;;) {
        tree.nodes[id].cover += 1.0;
        if (tree.nodes[id].is_leaf()) break;
        id = goes_left(tree.nodes[id], r) ? tree.nodes[id].left : tree.nodes[id].right;
      }
    }
  }
  return out;
}

Attribution brute_shap(const gbdt::TreeEnsemble& input, const FeatureVector& x,
                       std::span<const FeatureVector> background) {
  check_schema(input, x);
  const gbdt::TreeEnsemble model = background.empty() ? input : recover(input, background);

  std::vector<int> players;
  for (const Tree& tree : model.trees) {
    for (const TreeNode& n : tree.nodes) {
      if (!n.is_leaf()) players.push_back(n.feature);
    }
  }
  std::sort(players.begin(), players.end());
  players.erase(std::unique(players.begin(), players.end()), players.end());
  const std::size_t m = players.size();
  if (m > kMaxBruteFeatures) {
    throw ValidationError("model", "brute-force attribution supports at most " +
                                       std::to_string(kMaxBruteFeatures) + " split features, got " +
                                       std::to_string(m));
  }

  const std::size_t n_subsets = std::size_t{1} << m;
  std::vector<double> value(n_subsets);
  std::vector<char> known(model.feature_names.size(), 0);
  for (std::size_t mask = 0; mask < n_subsets; ++mask) {
    for (std::size_t k = 0; k < m; ++k) known[players[k]] = (mask >> k) & 1U;
    double v = model.base_score;
    for (const Tree& tree : model.trees) {
      v += model.learning_rate * conditional_expectation(tree, 0, x, known);
    }
    value[mask] = v;
  }

  // weight[s] = s! (m - s - 1)! / m!
  std::vector<double> weight(m, 0.0);
  for (std::size_t s = 0; s < m; ++s) {
    weight[s] = std::exp(std::lgamma(s + 1.0) + std::lgamma(static_cast<double>(m - s)) -
                         std::lgamma(m + 1.0));
  }

  Attribution a;
  a.phi.assign(model.feature_names.size(), 0.0);
  a.base_value = value[0];
  a.predicted_margin = value[n_subsets - 1];
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t bit = std::size_t{1} << k;
    double phi = 0.0;
    for (std::size_t mask = 0; mask < n_subsets; ++mask) {
      if (mask & bit) continue;
      phi += weight[std::popcount(mask)] * (value[mask | bit] - value[mask]);
    }
    a.phi[players[k]] = phi;
  }
  return a;
}

Summary summary(const gbdt::TreeEnsemble& model, std::span<const FeatureVector> rows, RankKey key,
                std::span<const std::string> row_ids) {
  if (rows.empty()) throw ValidationError("rows", "summary needs at least one row");
  if (!row_ids.empty() && row_ids.size() != rows.size()) {
    throw ValidationError("row_ids", "must match the number of rows");
  }
  Summary s;
  s.key = key;
  s.rows.assign(rows.begin(), rows.end());
  s.attributions.reserve(rows.size());
  // Non-owning handle; the explainer does not outlive this call.
  const Explainer explainer(std::shared_ptr<const gbdt::TreeEnsemble>(
      std::shared_ptr<const gbdt::TreeEnsemble>(), &model));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s.row_ids.push_back(row_ids.empty() ? std::to_string(i) : row_ids[i]);
    s.attributions.push_back(explainer.shap_values(rows[i]));
  }
  const std::size_t n_features = model.feature_names.size();
  for (std::size_t f = 0; f < n_features; ++f) {
    FeatureRank r{f, model.feature_names[f], 0.0, 0.0};
    for (const auto& a : s.attributions) {
      r.mean_abs += std::abs(a.phi[f]);
      r.max_abs = std::max(r.max_abs, std::abs(a.phi[f]));
    }
    r.mean_abs /= static_cast<double>(rows.size());
    s.ranking.push_back(std::move(r));
  }
  std::stable_sort(s.ranking.begin(), s.ranking.end(), [key](const auto& a, const auto& b) {
    return key == RankKey::kMeanAbs ? a.mean_abs > b.mean_abs : a.max_abs > b.max_abs;
  });
  return s;
}

void write_summary_csv(const Summary& s, std::ostream& out) {
  out << "row_id,feature,feature_value,phi\n";
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    for (const auto& r : s.ranking) {
      out << s.row_ids[i] << ',' << r.name << ',';
      if (s.rows[i].has(r.slot)) out << format_double(s.rows[i][r.slot]);
      out << ',' << format_double(s.attributions[i].phi[r.slot]) << '\n';
    }
  }
}

std::string ranking_json(const Summary& s) {
  nlohmann::json ranking = nlohmann::json::array();
  for (std::size_t k = 0; k < s.ranking.size(); ++k) {
    const auto& r = s.ranking[k];
    ranking.push_back({{"rank", k + 1},
                       {"feature", r.name},
                       {"slot", r.slot},
                       {"mean_abs_phi", r.mean_abs},
                       {"max_abs_phi", r.max_abs}});
  }
  nlohmann::json j = {{"ranked_by", s.key == RankKey::kMeanAbs ? "mean_abs_phi" : "max_abs_phi"},
                      {"n_rows", s.rows.size()},
                      {"ranking", std::move(ranking)}};
  return j.dump(2);
}

}  // namespace pghd::explain
