#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "pghd/errors.hpp"
#include "pghd/gbdt.hpp"

namespace pghd::gbdt {
namespace {

using nlohmann::json;

json node_to_json(const TreeNode& n) {
  if (n.is_leaf()) return {{"leaf", n.weight}, {"cover", n.cover}};
  return {{"feature", n.feature}, {"threshold", n.threshold}, {"default_left", n.default_left},
          {"left", n.left},       {"right", n.right},         {"cover", n.cover},
          {"gain", n.gain}};
}

TreeNode node_from_json(const json& j) {
  TreeNode n;
  n.cover = j.at("cover").get<double>();
  if (j.contains("leaf")) {
    n.weight = j.at("leaf").get<double>();
    return n;
  }
  n.feature = j.at("feature").get<int>();
  n.threshold = j.at("threshold").get<double>();
  n.default_left = j.at("default_left").get<bool>();
  n.left = j.at("left").get<int>();
  n.right = j.at("right").get<int>();
  n.gain = j.at("gain").get<double>();
  return n;
}

json config_to_json(const TrainConfig& c) {
  return {{"n_trees", c.n_trees},
          {"max_depth", c.max_depth},
          {"learning_rate", c.learning_rate},
          {"l2_lambda", c.l2_lambda},
          {"min_split_gain", c.min_split_gain},
          {"min_child_hessian", c.min_child_hessian},
          {"positive_class_weight", c.positive_class_weight},
          {"seed", c.seed}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.n_trees = j.at("n_trees").get<int>();
  c.max_depth = j.at("max_depth").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.l2_lambda = j.at("l2_lambda").get<double>();
  c.min_split_gain = j.at("min_split_gain").get<double>();
  c.min_child_hessian = j.at("min_child_hessian").get<double>();
  c.positive_class_weight = j.at("positive_class_weight").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

void check_tree(const Tree& tree, std::size_t n_features, const std::string& source,
                std::size_t index) {
  auto fail = [&](const std::string& what) {
    throw ParseError(source, 0, "tree " + std::to_string(index) + ": " + what);
  };
  const int size = static_cast<int>(tree.nodes.size());
  if (size == 0) fail("no nodes");
  std::vector<int> parents(size, 0);
  for (int i = 0; i < size; ++i) {
    const TreeNode& n = tree.nodes[i];
    if (!std::isfinite(n.weight) || !std::isfinite(n.cover) || !std::isfinite(n.gain)) {
      fail("non-finite value in node " + std::to_string(i));
    }
    if (n.is_leaf()) continue;
    if (static_cast<std::size_t>(n.feature) >= n_features) fail("feature index out of range");
    if (!std::isfinite(n.threshold)) fail("non-finite threshold");
    // Children after their parent rules out cycles.
    if (n.left <= i || n.right <= i || n.left >= size || n.right >= size || n.left == n.right) {
      fail("bad child index in node " + std::to_string(i));
    }
    ++parents[n.left];
    ++parents[n.right];
  }
  for (int i = 1; i < size; ++i) {
    if (parents[i] != 1) fail("node " + std::to_string(i) + " is not reachable exactly once");
  }
}

}  // namespace

void save_model(const TreeEnsemble& model, std::ostream& out) {
  json trees = json::array();
  for (const Tree& tree : model.trees) {
    json nodes = json::array();
    for (const TreeNode& n : tree.nodes) nodes.push_back(node_to_json(n));
    trees.push_back({{"nodes", std::move(nodes)}});
  }
  json j = {{"version", model.version},
            {"base_score", model.base_score},
            {"learning_rate", model.learning_rate},
            {"feature_names", model.feature_names},
            {"fingerprint", hex(model.fingerprint())},
            {"trees", std::move(trees)},
            {"train_config", config_to_json(model.train_config)},
            {"metrics_snapshot", model.metrics_snapshot},
            {"provenance", model.provenance}};
  out << j.dump(1) << '\n';
}

void save_model(const TreeEnsemble& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  save_model(model, out);
  if (!out) throw IoError("write failed: " + path.string());
}

TreeEnsemble load_model(std::istream& in, const std::string& source) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(source, 0, "byte " + std::to_string(e.byte) + ": " + e.what());
  }
  try {
    if (!j.is_object() || !j.contains("version")) {
      throw ParseError(source, 0, "missing version field");
    }
    const auto version = j.at("version").get<std::string>();
    if (version != kModelVersion) {
      throw VersionError(source + ": model version '" + version + "' is not supported (expected '" +
                         std::string(kModelVersion) + "')");
    }
    TreeEnsemble m;
    m.version = version;
    m.base_score = j.at("base_score").get<double>();
    m.learning_rate = j.at("learning_rate").get<double>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    if (j.contains("fingerprint") && j.at("fingerprint").get<std::string>() != hex(m.fingerprint())) {
      throw ParseError(source, 0, "fingerprint does not match feature_names");
    }
    for (const auto& t : j.at("trees")) {
      Tree tree;
      for (const auto& n : t.at("nodes")) tree.nodes.push_back(node_from_json(n));
      check_tree(tree, m.feature_names.size(), source, m.trees.size());
      m.trees.push_back(std::move(tree));
    }
    m.train_config = config_from_json(j.at("train_config"));
    m.metrics_snapshot = j.value("metrics_snapshot", std::map<std::string, double>{});
    m.provenance = j.value("provenance", std::map<std::string, std::string>{});
    if (!std::isfinite(m.base_score) || !(m.learning_rate > 0.0)) {
      throw ParseError(source, 0, "invalid base_score or learning_rate");
    }
    return m;
  } catch (const json::exception& e) {
    throw ParseError(source, 0, e.what());
  }
}

TreeEnsemble load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return load_model(in, path.string());
}

}  // namespace pghd::gbdt
