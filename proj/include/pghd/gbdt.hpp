#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pghd/cohort.hpp"
#include "pghd/features.hpp"

namespace pghd::gbdt {

inline constexpr std::string_view kModelVersion = "v1";

/// One node of a binary tree. Internal nodes route `value < threshold` left;
/// a missing value follows `default_left`. Leaves carry a log-odds weight.
struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  bool default_left = true;
  int left = -1;
  int right = -1;
  double weight = 0.0;  // leaf value before learning-rate scaling
  double cover = 0.0;   // training rows that reached this node
  double gain = 0.0;    // split gain, 0 for leaves

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

/// Flat node array; the root is nodes[0].
struct Tree {
  std::vector<TreeNode> nodes;

  /// Index of the leaf this vector reaches.
  int route(const features::FeatureVector& x) const;
  int depth() const;
  bool operator==(const Tree&) const = default;
};

struct TrainConfig {
  int n_trees = 200;
  int max_depth = 4;
  double learning_rate = 0.1;
  double l2_lambda = 1.0;
  double min_split_gain = 0.0;
  double min_child_hessian = 1.0;
  double positive_class_weight = 1.0;
  std::uint64_t seed = 0;

  bool operator==(const TrainConfig&) const = default;
};

/// Throws ValidationError naming the offending field.
void validate(const TrainConfig& config);

struct TreeEnsemble {
  std::string version{kModelVersion};
  double base_score = 0.0;
  double learning_rate = 0.1;
  std::vector<std::string> feature_names{features::kSlotNames.begin(), features::kSlotNames.end()};
  std::vector<Tree> trees;
  TrainConfig train_config;
  std::map<std::string, double> metrics_snapshot;
  /// Free-form effective configuration echoed by the tooling.
  std::map<std::string, std::string> provenance;

  std::uint64_t fingerprint() const { return features::fingerprint(feature_names); }
  bool operator==(const TreeEnsemble&) const = default;
};

/// Weighted mean logistic loss after each boosting round (index 0 is the
/// base-score-only model).
struct TrainingLog {
  std::vector<double> loss;
};

/// Exact greedy second-order boosting with learned missing-value directions.
/// labels are 0/1. Throws ValidationError on single-class labels, NaN in a
/// present slot, or an invalid config.
TreeEnsemble train(std::span<const features::FeatureVector> rows, std::span<const int> labels,
                   const TrainConfig& config, TrainingLog* log = nullptr);

double sigmoid(double margin);

/// Throws FingerprintError if the vector's slot order differs from the model's.
double predict_margin(const TreeEnsemble& model, const features::FeatureVector& x);
double predict_proba(const TreeEnsemble& model, const features::FeatureVector& x);

/// Total split gain per slot.
std::vector<double> gain_importance(const TreeEnsemble& model);

/// Weighted mean logistic loss of `model` over rows.
double logistic_loss(const TreeEnsemble& model, std::span<const features::FeatureVector> rows,
                     std::span<const int> labels, double positive_class_weight = 1.0);

// Versioned JSON artifact.
void save_model(const TreeEnsemble& model, std::ostream& out);
void save_model(const TreeEnsemble& model, const std::filesystem::path& path);
/// Throws ParseError (with byte offset) on corrupt input, VersionError on a
/// version other than kModelVersion.
TreeEnsemble load_model(std::istream& in, const std::string& source = "<stream>");
TreeEnsemble load_model(const std::filesystem::path& path);

// Train/test partition.

struct Split {
  std::vector<cohort::PatientRecord> train;
  std::vector<cohort::PatientRecord> test;
};

/// Stratified by outcome. Train size is floor(n * ratio). Every record must
/// be labeled; each class needs at least two records.
Split split_train_test(std::span<const cohort::PatientRecord> records, double ratio,
                       std::uint64_t seed);

/// Encodes labeled records into model rows and 0/1 labels.
std::pair<std::vector<features::FeatureVector>, std::vector<int>> to_training_set(
    std::span<const cohort::PatientRecord> records);

}  // namespace pghd::gbdt
