#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pghd/features.hpp"
#include "pghd/gbdt.hpp"

namespace pghd::explain {

/// Per-slot Shapley contributions in log-odds units.
/// base_value + sum(phi) == predicted_margin up to rounding.
struct Attribution {
  double base_value = 0.0;
  std::vector<double> phi;
  double predicted_margin = 0.0;
};

/// Polynomial-time exact attribution with path-dependent (cover-weighted)
/// conditional expectations. Throws FingerprintError on slot-order mismatch.
Attribution shap_values(const gbdt::TreeEnsemble& model, const features::FeatureVector& x);

/// Adds one tree's contributions, multiplied by `scale`, into phi.
void tree_shap(const gbdt::Tree& tree, const features::FeatureVector& x, double scale,
               std::span<double> phi);

/// Attribution engine prepared once per model for repeated queries. Trees no
/// deeper than kMaxTabulatedDepth get per-leaf tables of contributions, indexed
/// by which of the leaf's path features agree with the input; deeper trees use
/// tree_shap. Results equal shap_values up to rounding.
class Explainer {
 public:
  static constexpr int kMaxTabulatedDepth = 5;

  explicit Explainer(std::shared_ptr<const gbdt::TreeEnsemble> model);

  const gbdt::TreeEnsemble& model() const { return *model_; }
  const std::shared_ptr<const gbdt::TreeEnsemble>& shared_model() const { return model_; }

  /// Throws FingerprintError on slot-order mismatch.
  Attribution shap_values(const features::FeatureVector& x) const;

 private:
  struct Step {
    std::int32_t node;
    bool left;
    std::uint8_t element;
  };
  struct Leaf {
    std::uint32_t first_step;
    std::uint32_t last_step;
    std::uint32_t first_element;
    std::uint32_t table;
    std::uint8_t n_elements;
  };
  struct TreeIndex {
    bool tabulated;
    std::uint32_t first_leaf;
    std::uint32_t last_leaf;
  };

  void tabulate(const gbdt::Tree& tree);

  std::shared_ptr<const gbdt::TreeEnsemble> model_;
  double base_value_ = 0.0;
  std::vector<TreeIndex> trees_;
  std::vector<Leaf> leaves_;
  std::vector<Step> steps_;
  std::vector<std::int32_t> elements_;  // feature of each path element
  std::vector<double> tables_;          // scaled by the learning rate
};

/// Cover-weighted mean leaf value of one tree.
double expected_value(const gbdt::Tree& tree);

/// Largest number of distinct split features brute_shap accepts.
inline constexpr std::size_t kMaxBruteFeatures = 12;

/// Subset-enumeration Shapley values over the model's split features, using
/// the same conditional expectations as shap_values. With a non-empty
/// background, node covers are first recounted from the background rows.
/// Throws ValidationError when more than kMaxBruteFeatures features are used.
Attribution brute_shap(const gbdt::TreeEnsemble& model, const features::FeatureVector& x,
                       std::span<const features::FeatureVector> background = {});

/// Copy of the model with every node cover replaced by the number of `rows`
/// reaching it.
gbdt::TreeEnsemble recover(const gbdt::TreeEnsemble& model,
                           std::span<const features::FeatureVector> rows);

enum class RankKey { kMeanAbs, kMaxAbs };

struct FeatureRank {
  std::size_t slot = 0;
  std::string name;
  double mean_abs = 0.0;
  double max_abs = 0.0;
};

/// Beeswarm data: every row's attribution plus a feature ranking.
struct Summary {
  RankKey key = RankKey::kMeanAbs;
  std::vector<std::string> row_ids;
  std::vector<features::FeatureVector> rows;
  std::vector<Attribution> attributions;
  std::vector<FeatureRank> ranking;  // descending by key, ties by slot
};

/// Throws ValidationError on empty rows. `row_ids` defaults to row indices.
Summary summary(const gbdt::TreeEnsemble& model, std::span<const features::FeatureVector> rows,
                RankKey key = RankKey::kMeanAbs, std::span<const std::string> row_ids = {});

/// CSV with header row_id,feature,feature_value,phi; missing values are empty.
void write_summary_csv(const Summary& s, std::ostream& out);

/// Ranking sidecar as a JSON document.
std::string ranking_json(const Summary& s);

}  // namespace pghd::explain
