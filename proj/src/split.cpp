#include <algorithm>
#include <cmath>
#include <random>

#include "pghd/errors.hpp"
#include "pghd/gbdt.hpp"

namespace pghd::gbdt {

Split split_train_test(std::span<const cohort::PatientRecord> records, double ratio,
                       std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("ratio", "must lie in (0, 1)");
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].outcome) {
      throw ValidationError("outcome", "record " + records[i].id + " is unlabeled");
    }
    (*records[i].outcome == cohort::Outcome::kDeceased ? pos : neg).push_back(i);
  }
  if (pos.size() < 2 || neg.size() < 2) {
    throw ValidationError("outcome", "stratified split needs at least 2 records of each class");
  }

  const std::size_t n = records.size();
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio));
  // Positives get their proportional share, kept at least one on each side.
  auto pos_train = static_cast<std::size_t>(std::llround(static_cast<double>(pos.size()) * ratio));
  pos_train = std::clamp<std::size_t>(pos_train, 1, pos.size() - 1);
  std::size_t neg_train = n_train - std::min(n_train, pos_train);
  if (neg_train < 1 || neg_train > neg.size() - 1) {
    neg_train = std::clamp<std::size_t>(neg_train, 1, neg.size() - 1);
    pos_train = n_train - neg_train;
    if (pos_train < 1 || pos_train > pos.size() - 1) {
      throw ValidationError("ratio", "cannot place both classes on both sides of the split");
    }
  }

  std::mt19937_64 rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);

  std::vector<char> in_train(n, 0);
  for (std::size_t k = 0; k < pos_train; ++k) in_train[pos[k]] = 1;
  for (std::size_t k = 0; k < neg_train; ++k) in_train[neg[k]] = 1;

  Split split;
  split.train.reserve(n_train);
  split.test.reserve(n - n_train);
  for (std::size_t i = 0; i < n; ++i) {
    (in_train[i] ? split.train : split.test).push_back(records[i]);
  }
  return split;
}

std::pair<std::vector<features::FeatureVector>, std::vector<int>> to_training_set(
    std::span<const cohort::PatientRecord> records) {
  std::vector<features::FeatureVector> rows;
  std::vector<int> labels;
  rows.reserve(records.size());
  labels.reserve(records.size());
  for (const auto& r : records) {
    if (!r.outcome) throw ValidationError("outcome", "record " + r.id + " is unlabeled");
    rows.push_back(features::encode(r));
    labels.push_back(*r.outcome == cohort::Outcome::kDeceased ? 1 : 0);
  }
  return {std::move(rows), std::move(labels)};
}

}  // namespace pghd::gbdt
