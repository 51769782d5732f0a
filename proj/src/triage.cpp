#include "pghd/triage.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <numeric>

#include "pghd/errors.hpp"
#include "pghd/explain.hpp"
#include "pghd/features.hpp"

namespace pghd::triage {

std::string_view to_string(Band band) {
  switch (band) {
    case Band::kLow:
      return "low";
    case Band::kModerate:
      return "moderate";
    case Band::kHigh:
      return "high";
  }
  return "unknown";
}

void validate(const BandPolicy& policy) {
  if (!(policy.low_cut > 0.0 && policy.low_cut < 1.0)) {
    throw ValidationError("low_cut", "must lie in (0, 1)");
  }
  if (!(policy.high_cut > 0.0 && policy.high_cut < 1.0)) {
    throw ValidationError("high_cut", "must lie in (0, 1)");
  }
  if (!(policy.low_cut < policy.high_cut)) {
    throw ValidationError("high_cut", "must exceed low_cut");
  }
}

Band band(double p, const BandPolicy& policy) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("probability", "must lie in [0, 1]");
  if (p < policy.low_cut) return Band::kLow;
  if (p > policy.high_cut) return Band::kHigh;
  return Band::kModerate;
}

std::string_view recommendation(Band band) {
  switch (band) {
    case Band::kLow:
      return "home/CTC monitoring";
    case Band::kModerate:
      return "hospital admission";
    case Band::kHigh:
      return "tertiary referral";
  }
  return "";
}

std::string model_version(const gbdt::TreeEnsemble& model) {
  const auto it = model.provenance.find("model_id");
  if (it == model.provenance.end() || it->second.empty()) return model.version;
  return model.version + "+" + it->second;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

TriageDecision decide(const gbdt::TreeEnsemble& model, const explain::Attribution& attr,
                      const BandPolicy& policy, std::size_t k, std::string timestamp) {
  TriageDecision d;
  d.probability = gbdt::sigmoid(attr.predicted_margin);
  d.band = band(d.probability, policy);
  d.recommendation = recommendation(d.band);
  d.model_version = model_version(model);
  d.policy = policy;
  d.timestamp = timestamp.empty() ? utc_now() : std::move(timestamp);

  std::vector<std::size_t> order(attr.phi.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(attr.phi[a]) > std::abs(attr.phi[b]);
  });
  order.resize(std::min(k, order.size()));
  for (std::size_t slot : order) {
    const double phi = attr.phi[slot];
    d.top_factors.push_back({model.feature_names[slot], phi, (phi > 0.0) - (phi < 0.0),
                             d.probability - gbdt::sigmoid(attr.predicted_margin - phi)});
  }
  return d;
}

}  // namespace

TriageDecision assess(const cohort::PatientRecord& record, const gbdt::TreeEnsemble& model,
                      const BandPolicy& policy, std::size_t k, std::string timestamp) {
  validate(policy);
  const features::FeatureVector x = features::encode(record);
  return decide(model, explain::shap_values(model, x), policy, k, std::move(timestamp));
}

TriageDecision assess(const cohort::PatientRecord& record, const explain::Explainer& explainer,
                      const BandPolicy& policy, std::size_t k, std::string timestamp) {
  validate(policy);
  const features::FeatureVector x = features::encode(record);
  return decide(explainer.model(), explainer.shap_values(x), policy, k, std::move(timestamp));
}

}  // namespace pghd::triage
