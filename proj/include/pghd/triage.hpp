#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "pghd/cohort.hpp"
#include "pghd/explain.hpp"
#include "pghd/gbdt.hpp"

namespace pghd::triage {

enum class Band { kLow = 0, kModerate = 1, kHigh = 2 };

std::string_view to_string(Band band);

/// Probability cuts. Both cuts belong to the moderate band.
struct BandPolicy {
  double low_cut = 0.05;
  double high_cut = 0.5;

  bool operator==(const BandPolicy&) const = default;
};

/// Throws ValidationError unless 0 < low_cut < high_cut < 1.
void validate(const BandPolicy& policy);

/// low iff p < low_cut, high iff p > high_cut, moderate otherwise.
/// Throws ValidationError if p is outside [0, 1].
Band band(double p, const BandPolicy& policy);

/// Facility for a band: home/CTC monitoring, hospital admission or tertiary referral.
std::string_view recommendation(Band band);

struct Factor {
  std::string feature;
  double phi = 0.0;        // log-odds contribution
  int direction = 0;       // sign of phi
  double prob_delta = 0.0; // sigmoid(margin) - sigmoid(margin - phi)

  bool operator==(const Factor&) const = default;
};

struct TriageDecision {
  double probability = 0.0;
  Band band = Band::kLow;
  std::string recommendation;
  std::vector<Factor> top_factors;  // by |phi| descending, ties by slot order
  std::string model_version;
  BandPolicy policy;
  std::string timestamp;  // UTC, ISO-8601

  bool operator==(const TriageDecision&) const = default;
};

/// Model version string: the artifact format version, plus the model id
/// recorded in provenance when present.
std::string model_version(const gbdt::TreeEnsemble& model);

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_now();

/// encode -> predict -> attribute -> band. `timestamp` defaults to utc_now().
TriageDecision assess(const cohort::PatientRecord& record, const gbdt::TreeEnsemble& model,
                      const BandPolicy& policy = {}, std::size_t k = 5,
                      std::string timestamp = {});

/// Same, using a prepared explainer (and its model).
TriageDecision assess(const cohort::PatientRecord& record, const explain::Explainer& explainer,
                      const BandPolicy& policy = {}, std::size_t k = 5,
                      std::string timestamp = {});

}  // namespace pghd::triage
