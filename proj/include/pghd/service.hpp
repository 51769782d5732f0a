#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>

#include "pghd/cohort.hpp"
#include "pghd/features.hpp"
#include "pghd/gbdt.hpp"
#include "pghd/triage.hpp"

namespace pghd::triage {

// JSON mirrors the cohort CSV columns. Symptoms are true/false/null (absent
// means unknown), disease counts default to 0, body_temp may be null.
// "region_code" may replace latitude/longitude; "reported_diseases" (array
// of free-text names) may replace the seven counts. "outcome" is ignored.

/// Throws ValidationError naming the field on malformed or invalid input,
/// LookupError for an unknown region code.
cohort::PatientRecord record_from_json(std::string_view body,
                                       const features::RegionTable& regions);
std::string record_to_json(const cohort::PatientRecord& record);

std::string decision_to_json(const TriageDecision& decision);
/// Inverse of decision_to_json. Throws ParseError on malformed input.
TriageDecision decision_from_json(std::string_view body);

/// {"code": ..., "field": ... or null, "message": ...}
std::string error_json(std::string_view code, std::string_view field, std::string_view message);

/// Splits "host:port". Throws ValidationError("bind", ...) on bad input.
std::pair<std::string, int> parse_bind(std::string_view address);

struct Response {
  int status = 200;
  std::string body;
};

/// HTTP scoring service. Handlers read an immutable model snapshot; set_model
/// swaps it atomically, so a request sees either the old or the new model.
class Service {
 public:
  struct Options {
    BandPolicy policy;
    std::size_t top_k = 5;
    std::size_t threads = 32;
    features::RegionTable regions = features::RegionTable::bundled();
  };

  explicit Service(Options options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Throws FingerprintError if the model's slot order is not the canonical one.
  void set_model(std::shared_ptr<const gbdt::TreeEnsemble> model);
  void clear_model();
  std::shared_ptr<const gbdt::TreeEnsemble> model() const;

  // Transport-independent handlers.
  Response assess(std::string_view body) const;
  Response model_info() const;
  Response health() const;

  /// Binds the listener; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Requires a successful bind().
  void run();
  void stop();

 private:
  struct Http;

  Options options_;
  mutable std::mutex model_mutex_;
  std::shared_ptr<const explain::Explainer> explainer_;
  std::unique_ptr<Http> http_;
};

}  // namespace pghd::triage
