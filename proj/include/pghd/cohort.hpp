#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pghd::cohort {

enum class Sex : std::uint8_t { kFemale = 0, kMale = 1 };
enum class Outcome : std::uint8_t { kSurvived = 0, kDeceased = 1 };

/// Self-reported symptom answer. kUnknown is distinct from kFalse everywhere.
enum class TriState : std::uint8_t { kFalse = 0, kTrue = 1, kUnknown = 2 };

inline constexpr std::size_t kNumSymptoms = 9;
inline constexpr std::size_t kNumDiseases = 7;

inline constexpr std::array<std::string_view, kNumSymptoms> kSymptomNames = {
    "cough",    "sputum", "sore_throat", "dyspnea", "musculoskeletal_pain",
    "headache", "chill",  "ageusia",     "anosmia"};

inline constexpr std::array<std::string_view, kNumDiseases> kDiseaseNames = {
    "liver", "cancer", "diabetes", "cardio", "renal", "degenerative", "lung"};

/// Largest count observed per disease group in the national cohort.
inline constexpr std::array<int, kNumDiseases> kDiseaseMax = {3, 5, 1, 5, 2, 3, 3};

enum class Symptom : std::size_t {
  kCough,
  kSputum,
  kSoreThroat,
  kDyspnea,
  kMusculoskeletalPain,
  kHeadache,
  kChill,
  kAgeusia,
  kAnosmia
};

enum class Disease : std::size_t {
  kLiver,
  kCancer,
  kDiabetes,
  kCardio,
  kRenal,
  kDegenerative,
  kLung
};

inline constexpr double kMinLatitude = 33.0;
inline constexpr double kMaxLatitude = 39.0;
inline constexpr double kMinLongitude = 124.5;
inline constexpr double kMaxLongitude = 132.0;
inline constexpr double kMinBodyTemp = 30.0;
inline constexpr double kMaxBodyTemp = 45.0;
inline constexpr int kMaxAge = 110;

using SymptomSet = std::array<TriState, kNumSymptoms>;
using DiseaseCounts = std::array<int, kNumDiseases>;

/// One confirmed case.
struct PatientRecord {
  std::string id;
  Sex sex = Sex::kFemale;
  int age = 0;
  double latitude = 36.93;
  double longitude = 127.39;
  std::optional<double> body_temp;
  int onset_month = 1;
  SymptomSet symptoms{TriState::kUnknown, TriState::kUnknown, TriState::kUnknown,
                      TriState::kUnknown, TriState::kUnknown, TriState::kUnknown,
                      TriState::kUnknown, TriState::kUnknown, TriState::kUnknown};
  DiseaseCounts diseases{};
  std::optional<Outcome> outcome;

  TriState symptom(Symptom s) const { return symptoms[static_cast<std::size_t>(s)]; }
  int disease(Disease d) const { return diseases[static_cast<std::size_t>(d)]; }

  bool operator==(const PatientRecord&) const = default;
};

/// Throws ValidationError naming the first field that breaks an invariant.
void validate(const PatientRecord& record);

struct NormalMoments {
  double mean = 0.0;
  double stddev = 1.0;
};

/// Probability of true / false / unknown for one symptom.
struct SymptomRates {
  double p_true = 0.0;
  double p_false = 1.0;
  double p_unknown = 0.0;
};

/// Ground-truth logistic risk used to label synthetic outcomes.
/// Unknown symptoms and absent temperature contribute nothing.
struct RiskModel {
  std::optional<double> intercept;  // unset: calibrated to prevalence_target
  double age = 0.0;                 // per year
  double male = 0.0;
  double temp_bin = 0.0;            // per bin above bin 1
  double latitude = 0.0;            // per degree
  double longitude = 0.0;           // per degree
  std::array<double, kNumSymptoms> symptoms{};
  std::array<double, kNumDiseases> diseases{};  // per count
};

/// Generator configuration. Every marginal table is a probability vector.
struct CohortSpec {
  std::size_t n = 149'471;
  double prevalence_target = 2000.0 / 149'471.0;
  double p_male = 75'073.0 / 149'471.0;
  NormalMoments age{44.36, 20.27};
  NormalMoments latitude{36.93, 0.93};
  NormalMoments longitude{127.39, 0.76};
  std::array<double, 4> temp_bins{};  // bins 1..4
  double temp_missing_rate = 0.0;
  std::array<SymptomRates, kNumSymptoms> symptoms{};
  /// Per group, probability of each count 0..kDiseaseMax.
  std::array<std::vector<double>, kNumDiseases> diseases;
  /// Log-rate slope per standard deviation of age for P(count > 0 | age).
  double disease_age_slope = 0.8;
  std::array<double, 12> monthly_weights{};
  RiskModel risk;
  std::uint64_t seed = 0;
};

/// National-cohort marginals with the default ground-truth risk model.
CohortSpec default_spec();

/// Throws ValidationError naming the offending field.
void validate(const CohortSpec& spec);

/// sigmoid(intercept + sum of coefficient * feature). Requires a set intercept.
double true_risk(const PatientRecord& record, const CohortSpec& spec);

/// Linear score without the intercept.
double risk_score(const PatientRecord& record, const RiskModel& risk);

/// Bisects the intercept so the mean true_risk over a seeded 100k-record draw
/// equals spec.prevalence_target. Returns a copy with the intercept set.
CohortSpec calibrate_intercept(const CohortSpec& spec, std::size_t draws = 100'000);

/// Deterministic in (spec, seed). Calibrates the intercept first when unset.
std::vector<PatientRecord> generate_cohort(const CohortSpec& spec);

/// Samples features only (no outcome). Exposed for calibration and tests.
std::vector<PatientRecord> sample_features(const CohortSpec& spec, std::size_t n,
                                           std::uint64_t seed);

// CSV

inline constexpr std::array<std::string_view, 24> kCsvHeader = {
    "id",       "sex",      "age",      "latitude", "longitude", "body_temp",
    "onset_month", "cough", "sputum",   "sore_throat", "dyspnea", "musculoskeletal_pain",
    "headache", "chill",    "ageusia",  "anosmia",  "liver",     "cancer",
    "diabetes", "cardio",   "renal",    "degenerative", "lung",  "outcome"};

void write_cohort(const std::vector<PatientRecord>& records, std::ostream& out);
void write_cohort(const std::vector<PatientRecord>& records, const std::filesystem::path& path);

/// `source` names the stream in error messages.
std::vector<PatientRecord> read_cohort(std::istream& in, const std::string& source = "<stream>");
std::vector<PatientRecord> read_cohort(const std::filesystem::path& path);

std::string_view to_string(Sex sex);
std::string_view to_string(TriState state);

}  // namespace pghd::cohort
