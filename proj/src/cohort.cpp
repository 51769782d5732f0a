#include "pghd/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <numbers>
#include <random>

#include "pghd/errors.hpp"

namespace pghd::cohort {
namespace {

constexpr double kSumTolerance = 1e-9;
constexpr double kNationalTotal = 149'471.0;

// Seed offset for the intercept-calibration draw, so it never replays the
// cohort's own stream.
constexpr std::uint64_t kCalibrationSalt = 0x9E3779B97F4A7C15ULL;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <typename F>
double bisect(F&& f, double lo, double hi, double target) {
  // f must be increasing on [lo, hi].
  for (int i = 0; i < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(lo)); ++i) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

void check_probability_vector(std::string_view field, const double* p, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i]) || p[i] < 0.0) {
      throw ValidationError(std::string(field), "probabilities must be finite and non-negative");
    }
    sum += p[i];
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw ValidationError(std::string(field),
                          "probabilities sum to " + std::to_string(sum) + ", expected 1");
  }
}

void check_moments(std::string_view field, const NormalMoments& m) {
  if (!std::isfinite(m.mean) || !std::isfinite(m.stddev) || m.stddev <= 0.0) {
    throw ValidationError(std::string(field), "mean must be finite and stddev positive");
  }
}

/// Integer ages 0..kMaxAge from a normal discretized at half-integers. The
/// location is shifted so the truncated mean equals the requested mean.
std::vector<double> age_pmf(const NormalMoments& m) {
  auto pmf_for = [&](double loc) {
    std::vector<double> pmf(kMaxAge + 1);
    for (int a = 0; a <= kMaxAge; ++a) {
      pmf[a] = normal_cdf((a + 0.5 - loc) / m.stddev) - normal_cdf((a - 0.5 - loc) / m.stddev);
    }
    const double total = std::accumulate(pmf.begin(), pmf.end(), 0.0);
    for (auto& p : pmf) p /= total;
    return pmf;
  };
  auto mean_for = [&](double loc) {
    const auto pmf = pmf_for(loc);
    double mean = 0.0;
    for (int a = 0; a <= kMaxAge; ++a) mean += a * pmf[a];
    return mean;
  };
  const double target = std::clamp(m.mean, 0.5, kMaxAge - 0.5);
  const double loc = bisect(mean_for, -5.0 * m.stddev, kMaxAge + 5.0 * m.stddev, target);
  return pmf_for(loc);
}

/// Location of a normal truncated to [lo, hi] whose truncated mean is `mean`.
double truncated_location(const NormalMoments& m, double lo, double hi) {
  auto mean_for = [&](double loc) {
    const double a = (lo - loc) / m.stddev;
    const double b = (hi - loc) / m.stddev;
    const double mass = normal_cdf(b) - normal_cdf(a);
    if (mass < 1e-300) return loc < lo ? lo : hi;
    return loc + m.stddev * (normal_pdf(a) - normal_pdf(b)) / mass;
  };
  const double target = std::clamp(m.mean, lo + 1e-6, hi - 1e-6);
  return bisect(mean_for, lo - 10.0 * m.stddev, hi + 10.0 * m.stddev, target);
}

// Four decimals (about 11 m); stays inside [lo, hi].
double round_coord(double x, double lo, double hi) {
  return std::clamp(std::round(x * 1e4) / 1e4, lo, hi);
}

/// Prebuilt distributions for one spec.
class Sampler {
 public:
  explicit Sampler(const CohortSpec& spec)
      : spec_(spec),
        male_(spec.p_male),
        age_(make_discrete(age_pmf(spec.age))),
        lat_loc_(truncated_location(spec.latitude, kMinLatitude, kMaxLatitude)),
        long_loc_(truncated_location(spec.longitude, kMinLongitude, kMaxLongitude)),
        temp_missing_(spec.temp_missing_rate),
        temp_bin_(spec.temp_bins.begin(), spec.temp_bins.end()),
        month_(spec.monthly_weights.begin(), spec.monthly_weights.end()) {
    for (std::size_t s = 0; s < kNumSymptoms; ++s) {
      const auto& r = spec.symptoms[s];
      symptom_[s] = std::discrete_distribution<int>({r.p_true, r.p_false, r.p_unknown});
    }
    const auto ages = age_pmf(spec.age);
    for (std::size_t d = 0; d < kNumDiseases; ++d) {
      const auto& table = spec.diseases[d];
      const double any = 1.0 - table[0];
      std::vector<double> positive(table.begin() + 1, table.end());
      if (any > 0.0) {
        positive_count_[d] = make_discrete(positive);
      }
      // Scale so that E_age[min(1, scale * exp(slope * z(age)))] == any.
      auto marginal = [&](double log_scale) {
        double m = 0.0;
        for (int a = 0; a <= kMaxAge; ++a) {
          m += ages[a] * std::min(1.0, std::exp(log_scale + slope_term(a)));
        }
        return m;
      };
      log_scale_[d] = any > 0.0 ? bisect(marginal, -60.0, 60.0, any)
                                : -std::numeric_limits<double>::infinity();
    }
  }

  PatientRecord draw(std::mt19937_64& rng, std::size_t index) {
    PatientRecord r;
    r.id = make_id(index);
    r.sex = male_(rng) ? Sex::kMale : Sex::kFemale;
    r.age = age_(rng);
    r.latitude = round_coord(
        truncated_normal(rng, lat_loc_, spec_.latitude.stddev, kMinLatitude, kMaxLatitude),
        kMinLatitude, kMaxLatitude);
    r.longitude = round_coord(
        truncated_normal(rng, long_loc_, spec_.longitude.stddev, kMinLongitude, kMaxLongitude),
        kMinLongitude, kMaxLongitude);
    const bool temp_missing = temp_missing_(rng);
    const int bin = temp_bin_(rng) + 1;
    if (!temp_missing) r.body_temp = temperature_in_bin(rng, bin);
    r.onset_month = month_(rng) + 1;
    for (std::size_t s = 0; s < kNumSymptoms; ++s) {
      switch (symptom_[s](rng)) {
        case 0: r.symptoms[s] = TriState::kTrue; break;
        case 1: r.symptoms[s] = TriState::kFalse; break;
        default: r.symptoms[s] = TriState::kUnknown; break;
      }
    }
    for (std::size_t d = 0; d < kNumDiseases; ++d) {
      const double p_any = std::min(1.0, std::exp(log_scale_[d] + slope_term(r.age)));
      std::bernoulli_distribution any(p_any);
      r.diseases[d] = any(rng) ? positive_count_[d](rng) + 1 : 0;
    }
    return r;
  }

 private:
  static std::discrete_distribution<int> make_discrete(const std::vector<double>& w) {
    return std::discrete_distribution<int>(w.begin(), w.end());
  }

  static std::string make_id(std::size_t index) {
    std::string digits = std::to_string(index + 1);
    if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
    return "P" + digits;
  }

  double slope_term(int age) const {
    return spec_.disease_age_slope * (age - spec_.age.mean) / spec_.age.stddev;
  }

  static double truncated_normal(std::mt19937_64& rng, double loc, double sd, double lo,
                                 double hi) {
    std::normal_distribution<double> normal(loc, sd);
    for (;;) {
      const double x = normal(rng);
      if (x >= lo && x <= hi) return x;
    }
  }

  // Temperatures on a 0.1 degree grid inside each bin.
  static double temperature_in_bin(std::mt19937_64& rng, int bin) {
    static constexpr std::array<std::pair<int, int>, 4> kTenths = {
        std::pair{350, 365}, std::pair{366, 374}, std::pair{375, 382}, std::pair{383, 400}};
    const auto [lo, hi] = kTenths[bin - 1];
    std::uniform_int_distribution<int> tenths(lo, hi);
    return tenths(rng) / 10.0;
  }

  const CohortSpec& spec_;
  std::bernoulli_distribution male_;
  std::discrete_distribution<int> age_;
  double lat_loc_;
  double long_loc_;
  std::bernoulli_distribution temp_missing_;
  std::discrete_distribution<int> temp_bin_;
  std::discrete_distribution<int> month_;
  std::array<std::discrete_distribution<int>, kNumSymptoms> symptom_;
  std::array<std::discrete_distribution<int>, kNumDiseases> positive_count_;
  std::array<double, kNumDiseases> log_scale_{};
};

SymptomRates symptom_rates(double n_true, double n_false) {
  const double t = n_true / kNationalTotal;
  const double f = n_false / kNationalTotal;
  return {t, f, 1.0 - t - f};
}

std::vector<double> disease_table(std::initializer_list<double> counts) {
  std::vector<double> table;
  for (double c : counts) table.push_back(c / kNationalTotal);
  return table;
}

}  // namespace

CohortSpec default_spec() {
  CohortSpec spec;
  spec.temp_bins = {121'557.0 / kNationalTotal, 6'310.0 / kNationalTotal,
                    17'227.0 / kNationalTotal, 4'377.0 / kNationalTotal};
  spec.symptoms = {
      symptom_rates(34'201, 99'997),   // cough
      symptom_rates(17'108, 117'090),  // sputum
      symptom_rates(25'078, 109'120),  // sore throat
      symptom_rates(1'962, 132'236),   // dyspnea
      symptom_rates(24'017, 110'181),  // musculoskeletal pain
      symptom_rates(16'337, 117'861),  // headache
      symptom_rates(17'227, 116'971),  // chill
      symptom_rates(4'846, 129'352),   // ageusia
      symptom_rates(5'498, 128'700),   // anosmia
  };
  spec.diseases = {
      disease_table({148'632, 354, 475, 10}),
      disease_table({147'260, 594, 1'423, 187, 5, 2}),
      disease_table({139'063, 10'408}),
      disease_table({127'608, 2'165, 18'719, 825, 139, 15}),
      disease_table({148'698, 758, 15}),
      disease_table({146'945, 2'331, 193, 2}),
      disease_table({147'253, 2'086, 122, 10}),
  };
  spec.monthly_weights.fill(1.0 / 12.0);

  // Age dominates; dyspnea, fever and renal/degenerative history follow.
  RiskModel& risk = spec.risk;
  risk.age = 0.09;
  risk.male = 0.35;
  risk.temp_bin = 0.35;
  risk.latitude = 0.15;
  risk.longitude = 0.15;
  risk.symptoms = {0.10, 0.20, -0.25, 1.30, -0.10, -0.20, 0.10, -0.30, -0.30};
  risk.diseases = {0.50, 0.45, 0.45, 0.30, 1.00, 1.00, 0.50};
  return spec;
}

void validate(const CohortSpec& spec) {
  if (spec.n < 1) throw ValidationError("n", "cohort size must be at least 1");
  if (!(spec.prevalence_target > 0.0 && spec.prevalence_target < 1.0)) {
    throw ValidationError("prevalence_target", "must lie in (0, 1)");
  }
  if (!(spec.p_male >= 0.0 && spec.p_male <= 1.0)) {
    throw ValidationError("p_male", "must lie in [0, 1]");
  }
  check_moments("age", spec.age);
  check_moments("latitude", spec.latitude);
  check_moments("longitude", spec.longitude);
  check_probability_vector("temp_bins", spec.temp_bins.data(), spec.temp_bins.size());
  if (!(spec.temp_missing_rate >= 0.0 && spec.temp_missing_rate <= 1.0)) {
    throw ValidationError("temp_missing_rate", "must lie in [0, 1]");
  }
  for (std::size_t s = 0; s < kNumSymptoms; ++s) {
    const auto& r = spec.symptoms[s];
    const double p[3] = {r.p_true, r.p_false, r.p_unknown};
    check_probability_vector("symptoms." + std::string(kSymptomNames[s]), p, 3);
  }
  for (std::size_t d = 0; d < kNumDiseases; ++d) {
    const auto field = "diseases." + std::string(kDiseaseNames[d]);
    const auto& table = spec.diseases[d];
    if (table.empty() || table.size() > static_cast<std::size_t>(kDiseaseMax[d]) + 1) {
      throw ValidationError(field, "needs 1.." + std::to_string(kDiseaseMax[d] + 1) +
                                       " count probabilities");
    }
    check_probability_vector(field, table.data(), table.size());
  }
  if (!std::isfinite(spec.disease_age_slope)) {
    throw ValidationError("disease_age_slope", "must be finite");
  }
  check_probability_vector("monthly_weights", spec.monthly_weights.data(),
                           spec.monthly_weights.size());
  const RiskModel& r = spec.risk;
  auto finite = [](double x) { return std::isfinite(x); };
  if (r.intercept && !finite(*r.intercept)) throw ValidationError("risk.intercept", "not finite");
  if (!finite(r.age) || !finite(r.male) || !finite(r.temp_bin) || !finite(r.latitude) ||
      !finite(r.longitude) || !std::all_of(r.symptoms.begin(), r.symptoms.end(), finite) ||
      !std::all_of(r.diseases.begin(), r.diseases.end(), finite)) {
    throw ValidationError("risk", "coefficients must be finite");
  }
}

double risk_score(const PatientRecord& record, const RiskModel& risk) {
  double score = risk.age * record.age + risk.latitude * record.latitude +
                 risk.longitude * record.longitude;
  if (record.sex == Sex::kMale) score += risk.male;
  if (record.body_temp) {
    const double t = *record.body_temp;
    const int bin = t <= 36.5 ? 1 : t < 37.5 ? 2 : t < 38.3 ? 3 : 4;
    score += risk.temp_bin * (bin - 1);
  }
  for (std::size_t s = 0; s < kNumSymptoms; ++s) {
    if (record.symptoms[s] == TriState::kTrue) score += risk.symptoms[s];
  }
  for (std::size_t d = 0; d < kNumDiseases; ++d) {
    score += risk.diseases[d] * record.diseases[d];
  }
  return score;
}

double true_risk(const PatientRecord& record, const CohortSpec& spec) {
  if (!spec.risk.intercept) {
    throw ValidationError("risk.intercept", "uncalibrated; call calibrate_intercept first");
  }
  return sigmoid(*spec.risk.intercept + risk_score(record, spec.risk));
}

std::vector<PatientRecord> sample_features(const CohortSpec& spec, std::size_t n,
                                           std::uint64_t seed) {
  validate(spec);
  Sampler sampler(spec);
  std::mt19937_64 rng(seed);
  std::vector<PatientRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) records.push_back(sampler.draw(rng, i));
  return records;
}

CohortSpec calibrate_intercept(const CohortSpec& spec, std::size_t draws) {
  const auto sample = sample_features(spec, draws, spec.seed ^ kCalibrationSalt);
  std::vector<double> scores;
  scores.reserve(sample.size());
  for (const auto& r : sample) scores.push_back(risk_score(r, spec.risk));
  auto mean_risk = [&](double intercept) {
    double total = 0.0;
    for (double s : scores) total += sigmoid(intercept + s);
    return total / static_cast<double>(scores.size());
  };
  CohortSpec calibrated = spec;
  calibrated.risk.intercept = bisect(mean_risk, -100.0, 100.0, spec.prevalence_target);
  return calibrated;
}

std::vector<PatientRecord> generate_cohort(const CohortSpec& input) {
  validate(input);
  const CohortSpec spec = input.risk.intercept ? input : calibrate_intercept(input);
  Sampler sampler(spec);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<PatientRecord> records;
  records.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    PatientRecord r = sampler.draw(rng, i);
    r.outcome = unit(rng) < true_risk(r, spec) ? Outcome::kDeceased : Outcome::kSurvived;
    records.push_back(std::move(r));
  }
  return records;
}

void validate(const PatientRecord& r) {
  if (r.id.find_first_of(",\"\r\n") != std::string::npos) {
    throw ValidationError("id", "must not contain commas, quotes or line breaks");
  }
  if (r.sex != Sex::kMale && r.sex != Sex::kFemale) throw ValidationError("sex", "invalid value");
  if (r.age < 0 || r.age > kMaxAge) {
    throw ValidationError("age", "must lie in [0, " + std::to_string(kMaxAge) + "]");
  }
  if (!(r.latitude >= kMinLatitude && r.latitude <= kMaxLatitude)) {
    throw ValidationError("latitude", "outside [33.0, 39.0]");
  }
  if (!(r.longitude >= kMinLongitude && r.longitude <= kMaxLongitude)) {
    throw ValidationError("longitude", "outside [124.5, 132.0]");
  }
  if (r.body_temp && !(*r.body_temp >= kMinBodyTemp && *r.body_temp <= kMaxBodyTemp)) {
    throw ValidationError("body_temp", "outside [30.0, 45.0]");
  }
  if (r.onset_month < 1 || r.onset_month > 12) {
    throw ValidationError("onset_month", "must lie in 1..12");
  }
  for (std::size_t s = 0; s < kNumSymptoms; ++s) {
    if (static_cast<int>(r.symptoms[s]) > 2) {
      throw ValidationError(std::string(kSymptomNames[s]), "invalid tri-state");
    }
  }
  for (std::size_t d = 0; d < kNumDiseases; ++d) {
    if (r.diseases[d] < 0 || r.diseases[d] > kDiseaseMax[d]) {
      throw ValidationError(std::string(kDiseaseNames[d]),
                            "count must lie in [0, " + std::to_string(kDiseaseMax[d]) + "]");
    }
  }
}

std::string_view to_string(Sex sex) { return sex == Sex::kMale ? "male" : "female"; }

std::string_view to_string(TriState state) {
  switch (state) {
    case TriState::kTrue: return "true";
    case TriState::kFalse: return "false";
    default: return "unknown";
  }
}

}  // namespace pghd::cohort
