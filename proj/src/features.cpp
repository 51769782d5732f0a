#include "pghd/features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>

#include "pghd/errors.hpp"

namespace pghd::features {
namespace {

using cohort::Disease;

std::string normalize(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

struct Keyword {
  std::string_view name;
  Disease group;
};

// Exact names after normalization.
constexpr Keyword kKeywords[] = {
    {"hepatitis b", Disease::kLiver},
    {"hepatitis c", Disease::kLiver},
    {"hepatitis", Disease::kLiver},
    {"cirrhosis", Disease::kLiver},
    {"liver cirrhosis", Disease::kLiver},
    {"liver disease", Disease::kLiver},
    {"fatty liver", Disease::kLiver},
    {"cancer", Disease::kCancer},
    {"acute myelogenous white blood", Disease::kCancer},
    {"chronic myelogenous white blood", Disease::kCancer},
    {"acute myeloid leukemia", Disease::kCancer},
    {"chronic myeloid leukemia", Disease::kCancer},
    {"leukemia", Disease::kCancer},
    {"lymphoma", Disease::kCancer},
    {"hematoma", Disease::kCancer},
    {"diabetes", Disease::kDiabetes},
    {"diabetes mellitus", Disease::kDiabetes},
    {"type 1 diabetes", Disease::kDiabetes},
    {"type 2 diabetes", Disease::kDiabetes},
    {"hypertension", Disease::kCardio},
    {"stroke", Disease::kCardio},
    {"cerebral infarction", Disease::kCardio},
    {"myocardial infarction", Disease::kCardio},
    {"myocardial hemorrhage", Disease::kCardio},
    {"arteriosclerosis", Disease::kCardio},
    {"angina", Disease::kCardio},
    {"cardiovascular disease", Disease::kCardio},
    {"cardio-cerebrovascular disease", Disease::kCardio},
    {"renal failure", Disease::kRenal},
    {"chronic renal failure", Disease::kRenal},
    {"acute renal failure", Disease::kRenal},
    {"glomerular disease", Disease::kRenal},
    {"renal disease", Disease::kRenal},
    {"chronic kidney disease", Disease::kRenal},
    {"alzheimer disease", Disease::kDegenerative},
    {"alzheimer's disease", Disease::kDegenerative},
    {"dementia", Disease::kDegenerative},
    {"parkinson disease", Disease::kDegenerative},
    {"parkinson's disease", Disease::kDegenerative},
    {"degenerative disease", Disease::kDegenerative},
    {"emphysema", Disease::kLung},
    {"lung disease", Disease::kLung},
    {"copd", Disease::kLung},
    {"chronic obstructive pulmonary disease", Disease::kLung},
    {"asthma", Disease::kLung},
};

// Suffix rules for open-ended families ("any other hepatitis", "... cancer").
// Checked in order after the exact table; cancer wins over organ names.
constexpr Keyword kSuffixes[] = {
    {" cancer", Disease::kCancer},
    {" carcinoma", Disease::kCancer},
    {" leukemia", Disease::kCancer},
    {" lymphoma", Disease::kCancer},
    {" hepatitis", Disease::kLiver},
    {" dementia", Disease::kDegenerative},
    {" lung disease", Disease::kLung},
};

std::optional<Disease> classify(const std::string& name) {
  for (const auto& k : kKeywords) {
    if (name == k.name) return k.group;
  }
  for (const auto& k : kSuffixes) {
    if (name.size() > k.name.size() && name.ends_with(k.name)) return k.group;
  }
  if (name.starts_with("hepatitis ")) return Disease::kLiver;
  return std::nullopt;
}

double tri_value(cohort::TriState s) { return s == cohort::TriState::kTrue ? 1.0 : 0.0; }

}  // namespace

std::uint64_t fingerprint(std::span<const std::string> names) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (const auto& n : names) {
    for (unsigned char c : n) mix(c);
    mix(0);
  }
  return h;
}

std::uint64_t canonical_fingerprint() {
  static const std::uint64_t value = [] {
    std::vector<std::string> names(kSlotNames.begin(), kSlotNames.end());
    return fingerprint(names);
  }();
  return value;
}

int bin_temperature(double t) {
  if (!(t >= cohort::kMinBodyTemp && t <= cohort::kMaxBodyTemp)) {
    throw ValidationError("body_temp", "outside [30.0, 45.0]");
  }
  if (t <= 36.5) return 1;
  if (t < 37.5) return 2;
  if (t < 38.3) return 3;
  return 4;
}

DiseaseGrouping group_diseases(std::span<const std::string> reported) {
  DiseaseGrouping out;
  std::array<int, cohort::kNumDiseases> raw{};
  for (const auto& name : reported) {
    const auto group = classify(normalize(name));
    if (!group) {
      out.unrecognized.push_back(name);
      continue;
    }
    ++raw[static_cast<std::size_t>(*group)];
  }
  for (std::size_t d = 0; d < cohort::kNumDiseases; ++d) {
    out.counts[d] = std::min(raw[d], cohort::kDiseaseMax[d]);
    if (raw[d] > cohort::kDiseaseMax[d]) out.clamped.emplace_back(cohort::kDiseaseNames[d]);
  }
  return out;
}

FeatureVector encode(const cohort::PatientRecord& r) {
  cohort::validate(r);
  FeatureVector v;
  v.set(static_cast<std::size_t>(Slot::kSex), r.sex == cohort::Sex::kMale ? 1.0 : 0.0);
  v.set(static_cast<std::size_t>(Slot::kAge), r.age);
  v.set(static_cast<std::size_t>(Slot::kLatitude), r.latitude);
  v.set(static_cast<std::size_t>(Slot::kLongitude), r.longitude);
  v.set(static_cast<std::size_t>(Slot::kOnsetMonth), r.onset_month);
  if (r.body_temp) {
    v.set(static_cast<std::size_t>(Slot::kTempBin), bin_temperature(*r.body_temp));
  }
  for (std::size_t s = 0; s < cohort::kNumSymptoms; ++s) {
    if (r.symptoms[s] != cohort::TriState::kUnknown) {
      v.set(kFirstSymptomSlot + s, tri_value(r.symptoms[s]));
    }
  }
  for (std::size_t d = 0; d < cohort::kNumDiseases; ++d) {
    v.set(kFirstDiseaseSlot + d, r.diseases[d]);
  }
  return v;
}

void validate(const FeatureVector& v) {
  for (std::size_t i = 0; i < kNumSlots; ++i) {
    if (!v.has(i)) continue;
    const double x = v[i];
    const std::string field(kSlotNames[i]);
    if (!std::isfinite(x)) throw ValidationError(field, "present value is not finite");
    if (i == static_cast<std::size_t>(Slot::kTempBin) && !(x == 1 || x == 2 || x == 3 || x == 4)) {
      throw ValidationError(field, "must be one of 1, 2, 3, 4");
    }
    if (i == static_cast<std::size_t>(Slot::kSex) && x != 0.0 && x != 1.0) {
      throw ValidationError(field, "must be 0 or 1");
    }
    if (i >= kFirstSymptomSlot && i < kFirstDiseaseSlot && x != 0.0 && x != 1.0) {
      throw ValidationError(field, "must be 0 or 1");
    }
    if (i >= kFirstDiseaseSlot) {
      const int max = cohort::kDiseaseMax[i - kFirstDiseaseSlot];
      if (x < 0 || x > max || x != std::floor(x)) {
        throw ValidationError(field, "must be an integer in [0, " + std::to_string(max) + "]");
      }
    }
  }
  for (std::size_t d = kFirstDiseaseSlot; d < kNumSlots; ++d) {
    if (!v.has(d)) throw ValidationError(std::string(kSlotNames[d]), "disease counts are required");
  }
}

}  // namespace pghd::features
