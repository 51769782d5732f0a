#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pghd/cohort.hpp"

namespace pghd::features {

inline constexpr std::size_t kNumSlots = 22;

/// Canonical slot order shared by training, attribution and the service.
enum class Slot : std::size_t {
  kSex,
  kAge,
  kLatitude,
  kLongitude,
  kOnsetMonth,
  kTempBin,
  kCough,
  kSputum,
  kSoreThroat,
  kDyspnea,
  kMusculoskeletalPain,
  kHeadache,
  kChill,
  kAgeusia,
  kAnosmia,
  kLiver,
  kCancer,
  kDiabetes,
  kCardio,
  kRenal,
  kDegenerative,
  kLung,
};

inline constexpr std::size_t kFirstSymptomSlot = static_cast<std::size_t>(Slot::kCough);
inline constexpr std::size_t kFirstDiseaseSlot = static_cast<std::size_t>(Slot::kLiver);

inline constexpr std::array<std::string_view, kNumSlots> kSlotNames = {
    "sex",      "age",      "latitude", "longitude", "onset_month",
    "temp_bin", "cough",    "sputum",   "sore_throat", "dyspnea",
    "musculoskeletal_pain", "headache", "chill",    "ageusia",   "anosmia",
    "liver",    "cancer",   "diabetes", "cardio",   "renal",     "degenerative",
    "lung"};

/// FNV-1a over the ordered slot names.
std::uint64_t fingerprint(std::span<const std::string> names);

/// Fingerprint of kSlotNames.
std::uint64_t canonical_fingerprint();

/// A model input row. Missing slots are flagged, never zero-filled.
struct FeatureVector {
  std::array<double, kNumSlots> values{};
  std::bitset<kNumSlots> present;
  std::uint64_t schema = canonical_fingerprint();

  bool has(std::size_t slot) const { return present.test(slot); }
  double operator[](std::size_t slot) const { return values[slot]; }
  void set(std::size_t slot, double v) {
    values[slot] = v;
    present.set(slot);
  }
  void set_missing(std::size_t slot) {
    values[slot] = 0.0;
    present.reset(slot);
  }
  std::size_t missing_count() const { return kNumSlots - present.count(); }

  bool operator==(const FeatureVector&) const = default;
};

/// Ordinal fever band: 1 (<= 36.5), 2 (< 37.5), 3 (< 38.3), 4 (>= 38.3).
int bin_temperature(double celsius);

struct DiseaseGrouping {
  cohort::DiseaseCounts counts{};
  std::vector<std::string> unrecognized;
  /// Groups whose raw count exceeded the observed maximum and was clamped.
  std::vector<std::string> clamped;
};

/// Maps free-text disease names onto the seven groups. Matching is
/// case-insensitive and whitespace-normalized.
DiseaseGrouping group_diseases(std::span<const std::string> reported);

/// Static region-code to coordinate lookup.
class RegionTable {
 public:
  /// The table compiled into the binary.
  static const RegionTable& bundled();
  static RegionTable from_csv(std::istream& in, const std::string& source);
  static RegionTable from_file(const std::filesystem::path& path);

  /// Throws LookupError listing the nearest known codes.
  std::pair<double, double> geocode(std::string_view region_code) const;

  const std::map<std::string, std::pair<double, double>, std::less<>>& entries() const {
    return entries_;
  }

 private:
  std::map<std::string, std::pair<double, double>, std::less<>> entries_;
};

std::pair<double, double> geocode(std::string_view region_code);

/// Throws ValidationError for records that break PatientRecord invariants.
FeatureVector encode(const cohort::PatientRecord& record);

/// Throws ValidationError if a present slot is NaN or out of its domain.
void validate(const FeatureVector& vector);

}  // namespace pghd::features
