#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "generators.hpp"
#include "pghd/cohort.hpp"
#include "pghd/errors.hpp"

namespace pghd::cohort {
namespace {

constexpr double kNational = 149'471.0;

const std::vector<PatientRecord>& national_cohort() {
  static const auto records = [] {
    auto spec = default_spec();
    spec.seed = 11;
    return generate_cohort(spec);
  }();
  return records;
}

template <typename Pred>
double fraction(const std::vector<PatientRecord>& rs, Pred pred) {
  double k = 0;
  for (const auto& r : rs) k += pred(r);
  return k / static_cast<double>(rs.size());
}

TEST(CohortSpec, DefaultsAreValid) {
  const auto spec = default_spec();
  EXPECT_NO_THROW(validate(spec));
  EXPECT_EQ(spec.n, 149'471U);
  EXPECT_DOUBLE_EQ(spec.prevalence_target, 2000.0 / kNational);
  EXPECT_DOUBLE_EQ(spec.p_male, 75'073.0 / kNational);
  EXPECT_DOUBLE_EQ(spec.age.mean, 44.36);
  EXPECT_DOUBLE_EQ(spec.latitude.mean, 36.93);
  EXPECT_DOUBLE_EQ(spec.longitude.mean, 127.39);
}

TEST(CohortSpec, RejectsEmptyCohort) {
  auto spec = default_spec();
  spec.n = 0;
  try {
    validate(spec);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "n");
  }
}

TEST(CohortSpec, RejectsTablesThatDoNotSumToOne) {
  auto spec = default_spec();
  spec.monthly_weights[0] += 0.01;
  try {
    validate(spec);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "monthly_weights");
  }

  spec = default_spec();
  spec.symptoms[0].p_unknown += 1e-6;
  try {
    validate(spec);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "symptoms.cough");
  }

  spec = default_spec();
  spec.diseases[4].push_back(0.0);  // renal above its maximum
  try {
    validate(spec);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "diseases.renal");
  }
}

TEST(CohortSpec, ToleratesRoundingWithinOneE9) {
  auto spec = default_spec();
  spec.monthly_weights[0] += 5e-10;
  EXPECT_NO_THROW(validate(spec));
}

TEST(GenerateCohort, SeedDeterministicAndByteIdentical) {
  auto spec = default_spec();
  spec.n = 2000;
  spec.seed = 3;
  std::ostringstream a, b;
  write_cohort(generate_cohort(spec), a);
  write_cohort(generate_cohort(spec), b);
  EXPECT_EQ(a.str(), b.str());

  spec.seed = 4;
  std::ostringstream c;
  write_cohort(generate_cohort(spec), c);
  EXPECT_NE(a.str(), c.str());
}

TEST(GenerateCohort, EveryRecordValidAndLabeled) {
  for (const auto& r : national_cohort()) {
    ASSERT_NO_THROW(validate(r));
    ASSERT_TRUE(r.outcome.has_value());
  }
}

TEST(GenerateCohort, MaleFractionMatchesNationalTable) {
  EXPECT_NEAR(fraction(national_cohort(), [](auto& r) { return r.sex == Sex::kMale; }), 0.5023,
              0.005);
}

TEST(GenerateCohort, AgeMeanMatches) {
  double sum = 0.0;
  for (const auto& r : national_cohort()) sum += r.age;
  EXPECT_NEAR(sum / static_cast<double>(national_cohort().size()), 44.36, 0.2);
}

TEST(GenerateCohort, CoordinateMeansMatch) {
  double lat = 0.0, lon = 0.0;
  for (const auto& r : national_cohort()) {
    lat += r.latitude;
    lon += r.longitude;
  }
  const double n = static_cast<double>(national_cohort().size());
  EXPECT_NEAR(lat / n, 36.93, 0.02);
  EXPECT_NEAR(lon / n, 127.39, 0.02);
}

TEST(GenerateCohort, TemperatureBinsMatchTable) {
  const double expected[] = {121'557 / kNational, 6'310 / kNational, 17'227 / kNational,
                             4'377 / kNational};
  const double lo[] = {0.0, 36.55, 37.45, 38.25};
  const double hi[] = {36.55, 37.45, 38.25, 100.0};
  for (int b = 0; b < 4; ++b) {
    const double f = fraction(national_cohort(), [&](auto& r) {
      return r.body_temp && *r.body_temp >= lo[b] && *r.body_temp < hi[b];
    });
    EXPECT_NEAR(f, expected[b], 0.005) << "bin " << b + 1;
  }
}

TEST(GenerateCohort, SymptomUnknownRatesAreComplements) {
  const auto spec = default_spec();
  // cough: true 22.88%, false 66.90%, so unknown 10.22%.
  EXPECT_NEAR(spec.symptoms[0].p_unknown, 1.0 - 34'201 / kNational - 99'997 / kNational, 1e-12);
  for (std::size_t s = 0; s < kNumSymptoms; ++s) {
    const double unknown = fraction(national_cohort(), [&](auto& r) {
      return r.symptoms[s] == TriState::kUnknown;
    });
    const double yes = fraction(national_cohort(), [&](auto& r) {
      return r.symptoms[s] == TriState::kTrue;
    });
    EXPECT_NEAR(unknown, spec.symptoms[s].p_unknown, 0.005) << kSymptomNames[s];
    EXPECT_NEAR(yes, spec.symptoms[s].p_true, 0.005) << kSymptomNames[s];
  }
  EXPECT_NEAR(fraction(national_cohort(),
                       [](auto& r) { return r.symptom(Symptom::kCough) == TriState::kUnknown; }),
              0.1022, 0.005);
}

TEST(GenerateCohort, DiseaseMarginalsMatchTable) {
  const auto spec = default_spec();
  for (std::size_t d = 0; d < kNumDiseases; ++d) {
    for (std::size_t c = 0; c < spec.diseases[d].size(); ++c) {
      const double f = fraction(national_cohort(), [&](auto& r) {
        return r.diseases[d] == static_cast<int>(c);
      });
      EXPECT_NEAR(f, spec.diseases[d][c], 0.005) << kDiseaseNames[d] << "=" << c;
    }
  }
}

TEST(GenerateCohort, DiseaseRatesRiseWithAge) {
  double young = 0, young_n = 0, old = 0, old_n = 0;
  for (const auto& r : national_cohort()) {
    const int any = std::accumulate(r.diseases.begin(), r.diseases.end(), 0) > 0;
    if (r.age < 40) {
      young += any;
      young_n += 1;
    } else if (r.age >= 70) {
      old += any;
      old_n += 1;
    }
  }
  EXPECT_GT(old / old_n, young / young_n);
}

TEST(GenerateCohort, PrevalenceNearTarget) {
  const double p = fraction(national_cohort(),
                            [](auto& r) { return *r.outcome == Outcome::kDeceased; });
  EXPECT_NEAR(p, 0.0134, 0.0015);
}

TEST(GenerateCohort, DegenerateMarginals) {
  auto spec = default_spec();
  spec.n = 1000;
  for (auto& s : spec.symptoms) s = {0.0, 0.6, 0.4};
  for (auto& d : spec.diseases) d = {1.0};
  spec.risk.intercept = -3.0;
  for (const auto& r : generate_cohort(spec)) {
    for (auto s : r.symptoms) EXPECT_NE(s, TriState::kTrue);
    for (int d : r.diseases) EXPECT_EQ(d, 0);
  }
}

TEST(TrueRisk, MonotoneInAgeAndDiseases) {
  auto spec = calibrate_intercept(default_spec(), 20'000);
  PatientRecord r;
  r.age = 30;
  PatientRecord older = r;
  older.age = 80;
  EXPECT_GT(true_risk(older, spec), true_risk(r, spec));
  for (std::size_t d = 0; d < kNumDiseases; ++d) {
    PatientRecord sick = r;
    sick.diseases[d] = 1;
    EXPECT_GT(true_risk(sick, spec), true_risk(r, spec)) << kDiseaseNames[d];
  }
}

TEST(TrueRisk, InterceptOnlyIsSigmoidOfIntercept) {
  auto spec = default_spec();
  spec.risk = RiskModel{};
  spec.risk.intercept = -1.25;
  pghd::testing::Rng rng(5);
  const auto r = pghd::testing::random_record(rng);
  EXPECT_DOUBLE_EQ(true_risk(r, spec), 1.0 / (1.0 + std::exp(1.25)));
}

TEST(TrueRisk, UnknownSymptomsContributeNothing) {
  const auto risk = default_spec().risk;
  PatientRecord r;
  r.body_temp.reset();
  PatientRecord no = r;
  no.symptoms.fill(TriState::kFalse);
  EXPECT_DOUBLE_EQ(risk_score(r, risk), risk_score(no, risk));
}

TEST(TrueRisk, CalibratedMeanRiskHitsTarget) {
  const auto spec = calibrate_intercept(default_spec());
  ASSERT_TRUE(spec.risk.intercept.has_value());
  // Re-simulate on an independent draw.
  const auto rows = sample_features(spec, 100'000, 987654321);
  double sum = 0.0;
  for (const auto& r : rows) sum += true_risk(r, spec);
  EXPECT_NEAR(sum / 100'000.0, 0.0134, 0.001);
}

// CSV

TEST(CohortCsv, HeaderOnlyIsEmpty) {
  std::string header;
  for (std::size_t i = 0; i < kCsvHeader.size(); ++i) {
    header += (i ? "," : "") + std::string(kCsvHeader[i]);
  }
  std::istringstream in(header + "\n");
  EXPECT_TRUE(read_cohort(in).empty());
}

TEST(CohortCsv, EmptyTemperatureCellIsAbsent) {
  std::ostringstream out;
  PatientRecord r;
  r.id = "A";
  r.body_temp.reset();
  write_cohort({r}, out);
  std::istringstream in(out.str());
  const auto back = read_cohort(in);
  ASSERT_EQ(back.size(), 1U);
  EXPECT_FALSE(back[0].body_temp.has_value());
  EXPECT_NE(out.str().find("A,female,0,36.93,127.39,,1,"), std::string::npos);
}

TEST(CohortCsv, RandomRecordsRoundTrip) {
  pghd::testing::Rng rng(21);
  std::vector<PatientRecord> records;
  for (int i = 0; i < 1000; ++i) records.push_back(pghd::testing::random_record(rng, i));
  std::stringstream buf;
  write_cohort(records, buf);
  EXPECT_EQ(read_cohort(buf), records);
}

TEST(CohortCsv, GeneratedRecordsRoundTrip) {
  auto spec = default_spec();
  spec.n = 1000;
  const auto records = generate_cohort(spec);
  std::stringstream buf;
  write_cohort(records, buf);
  const auto back = read_cohort(buf);
  ASSERT_EQ(back.size(), records.size());
  for (std::size_t i = 0; i < records.size(); ++i) EXPECT_EQ(back[i], records[i]) << i;
}

TEST(CohortCsv, UnknownColumnListsSchema) {
  std::istringstream in("id,sex,age,colour\n");
  try {
    read_cohort(in);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("body_temp"), std::string::npos);
  }
}

TEST(CohortCsv, MalformedRowReportsLine) {
  std::ostringstream out;
  PatientRecord r;
  write_cohort({r, r}, out);
  std::string text = out.str();
  text.replace(text.rfind(",female,"), 8, ",yes,");
  std::istringstream in(text);
  try {
    read_cohort(in, "bad.csv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3U);
  }
}

TEST(CohortCsv, OutOfRangeValueReportsLine) {
  std::ostringstream out;
  PatientRecord r;
  r.latitude = 38.0;
  write_cohort({r}, out);
  std::string text = out.str();
  text.replace(text.find(",38,"), 4, ",45,");
  std::istringstream in(text);
  try {
    read_cohort(in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2U);
    EXPECT_NE(std::string(e.what()).find("latitude"), std::string::npos);
  }
}

TEST(PatientRecordValidation, NamesField) {
  PatientRecord r;
  r.diseases[static_cast<std::size_t>(Disease::kDiabetes)] = 2;
  try {
    validate(r);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "diabetes");
  }
  r = PatientRecord{};
  r.body_temp = 29.9;
  EXPECT_THROW(validate(r), ValidationError);
  r = PatientRecord{};
  r.onset_month = 13;
  EXPECT_THROW(validate(r), ValidationError);
}

}  // namespace
}  // namespace pghd::cohort
