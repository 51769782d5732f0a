#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <sstream>

#include "generators.hpp"
#include "json.hpp"
#include "pghd/errors.hpp"
#include "pghd/gbdt.hpp"

namespace pghd::gbdt {
namespace {

std::string serialize(const TreeEnsemble& m) {
  std::ostringstream out;
  save_model(m, out);
  return out.str();
}

TreeEnsemble parse(const std::string& text) {
  std::istringstream in(text);
  return load_model(in, "model.json");
}

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

TreeEnsemble trained_model() {
  auto spec = cohort::default_spec();
  spec.n = 3000;
  spec.prevalence_target = 0.05;
  const auto [rows, labels] = to_training_set(cohort::generate_cohort(spec));
  TrainConfig c;
  c.n_trees = 25;
  auto m = train(rows, labels, c);
  m.metrics_snapshot["test_auroc"] = 0.8123456789;
  m.provenance["cohort"] = "c.csv";
  return m;
}

TEST(ModelIo, RoundTripIsIdentical) {
  const auto m = trained_model();
  const auto back = parse(serialize(m));
  EXPECT_EQ(back, m);
  EXPECT_EQ(serialize(back), serialize(m));
}

TEST(ModelIo, RandomEnsemblesPredictBitIdentically) {
  testing::Rng rng(17);
  for (int k = 0; k < 20; ++k) {
    const auto m = testing::random_ensemble(rng, 12, 4, 20);
    const auto back = parse(serialize(m));
    for (int i = 0; i < 500; ++i) {
      const auto x = testing::random_vector(rng, 0.2);
      ASSERT_TRUE(bit_equal(predict_margin(m, x), predict_margin(back, x)));
    }
  }
}

TEST(ModelIo, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "pghd_model_io_test.json";
  const auto m = trained_model();
  save_model(m, path);
  EXPECT_EQ(load_model(path), m);
  std::filesystem::remove(path);
  EXPECT_THROW(load_model(path), IoError);
}

TEST(ModelIo, DocumentedFields) {
  const auto doc = nlohmann::json::parse(serialize(trained_model()));
  for (const char* key : {"version", "base_score", "learning_rate", "feature_names", "trees",
                          "train_config", "metrics_snapshot"}) {
    EXPECT_TRUE(doc.contains(key)) << key;
  }
  EXPECT_EQ(doc["version"], "v1");
  EXPECT_EQ(doc["feature_names"].size(), 22U);
}

TEST(ModelIo, TruncatedFileIsParseError) {
  const auto text = serialize(trained_model());
  try {
    parse(text.substr(0, text.size() / 2));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("model.json"), std::string::npos);
  }
}

TEST(ModelIo, OtherVersionRefused) {
  auto doc = nlohmann::json::parse(serialize(trained_model()));
  doc["version"] = "v0";
  EXPECT_THROW(parse(doc.dump()), VersionError);
  doc["version"] = "v2";
  EXPECT_THROW(parse(doc.dump()), VersionError);
}

TEST(ModelIo, StructuralCorruptionRejected) {
  const auto good = nlohmann::json::parse(serialize(trained_model()));

  auto doc = good;
  doc["trees"][0]["nodes"][0]["feature"] = 22;
  EXPECT_THROW(parse(doc.dump()), ParseError);

  doc = good;
  doc["trees"][0]["nodes"][0]["left"] = 0;  // self loop
  EXPECT_THROW(parse(doc.dump()), ParseError);

  doc = good;
  doc["trees"][0]["nodes"][0]["right"] = 9999;
  EXPECT_THROW(parse(doc.dump()), ParseError);

  doc = good;
  doc["feature_names"][0] = "gender";
  EXPECT_THROW(parse(doc.dump()), ParseError);

  doc = good;
  doc.erase("base_score");
  EXPECT_THROW(parse(doc.dump()), ParseError);
}

}  // namespace
}  // namespace pghd::gbdt
