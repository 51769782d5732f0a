#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include "generators.hpp"
#include "httplib.h"
#include "json.hpp"
#include "pghd/errors.hpp"
#include "pghd/service.hpp"

namespace pghd::triage {
namespace {

using nlohmann::json;

std::shared_ptr<const gbdt::TreeEnsemble> model_with_base(double base, const char* id) {
  auto m = std::make_shared<gbdt::TreeEnsemble>();
  m->base_score = base;
  gbdt::Tree t;
  t.nodes.resize(3);
  t.nodes[0] = {1, 60.5, true, 1, 2, 0.0, 100.0, 1.0};
  t.nodes[1].weight = -1.0;
  t.nodes[1].cover = 70.0;
  t.nodes[2].weight = 2.0;
  t.nodes[2].cover = 30.0;
  m->trees.push_back(t);
  m->provenance["model_id"] = id;
  return m;
}

json patient() {
  return {{"sex", "male"},     {"age", 72},       {"region_code", "KR-11"}, {"body_temp", 38.4},
          {"onset_month", 3},  {"cough", true},   {"dyspnea", false},       {"renal", 1}};
}

TEST(RecordJson, RoundTripsRandomRecords) {
  testing::Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    auto r = testing::random_record(rng, i);
    r.outcome.reset();
    EXPECT_EQ(record_from_json(record_to_json(r), features::RegionTable::bundled()), r);
  }
}

TEST(RecordJson, SymptomsAreTriState) {
  const auto& regions = features::RegionTable::bundled();
  auto doc = patient();
  doc["headache"] = nullptr;
  const auto r = record_from_json(doc.dump(), regions);
  EXPECT_EQ(r.symptoms[0], cohort::TriState::kTrue);
  EXPECT_EQ(r.symptoms[3], cohort::TriState::kFalse);
  EXPECT_EQ(r.symptoms[5], cohort::TriState::kUnknown);
  EXPECT_EQ(r.symptoms[8], cohort::TriState::kUnknown);
  doc["headache"] = "yes";
  try {
    record_from_json(doc.dump(), regions);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "headache");
  }
}

TEST(RecordJson, ReportedDiseasesGrouped) {
  auto doc = patient();
  doc.erase("renal");
  doc["reported_diseases"] = {"lung cancer", "liver cancer"};
  const auto r = record_from_json(doc.dump(), features::RegionTable::bundled());
  EXPECT_EQ(r.diseases[static_cast<std::size_t>(cohort::Disease::kCancer)], 2);
  doc["renal"] = 1;
  EXPECT_THROW(record_from_json(doc.dump(), features::RegionTable::bundled()), ValidationError);
}

TEST(RecordJson, FieldErrors) {
  const auto& regions = features::RegionTable::bundled();
  auto field_of = [&](const json& doc) -> std::string {
    try {
      record_from_json(doc.dump(), regions);
    } catch (const ValidationError& e) {
      return e.field();
    }
    return "";
  };
  auto doc = patient();
  doc.erase("age");
  EXPECT_EQ(field_of(doc), "age");
  doc = patient();
  doc["age"] = 130;
  EXPECT_EQ(field_of(doc), "age");
  doc = patient();
  doc["latitude"] = 37.0;
  EXPECT_EQ(field_of(doc), "region_code");
  doc = patient();
  doc["body_temp"] = 50.0;
  EXPECT_EQ(field_of(doc), "body_temp");
  EXPECT_EQ(field_of(json::array()), "body");
  doc = patient();
  doc["region_code"] = "ZZ-1";
  EXPECT_THROW(record_from_json(doc.dump(), regions), LookupError);
}

TEST(DecisionJson, RoundTrip) {
  TriageDecision d;
  d.probability = 0.123456789;
  d.band = Band::kModerate;
  d.recommendation = "hospital admission";
  d.top_factors = {{"age", 1.25, 1, 0.08}, {"cough", -0.5, -1, -0.02}};
  d.model_version = "v1+x";
  d.timestamp = "2026-01-01T00:00:00Z";
  EXPECT_EQ(decision_from_json(decision_to_json(d)), d);
  EXPECT_THROW(decision_from_json("{}"), ParseError);
  EXPECT_THROW(decision_from_json("nope"), ParseError);
}

TEST(ParseBind, HostPort) {
  EXPECT_EQ(parse_bind("127.0.0.1:8080"), std::make_pair(std::string("127.0.0.1"), 8080));
  EXPECT_THROW(parse_bind("localhost"), ValidationError);
  EXPECT_THROW(parse_bind("h:70000"), ValidationError);
  EXPECT_THROW(parse_bind("h:x"), ValidationError);
}

TEST(ServiceHandlers, NoModelIs503) {
  Service s({});
  const auto r = s.assess(patient().dump());
  EXPECT_EQ(r.status, 503);
  EXPECT_EQ(json::parse(r.body)["code"], "model_unavailable");
  EXPECT_EQ(s.model_info().status, 503);
  EXPECT_EQ(json::parse(s.health().body)["model_loaded"], false);
}

TEST(ServiceHandlers, ValidationIs400WithField) {
  Service s({});
  s.set_model(model_with_base(-3.0, "a"));
  auto doc = patient();
  doc["onset_month"] = 0;
  auto r = s.assess(doc.dump());
  EXPECT_EQ(r.status, 400);
  auto body = json::parse(r.body);
  EXPECT_EQ(body["code"], "validation_error");
  EXPECT_EQ(body["field"], "onset_month");
  doc = patient();
  doc["region_code"] = "ZZ-1";
  r = s.assess(doc.dump());
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(json::parse(r.body)["code"], "unknown_region");
}

TEST(ServiceHandlers, RejectsForeignSlotOrder) {
  Service s({});
  auto m = std::make_shared<gbdt::TreeEnsemble>(*model_with_base(0.0, "a"));
  std::swap(m->feature_names[0], m->feature_names[1]);
  EXPECT_THROW(s.set_model(m), FingerprintError);
  EXPECT_THROW(Service(Service::Options{{0.5, 0.1}}), ValidationError);
}

class HttpTest : public ::testing::Test {
 protected:
  void SetUp() override {
    port_ = service_.bind("127.0.0.1", 0);
    thread_ = std::thread([this] { service_.run(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    for (int i = 0; i < 200 && !client_->Get("/healthz"); ++i) {
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }
  void TearDown() override {
    service_.stop();
    thread_.join();
  }

  Service service_{Service::Options{}};
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

TEST_F(HttpTest, HealthAndUnavailable) {
  auto res = client_->Get("/healthz");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body)["status"], "ok");
  res = client_->Post("/v1/assess", patient().dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 503);
  res = client_->Get("/nowhere");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  EXPECT_EQ(json::parse(res->body)["code"], "not_found");
}

TEST_F(HttpTest, AssessReturnsDecision) {
  service_.set_model(model_with_base(-3.0, "first"));
  auto res = client_->Post("/v1/assess", patient().dump(), "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "application/json");
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
  const auto d = decision_from_json(res->body);
  // age 72 > 60.5: margin = -3 + 0.1 * 2.
  EXPECT_NEAR(d.probability, gbdt::sigmoid(-2.8), 1e-12);
  EXPECT_EQ(d.band, Band::kModerate);
  EXPECT_EQ(d.recommendation, "hospital admission");
  EXPECT_EQ(d.model_version, "v1+first");
  EXPECT_EQ(d.top_factors.front().feature, "age");
  EXPECT_EQ(d.top_factors.size(), 5U);

  res = client_->Post("/v1/assess", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(json::parse(res->body)["field"], "body");
}

TEST_F(HttpTest, ModelInfoAndHotSwap) {
  service_.set_model(model_with_base(-3.0, "first"));
  auto res = client_->Get("/v1/model");
  ASSERT_TRUE(res);
  auto info = json::parse(res->body);
  EXPECT_EQ(info["version"], "v1+first");
  EXPECT_EQ(info["feature_names"].size(), 22U);
  EXPECT_EQ(info["policy"]["low_cut"], 0.05);

  service_.set_model(model_with_base(1.0, "second"));
  res = client_->Post("/v1/assess", patient().dump(), "application/json");
  ASSERT_TRUE(res);
  const auto d = decision_from_json(res->body);
  EXPECT_EQ(d.model_version, "v1+second");
  EXPECT_EQ(d.band, Band::kHigh);

  service_.clear_model();
  res = client_->Get("/v1/model");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 503);
}

TEST_F(HttpTest, PreflightAllowed) {
  auto res = client_->Options("/v1/assess");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
  EXPECT_NE(res->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);
}

}  // namespace
}  // namespace pghd::triage
