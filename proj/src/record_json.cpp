#include <charconv>
#include <cmath>

#include "json.hpp"
#include "pghd/errors.hpp"
#include "pghd/service.hpp"

namespace pghd::triage {
namespace {

using nlohmann::json;

const json* find(const json& obj, std::string_view key) {
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

double number(const json& v, const std::string& field) {
  if (!v.is_number()) throw ValidationError(field, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ValidationError(field, "must be finite");
  return d;
}

int integer(const json& v, const std::string& field) {
  if (v.is_number_integer()) {
    const auto i = v.get<std::int64_t>();
    if (i < -1'000'000 || i > 1'000'000) throw ValidationError(field, "out of range");
    return static_cast<int>(i);
  }
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d == std::floor(d) && std::abs(d) <= 1e6) return static_cast<int>(d);
  }
  throw ValidationError(field, "expected an integer");
}

const json& required(const json& obj, std::string_view key) {
  const json* v = find(obj, key);
  if (!v || v->is_null()) throw ValidationError(std::string(key), "required");
  return *v;
}

}  // namespace

cohort::PatientRecord record_from_json(std::string_view body,
                                       const features::RegionTable& regions) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw ValidationError("body", std::string("malformed JSON at byte ") +
                                      std::to_string(e.byte));
  }
  if (!doc.is_object()) throw ValidationError("body", "expected a JSON object");

  cohort::PatientRecord r;
  if (const json* id = find(doc, "id"); id && !id->is_null()) {
    if (!id->is_string()) throw ValidationError("id", "expected a string");
    r.id = id->get<std::string>();
  }

  const json& sex = required(doc, "sex");
  if (sex == "male") {
    r.sex = cohort::Sex::kMale;
  } else if (sex == "female") {
    r.sex = cohort::Sex::kFemale;
  } else {
    throw ValidationError("sex", "expected \"male\" or \"female\"");
  }
  r.age = integer(required(doc, "age"), "age");

  const json* region = find(doc, "region_code");
  if (region && !region->is_null()) {
    if (!region->is_string()) throw ValidationError("region_code", "expected a string");
    if (find(doc, "latitude") || find(doc, "longitude")) {
      throw ValidationError("region_code", "give either region_code or latitude/longitude");
    }
    std::tie(r.latitude, r.longitude) = regions.geocode(region->get<std::string>());
  } else {
    r.latitude = number(required(doc, "latitude"), "latitude");
    r.longitude = number(required(doc, "longitude"), "longitude");
  }

  if (const json* t = find(doc, "body_temp"); t && !t->is_null()) {
    r.body_temp = number(*t, "body_temp");
  }
  r.onset_month = integer(required(doc, "onset_month"), "onset_month");

  for (std::size_t i = 0; i < cohort::kNumSymptoms; ++i) {
    const std::string name(cohort::kSymptomNames[i]);
    const json* v = find(doc, name);
    if (!v || v->is_null()) {
      r.symptoms[i] = cohort::TriState::kUnknown;
    } else if (v->is_boolean()) {
      r.symptoms[i] = v->get<bool>() ? cohort::TriState::kTrue : cohort::TriState::kFalse;
    } else {
      throw ValidationError(name, "expected true, false or null");
    }
  }

  const json* reported = find(doc, "reported_diseases");
  if (reported && !reported->is_null()) {
    if (!reported->is_array()) throw ValidationError("reported_diseases", "expected an array");
    std::vector<std::string> names;
    for (const auto& item : *reported) {
      if (!item.is_string()) throw ValidationError("reported_diseases", "expected strings");
      names.push_back(item.get<std::string>());
    }
    for (auto name : cohort::kDiseaseNames) {
      if (find(doc, name)) {
        throw ValidationError("reported_diseases",
                              "give either reported_diseases or per-group counts");
      }
    }
    const auto grouped = features::group_diseases(names);
    if (!grouped.unrecognized.empty()) {
      throw ValidationError("reported_diseases", "unrecognized: " + grouped.unrecognized.front());
    }
    r.diseases = grouped.counts;
  } else {
    for (std::size_t i = 0; i < cohort::kNumDiseases; ++i) {
      const std::string name(cohort::kDiseaseNames[i]);
      const json* v = find(doc, name);
      r.diseases[i] = v && !v->is_null() ? integer(*v, name) : 0;
    }
  }

  cohort::validate(r);
  return r;
}

std::string record_to_json(const cohort::PatientRecord& r) {
  json doc = {{"id", r.id},
              {"sex", std::string(cohort::to_string(r.sex))},
              {"age", r.age},
              {"latitude", r.latitude},
              {"longitude", r.longitude},
              {"body_temp", r.body_temp ? json(*r.body_temp) : json(nullptr)},
              {"onset_month", r.onset_month}};
  for (std::size_t i = 0; i < cohort::kNumSymptoms; ++i) {
    const auto s = r.symptoms[i];
    doc[std::string(cohort::kSymptomNames[i])] =
        s == cohort::TriState::kUnknown ? json(nullptr) : json(s == cohort::TriState::kTrue);
  }
  for (std::size_t i = 0; i < cohort::kNumDiseases; ++i) {
    doc[std::string(cohort::kDiseaseNames[i])] = r.diseases[i];
  }
  return doc.dump();
}

std::string decision_to_json(const TriageDecision& d) {
  json factors = json::array();
  for (const auto& f : d.top_factors) {
    factors.push_back({{"feature", f.feature},
                       {"phi", f.phi},
                       {"direction", f.direction},
                       {"prob_delta", f.prob_delta}});
  }
  const json doc = {{"probability", d.probability},
                    {"band", std::string(to_string(d.band))},
                    {"recommendation", d.recommendation},
                    {"top_factors", std::move(factors)},
                    {"model_version", d.model_version},
                    {"policy", {{"low_cut", d.policy.low_cut}, {"high_cut", d.policy.high_cut}}},
                    {"timestamp", d.timestamp}};
  return doc.dump();
}

TriageDecision decision_from_json(std::string_view body) {
  try {
    const json doc = json::parse(body);
    TriageDecision d;
    d.probability = doc.at("probability").get<double>();
    const auto band_name = doc.at("band").get<std::string>();
    if (band_name == "low") {
      d.band = Band::kLow;
    } else if (band_name == "moderate") {
      d.band = Band::kModerate;
    } else if (band_name == "high") {
      d.band = Band::kHigh;
    } else {
      throw ParseError("decision", 0, "unknown band " + band_name);
    }
    d.recommendation = doc.at("recommendation").get<std::string>();
    for (const auto& f : doc.at("top_factors")) {
      d.top_factors.push_back({f.at("feature").get<std::string>(), f.at("phi").get<double>(),
                               f.at("direction").get<int>(), f.at("prob_delta").get<double>()});
    }
    d.model_version = doc.at("model_version").get<std::string>();
    d.policy.low_cut = doc.at("policy").at("low_cut").get<double>();
    d.policy.high_cut = doc.at("policy").at("high_cut").get<double>();
    d.timestamp = doc.at("timestamp").get<std::string>();
    return d;
  } catch (const json::exception& e) {
    throw ParseError("decision", 0, e.what());
  }
}

std::string error_json(std::string_view code, std::string_view field, std::string_view message) {
  const json doc = {{"code", code},
                    {"field", field.empty() ? json(nullptr) : json(field)},
                    {"message", message}};
  return doc.dump();
}

std::pair<std::string, int> parse_bind(std::string_view address) {
  const auto colon = address.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw ValidationError("bind", "expected HOST:PORT");
  }
  const auto port_text = address.substr(colon + 1);
  int port = -1;
  const auto res = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (res.ec != std::errc() || res.ptr != port_text.data() + port_text.size() || port < 0 ||
      port > 65535) {
    throw ValidationError("bind", "invalid port");
  }
  return {std::string(address.substr(0, colon)), port};
}

}  // namespace pghd::triage
