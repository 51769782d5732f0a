#include "pghd/service.hpp"

#include "httplib.h"
#include "json.hpp"
#include "pghd/errors.hpp"

namespace pghd::triage {
namespace {

constexpr const char* kJson = "application/json";

Response error(int status, std::string_view code, std::string_view field,
               std::string_view message) {
  return {status, error_json(code, field, message)};
}

}  // namespace

struct Service::Http {
  httplib::Server server;
};

Service::Service(Options options) : options_(std::move(options)) {
  validate(options_.policy);
  if (options_.threads == 0) throw ValidationError("threads", "must be positive");
}

Service::~Service() { stop(); }

void Service::set_model(std::shared_ptr<const gbdt::TreeEnsemble> model) {
  if (!model) throw ValidationError("model", "null model");
  if (model->fingerprint() != features::canonical_fingerprint()) {
    throw FingerprintError("model slot order differs from the canonical feature order");
  }
  auto explainer = std::make_shared<const explain::Explainer>(std::move(model));
  std::lock_guard lock(model_mutex_);
  explainer_ = std::move(explainer);
}

void Service::clear_model() {
  std::lock_guard lock(model_mutex_);
  explainer_.reset();
}

std::shared_ptr<const gbdt::TreeEnsemble> Service::model() const {
  std::lock_guard lock(model_mutex_);
  return explainer_ ? explainer_->shared_model() : nullptr;
}

Response Service::assess(std::string_view body) const {
  std::shared_ptr<const explain::Explainer> snapshot;
  {
    std::lock_guard lock(model_mutex_);
    snapshot = explainer_;
  }
  if (!snapshot) return error(503, "model_unavailable", "", "no model is loaded");
  try {
    const auto record = record_from_json(body, options_.regions);
    return {200, decision_to_json(triage::assess(record, *snapshot, options_.policy,
                                                 options_.top_k))};
  } catch (const ValidationError& e) {
    return error(400, "validation_error", e.field(), e.what());
  } catch (const LookupError& e) {
    return error(400, "unknown_region", "region_code", e.what());
  } catch (const FingerprintError& e) {
    return error(503, "model_unavailable", "", e.what());
  }
}

Response Service::model_info() const {
  const auto snapshot = model();
  if (!snapshot) return error(503, "model_unavailable", "", "no model is loaded");
  nlohmann::json regions = nlohmann::json::array();
  for (const auto& [code, coords] : options_.regions.entries()) regions.push_back(code);
  const nlohmann::json doc = {
      {"version", model_version(*snapshot)},
      {"format_version", snapshot->version},
      {"feature_names", snapshot->feature_names},
      {"n_trees", snapshot->trees.size()},
      {"top_k", options_.top_k},
      {"policy", {{"low_cut", options_.policy.low_cut}, {"high_cut", options_.policy.high_cut}}},
      {"regions", std::move(regions)}};
  return {200, doc.dump()};
}

Response Service::health() const {
  const nlohmann::json doc = {{"status", "ok"}, {"model_loaded", model() != nullptr}};
  return {200, doc.dump()};
}

int Service::bind(const std::string& host, int port) {
  if (http_) throw ValidationError("bind", "already bound");
  http_ = std::make_unique<Http>();
  auto& server = http_->server;
  const std::size_t threads = options_.threads;
  server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };

  auto reply = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, kJson);
  };
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Post("/v1/assess", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, assess(req.body));
  });
  server.Get("/v1/model", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, model_info());
  });
  server.Get("/healthz", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, health());
  });
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    res.set_content(error_json(res.status == 404 ? "not_found" : "http_error", "",
                               httplib::status_message(res.status)),
                    kJson);
  });
  server.set_exception_handler(
      [](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string message = "internal error";
        try {
          std::rethrow_exception(ep);
        } catch (const std::exception& e) {
          message = e.what();
        } catch (...) {
        }
        res.status = 500;
        res.set_content(error_json("internal_error", "", message), kJson);
      });

  const int bound = port == 0 ? server.bind_to_any_port(host) : server.bind_to_port(host, port)
                                                                     ? port
                                                                     : -1;
  if (bound < 0) {
    http_.reset();
    throw IoError("cannot bind " + host + ":" + std::to_string(port));
  }
  return bound;
}

void Service::run() {
  if (!http_) throw ValidationError("bind", "not bound");
  http_->server.listen_after_bind();
}

void Service::stop() {
  if (http_) http_->server.stop();
}

}  // namespace pghd::triage
