#include <atomic>
#include <charconv>
#include <iomanip>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "pghd/cli.hpp"
#include "pghd/cohort.hpp"
#include "pghd/errors.hpp"
#include "pghd/eval.hpp"
#include "pghd/explain.hpp"
#include "pghd/features.hpp"
#include "pghd/gbdt.hpp"
#include "pghd/service.hpp"
#include "pghd/triage.hpp"

namespace pghd::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::optional<double> parse_double(std::string_view text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

void require_input(const std::string& path, const std::string& flag) {
  if (path.empty()) throw ValidationError(flag, "required");
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw IoError(flag + " not found: " + path);
}

bool same_file(const fs::path& a, const fs::path& b) {
  std::error_code ec;
  return fs::exists(b, ec) && fs::weakly_canonical(a, ec) == fs::weakly_canonical(b, ec);
}

void require_output(const std::string& path, const std::string& flag,
                    std::initializer_list<std::string> inputs) {
  if (path.empty()) throw ValidationError(flag, "required");
  const fs::path p(path);
  const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("output directory not found: " + dir.string());
  for (const auto& in : inputs) {
    if (!in.empty() && same_file(p, in)) throw ValidationError(flag, "would overwrite an input");
  }
}

fs::path sibling(const std::string& path, const std::string& suffix) {
  return fs::path(path).replace_extension(suffix);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw IoError("write failed: " + path.string());
}

template <typename F>
void write_with(const fs::path& path, F&& fill) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  fill(out);
  if (!out.flush()) throw IoError("write failed: " + path.string());
}

/// Effective options of a subcommand in config-file syntax.
std::string effective_config(const CLI::App& sub) { return sub.config_to_str(true, false); }

void write_meta(const fs::path& path, const std::string& command, const CLI::App& sub,
                json extra = json::object()) {
  json doc = {{"command", command}, {"config", effective_config(sub)}};
  doc.update(extra);
  write_text(path, doc.dump(2) + "\n");
}

struct TestSet {
  std::vector<cohort::PatientRecord> records;
  std::vector<features::FeatureVector> rows;
  std::vector<int> labels;
  double ratio = 0.0;
  std::uint64_t split_seed = 0;
};

/// Held-out rows of the cohort, split the same way training split it unless overridden.
TestSet held_out(const std::string& cohort_path, const gbdt::TreeEnsemble& model,
                 std::optional<double> ratio, std::optional<std::uint64_t> split_seed) {
  TestSet t;
  if (!ratio) {
    const auto it = model.provenance.find("ratio");
    if (it == model.provenance.end()) {
      throw ValidationError("ratio", "model records no split ratio; pass --ratio");
    }
    ratio = parse_double(it->second);
    if (!ratio) throw ValidationError("ratio", "unreadable ratio in model provenance");
  }
  if (!split_seed) {
    const auto it = model.provenance.find("split_seed");
    if (it == model.provenance.end()) {
      throw ValidationError("split-seed", "model records no split seed; pass --split-seed");
    }
    split_seed = std::stoull(it->second);
  }
  t.ratio = *ratio;
  t.split_seed = *split_seed;
  const auto records = cohort::read_cohort(fs::path(cohort_path));
  t.records = gbdt::split_train_test(records, t.ratio, t.split_seed).test;
  std::tie(t.rows, t.labels) = gbdt::to_training_set(t.records);
  return t;
}

std::vector<double> probabilities(const gbdt::TreeEnsemble& model,
                                  std::span<const features::FeatureVector> rows) {
  std::vector<double> p;
  p.reserve(rows.size());
  for (const auto& x : rows) p.push_back(gbdt::predict_proba(model, x));
  return p;
}

std::vector<double> parse_grid(const std::string& text) {
  if (text.empty()) return eval::default_dca_grid();
  std::vector<std::string_view> parts;
  const char sep = text.find(':') != std::string::npos ? ':' : ',';
  std::string_view rest(text);
  for (;;) {
    const auto cut = rest.find(sep);
    parts.push_back(rest.substr(0, cut));
    if (cut == std::string_view::npos) break;
    rest.remove_prefix(cut + 1);
  }
  std::vector<double> values;
  for (auto part : parts) {
    const auto v = parse_double(part);
    if (!v) throw ValidationError("grid", "not a number: " + std::string(part));
    values.push_back(*v);
  }
  if (sep == ',') return values;
  if (values.size() != 3 || !(values[2] > 0.0) || values[1] < values[0]) {
    throw ValidationError("grid", "expected START:STOP:STEP");
  }
  std::vector<double> grid;
  const auto steps = static_cast<long>(std::floor((values[1] - values[0]) / values[2] + 1e-9));
  for (long k = 0; k <= steps; ++k) grid.push_back(values[0] + static_cast<double>(k) * values[2]);
  return grid;
}

std::string model_id(const gbdt::TreeEnsemble& model) {
  std::ostringstream body;
  gbdt::save_model(model, body);
  const std::uint64_t h = features::fingerprint(std::vector<std::string>{body.str()});
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// Subcommands

struct GenerateArgs {
  std::uint64_t seed = 0;
  std::string out;
  std::size_t n = 149'471;
  std::optional<double> prevalence;
  std::optional<double> temp_missing_rate;
  std::optional<double> disease_age_slope;
};

void cmd_generate(const GenerateArgs& a, const CLI::App& sub, std::ostream& out) {
  require_output(a.out, "out", {});
  cohort::CohortSpec spec = cohort::default_spec();
  spec.n = a.n;
  spec.seed = a.seed;
  if (a.prevalence) spec.prevalence_target = *a.prevalence;
  if (a.temp_missing_rate) spec.temp_missing_rate = *a.temp_missing_rate;
  if (a.disease_age_slope) spec.disease_age_slope = *a.disease_age_slope;
  cohort::validate(spec);
  spec = cohort::calibrate_intercept(spec);
  const auto records = cohort::generate_cohort(spec);
  std::size_t deceased = 0;
  for (const auto& r : records) deceased += r.outcome == cohort::Outcome::kDeceased;
  cohort::write_cohort(records, fs::path(a.out));
  write_meta(sibling(a.out, ".meta.json"), "generate", sub,
             {{"seed", spec.seed},
              {"n", records.size()},
              {"n_deceased", deceased},
              {"prevalence_target", spec.prevalence_target},
              {"intercept", *spec.risk.intercept}});
  out << "wrote " << records.size() << " records (" << deceased << " deceased) to " << a.out
      << "\n";
}

struct TrainArgs {
  std::string cohort;
  std::string out;
  std::string log;
  std::uint64_t seed = 0;
  double ratio = 0.8;
  gbdt::TrainConfig config;
};

void cmd_train(TrainArgs a, const CLI::App& sub, std::ostream& out) {
  require_input(a.cohort, "cohort");
  require_output(a.out, "out", {a.cohort});
  const fs::path log_path = a.log.empty() ? sibling(a.out, ".log.csv") : fs::path(a.log);
  require_output(log_path.string(), "log", {a.cohort});
  a.config.seed = a.seed;
  gbdt::validate(a.config);

  const auto records = cohort::read_cohort(fs::path(a.cohort));
  const auto split = gbdt::split_train_test(records, a.ratio, a.seed);
  const auto [rows, labels] = gbdt::to_training_set(split.train);
  gbdt::TrainingLog log;
  gbdt::TreeEnsemble model = gbdt::train(rows, labels, a.config, &log);

  const auto [test_rows, test_labels] = gbdt::to_training_set(split.test);
  model.metrics_snapshot = {
      {"n_train", static_cast<double>(split.train.size())},
      {"n_test", static_cast<double>(split.test.size())},
      {"train_loss", log.loss.back()},
      {"test_auroc", eval::auroc(probabilities(model, test_rows), test_labels)},
  };
  model.provenance = {{"cohort", a.cohort},
                      {"ratio", format_double(a.ratio)},
                      {"split_seed", std::to_string(a.seed)},
                      {"config", effective_config(sub)}};
  model.provenance["model_id"] = model_id(model);

  gbdt::save_model(model, fs::path(a.out));
  write_with(log_path, [&](std::ostream& os) {
    os << "round,loss\n";
    for (std::size_t r = 0; r < log.loss.size(); ++r) {
      os << r << ',' << format_double(log.loss[r]) << '\n';
    }
  });
  out << "trained " << model.trees.size() << " trees on " << split.train.size()
      << " rows; held-out AUROC " << model.metrics_snapshot["test_auroc"] << "\n";
}

struct SplitArgs {
  std::string cohort;
  std::string model;
  std::string out;
  std::optional<double> ratio;
  std::optional<std::uint64_t> split_seed;
};

struct EvaluateArgs {
  SplitArgs split;
  eval::BootstrapOptions bootstrap;
  std::optional<double> threshold;
};

void cmd_evaluate(const EvaluateArgs& a, const CLI::App& sub, std::ostream& out) {
  require_input(a.split.cohort, "cohort");
  require_input(a.split.model, "model");
  require_output(a.split.out, "out", {a.split.cohort, a.split.model});
  const auto model = gbdt::load_model(fs::path(a.split.model));
  const auto test = held_out(a.split.cohort, model, a.split.ratio, a.split.split_seed);
  const auto scores = probabilities(model, test.rows);
  const auto report = eval::evaluate(scores, test.labels, a.bootstrap, a.threshold);

  const json extra = {{"command", "evaluate"},
                      {"config", effective_config(sub)},
                      {"model_version", triage::model_version(model)},
                      {"cohort", a.split.cohort},
                      {"ratio", test.ratio},
                      {"split_seed", test.split_seed}};
  write_text(a.split.out, eval::to_json(report, extra.dump()) + "\n");
  write_with(sibling(a.split.out, ".roc.csv"),
             [&](std::ostream& os) { eval::write_curve_csv(report.roc, os); });
  write_with(sibling(a.split.out, ".pr.csv"),
             [&](std::ostream& os) { eval::write_curve_csv(report.pr, os); });
  out << eval::metric_block(report);
}

struct DcaArgs {
  SplitArgs split;
  std::string grid;
};

void cmd_dca(const DcaArgs& a, const CLI::App& sub, std::ostream& out) {
  require_input(a.split.cohort, "cohort");
  require_input(a.split.model, "model");
  require_output(a.split.out, "out", {a.split.cohort, a.split.model});
  const auto grid = parse_grid(a.grid);
  const auto model = gbdt::load_model(fs::path(a.split.model));
  const auto test = held_out(a.split.cohort, model, a.split.ratio, a.split.split_seed);
  const auto curve = eval::dca_curve(probabilities(model, test.rows), test.labels, grid);
  write_with(a.split.out, [&](std::ostream& os) { eval::write_dca_csv(curve, os); });
  write_meta(sibling(a.split.out, ".meta.json"), "dca", sub,
             {{"model_version", triage::model_version(model)}, {"n", test.rows.size()}});
  out << "wrote " << curve.thresholds.size() << " thresholds to " << a.split.out << "\n";
}

struct ExplainArgs {
  SplitArgs split;
  std::string rank = "mean";
  std::size_t limit = 0;
};

void cmd_explain(const ExplainArgs& a, const CLI::App& sub, std::ostream& out) {
  require_input(a.split.cohort, "cohort");
  require_input(a.split.model, "model");
  require_output(a.split.out, "out", {a.split.cohort, a.split.model});
  const auto model = gbdt::load_model(fs::path(a.split.model));
  auto test = held_out(a.split.cohort, model, a.split.ratio, a.split.split_seed);
  if (a.limit > 0 && a.limit < test.rows.size()) {
    test.rows.resize(a.limit);
    test.records.resize(a.limit);
  }
  std::vector<std::string> ids;
  for (const auto& r : test.records) ids.push_back(r.id);
  const auto key = a.rank == "max" ? explain::RankKey::kMaxAbs : explain::RankKey::kMeanAbs;
  const auto s = explain::summary(model, test.rows, key, ids);
  write_with(a.split.out, [&](std::ostream& os) { explain::write_summary_csv(s, os); });
  json ranking = json::parse(explain::ranking_json(s));
  ranking["config"] = effective_config(sub);
  ranking["model_version"] = triage::model_version(model);
  write_text(sibling(a.split.out, ".ranking.json"), ranking.dump(2) + "\n");
  for (std::size_t i = 0; i < s.ranking.size(); ++i) {
    const auto& r = s.ranking[i];
    out << i + 1 << ' ' << r.name << " mean|phi|=" << r.mean_abs << " max|phi|=" << r.max_abs
        << "\n";
  }
}

struct ServeArgs {
  std::string model;
  std::string bind = "127.0.0.1:8080";
  std::string lookup;
  triage::BandPolicy policy;
  std::size_t threads = 32;
  std::size_t top_k = 5;
  double reload_interval = 2.0;
};

std::atomic<bool> g_stop_requested{false};

extern "C" void on_stop_signal(int) { g_stop_requested = true; }

void cmd_serve(const ServeArgs& a, std::ostream& out, std::ostream& err) {
  require_input(a.model, "model");
  if (!a.lookup.empty()) require_input(a.lookup, "lookup");
  triage::validate(a.policy);
  const auto [host, port] = triage::parse_bind(a.bind);

  triage::Service::Options options;
  options.policy = a.policy;
  options.threads = a.threads;
  options.top_k = a.top_k;
  if (!a.lookup.empty()) options.regions = features::RegionTable::from_file(a.lookup);
  triage::Service service(std::move(options));
  service.set_model(std::make_shared<const gbdt::TreeEnsemble>(gbdt::load_model(fs::path(a.model))));
  const int bound = service.bind(host, port);

  g_stop_requested = false;
  std::signal(SIGINT, on_stop_signal);
  std::signal(SIGTERM, on_stop_signal);

  // Polls for shutdown and for a replaced model file.
  std::thread watcher([&] {
    std::error_code ec;
    auto stamp = fs::last_write_time(a.model, ec);
    auto next_check = std::chrono::steady_clock::now();
    while (!g_stop_requested) {
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
      if (a.reload_interval <= 0.0 || std::chrono::steady_clock::now() < next_check) continue;
      next_check = std::chrono::steady_clock::now() +
                   std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                       std::chrono::duration<double>(a.reload_interval));
      const auto now_stamp = fs::last_write_time(a.model, ec);
      if (ec || now_stamp == stamp) continue;
      try {
        service.set_model(
            std::make_shared<const gbdt::TreeEnsemble>(gbdt::load_model(fs::path(a.model))));
        stamp = now_stamp;
        err << json{{"event", "model_reloaded"}, {"model", a.model}}.dump() << std::endl;
      } catch (const std::exception& e) {
        err << json{{"event", "reload_failed"}, {"message", e.what()}}.dump() << std::endl;
      }
    }
    service.stop();
  });

  out << json{{"listening", host + ":" + std::to_string(bound)}}.dump() << std::endl;
  service.run();
  g_stop_requested = true;
  watcher.join();
}

int report_error(std::ostream& err, const char* kind, int code, const std::string& message,
                 const std::string& field = {}) {
  json doc = {{"error", kind}, {"message", message}, {"exit_code", code}};
  if (!field.empty()) doc["field"] = field;
  err << doc.dump() << std::endl;
  return code;
}

void add_split_options(CLI::App* sub, SplitArgs& s) {
  sub->add_option("--cohort", s.cohort, "Cohort CSV")->required();
  sub->add_option("--model", s.model, "Model JSON")->required();
  sub->add_option("--out", s.out, "Output path")->required();
  sub->add_option("--ratio", s.ratio, "Train fraction (default: from the model)");
  sub->add_option("--split-seed", s.split_seed, "Split seed (default: from the model)");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mortality-risk triage pipeline", "pghd"};
  app.require_subcommand(1);
  // Config files are read by the top-level app; keys sit under a section per
  // subcommand ([train], [evaluate], ...) and mirror the flag names.
  app.set_config("--config", "", "INI file with one section per subcommand");
  app.allow_config_extras(CLI::config_extras_mode::ignore);
  app.fallthrough();

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic cohort CSV");
  generate->add_option("--seed", gen.seed, "Generator seed")->required();
  generate->add_option("--out", gen.out, "Cohort CSV path")->required();
  generate->add_option("--n", gen.n, "Number of records")->capture_default_str();
  generate->add_option("--prevalence", gen.prevalence, "Target mortality rate");
  generate->add_option("--temp-missing-rate", gen.temp_missing_rate,
                       "Fraction of records without a temperature");
  generate->add_option("--disease-age-slope", gen.disease_age_slope,
                       "Log-rate slope of comorbidity per age SD");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Fit a boosted-tree model");
  train->add_option("--cohort", tr.cohort, "Cohort CSV")->required();
  train->add_option("--out", tr.out, "Model JSON path")->required();
  train->add_option("--seed", tr.seed, "Split and training seed")->required();
  train->add_option("--ratio", tr.ratio, "Train fraction")->capture_default_str();
  train->add_option("--log", tr.log, "Training-loss CSV (default: --out with a .log.csv extension)");
  train->add_option("--trees", tr.config.n_trees, "Boosting rounds")->capture_default_str();
  train->add_option("--depth", tr.config.max_depth, "Maximum tree depth")->capture_default_str();
  train->add_option("--learning-rate", tr.config.learning_rate, "Shrinkage")
      ->capture_default_str();
  train->add_option("--lambda", tr.config.l2_lambda, "L2 penalty on leaf weights")
      ->capture_default_str();
  train->add_option("--min-split-gain", tr.config.min_split_gain, "Minimum split gain")
      ->capture_default_str();
  train->add_option("--min-child-hessian", tr.config.min_child_hessian,
                    "Minimum hessian per child")
      ->capture_default_str();
  train->add_option("--positive-weight", tr.config.positive_class_weight,
                    "Weight of deceased rows")
      ->capture_default_str();

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score the held-out split with bootstrap intervals");
  add_split_options(evaluate, ev.split);
  evaluate->add_option("--bootstrap", ev.bootstrap.repetitions, "Bootstrap repetitions")
      ->capture_default_str();
  evaluate->add_option("--level", ev.bootstrap.level, "Interval level")->capture_default_str();
  evaluate->add_option("--seed", ev.bootstrap.seed, "Bootstrap seed")->capture_default_str();
  evaluate->add_option("--threshold", ev.threshold,
                       "Operating threshold (default: maximize Youden's J)");

  DcaArgs dc;
  auto* dca = app.add_subcommand("dca", "Decision-curve net benefit on the held-out split");
  add_split_options(dca, dc.split);
  dca->add_option("--grid", dc.grid, "START:STOP:STEP or comma list (default 0:0.5:0.005)");

  ExplainArgs ex;
  auto* explain = app.add_subcommand("explain", "Per-row attributions and feature ranking");
  add_split_options(explain, ex.split);
  explain->add_option("--rank", ex.rank, "Ranking key")
      ->check(CLI::IsMember({"mean", "max"}))
      ->capture_default_str();
  explain->add_option("--limit", ex.limit, "Explain only the first N held-out rows (0: all)")
      ->capture_default_str();

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "Run the HTTP scoring service");
  serve->add_option("--model", sv.model, "Model JSON")->required();
  serve->add_option("--bind", sv.bind, "HOST:PORT")->capture_default_str();
  serve->add_option("--lookup", sv.lookup, "Region lookup CSV (default: bundled)");
  serve->add_option("--low-cut", sv.policy.low_cut, "Low/moderate band cut")
      ->capture_default_str();
  serve->add_option("--high-cut", sv.policy.high_cut, "Moderate/high band cut")
      ->capture_default_str();
  serve->add_option("--threads", sv.threads, "Worker threads")->capture_default_str();
  serve->add_option("--top-k", sv.top_k, "Factors per decision")->capture_default_str();
  serve->add_option("--reload-interval", sv.reload_interval,
                    "Seconds between model-file checks (0: never)")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    const auto parsed = app.get_subcommands();
    out << (parsed.empty() ? app.help() : parsed.front()->help());
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    return report_error(err, "usage", kUsage, e.what());
  }

  try {
    if (*generate) {
      cmd_generate(gen, *generate, out);
    } else if (*train) {
      cmd_train(tr, *train, out);
    } else if (*evaluate) {
      cmd_evaluate(ev, *evaluate, out);
    } else if (*dca) {
      cmd_dca(dc, *dca, out);
    } else if (*explain) {
      cmd_explain(ex, *explain, out);
    } else if (*serve) {
      cmd_serve(sv, out, err);
    }
  } catch (const VersionError& e) {
    return report_error(err, "version_mismatch", kVersion, e.what());
  } catch (const FingerprintError& e) {
    return report_error(err, "fingerprint_mismatch", kFingerprint, e.what());
  } catch (const SchemaError& e) {
    return report_error(err, "schema_mismatch", kSchema, e.what());
  } catch (const ParseError& e) {
    return report_error(err, "parse_error", kSchema, e.what());
  } catch (const ValidationError& e) {
    return report_error(err, "validation_error", kValidation, e.what(), e.field());
  } catch (const LookupError& e) {
    return report_error(err, "unknown_region", kLookup, e.what());
  } catch (const IoError& e) {
    return report_error(err, "missing_file", kMissingFile, e.what());
  } catch (const std::exception& e) {
    return report_error(err, "internal", kInternal, e.what());
  }
  return kOk;
}

}  // namespace pghd::cli
