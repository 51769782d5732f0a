#include <algorithm>
#include <cmath>
#include <cstdio>
#include <array>
#include <random>

#include <boost/math/distributions/normal.hpp>

#include "json.hpp"
#include "pghd/errors.hpp"
#include "pghd/eval.hpp"

namespace pghd::eval {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::array<const char*, 7> kMetricNames = {"auroc",       "auprc", "precision",
                                                     "recall",      "f1",    "specificity",
                                                     "youden_j"};

}  // namespace

std::pair<std::size_t, std::size_t> percentile_indices(std::size_t repetitions, double level) {
  const double tail = (1.0 - level) / 2.0;
  const double b = static_cast<double>(repetitions);
  // Nearest-rank order statistics; the epsilon absorbs representation error in tail * B.
  auto rank = [&](double q) {
    const auto r = static_cast<std::size_t>(std::ceil(q * b - 1e-9));
    return std::clamp<std::size_t>(r, 1, repetitions) - 1;
  };
  return {rank(tail), rank(1.0 - tail)};
}

std::vector<BootstrapResult> bootstrap(std::span<const Metric> metrics,
                                       std::span<const double> scores, std::span<const int> labels,
                                       const BootstrapOptions& options) {
  if (options.repetitions < 100) throw ValidationError("repetitions", "must be at least 100");
  if (!(options.level > 0.0 && options.level < 1.0)) {
    throw ValidationError("level", "must lie in (0, 1)");
  }
  if (scores.size() != labels.size()) throw ValidationError("labels", "size mismatch");
  std::size_t pos = 0;
  for (int y : labels) pos += y == 1;
  if (pos == 0 || pos == labels.size()) {
    throw ValidationError("labels", "bootstrap needs both classes");
  }

  const std::size_t n = scores.size();
  const auto reps = static_cast<std::size_t>(options.repetitions);
  std::vector<BootstrapResult> results(metrics.size());
  for (std::size_t m = 0; m < metrics.size(); ++m) {
    results[m].point = metrics[m](scores, labels);
    results[m].samples.reserve(reps);
  }

  std::vector<double> s(n);
  std::vector<int> y(n);
  for (std::size_t b = 0; b < reps; ++b) {
    std::mt19937_64 rng(splitmix64(options.seed ^ splitmix64(b)));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (;;) {
      std::size_t drawn_pos = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = pick(rng);
        s[i] = scores[k];
        y[i] = labels[k];
        drawn_pos += y[i];
      }
      if (drawn_pos > 0 && drawn_pos < n) break;
    }
    for (std::size_t m = 0; m < metrics.size(); ++m) {
      results[m].samples.push_back(metrics[m](s, y));
    }
  }

  const double z =
      boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + options.level / 2.0);
  const auto [lo, hi] = percentile_indices(reps, options.level);
  for (auto& r : results) {
    double sum = 0.0;
    for (double v : r.samples) sum += v;
    r.mean = sum / static_cast<double>(reps);
    double ss = 0.0;
    for (double v : r.samples) ss += (v - r.mean) * (v - r.mean);
    r.stddev = std::sqrt(ss / static_cast<double>(reps - 1));
    std::sort(r.samples.begin(), r.samples.end());
    r.ti = {r.samples[lo], r.samples[hi]};
    const double half = z * r.stddev / std::sqrt(static_cast<double>(reps));
    r.ci = {r.mean - half, r.mean + half};
  }
  return results;
}

BootstrapResult bootstrap(const Metric& metric, std::span<const double> scores,
                          std::span<const int> labels, const BootstrapOptions& options) {
  const Metric one[] = {metric};
  return std::move(bootstrap(one, scores, labels, options).front());
}

EvalReport evaluate(std::span<const double> scores, std::span<const int> labels,
                    const BootstrapOptions& options, std::optional<double> threshold) {
  EvalReport report;
  report.n = scores.size();
  for (int y : labels) report.n_positive += y == 1;
  report.chosen_threshold = threshold ? *threshold : best_youden(scores, labels).threshold;
  report.confusion = confusion_at(scores, labels, report.chosen_threshold);
  report.roc = roc_curve(scores, labels);
  report.pr = pr_curve(scores, labels);
  report.bootstrap = options;

  const double t = report.chosen_threshold;
  const std::vector<Metric> metrics = {
      [](auto s, auto y) { return auroc(s, y); },
      [](auto s, auto y) { return auprc(s, y); },
      [t](auto s, auto y) { return confusion_at(s, y, t).precision; },
      [t](auto s, auto y) { return confusion_at(s, y, t).recall; },
      [t](auto s, auto y) { return confusion_at(s, y, t).f1; },
      [t](auto s, auto y) { return confusion_at(s, y, t).specificity; },
      [t](auto s, auto y) { return confusion_at(s, y, t).youden_j; },
  };
  const auto results = bootstrap(metrics, scores, labels, options);
  for (std::size_t m = 0; m < metrics.size(); ++m) {
    const auto& r = results[m];
    report.metrics[kMetricNames[m]] = {r.point, r.ti.low, r.ti.high, r.ci.low, r.ci.high, r.mean};
  }
  return report;
}

std::string to_json(const EvalReport& report, const std::string& extra) {
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& [name, m] : report.metrics) {
    metrics[name] = {{"point", m.point},     {"ti_low", m.ti_low}, {"ti_high", m.ti_high},
                     {"ci_low", m.ci_low},   {"ci_high", m.ci_high}, {"bootstrap_mean", m.mean}};
  }
  const auto& c = report.confusion;
  nlohmann::json j = {
      {"n", report.n},
      {"n_positive", report.n_positive},
      {"chosen_threshold", report.chosen_threshold},
      {"confusion", {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}}},
      {"metrics", std::move(metrics)},
      {"bootstrap",
       {{"repetitions", report.bootstrap.repetitions},
        {"level", report.bootstrap.level},
        {"seed", report.bootstrap.seed}}},
  };
  j.merge_patch(nlohmann::json::parse(extra));
  return j.dump(2);
}

std::string metric_block(const EvalReport& report) {
  static constexpr std::array<std::pair<const char*, const char*>, 7> kLabels = {{
      {"auroc", "AUROC"},
      {"auprc", "AUPRC"},
      {"precision", "Precision"},
      {"recall", "Recall"},
      {"f1", "F1-score"},
      {"youden_j", "Youden's J"},
      {"specificity", "Specificity"},
  }};
  const int pct = static_cast<int>(std::lround(report.bootstrap.level * 100.0));
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "n=%zu n_positive=%zu threshold=%.6f\n", report.n,
                report.n_positive, report.chosen_threshold);
  out += line;
  for (const auto& [key, label] : kLabels) {
    const auto& m = report.metrics.at(key);
    std::snprintf(line, sizeof(line), "%-12s %.3f  (%d%% TI: %.3f-%.3f, %d%% CI: %.3f-%.3f)\n",
                  label, m.point, pct, m.ti_low, m.ti_high, pct, m.ci_low, m.ci_high);
    out += line;
  }
  return out;
}

}  // namespace pghd::eval
