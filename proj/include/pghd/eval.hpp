#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pghd::eval {

// Scores are arbitrary reals (typically probabilities); labels are 0/1.
// A row is predicted positive iff score >= threshold.

/// P(score_pos > score_neg) + 0.5 P(tie). Throws ValidationError unless both
/// classes are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

/// Average precision: sum over distinct-score steps of precision times the
/// recall increment. Tied scores form one step. Throws without positives.
double auprc(std::span<const double> scores, std::span<const int> labels);

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  double precision = 0.0;  // 0 when nothing is flagged
  double recall = 0.0;
  double specificity = 0.0;
  double f1 = 0.0;
  double youden_j = 0.0;
};

Confusion confusion_at(std::span<const double> scores, std::span<const int> labels,
                       double threshold);

struct YoudenPoint {
  double threshold = 0.0;
  double j = 0.0;
};

/// Scans every distinct score as a threshold; on equal J the larger
/// threshold wins.
YoudenPoint best_youden(std::span<const double> scores, std::span<const int> labels);

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
};

/// (fpr, tpr) from (0, 0) through one point per distinct score.
std::vector<CurvePoint> roc_curve(std::span<const double> scores, std::span<const int> labels);
/// (recall, precision), one point per distinct score, highest score first.
std::vector<CurvePoint> pr_curve(std::span<const double> scores, std::span<const int> labels);

void write_curve_csv(std::span<const CurvePoint> points, std::ostream& out);

// Bootstrap

using Metric = std::function<double(std::span<const double>, std::span<const int>)>;

struct Interval {
  double low = 0.0;
  double high = 0.0;
  double width() const { return high - low; }
  bool contains(double v) const { return low <= v && v <= high; }
};

struct BootstrapResult {
  double point = 0.0;   // metric on the original sample
  double mean = 0.0;    // mean of the resampled statistics
  double stddev = 0.0;  // sample standard deviation of the resampled statistics
  Interval ti;          // percentile interval of the resampled statistics
  Interval ci;          // mean +/- z * stddev / sqrt(B)
  std::vector<double> samples;  // sorted resampled statistics
};

struct BootstrapOptions {
  int repetitions = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
};

/// Resamples rows with replacement; resamples missing a class are redrawn.
/// Seed-deterministic. Throws ValidationError if repetitions < 100, level is
/// outside (0, 1), or the data lacks a class.
BootstrapResult bootstrap(const Metric& metric, std::span<const double> scores,
                          std::span<const int> labels, const BootstrapOptions& options = {});

/// Same resamples shared by several metrics.
std::vector<BootstrapResult> bootstrap(std::span<const Metric> metrics,
                                       std::span<const double> scores, std::span<const int> labels,
                                       const BootstrapOptions& options = {});

/// Index into sorted samples of the lower and upper percentile order statistics.
std::pair<std::size_t, std::size_t> percentile_indices(std::size_t repetitions, double level);

// Decision-curve analysis

/// TP/N - FP/N * p_t / (1 - p_t). Throws ValidationError unless 0 <= p_t < 1.
double net_benefit(std::span<const double> scores, std::span<const int> labels, double p_t);
double treat_all_net_benefit(std::span<const int> labels, double p_t);

struct DcaCurve {
  std::vector<double> thresholds;
  std::vector<double> model;
  std::vector<double> treat_all;
  std::vector<double> treat_none;
};

/// Grid must be strictly increasing within [0, 0.5].
DcaCurve dca_curve(std::span<const double> scores, std::span<const int> labels,
                   std::span<const double> grid);

/// 0, 0.005, ..., 0.5.
std::vector<double> default_dca_grid();

void write_dca_csv(const DcaCurve& curve, std::ostream& out);

// Report

struct MetricSummary {
  double point = 0.0;
  double ti_low = 0.0;
  double ti_high = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double mean = 0.0;
};

struct EvalReport {
  std::size_t n = 0;
  std::size_t n_positive = 0;
  double chosen_threshold = 0.0;
  Confusion confusion;
  std::map<std::string, MetricSummary> metrics;  // auroc, auprc, precision, ...
  std::vector<CurvePoint> roc;
  std::vector<CurvePoint> pr;
  BootstrapOptions bootstrap;
};

/// Point metrics, Youden operating point (unless `threshold` is given), and
/// bootstrap intervals for every metric.
EvalReport evaluate(std::span<const double> scores, std::span<const int> labels,
                    const BootstrapOptions& options = {},
                    std::optional<double> threshold = std::nullopt);

/// Report without curves, as JSON. `extra` is merged in verbatim (JSON object text).
std::string to_json(const EvalReport& report, const std::string& extra = "{}");

/// Human-readable block, one metric per line with TI and CI.
std::string metric_block(const EvalReport& report);

}  // namespace pghd::eval
