#include "pghd/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <ostream>

#include "pghd/errors.hpp"

namespace pghd::eval {
namespace {

struct ClassCounts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

ClassCounts count_classes(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ValidationError("labels", "score and label counts differ");
  }
  ClassCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ValidationError("labels", "labels must be 0 or 1");
    if (std::isnan(scores[i])) throw ValidationError("scores", "NaN score");
    (labels[i] ? c.pos : c.neg)++;
  }
  return c;
}

ClassCounts require_both(std::span<const double> scores, std::span<const int> labels) {
  const auto c = count_classes(scores, labels);
  if (c.pos == 0 || c.neg == 0) {
    throw ValidationError("labels", "both classes must be present");
  }
  return c;
}

/// Indices ordered by descending score.
std::vector<std::size_t> descending(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

/// Cumulative (tp, fp) at the end of each descending tie group, with the
/// group's score.
struct Step {
  double score;
  std::size_t tp;
  std::size_t fp;
};

std::vector<Step> descending_steps(std::span<const double> scores, std::span<const int> labels) {
  const auto order = descending(scores);
  std::vector<Step> steps;
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t i = order[k];
    (labels[i] ? tp : fp)++;
    if (k + 1 == order.size() || scores[order[k + 1]] != scores[i]) {
      steps.push_back({scores[i], tp, fp});
    }
  }
  return steps;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  const auto c = require_both(scores, labels);
  // Ascending sweep: each positive beats every negative in earlier groups and
  // ties half of the negatives in its own group.
  const auto steps = descending_steps(scores, labels);
  double concordant = 0.0;
  std::size_t prev_tp = 0;
  std::size_t prev_fp = 0;
  for (const Step& s : steps) {
    const std::size_t pos_here = s.tp - prev_tp;
    const std::size_t neg_here = s.fp - prev_fp;
    const std::size_t neg_below = c.neg - s.fp;
    concordant += static_cast<double>(pos_here) * static_cast<double>(neg_below) +
                  0.5 * static_cast<double>(pos_here) * static_cast<double>(neg_here);
    prev_tp = s.tp;
    prev_fp = s.fp;
  }
  return concordant / (static_cast<double>(c.pos) * static_cast<double>(c.neg));
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
  const auto c = count_classes(scores, labels);
  if (c.pos == 0) throw ValidationError("labels", "average precision needs a positive");
  double ap = 0.0;
  std::size_t prev_tp = 0;
  for (const Step& s : descending_steps(scores, labels)) {
    if (s.tp != prev_tp) {
      const double precision = static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp);
      ap += precision * static_cast<double>(s.tp - prev_tp) / static_cast<double>(c.pos);
      prev_tp = s.tp;
    }
  }
  return ap;
}

namespace {

Confusion finish(std::size_t tp, std::size_t fp, std::size_t pos, std::size_t neg) {
  Confusion c;
  c.tp = tp;
  c.fp = fp;
  c.fn = pos - tp;
  c.tn = neg - fp;
  c.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  c.recall = pos ? static_cast<double>(tp) / static_cast<double>(pos) : 0.0;
  c.specificity = neg ? static_cast<double>(c.tn) / static_cast<double>(neg) : 0.0;
  c.f1 = c.precision + c.recall > 0.0
             ? 2.0 * c.precision * c.recall / (c.precision + c.recall)
             : 0.0;
  c.youden_j = c.recall + c.specificity - 1.0;
  return c;
}

}  // namespace

Confusion confusion_at(std::span<const double> scores, std::span<const int> labels,
                       double threshold) {
  const auto counts = count_classes(scores, labels);
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= threshold) (labels[i] ? tp : fp)++;
  }
  return finish(tp, fp, counts.pos, counts.neg);
}

YoudenPoint best_youden(std::span<const double> scores, std::span<const int> labels) {
  const auto c = require_both(scores, labels);
  YoudenPoint best;
  bool first = true;
  for (const Step& s : descending_steps(scores, labels)) {
    const double j = finish(s.tp, s.fp, c.pos, c.neg).youden_j;
    if (first || j > best.j) {
      best = {s.score, j};
      first = false;
    }
  }
  return best;
}

std::vector<CurvePoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  const auto c = require_both(scores, labels);
  std::vector<CurvePoint> points{{0.0, 0.0}};
  for (const Step& s : descending_steps(scores, labels)) {
    points.push_back({static_cast<double>(s.fp) / static_cast<double>(c.neg),
                      static_cast<double>(s.tp) / static_cast<double>(c.pos)});
  }
  return points;
}

std::vector<CurvePoint> pr_curve(std::span<const double> scores, std::span<const int> labels) {
  const auto c = count_classes(scores, labels);
  if (c.pos == 0) throw ValidationError("labels", "precision-recall curve needs a positive");
  std::vector<CurvePoint> points;
  for (const Step& s : descending_steps(scores, labels)) {
    points.push_back({static_cast<double>(s.tp) / static_cast<double>(c.pos),
                      static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp)});
  }
  return points;
}

void write_curve_csv(std::span<const CurvePoint> points, std::ostream& out) {
  out << "x,y\n";
  for (const auto& p : points) out << format_double(p.x) << ',' << format_double(p.y) << '\n';
}

}  // namespace pghd::eval
