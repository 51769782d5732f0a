#include <charconv>
#include <cmath>
#include <ostream>

#include "pghd/errors.hpp"
#include "pghd/eval.hpp"

namespace pghd::eval {
namespace {

void check_threshold(double p_t) {
  if (!(p_t >= 0.0 && p_t < 1.0)) throw ValidationError("p_t", "must lie in [0, 1)");
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

double net_benefit(std::span<const double> scores, std::span<const int> labels, double p_t) {
  check_threshold(p_t);
  if (scores.size() != labels.size() || scores.empty()) {
    throw ValidationError("labels", "need equally many non-zero scores and labels");
  }
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= p_t) (labels[i] ? tp : fp)++;
  }
  const double n = static_cast<double>(scores.size());
  return static_cast<double>(tp) / n - static_cast<double>(fp) / n * (p_t / (1.0 - p_t));
}

double treat_all_net_benefit(std::span<const int> labels, double p_t) {
  check_threshold(p_t);
  if (labels.empty()) throw ValidationError("labels", "empty");
  std::size_t pos = 0;
  for (int y : labels) pos += y == 1;
  const double n = static_cast<double>(labels.size());
  return static_cast<double>(pos) / n -
         static_cast<double>(labels.size() - pos) / n * (p_t / (1.0 - p_t));
}

DcaCurve dca_curve(std::span<const double> scores, std::span<const int> labels,
                   std::span<const double> grid) {
  if (grid.empty()) throw ValidationError("grid", "empty");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!(grid[k] >= 0.0 && grid[k] <= 0.5)) throw ValidationError("grid", "must lie in [0, 0.5]");
    if (k > 0 && !(grid[k] > grid[k - 1])) {
      throw ValidationError("grid", "must be strictly increasing");
    }
  }
  DcaCurve curve;
  for (double p_t : grid) {
    curve.thresholds.push_back(p_t);
    curve.model.push_back(net_benefit(scores, labels, p_t));
    curve.treat_all.push_back(treat_all_net_benefit(labels, p_t));
    curve.treat_none.push_back(0.0);
  }
  return curve;
}

std::vector<double> default_dca_grid() {
  std::vector<double> grid;
  for (int k = 0; k <= 100; ++k) grid.push_back(k / 200.0);
  return grid;
}

void write_dca_csv(const DcaCurve& curve, std::ostream& out) {
  out << "threshold,model,treat_all,treat_none\n";
  for (std::size_t k = 0; k < curve.thresholds.size(); ++k) {
    out << format_double(curve.thresholds[k]) << ',' << format_double(curve.model[k]) << ','
        << format_double(curve.treat_all[k]) << ',' << format_double(curve.treat_none[k]) << '\n';
  }
}

}  // namespace pghd::eval
