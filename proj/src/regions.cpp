#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "pghd/errors.hpp"
#include "pghd/features.hpp"
#include "regions_data.hpp"

namespace pghd::features {
namespace {

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

double parse_coord(std::string_view cell, const std::string& source, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
    throw ParseError(source, line, "bad coordinate '" + std::string(cell) + "'");
  }
  return v;
}

}  // namespace

RegionTable RegionTable::from_csv(std::istream& in, const std::string& source) {
  RegionTable table;
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      if (line != "region_code,latitude,longitude") {
        throw SchemaError(source + ": expected header region_code,latitude,longitude");
      }
      header = false;
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) {
      throw ParseError(source, line_no, "expected 3 cells");
    }
    const std::string_view view(line);
    const std::string code(view.substr(0, c1));
    const double lat = parse_coord(view.substr(c1 + 1, c2 - c1 - 1), source, line_no);
    const double lon = parse_coord(view.substr(c2 + 1), source, line_no);
    if (!(lat >= cohort::kMinLatitude && lat <= cohort::kMaxLatitude && lon >= cohort::kMinLongitude &&
          lon <= cohort::kMaxLongitude)) {
      throw ParseError(source, line_no, "coordinate outside the supported bounding box");
    }
    if (!table.entries_.emplace(code, std::pair{lat, lon}).second) {
      throw ParseError(source, line_no, "duplicate region code " + code);
    }
  }
  if (header) throw SchemaError(source + ": missing header");
  return table;
}

RegionTable RegionTable::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return from_csv(in, path.string());
}

const RegionTable& RegionTable::bundled() {
  static const RegionTable table = [] {
    std::istringstream in(detail::kBundledRegionsCsv);
    return from_csv(in, "<bundled regions>");
  }();
  return table;
}

std::pair<double, double> RegionTable::geocode(std::string_view code) const {
  if (auto it = entries_.find(code); it != entries_.end()) return it->second;

  std::vector<std::pair<std::size_t, std::string_view>> ranked;
  for (const auto& [known, _] : entries_) ranked.emplace_back(edit_distance(code, known), known);
  std::sort(ranked.begin(), ranked.end());
  std::string nearest;
  for (std::size_t i = 0; i < std::min<std::size_t>(3, ranked.size()); ++i) {
    if (i) nearest += ", ";
    nearest += ranked[i].second;
  }
  throw LookupError("unknown region code '" + std::string(code) + "'; nearest known: " + nearest);
}

std::pair<double, double> geocode(std::string_view region_code) {
  return RegionTable::bundled().geocode(region_code);
}

}  // namespace pghd::features
