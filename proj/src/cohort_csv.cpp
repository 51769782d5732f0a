#include <charconv>
#include <fstream>
#include <sstream>

#include "pghd/cohort.hpp"
#include "pghd/errors.hpp"

namespace pghd::cohort {
namespace {

constexpr std::size_t kColumns = kCsvHeader.size();

std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::vector<std::string_view> split_row(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string expected_header() {
  std::string h;
  for (const auto& c : kCsvHeader) {
    if (!h.empty()) h += ',';
    h += c;
  }
  return h;
}

class RowParser {
 public:
  RowParser(const std::string& source, std::size_t line) : source_(source), line_(line) {}

  [[noreturn]] void fail(std::string_view column, const std::string& what) const {
    throw ParseError(source_, line_, "column '" + std::string(column) + "': " + what);
  }

  int integer(std::string_view column, std::string_view cell) const {
    int v = 0;
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
      fail(column, "expected integer, got '" + std::string(cell) + "'");
    }
    return v;
  }

  double real(std::string_view column, std::string_view cell) const {
    double v = 0.0;
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
      fail(column, "expected number, got '" + std::string(cell) + "'");
    }
    return v;
  }

  TriState tri(std::string_view column, std::string_view cell) const {
    if (cell.empty()) return TriState::kUnknown;
    if (cell == "1") return TriState::kTrue;
    if (cell == "0") return TriState::kFalse;
    fail(column, "expected 1, 0 or empty, got '" + std::string(cell) + "'");
  }

 private:
  const std::string& source_;
  std::size_t line_;
};

}  // namespace

void write_cohort(const std::vector<PatientRecord>& records, std::ostream& out) {
  out << expected_header() << '\n';
  for (const auto& r : records) {
    validate(r);
    out << r.id << ',' << to_string(r.sex) << ',' << r.age << ',' << format_double(r.latitude)
        << ',' << format_double(r.longitude) << ',';
    if (r.body_temp) out << format_double(*r.body_temp);
    out << ',' << r.onset_month;
    for (auto s : r.symptoms) {
      out << ',';
      if (s != TriState::kUnknown) out << (s == TriState::kTrue ? '1' : '0');
    }
    for (int d : r.diseases) out << ',' << d;
    out << ',';
    if (r.outcome) out << (*r.outcome == Outcome::kDeceased ? '1' : '0');
    out << '\n';
  }
}

void write_cohort(const std::vector<PatientRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_cohort(records, out);
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<PatientRecord> read_cohort(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);

  const auto header = split_row(line);
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i >= kColumns || header[i] != kCsvHeader[i]) {
      throw SchemaError(source + ": unexpected column '" + std::string(header[i]) +
                        "' at position " + std::to_string(i + 1) +
                        "; expected header: " + expected_header());
    }
  }
  if (header.size() != kColumns) {
    throw SchemaError(source + ": missing column '" + std::string(kCsvHeader[header.size()]) +
                      "'; expected header: " + expected_header());
  }

  std::vector<PatientRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_row(line);
    RowParser p(source, line_no);
    if (cells.size() != kColumns) {
      throw ParseError(source, line_no,
                       "expected " + std::to_string(kColumns) + " cells, got " +
                           std::to_string(cells.size()));
    }
    PatientRecord r;
    r.id = std::string(cells[0]);
    if (cells[1] == "male") {
      r.sex = Sex::kMale;
    } else if (cells[1] == "female") {
      r.sex = Sex::kFemale;
    } else {
      p.fail("sex", "expected male or female, got '" + std::string(cells[1]) + "'");
    }
    r.age = p.integer("age", cells[2]);
    r.latitude = p.real("latitude", cells[3]);
    r.longitude = p.real("longitude", cells[4]);
    if (!cells[5].empty()) r.body_temp = p.real("body_temp", cells[5]);
    r.onset_month = p.integer("onset_month", cells[6]);
    for (std::size_t s = 0; s < kNumSymptoms; ++s) {
      r.symptoms[s] = p.tri(kSymptomNames[s], cells[7 + s]);
    }
    for (std::size_t d = 0; d < kNumDiseases; ++d) {
      r.diseases[d] = p.integer(kDiseaseNames[d], cells[7 + kNumSymptoms + d]);
    }
    const auto outcome = cells[kColumns - 1];
    if (outcome == "1") {
      r.outcome = Outcome::kDeceased;
    } else if (outcome == "0") {
      r.outcome = Outcome::kSurvived;
    } else if (!outcome.empty()) {
      p.fail("outcome", "expected 1, 0 or empty, got '" + std::string(outcome) + "'");
    }
    try {
      validate(r);
    } catch (const ValidationError& e) {
      throw ParseError(source, line_no, e.what());
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<PatientRecord> read_cohort(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_cohort(in, path.string());
}

}  // namespace pghd::cohort
