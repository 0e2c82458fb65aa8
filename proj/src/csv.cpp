#include "sensa/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "sensa/error.hpp"

namespace sensa {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (value == 0.0) return "0";  // folds -0
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  if (text == "nan" || text == "NaN" || text == "NA") return std::nan("");
  if (text == "inf" || text == "Inf") return INFINITY;
  if (text == "-inf" || text == "-Inf") return -INFINITY;
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    fail(ErrorKind::Domain, "not a number: '" + std::string(text) + "'");
  }
  return v;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string join_csv_line(const std::vector<std::string>& fields) {
  std::string s;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) s += ',';
    s += fields[i];
  }
  return s;
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  fail(ErrorKind::Structural, "CSV has no column '" + std::string(name) + "'");
}

CsvTable parse_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Structural, "CSV is empty");
  if (line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
  t.header = split_csv_line(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    require(fields.size() == t.header.size(), ErrorKind::Structural,
            "CSV line " + std::to_string(lineno) + " has " + std::to_string(fields.size()) +
                " fields, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(fields));
  }
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  return parse_csv(in);
}

void write_csv(std::ostream& out, const CsvTable& table) {
  out << join_csv_line(table.header) << '\n';
  for (const auto& r : table.rows) out << join_csv_line(r) << '\n';
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  write_csv(out, table);
  require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace sensa
