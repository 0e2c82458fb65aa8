#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace sensa {

/// Shortest decimal string that round-trips; "nan", "inf", "-inf" for
/// non-finite values.
std::string format_double(double value);

/// Strict parse of a whole field; throws Domain on junk. Accepts nan/inf.
double parse_double(std::string_view text);

/// Plain comma-separated fields. Quoting is not supported, so names must not
/// contain commas.
std::vector<std::string> split_csv_line(std::string_view line);
std::string join_csv_line(const std::vector<std::string>& fields);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;  // throws Structural when missing
};

/// Every row must have as many fields as the header.
CsvTable parse_csv(std::istream& in);
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(std::ostream& out, const CsvTable& table);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

}  // namespace sensa
