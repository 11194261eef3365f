#pragma once

#include <string>
#include <vector>

namespace qcalib::cli {

/// Parsed CSV: a header row plus data rows, every row padded/checked to the
/// header arity. Quoted fields with doubled quotes are supported; the
/// delimiter is a comma and the decimal separator a period.
struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

/// Reads and parses a CSV file; throws std::runtime_error with
/// "<path>:<line>: ..." context on malformed input.
CsvTable read_csv(const std::string& path);

/// Strict numeric parse; `context` names the cell in the error message.
double parse_number(const std::string& cell, const std::string& context);

/// Formats with 10 significant digits ("%.10g").
std::string format_number(double v);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace qcalib::cli
