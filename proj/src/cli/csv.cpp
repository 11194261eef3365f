#include "csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace qcalib::cli {

namespace {

std::vector<std::string> split_csv_line(const std::string& line, const std::string& path,
                                        std::size_t lineno) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) {
    std::ostringstream os;
    os << path << ":" << lineno << ": unterminated quoted field";
    throw std::runtime_error(os.str());
  }
  out.push_back(field);
  return out;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");

  CsvTable table;
  table.path = path;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && lineno > 1) continue;  // tolerate a trailing blank line
    auto fields = split_csv_line(line, path, lineno);
    if (lineno == 1) {
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size()) {
      std::ostringstream os;
      os << path << ":" << lineno << ": expected " << table.header.size()
         << " fields, found " << fields.size();
      throw std::runtime_error(os.str());
    }
    table.rows.push_back(std::move(fields));
  }
  if (table.header.empty()) throw std::runtime_error(path + ":1: missing header row");
  return table;
}

double parse_number(const std::string& cell, const std::string& context) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || (end && *end != '\0')) {
    throw std::runtime_error(context + ": cannot parse '" + cell + "' as a number");
  }
  return v;
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace qcalib::cli
