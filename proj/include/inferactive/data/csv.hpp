#pragma once

#include <Eigen/Dense>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "inferactive/data/dataset.hpp"

namespace inferactive {

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_number(const std::string& raw, std::size_t row, std::size_t col) {
  std::string s = trim(raw);
  const char* begin = s.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw std::runtime_error("csv: non-numeric cell '" + raw + "' at row " +
                             std::to_string(row) + ", column " + std::to_string(col));
  if (!std::isfinite(v))
    throw std::runtime_error("csv: non-finite value at row " + std::to_string(row) +
                             ", column " + std::to_string(col));
  return v;
}

}  // namespace detail

// Comma-separated, header row required, '.' decimal point.  Every non-response
// column becomes a feature; row/column positions are 1-based in error messages
// and count the header as row 1.
inline Dataset load_csv(const std::string& path, const std::string& response_column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv: '" + path + "' is empty");
  std::vector<std::string> header = detail::split_csv_line(line);
  for (auto& h : header) h = detail::trim(h);
  if (header.empty()) throw std::runtime_error("csv: header row has no columns");

  std::ptrdiff_t response_idx = -1;
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == response_column) response_idx = static_cast<std::ptrdiff_t>(j);
  if (response_idx < 0) {
    std::string cols;
    for (std::size_t j = 0; j < header.size(); ++j)
      cols += (j ? ", " : "") + header[j];
    throw std::runtime_error("csv: response column '" + response_column +
                             "' not found; available columns: " + cols);
  }

  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      throw std::runtime_error("csv: row " + std::to_string(lineno) + " has " +
                               std::to_string(fields.size()) + " fields, expected " +
                               std::to_string(header.size()));
    std::vector<double> vals(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j)
      vals[j] = detail::parse_number(fields[j], lineno, j + 1);
    rows.push_back(std::move(vals));
  }
  if (rows.size() < 2) throw std::runtime_error("csv: need at least 2 data rows");

  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(header.size()) - 1;
  Dataset ds;
  ds.X.resize(n, p);
  ds.y.resize(n);
  ds.response_name = response_column;
  for (std::size_t j = 0; j < header.size(); ++j)
    if (static_cast<std::ptrdiff_t>(j) != response_idx) ds.names.push_back(header[j]);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index jx = 0;
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (static_cast<std::ptrdiff_t>(j) == response_idx)
        ds.y[i] = rows[i][j];
      else
        ds.X(i, jx++) = rows[i][j];
    }
  }
  ds.validate();
  return ds;
}

}  // namespace inferactive
