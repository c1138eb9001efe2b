// Copyright 2026 The lsmpc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "lsmpc/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lsmpc {

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for reading: " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("failed to write file: " + path);
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  throw std::runtime_error("CSV column not found: " + name);
}

double CsvTable::number(int row, int col) const {
  // from_chars accepts the full double range, subnormals included, where
  // stod would throw out_of_range.
  const std::string& cell = rows.at(row).at(col);
  double value = 0.0;
  const auto [end, ec] =
      std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || end != cell.data() + cell.size()) {
    throw std::runtime_error("CSV cell is not a number: '" + cell + "'");
  }
  return value;
}

CsvTable read_csv(const std::string& path) {
  std::istringstream in(read_text_file(path));
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      table.header = split_line(line);
      first = false;
    } else {
      auto cells = split_line(line);
      if (cells.size() != table.header.size()) {
        throw std::runtime_error("ragged CSV row in " + path);
      }
      table.rows.push_back(std::move(cells));
    }
  }
  if (first) throw std::runtime_error("empty CSV file: " + path);
  return table;
}

CsvWriter::CsvWriter(std::string path, std::vector<std::string> header)
    : path_(std::move(path)), header_(std::move(header)) {}

void CsvWriter::begin_row() { current_.clear(); }

void CsvWriter::add(double value) { current_.push_back(format_double(value)); }

void CsvWriter::add(const std::string& value) { current_.push_back(value); }

void CsvWriter::end_row() {
  if (current_.size() != header_.size()) {
    throw std::logic_error("CSV row width does not match header in " + path_);
  }
  rows_.push_back(current_);
  current_.clear();
}

void CsvWriter::save() {
  std::ostringstream out;
  for (size_t i = 0; i < header_.size(); ++i) {
    if (i) out << ',';
    out << header_[i];
  }
  out << '\n';
  for (const auto& row : rows_) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << row[i];
    }
    out << '\n';
  }
  write_text_file(path_, out.str());
}

}  // namespace lsmpc
