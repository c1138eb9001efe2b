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
//
// Minimal CSV and text-file helpers. Numeric cells are printed with %.17g so
// a write/read round trip reproduces doubles bit for bit.

#ifndef LSMPC_CSV_HPP_
#define LSMPC_CSV_HPP_

#include <string>
#include <vector>

namespace lsmpc {

std::string format_double(double value);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // throws if absent
  double number(int row, int col) const;
};

CsvTable read_csv(const std::string& path);

class CsvWriter {
 public:
  CsvWriter(std::string path, std::vector<std::string> header);

  // Cells are either preformatted strings or doubles.
  void begin_row();
  void add(double value);
  void add(const std::string& value);
  void end_row();

  // Writes the file; no partial output before this point.
  void save();
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::vector<std::string> header_;
  std::vector<std::string> current_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace lsmpc

#endif  // LSMPC_CSV_HPP_
