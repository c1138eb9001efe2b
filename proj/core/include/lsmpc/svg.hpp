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
// Tiny deterministic SVG line/scatter/heat-cell plots. Identical inputs give
// byte-identical files, which keeps figures diffable in version control.

#ifndef LSMPC_SVG_HPP_
#define LSMPC_SVG_HPP_

#include <string>
#include <vector>

namespace lsmpc {

class SvgPlot {
 public:
  SvgPlot(int width, int height, std::string title);

  void set_axis_labels(std::string x_label, std::string y_label);
  // Fixes an axis range; otherwise ranges are fitted to the data with margin.
  void set_x_range(double lo, double hi);
  void set_y_range(double lo, double hi);

  void add_line(const std::vector<double>& xs, const std::vector<double>& ys,
                const std::string& color, double stroke_width = 1.5,
                const std::string& label = "");
  void add_points(const std::vector<double>& xs, const std::vector<double>& ys,
                  const std::string& color, double radius = 2.0,
                  const std::string& label = "");
  // Filled cell centered at (x, y); value in [0,1] picks a blue-to-red color.
  void add_cell(double x, double y, double cell_w, double cell_h, double value);

  std::string render() const;
  void save(const std::string& path) const;

 private:
  struct Series {
    std::vector<double> xs, ys;
    std::string color;
    double size = 1.5;
    bool is_line = true;
    std::string label;
  };
  struct Cell {
    double x, y, w, h, value;
  };

  int width_, height_;
  std::string title_, x_label_, y_label_;
  bool has_x_range_ = false, has_y_range_ = false;
  double x_lo_ = 0, x_hi_ = 1, y_lo_ = 0, y_hi_ = 1;
  std::vector<Series> series_;
  std::vector<Cell> cells_;
};

}  // namespace lsmpc

#endif  // LSMPC_SVG_HPP_
