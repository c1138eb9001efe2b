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

#include "lsmpc/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "lsmpc/csv.hpp"

namespace lsmpc {
namespace {

// Fixed-width formatting keeps output byte-stable across platforms.
std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return std::string(buf);
}

std::string fmt_tick(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return std::string(buf);
}

// Rounds the tick spacing to a 1/2/5 decade so labels stay readable.
double nice_step(double span, int target_ticks) {
  if (span <= 0) return 1.0;
  const double raw = span / target_ticks;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double frac = raw / mag;
  double nice = 10.0;
  if (frac <= 1.0) {
    nice = 1.0;
  } else if (frac <= 2.0) {
    nice = 2.0;
  } else if (frac <= 5.0) {
    nice = 5.0;
  }
  return nice * mag;
}

std::string heat_color(double value) {
  const double v = std::clamp(value, 0.0, 1.0);
  // Blue (low) through white to red (high).
  int r, g, b;
  if (v < 0.5) {
    const double t = v / 0.5;
    r = static_cast<int>(std::lround(59 + t * (247 - 59)));
    g = static_cast<int>(std::lround(76 + t * (247 - 76)));
    b = static_cast<int>(std::lround(192 + t * (247 - 192)));
  } else {
    const double t = (v - 0.5) / 0.5;
    r = static_cast<int>(std::lround(247 + t * (180 - 247)));
    g = static_cast<int>(std::lround(247 + t * (4 - 247)));
    b = static_cast<int>(std::lround(247 + t * (38 - 247)));
  }
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return std::string(buf);
}

}  // namespace

SvgPlot::SvgPlot(int width, int height, std::string title)
    : width_(width), height_(height), title_(std::move(title)) {
  if (width_ < 100 || height_ < 80) {
    throw std::invalid_argument("SvgPlot: canvas too small");
  }
}

void SvgPlot::set_axis_labels(std::string x_label, std::string y_label) {
  x_label_ = std::move(x_label);
  y_label_ = std::move(y_label);
}

void SvgPlot::set_x_range(double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("SvgPlot: empty x range");
  x_lo_ = lo;
  x_hi_ = hi;
  has_x_range_ = true;
}

void SvgPlot::set_y_range(double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("SvgPlot: empty y range");
  y_lo_ = lo;
  y_hi_ = hi;
  has_y_range_ = true;
}

void SvgPlot::add_line(const std::vector<double>& xs,
                       const std::vector<double>& ys, const std::string& color,
                       double stroke_width, const std::string& label) {
  if (xs.size() != ys.size()) {
    throw std::invalid_argument("SvgPlot::add_line: size mismatch");
  }
  series_.push_back(Series{xs, ys, color, stroke_width, true, label});
}

void SvgPlot::add_points(const std::vector<double>& xs,
                         const std::vector<double>& ys,
                         const std::string& color, double radius,
                         const std::string& label) {
  if (xs.size() != ys.size()) {
    throw std::invalid_argument("SvgPlot::add_points: size mismatch");
  }
  series_.push_back(Series{xs, ys, color, radius, false, label});
}

void SvgPlot::add_cell(double x, double y, double cell_w, double cell_h,
                       double value) {
  cells_.push_back(Cell{x, y, cell_w, cell_h, value});
}

std::string SvgPlot::render() const {
  double x_lo = x_lo_, x_hi = x_hi_, y_lo = y_lo_, y_hi = y_hi_;
  if (!has_x_range_ || !has_y_range_) {
    double dx_lo = std::numeric_limits<double>::infinity();
    double dx_hi = -dx_lo;
    double dy_lo = dx_lo, dy_hi = dx_hi;
    for (const Series& s : series_) {
      for (std::size_t i = 0; i < s.xs.size(); ++i) {
        if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
        dx_lo = std::min(dx_lo, s.xs[i]);
        dx_hi = std::max(dx_hi, s.xs[i]);
        dy_lo = std::min(dy_lo, s.ys[i]);
        dy_hi = std::max(dy_hi, s.ys[i]);
      }
    }
    for (const Cell& c : cells_) {
      dx_lo = std::min(dx_lo, c.x - c.w / 2);
      dx_hi = std::max(dx_hi, c.x + c.w / 2);
      dy_lo = std::min(dy_lo, c.y - c.h / 2);
      dy_hi = std::max(dy_hi, c.y + c.h / 2);
    }
    if (!(dx_lo < dx_hi)) {
      dx_lo -= 0.5;
      dx_hi += 0.5;
    }
    if (!(dy_lo < dy_hi)) {
      dy_lo -= 0.5;
      dy_hi += 0.5;
    }
    if (!std::isfinite(dx_lo) || !std::isfinite(dy_lo)) {
      dx_lo = dy_lo = 0.0;
      dx_hi = dy_hi = 1.0;
    }
    const double mx = 0.05 * (dx_hi - dx_lo);
    const double my = 0.05 * (dy_hi - dy_lo);
    if (!has_x_range_) {
      x_lo = dx_lo - mx;
      x_hi = dx_hi + mx;
    }
    if (!has_y_range_) {
      y_lo = dy_lo - my;
      y_hi = dy_hi + my;
    }
  }

  const double ml = 64, mr = 16, mt = 32, mb = 44;
  const double pw = width_ - ml - mr;
  const double ph = height_ - mt - mb;
  auto px = [&](double x) { return ml + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double y) { return mt + (y_hi - y) / (y_hi - y_lo) * ph; };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_
      << "\" height=\"" << height_ << "\" viewBox=\"0 0 " << width_ << " "
      << height_ << "\">\n";
  out << "<rect width=\"" << width_ << "\" height=\"" << height_
      << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << fmt(width_ / 2.0)
      << "\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\">"
      << title_ << "</text>\n";

  for (const Cell& c : cells_) {
    const double rx = px(c.x - c.w / 2);
    const double ry = py(c.y + c.h / 2);
    const double rw = px(c.x + c.w / 2) - rx;
    const double rh = py(c.y - c.h / 2) - ry;
    out << "<rect x=\"" << fmt(rx) << "\" y=\"" << fmt(ry) << "\" width=\""
        << fmt(rw) << "\" height=\"" << fmt(rh) << "\" fill=\""
        << heat_color(c.value) << "\"/>\n";
  }

  // Axes and ticks.
  out << "<rect x=\"" << fmt(ml) << "\" y=\"" << fmt(mt) << "\" width=\""
      << fmt(pw) << "\" height=\"" << fmt(ph)
      << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
  const double sx = nice_step(x_hi - x_lo, 5);
  for (double t = std::ceil(x_lo / sx) * sx; t <= x_hi + 1e-9 * sx; t += sx) {
    const double gx = px(t);
    out << "<line x1=\"" << fmt(gx) << "\" y1=\"" << fmt(mt + ph) << "\" x2=\""
        << fmt(gx) << "\" y2=\"" << fmt(mt + ph + 4)
        << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << fmt(gx) << "\" y=\"" << fmt(mt + ph + 16)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"10\">"
        << fmt_tick(std::abs(t) < 1e-12 * sx ? 0.0 : t) << "</text>\n";
  }
  const double sy = nice_step(y_hi - y_lo, 5);
  for (double t = std::ceil(y_lo / sy) * sy; t <= y_hi + 1e-9 * sy; t += sy) {
    const double gy = py(t);
    out << "<line x1=\"" << fmt(ml - 4) << "\" y1=\"" << fmt(gy) << "\" x2=\""
        << fmt(ml) << "\" y2=\"" << fmt(gy)
        << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << fmt(ml - 6) << "\" y=\"" << fmt(gy + 3)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"10\">"
        << fmt_tick(std::abs(t) < 1e-12 * sy ? 0.0 : t) << "</text>\n";
  }
  if (!x_label_.empty()) {
    out << "<text x=\"" << fmt(ml + pw / 2) << "\" y=\""
        << fmt(height_ - 8.0)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << x_label_ << "</text>\n";
  }
  if (!y_label_.empty()) {
    out << "<text x=\"14\" y=\"" << fmt(mt + ph / 2)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\" transform=\"rotate(-90 14 "
        << fmt(mt + ph / 2) << ")\">" << y_label_ << "</text>\n";
  }

  // Clip data to the plot area.
  out << "<clipPath id=\"plot\"><rect x=\"" << fmt(ml) << "\" y=\"" << fmt(mt)
      << "\" width=\"" << fmt(pw) << "\" height=\"" << fmt(ph)
      << "\"/></clipPath>\n";
  out << "<g clip-path=\"url(#plot)\">\n";
  for (const Series& s : series_) {
    if (s.is_line) {
      out << "<polyline fill=\"none\" stroke=\"" << s.color
          << "\" stroke-width=\"" << fmt(s.size) << "\" points=\"";
      bool first = true;
      for (std::size_t i = 0; i < s.xs.size(); ++i) {
        if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
        if (!first) out << " ";
        out << fmt(px(s.xs[i])) << "," << fmt(py(s.ys[i]));
        first = false;
      }
      out << "\"/>\n";
    } else {
      for (std::size_t i = 0; i < s.xs.size(); ++i) {
        if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
        out << "<circle cx=\"" << fmt(px(s.xs[i])) << "\" cy=\""
            << fmt(py(s.ys[i])) << "\" r=\"" << fmt(s.size) << "\" fill=\""
            << s.color << "\"/>\n";
      }
    }
  }
  out << "</g>\n";

  // Legend for labeled series, top-right corner.
  double ly = mt + 14;
  for (const Series& s : series_) {
    if (s.label.empty()) continue;
    const double lx = ml + pw - 110;
    out << "<line x1=\"" << fmt(lx) << "\" y1=\"" << fmt(ly - 3) << "\" x2=\""
        << fmt(lx + 18) << "\" y2=\"" << fmt(ly - 3) << "\" stroke=\""
        << s.color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << fmt(lx + 22) << "\" y=\"" << fmt(ly)
        << "\" font-family=\"sans-serif\" font-size=\"10\">" << s.label
        << "</text>\n";
    ly += 13;
  }

  out << "</svg>\n";
  return out.str();
}

void SvgPlot::save(const std::string& path) const {
  write_text_file(path, render());
}

}  // namespace lsmpc
