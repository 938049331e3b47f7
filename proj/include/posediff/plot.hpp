#pragma once

#include "posediff/image_io.hpp"

#include <string>
#include <vector>

namespace posediff {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  int width = 640;
  int height = 400;
  bool log_x = false;
};

// Axis box, ticks, polylines with point markers and a legend. Text uses a
// built-in 5x7 font (upper case only).
Image8 render_line_chart(const ChartSpec& spec);

}  // namespace posediff
