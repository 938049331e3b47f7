#include "posediff/plot.hpp"

#include "posediff/errors.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>

namespace posediff {

namespace {

using Rgb = std::array<std::uint8_t, 3>;

// 5x7 glyphs, one string per row, '#' = ink.
const std::map<char, std::array<const char*, 7>>& font() {
  static const std::map<char, std::array<const char*, 7>> f = {
      {'0', {" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "}},
      {'1', {"  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "}},
      {'2', {" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"}},
      {'3', {"#####", "   # ", "  #  ", "   # ", "    #", "#   #", " ### "}},
      {'4', {"   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "}},
      {'5', {"#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "}},
      {'6', {"  ## ", " #   ", "#    ", "#### ", "#   #", "#   #", " ### "}},
      {'7', {"#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   "}},
      {'8', {" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "}},
      {'9', {" ### ", "#   #", "#   #", " ####", "    #", "   # ", " ##  "}},
      {'A', {" ### ", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"}},
      {'B', {"#### ", "#   #", "#   #", "#### ", "#   #", "#   #", "#### "}},
      {'C', {" ### ", "#   #", "#    ", "#    ", "#    ", "#   #", " ### "}},
      {'D', {"#### ", "#   #", "#   #", "#   #", "#   #", "#   #", "#### "}},
      {'E', {"#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#####"}},
      {'F', {"#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#    "}},
      {'G', {" ### ", "#   #", "#    ", "# ###", "#   #", "#   #", " ####"}},
      {'H', {"#   #", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"}},
      {'I', {" ### ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "}},
      {'J', {"  ###", "   # ", "   # ", "   # ", "   # ", "#  # ", " ##  "}},
      {'K', {"#   #", "#  # ", "# #  ", "##   ", "# #  ", "#  # ", "#   #"}},
      {'L', {"#    ", "#    ", "#    ", "#    ", "#    ", "#    ", "#####"}},
      {'M', {"#   #", "## ##", "# # #", "# # #", "#   #", "#   #", "#   #"}},
      {'N', {"#   #", "#   #", "##  #", "# # #", "#  ##", "#   #", "#   #"}},
      {'O', {" ### ", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "}},
      {'P', {"#### ", "#   #", "#   #", "#### ", "#    ", "#    ", "#    "}},
      {'Q', {" ### ", "#   #", "#   #", "#   #", "# # #", "#  # ", " ## #"}},
      {'R', {"#### ", "#   #", "#   #", "#### ", "# #  ", "#  # ", "#   #"}},
      {'S', {" ####", "#    ", "#    ", " ### ", "    #", "    #", "#### "}},
      {'T', {"#####", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  "}},
      {'U', {"#   #", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "}},
      {'V', {"#   #", "#   #", "#   #", "#   #", "#   #", " # # ", "  #  "}},
      {'W', {"#   #", "#   #", "#   #", "# # #", "# # #", "# # #", " # # "}},
      {'X', {"#   #", "#   #", " # # ", "  #  ", " # # ", "#   #", "#   #"}},
      {'Y', {"#   #", "#   #", " # # ", "  #  ", "  #  ", "  #  ", "  #  "}},
      {'Z', {"#####", "    #", "   # ", "  #  ", " #   ", "#    ", "#####"}},
      {'.', {"     ", "     ", "     ", "     ", "     ", " ##  ", " ##  "}},
      {',', {"     ", "     ", "     ", "     ", " ##  ", "  #  ", " #   "}},
      {'-', {"     ", "     ", "     ", "#####", "     ", "     ", "     "}},
      {'+', {"     ", "  #  ", "  #  ", "#####", "  #  ", "  #  ", "     "}},
      {'_', {"     ", "     ", "     ", "     ", "     ", "     ", "#####"}},
      {'=', {"     ", "     ", "#####", "     ", "#####", "     ", "     "}},
      {'/', {"     ", "    #", "   # ", "  #  ", " #   ", "#    ", "     "}},
      {':', {"     ", " ##  ", " ##  ", "     ", " ##  ", " ##  ", "     "}},
      {'(', {"   # ", "  #  ", " #   ", " #   ", " #   ", "  #  ", "   # "}},
      {')', {" #   ", "  #  ", "   # ", "   # ", "   # ", "  #  ", " #   "}},
      {'%', {"##   ", "##  #", "   # ", "  #  ", " #   ", "#  ##", "   ##"}},
  };
  return f;
}

class Canvas {
 public:
  Canvas(int w, int h) : img_{w, h, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3, 255)} {}

  void px(int x, int y, const Rgb& c) {
    if (x < 0 || y < 0 || x >= img_.width || y >= img_.height) return;
    for (int k = 0; k < 3; ++k) img_.at(x, y, k) = c[static_cast<std::size_t>(k)];
  }
  void line(double x0, double y0, double x1, double y1, const Rgb& c, int thick = 1) {
    const double len = std::max(std::abs(x1 - x0), std::abs(y1 - y0));
    const int n = std::max(1, static_cast<int>(std::ceil(len)));
    for (int i = 0; i <= n; ++i) {
      const double t = static_cast<double>(i) / n;
      const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
      const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
      for (int dy = -(thick / 2); dy <= thick / 2; ++dy)
        for (int dx = -(thick / 2); dx <= thick / 2; ++dx) px(x + dx, y + dy, c);
    }
  }
  void rect(int x0, int y0, int x1, int y1, const Rgb& c) {
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) px(x, y, c);
  }
  // Returns the drawn width.
  int text(int x, int y, const std::string& s, const Rgb& c, bool vertical = false) {
    int cursor = 0;
    for (char ch : s) {
      const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
      const auto it = font().find(u);
      if (it != font().end()) {
        for (int r = 0; r < 7; ++r)
          for (int col = 0; col < 5; ++col)
            if (it->second[static_cast<std::size_t>(r)][col] == '#') {
              if (vertical) px(x + r, y - cursor - col, c);
              else px(x + cursor + col, y + r, c);
            }
      }
      cursor += 6;
    }
    return cursor;
  }
  Image8 take() { return std::move(img_); }

 private:
  Image8 img_;
};

const Rgb kPalette[] = {{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {148, 103, 189},
                        {255, 127, 14}, {23, 190, 207}, {140, 86, 75}, {127, 127, 127}};

std::string tick_label(double v) {
  char buf[32];
  const double a = std::abs(v);
  if (a != 0.0 && (a < 1e-3 || a >= 1e5)) std::snprintf(buf, sizeof buf, "%.1e", v);
  else std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

Image8 render_line_chart(const ChartSpec& spec) {
  if (spec.series.empty()) fail(ErrorKind::InvalidInput, "chart without series");
  if (spec.width < 200 || spec.height < 150) fail(ErrorKind::InvalidInput, "chart too small");
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  auto tx = [&spec](double x) { return spec.log_x ? std::log10(x) : x; };
  for (const auto& s : spec.series) {
    if (s.x.size() != s.y.size()) fail(ErrorKind::InvalidInput, "series '" + s.label + "': x/y length mismatch");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (spec.log_x && s.x[i] <= 0.0) continue;
      xmin = std::min(xmin, tx(s.x[i]));
      xmax = std::max(xmax, tx(s.x[i]));
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!std::isfinite(xmin)) fail(ErrorKind::InvalidInput, "chart has no finite points");
  if (xmax == xmin) { xmin -= 0.5; xmax += 0.5; }
  if (ymax == ymin) { ymin -= 0.5; ymax += 0.5; }
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;

  Canvas cv(spec.width, spec.height);
  const int L = 70, R = spec.width - 20, T = 30, B = spec.height - 45;
  const Rgb ink{0, 0, 0}, grid{225, 225, 225};
  auto sx = [&](double x) { return L + (tx(x) - xmin) / (xmax - xmin) * (R - L); };
  auto sy = [&](double y) { return B - (y - ymin) / (ymax - ymin) * (B - T); };

  for (int k = 0; k <= 4; ++k) {
    const double yv = ymin + (ymax - ymin) * k / 4.0;
    const int y = static_cast<int>(std::lround(sy(yv)));
    cv.line(L, y, R, y, grid);
    const std::string lab = tick_label(yv);
    cv.text(L - 6 - 6 * static_cast<int>(lab.size()), y - 3, lab, ink);
    const double xv = xmin + (xmax - xmin) * k / 4.0;
    const int x = static_cast<int>(std::lround(L + (xv - xmin) / (xmax - xmin) * (R - L)));
    cv.line(x, T, x, B, grid);
    const std::string xl = tick_label(spec.log_x ? std::pow(10.0, xv) : xv);
    cv.text(x - 3 * static_cast<int>(xl.size()), B + 6, xl, ink);
  }
  cv.line(L, B, R, B, ink);
  cv.line(L, T, L, B, ink);
  cv.line(R, T, R, B, ink);
  cv.line(L, T, R, T, ink);
  cv.text(L, 10, spec.title, ink);
  cv.text((L + R) / 2 - 3 * static_cast<int>(spec.x_label.size()), B + 24, spec.x_label, ink);
  cv.text(6, (T + B) / 2 + 3 * static_cast<int>(spec.y_label.size()), spec.y_label, ink, true);

  for (std::size_t si = 0; si < spec.series.size(); ++si) {
    const auto& s = spec.series[si];
    const Rgb c = kPalette[si % std::size(kPalette)];
    bool have = false;
    double px = 0, py = 0;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (spec.log_x && s.x[i] <= 0.0)) {
        have = false;
        continue;
      }
      const double x = sx(s.x[i]), y = sy(s.y[i]);
      if (have) cv.line(px, py, x, y, c, 2);
      if (s.x.size() <= 60) cv.rect(static_cast<int>(x) - 2, static_cast<int>(y) - 2, static_cast<int>(x) + 2, static_cast<int>(y) + 2, c);
      px = x;
      py = y;
      have = true;
    }
    const int ly = T + 6 + 12 * static_cast<int>(si);
    cv.rect(R - 130, ly, R - 120, ly + 6, c);
    cv.text(R - 114, ly, s.label, ink);
  }
  return cv.take();
}

}  // namespace posediff
