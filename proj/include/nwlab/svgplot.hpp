#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nwlab/common.hpp"

namespace nwlab {

// Minimal SVG canvas. Coordinates are in pixels, origin top-left.
class SvgCanvas {
 public:
  SvgCanvas(int width, int height);

  void line(double x1, double y1, double x2, double y2,
            const std::string& stroke, double stroke_width,
            const std::string& dash = "");
  void polyline(const std::vector<std::pair<double, double>>& points,
                const std::string& stroke, double stroke_width,
                const std::string& dash = "");
  void circle(double cx, double cy, double r, const std::string& fill);
  // Diagonal cross, the marker reserved for censored cells.
  void cross(double cx, double cy, double half, const std::string& stroke);
  void text(double x, double y, const std::string& content, double size,
            const std::string& anchor = "start",
            const std::string& fill = "#333333");
  std::string finish() const;

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

 private:
  int width_;
  int height_;
  std::string body_;
};

std::string escape_xml(const std::string& text);

// Affine map from data range [d0, d1] to pixel range [p0, p1].
struct AxisMap {
  double d0 = 0, d1 = 1, p0 = 0, p1 = 1;
  double operator()(double v) const {
    return p0 + (v - d0) / (d1 - d0) * (p1 - p0);
  }
};

std::vector<double> linear_ticks(double lo, double hi, int target = 5);

// Renders the three figure families from an analysis directory:
//   crossing_{group}.svg  mean crossing time vs N (log x), one color per
//                         threshold, solid validation, dashed train,
//                         censored cells drawn as crosses pinned to the
//                         top edge and never as finite times
//   accuracy_{run}.svg    exact-match curves against update count
//   gap_{group}.svg       validation accuracy against the train-random gap,
//                         runs overlaid (suffix-probed groups only)
// Returns the number of files written. Throws when the analysis directory
// holds no summaries.
int plot_analysis_dir(const std::string& analysis_dir,
                      const std::string& out_dir);

}  // namespace nwlab
