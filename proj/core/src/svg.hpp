#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace genreprobe::detail {

std::string_view palette_color(std::size_t index);
std::string xml_escape(std::string_view text);

/// Minimal SVG builder with fixed-precision coordinates so output is
/// byte-stable.
class SvgDocument {
 public:
  SvgDocument(double width, double height);

  void rect(double x, double y, double w, double h, std::string_view fill, std::string_view stroke = "none");
  void line(double x1, double y1, double x2, double y2, std::string_view stroke, double width = 1.0,
            bool dashed = false);
  void polyline(const std::vector<std::pair<double, double>>& points, std::string_view stroke, double width,
                bool dashed);
  void circle(double cx, double cy, double r, std::string_view fill);
  void text(double x, double y, std::string_view content, double size = 12.0, std::string_view anchor = "start");

  std::string finish() const;

 private:
  double width_;
  double height_;
  std::string body_;
};

}  // namespace genreprobe::detail
