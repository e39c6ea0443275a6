#include "svg.hpp"

#include <array>

#include <fmt/format.h>

namespace genreprobe::detail {

std::string_view palette_color(std::size_t index) {
  static constexpr std::array<std::string_view, 10> kPalette = {
      "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
      "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return kPalette[index % kPalette.size()];
}

std::string xml_escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

SvgDocument::SvgDocument(double width, double height) : width_(width), height_(height) {}

void SvgDocument::rect(double x, double y, double w, double h, std::string_view fill, std::string_view stroke) {
  body_ += fmt::format("  <rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\" stroke=\"{}\"/>\n",
                       x, y, w, h, fill, stroke);
}

void SvgDocument::line(double x1, double y1, double x2, double y2, std::string_view stroke, double width,
                       bool dashed) {
  body_ += fmt::format("  <line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"{}\" stroke-width=\"{:.2f}\"{}/>\n",
                       x1, y1, x2, y2, stroke, width, dashed ? " stroke-dasharray=\"6,4\"" : "");
}

void SvgDocument::polyline(const std::vector<std::pair<double, double>>& points, std::string_view stroke,
                           double width, bool dashed) {
  std::string coords;
  for (const auto& [x, y] : points) {
    if (!coords.empty()) coords += ' ';
    coords += fmt::format("{:.2f},{:.2f}", x, y);
  }
  body_ += fmt::format("  <polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{:.2f}\"{}/>\n", coords,
                       stroke, width, dashed ? " stroke-dasharray=\"6,4\"" : "");
}

void SvgDocument::circle(double cx, double cy, double r, std::string_view fill) {
  body_ += fmt::format("  <circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"{:.2f}\" fill=\"{}\" fill-opacity=\"0.75\"/>\n", cx, cy,
                       r, fill);
}

void SvgDocument::text(double x, double y, std::string_view content, double size, std::string_view anchor) {
  body_ += fmt::format("  <text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"{:.1f}\" text-anchor=\"{}\">{}</text>\n",
                       x, y, size, anchor, xml_escape(content));
}

std::string SvgDocument::finish() const {
  return fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" viewBox=\"0 0 {:.0f} {:.0f}\">\n"
      "{}</svg>\n",
      width_, height_, width_, height_, body_);
}

}  // namespace genreprobe::detail
