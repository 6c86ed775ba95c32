#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace saae::plot {

// 8-bit RGB raster.
class Image {
 public:
  Image(int width, int height, std::uint32_t background = 0xffffff);

  int width() const { return w_; }
  int height() const { return h_; }
  std::uint32_t at(int x, int y) const;

  void set(int x, int y, std::uint32_t rgb);
  void fill_rect(int x0, int y0, int x1, int y1, std::uint32_t rgb);
  void line(double x0, double y0, double x1, double y1, std::uint32_t rgb);
  // Upper-case 3x5 bitmap glyphs scaled by `scale`; unsupported characters
  // render as blanks.
  void text(int x, int y, const std::string& s, std::uint32_t rgb, int scale = 2);

  void write_png(const std::filesystem::path& path) const;

 private:
  int w_, h_;
  std::vector<std::uint8_t> px_;
};

int text_width(const std::string& s, int scale = 2);

// Raw series in light gray with the smoothed series drawn over it.
void line_plot(const std::filesystem::path& path, const std::string& title, std::span<const double> raw,
               std::span<const double> smoothed);

// Rows are truth, columns predictions; shading follows row-normalized counts.
void confusion_heatmap(const std::filesystem::path& path, const std::string& title, const Eigen::MatrixXi& counts);

}  // namespace saae::plot
