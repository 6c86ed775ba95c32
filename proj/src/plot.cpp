#include "saae/plot.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>

#include <png.h>

#include "saae/error.hpp"

namespace saae::plot {

namespace {

// Rows top to bottom, three bits per row, most significant bit leftmost.
const std::map<char, std::uint16_t>& glyphs() {
  static const std::map<char, std::uint16_t> g = [] {
    auto enc = [](int a, int b, int c, int d, int e) {
      return static_cast<std::uint16_t>((a << 12) | (b << 9) | (c << 6) | (d << 3) | e);
    };
    std::map<char, std::uint16_t> m;
    m['0'] = enc(7, 5, 5, 5, 7); m['1'] = enc(2, 6, 2, 2, 7); m['2'] = enc(7, 1, 7, 4, 7);
    m['3'] = enc(7, 1, 7, 1, 7); m['4'] = enc(5, 5, 7, 1, 1); m['5'] = enc(7, 4, 7, 1, 7);
    m['6'] = enc(7, 4, 7, 5, 7); m['7'] = enc(7, 1, 1, 1, 1); m['8'] = enc(7, 5, 7, 5, 7);
    m['9'] = enc(7, 5, 7, 1, 7); m['A'] = enc(2, 5, 7, 5, 5); m['B'] = enc(6, 5, 6, 5, 6);
    m['C'] = enc(3, 4, 4, 4, 3); m['D'] = enc(6, 5, 5, 5, 6); m['E'] = enc(7, 4, 6, 4, 7);
    m['F'] = enc(7, 4, 6, 4, 4); m['G'] = enc(3, 4, 5, 5, 3); m['H'] = enc(5, 5, 7, 5, 5);
    m['I'] = enc(7, 2, 2, 2, 7); m['J'] = enc(1, 1, 1, 5, 2); m['K'] = enc(5, 5, 6, 5, 5);
    m['L'] = enc(4, 4, 4, 4, 7); m['M'] = enc(5, 7, 7, 5, 5); m['N'] = enc(6, 5, 5, 5, 5);
    m['O'] = enc(2, 5, 5, 5, 2); m['P'] = enc(6, 5, 6, 4, 4); m['Q'] = enc(2, 5, 5, 6, 3);
    m['R'] = enc(6, 5, 6, 5, 5); m['S'] = enc(3, 4, 2, 1, 6); m['T'] = enc(7, 2, 2, 2, 2);
    m['U'] = enc(5, 5, 5, 5, 7); m['V'] = enc(5, 5, 5, 5, 2); m['W'] = enc(5, 5, 7, 7, 5);
    m['X'] = enc(5, 5, 2, 5, 5); m['Y'] = enc(5, 5, 2, 2, 2); m['Z'] = enc(7, 1, 2, 4, 7);
    m['_'] = enc(0, 0, 0, 0, 7); m['.'] = enc(0, 0, 0, 0, 2); m['-'] = enc(0, 0, 7, 0, 0);
    m['('] = enc(2, 4, 4, 4, 2); m[')'] = enc(2, 1, 1, 1, 2); m['+'] = enc(0, 2, 7, 2, 0);
    m[':'] = enc(0, 2, 0, 2, 0); m['/'] = enc(1, 1, 2, 4, 4);
    return m;
  }();
  return g;
}

std::string number(double v) {
  char buf[32];
  if (v != 0.0 && (std::fabs(v) >= 1e4 || std::fabs(v) < 1e-2)) std::snprintf(buf, sizeof buf, "%.2e", v);
  else std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

Image::Image(int width, int height, std::uint32_t background) : w_(width), h_(height) {
  require(width > 0 && height > 0, ErrorCode::InvalidArgument, "image size must be positive");
  px_.resize(static_cast<std::size_t>(width) * height * 3);
  fill_rect(0, 0, width, height, background);
}

std::uint32_t Image::at(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * w_ + x) * 3;
  return (std::uint32_t{px_[i]} << 16) | (std::uint32_t{px_[i + 1]} << 8) | px_[i + 2];
}

void Image::set(int x, int y, std::uint32_t rgb) {
  if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
  const std::size_t i = (static_cast<std::size_t>(y) * w_ + x) * 3;
  px_[i] = static_cast<std::uint8_t>(rgb >> 16);
  px_[i + 1] = static_cast<std::uint8_t>(rgb >> 8);
  px_[i + 2] = static_cast<std::uint8_t>(rgb);
}

void Image::fill_rect(int x0, int y0, int x1, int y1, std::uint32_t rgb) {
  for (int y = std::max(0, y0); y < std::min(h_, y1); ++y)
    for (int x = std::max(0, x0); x < std::min(w_, x1); ++x) set(x, y, rgb);
}

void Image::line(double x0, double y0, double x1, double y1, std::uint32_t rgb) {
  const int steps = static_cast<int>(std::ceil(std::max(std::fabs(x1 - x0), std::fabs(y1 - y0)))) + 1;
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    set(static_cast<int>(std::lround(x0 + t * (x1 - x0))), static_cast<int>(std::lround(y0 + t * (y1 - y0))), rgb);
  }
}

int text_width(const std::string& s, int scale) { return static_cast<int>(s.size()) * 4 * scale; }

void Image::text(int x, int y, const std::string& s, std::uint32_t rgb, int scale) {
  const auto& g = glyphs();
  for (char ch : s) {
    auto it = g.find(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
    if (it != g.end()) {
      for (int row = 0; row < 5; ++row)
        for (int col = 0; col < 3; ++col)
          if (it->second & (1u << ((4 - row) * 3 + (2 - col))))
            fill_rect(x + col * scale, y + row * scale, x + (col + 1) * scale, y + (row + 1) * scale, rgb);
    }
    x += 4 * scale;
  }
}

void Image::write_png(const std::filesystem::path& path) const {
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  require(fp != nullptr, ErrorCode::Io, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    fail(ErrorCode::Io, "PNG encoding failed for " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w_), static_cast<png_uint_32>(h_), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h_; ++y)
    png_write_row(png, const_cast<png_bytep>(px_.data() + static_cast<std::size_t>(y) * w_ * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  require(std::fclose(fp) == 0, ErrorCode::Io, "write failed for " + path.string());
}

void line_plot(const std::filesystem::path& path, const std::string& title, std::span<const double> raw,
               std::span<const double> smoothed) {
  constexpr int W = 720, H = 420, left = 90, right = 20, top = 40, bottom = 50;
  Image img(W, H);
  double lo = INFINITY, hi = -INFINITY;
  for (auto s : {raw, smoothed})
    for (double v : s)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
  const std::size_t n = std::max(raw.size(), smoothed.size());
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](std::size_t i) { return left + (n > 1 ? pw * static_cast<double>(i) / (n - 1) : 0.0); };
  auto py = [&](double v) { return top + ph * (hi - v) / (hi - lo); };

  for (int k = 1; k < 4; ++k) img.line(left, top + ph * k / 4, left + pw, top + ph * k / 4, 0xeeeeee);
  auto draw = [&](std::span<const double> s, std::uint32_t rgb) {
    for (std::size_t i = 1; i < s.size(); ++i)
      if (std::isfinite(s[i - 1]) && std::isfinite(s[i])) img.line(px(i - 1), py(s[i - 1]), px(i), py(s[i]), rgb);
  };
  draw(raw, 0xbbbbbb);
  draw(smoothed, 0x1f4fb4);
  img.line(left, top, left, top + ph, 0x000000);
  img.line(left, top + ph, left + pw, top + ph, 0x000000);

  img.text((W - text_width(title)) / 2, 12, title, 0x000000);
  const std::string hi_s = number(hi), lo_s = number(lo);
  img.text(left - 8 - text_width(hi_s), top - 5, hi_s, 0x000000);
  img.text(left - 8 - text_width(lo_s), static_cast<int>(top + ph) - 5, lo_s, 0x000000);
  img.text(left, H - bottom + 10, "0", 0x000000);
  const std::string n_s = std::to_string(n > 0 ? n - 1 : 0);
  img.text(static_cast<int>(left + pw) - text_width(n_s), H - bottom + 10, n_s, 0x000000);
  img.text((W - text_width("ITERATION")) / 2, H - 22, "ITERATION", 0x000000);
  img.write_png(path);
}

void confusion_heatmap(const std::filesystem::path& path, const std::string& title, const Eigen::MatrixXi& counts) {
  require(counts.rows() == counts.cols() && counts.rows() > 0, ErrorCode::InvalidArgument,
          "confusion_heatmap: expected a non-empty square matrix");
  const int C = static_cast<int>(counts.rows());
  const int cell = std::max(18, std::min(48, 640 / C));
  const int left = 50, top = 40;
  Image img(left + cell * C + 20, top + cell * C + 40);
  img.text(10, 12, title, 0x000000);
  for (int i = 0; i < C; ++i) {
    const double support = counts.row(i).sum();
    for (int j = 0; j < C; ++j) {
      const double frac = support > 0 ? counts(i, j) / support : 0.0;
      const auto shade = [&](int full) { return static_cast<std::uint32_t>(std::lround(255 - frac * (255 - full))); };
      const std::uint32_t rgb = (shade(0x1f) << 16) | (shade(0x4f) << 8) | shade(0xb4);
      img.fill_rect(left + j * cell, top + i * cell, left + (j + 1) * cell, top + (i + 1) * cell, rgb);
      const std::string s = std::to_string(counts(i, j));
      const int scale = text_width(s, 2) + 4 <= cell ? 2 : 1;
      if (text_width(s, scale) + 2 <= cell)
        img.text(left + j * cell + (cell - text_width(s, scale)) / 2, top + i * cell + (cell - 5 * scale) / 2, s,
                 frac > 0.5 ? 0xffffff : 0x000000, scale);
    }
    const std::string lbl = std::to_string(i + 1);
    img.text(left - 6 - text_width(lbl), top + i * cell + (cell - 10) / 2, lbl, 0x000000);
    img.text(left + i * cell + (cell - text_width(lbl)) / 2, top + C * cell + 8, lbl, 0x000000);
  }
  img.write_png(path);
}

}  // namespace saae::plot
