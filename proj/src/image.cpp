#include "contexthoi/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace contexthoi {

void Image::set(int x, int y, const Rgb& c) {
  if (!contains(x, y)) return;
  const auto r = index(x, y);
  for (int k = 0; k < 3; ++k) pixels(r, k) = c[k];
}

Rgb Image::get(int x, int y) const {
  const auto r = index(x, y);
  return {pixels(r, 0), pixels(r, 1), pixels(r, 2)};
}

void Image::fill_rect(int x0, int y0, int x1, int y1, const Rgb& c) {
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, width);
  y1 = std::min(y1, height);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) set(x, y, c);
}

void Image::draw_rect_outline(int x0, int y0, int x1, int y1, const Rgb& c) {
  for (int x = x0; x < x1; ++x) {
    set(x, y0, c);
    set(x, y1 - 1, c);
  }
  for (int y = y0; y < y1; ++y) {
    set(x0, y, c);
    set(x1 - 1, y, c);
  }
}

Image Image::flipped_horizontal() const {
  Image out(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) out.set(width - 1 - x, y, get(x, y));
  return out;
}

Image Image::resized(int w, int h) const {
  if (w <= 0 || h <= 0) throw std::invalid_argument("resized: non-positive size");
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    const int sy = std::min(height - 1, static_cast<int>((y + 0.5) * height / h));
    for (int x = 0; x < w; ++x) {
      const int sx = std::min(width - 1, static_cast<int>((x + 0.5) * width / w));
      out.set(x, y, get(sx, sy));
    }
  }
  return out;
}

Eigen::MatrixXd Image::normalized() const { return (pixels.array() - 0.5) / 0.25; }

void write_ppm(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write image " + path.string());
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  for (Eigen::Index i = 0; i < img.pixels.rows(); ++i) {
    for (int k = 0; k < 3; ++k) {
      const double v = std::clamp(img.pixels(i, k), 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  }
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image " + path.string());
  std::string magic;
  int w = 0;
  int h = 0;
  int maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) {
    throw std::runtime_error("unsupported image format in " + path.string());
  }
  in.get();
  Image img(w, h);
  for (Eigen::Index i = 0; i < img.pixels.rows(); ++i) {
    for (int k = 0; k < 3; ++k) {
      const int c = in.get();
      if (c == EOF) throw std::runtime_error("truncated image " + path.string());
      img.pixels(i, k) = static_cast<double>(c) / 255.0;
    }
  }
  return img;
}

}  // namespace contexthoi
