#pragma once

#include <Eigen/Dense>

#include <array>
#include <filesystem>

namespace contexthoi {

using Rgb = std::array<double, 3>;

// RGB image with channel values in [0,1]; pixels stored row-major as
// [height*width, 3].
struct Image {
  int width = 0;
  int height = 0;
  Eigen::MatrixXd pixels;

  Image() = default;
  Image(int w, int h) : width(w), height(h), pixels(Eigen::MatrixXd::Zero(w * h, 3)) {}

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  Eigen::Index index(int x, int y) const { return static_cast<Eigen::Index>(y) * width + x; }
  void set(int x, int y, const Rgb& c);
  Rgb get(int x, int y) const;
  // Clipped to the canvas; [x0,x1) x [y0,y1).
  void fill_rect(int x0, int y0, int x1, int y1, const Rgb& c);
  void draw_rect_outline(int x0, int y0, int x1, int y1, const Rgb& c);

  Image flipped_horizontal() const;
  // Nearest-neighbour resampling.
  Image resized(int w, int h) const;

  // Per-channel standardization used as model input.
  Eigen::MatrixXd normalized() const;
};

// Binary PPM (P6), 8 bits per channel.
void write_ppm(const Image& img, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);

}  // namespace contexthoi
