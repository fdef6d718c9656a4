#pragma once

#include "hgs/math.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace hgs {

/// Row-major H x W x 3 linear-light image.
class Image {
 public:
  Image() = default;
  Image(int width, int height, double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  double& at(int x, int y, int c) { return data_[index(x, y, c)]; }
  double at(int x, int y, int c) const { return data_[index(x, y, c)]; }

  Vec3 pixel(int x, int y) const {
    const std::size_t i = index(x, y, 0);
    return {data_[i], data_[i + 1], data_[i + 2]};
  }
  void set_pixel(int x, int y, const Vec3& v) {
    const std::size_t i = index(x, y, 0);
    data_[i] = v[0];
    data_[i + 1] = v[1];
    data_[i + 2] = v[2];
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * 3 + c;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

double srgb_encode(double linear);
double srgb_decode(double encoded);

/// 8-bit sRGB bytes, row-major RGB.
std::vector<std::uint8_t> to_srgb8(const Image& image);
Image from_srgb8(const std::vector<std::uint8_t>& bytes, int width, int height);

/// Writes an 8-bit RGB PNG; `encode_srgb` applies the sRGB transfer function.
void write_png(const std::filesystem::path& path, const Image& image, bool encode_srgb = true);
/// Reads an 8-bit RGB(A)/gray PNG and decodes sRGB into linear light.
Image read_png(const std::filesystem::path& path);

}  // namespace hgs
