#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace gcsich {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Single-channel image, row-major, intensities in [0, 1].
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, double fill = 0.0);

  double& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  std::size_t size() const { return pixels.size(); }
  bool operator==(const GrayImage&) const = default;
};

// Three interleaved channels (r, g, b) per pixel, values in [0, 1].
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> rgb;

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h);

  double& channel(std::size_t x, std::size_t y, std::size_t c) { return rgb[(y * width + x) * 3 + c]; }
  double channel(std::size_t x, std::size_t y, std::size_t c) const {
    return rgb[(y * width + x) * 3 + c];
  }
};

/// Reads a PNG as 8-bit grayscale (color inputs are converted by libpng) and
/// maps intensities to [0, 1].
GrayImage read_png(const std::filesystem::path& path);
/// Writes 8-bit grayscale; values are clamped to [0, 1] and rounded.
void write_png(const std::filesystem::path& path, const GrayImage& image);
void write_png(const std::filesystem::path& path, const RgbImage& image);

/// 8-bit quantization used by write_png: round(clamp(v) * 255) / 255.
double quantize8(double v);

/// Bilinear resize with half-pixel centers (same-size resize is exact).
std::vector<double> resize_bilinear(const std::vector<double>& src, std::size_t src_w,
                                    std::size_t src_h, std::size_t dst_w, std::size_t dst_h);

}  // namespace gcsich
