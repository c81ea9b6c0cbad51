#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "gcsich/image.hpp"
#include "gcsich/tensor.hpp"

namespace gcsich::prep {

struct BinaryMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(std::size_t w, std::size_t h) : width(w), height(h), bits(w * h, 0) {}

  bool at(std::size_t x, std::size_t y) const { return bits[y * width + x] != 0; }
  std::size_t count() const;
  bool operator==(const BinaryMask&) const = default;
};

// Inclusive pixel bounds.
struct BoundingBox {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool contains(const BoundingBox& other) const {
    return other.x0 >= x0 && other.y0 >= y0 && other.x1 <= x1 && other.y1 <= y1;
  }
};

struct Component {
  int label = 0;  // 1-based, in output order
  std::size_t pixel_count = 0;
  BoundingBox box;
  std::vector<std::size_t> pixels;  // flat indices, ascending
};

struct Thresholds {
  double bone = 0.95;
  double tissue_low = 0.06;
};

struct StripConfig {
  Thresholds thresholds;
  double min_area_fraction = 0.005;
};

struct SegmentedMasks {
  BinaryMask bone;
  BinaryMask tissue;
};

/// Thrown when no tissue component survives screening; such slices are
/// expected to be excluded upstream.
class EmptyBrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// bone = pixels >= t_bone; tissue = pixels in [t_tissue_low, t_bone).
/// Requires 0 <= t_tissue_low < t_bone <= 1.
SegmentedMasks threshold_segment(const GrayImage& image, const Thresholds& thresholds);

/// 8-connected labeling. Components come out largest first; equal sizes are
/// ordered by their first pixel in scan order.
std::vector<Component> connected_components(const BinaryMask& mask);

/// Zeroes bone, background and tissue components below the area floor, then
/// keeps the largest tissue component together with every surviving component
/// whose bounding box lies inside the largest one's.
GrayImage strip_nonbrain(const GrayImage& image, const StripConfig& config);

struct IntensityStats {
  double mean = 0.0;
  double std = 1.0;
};

/// Population mean/std over nonzero (tissue) pixels of the given images.
/// Throws std::invalid_argument when the std is below 1e-6 or no tissue exists.
IntensityStats tissue_statistics(std::span<const GrayImage> images);

/// (pixel - mean) / std for every pixel, shaped [1 x H x W].
num::Tensor standardize(const GrayImage& image, double mean, double std,
                        num::DType dtype = num::DType::f32);

/// Sidecar format: "mean=<f64>\nstd=<f64>\n" with round-trip precision.
void write_stats(const std::filesystem::path& path, const IntensityStats& stats);
IntensityStats read_stats(const std::filesystem::path& path);

}  // namespace gcsich::prep
