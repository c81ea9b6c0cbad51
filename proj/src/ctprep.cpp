#include "gcsich/ctprep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace gcsich::prep {

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

SegmentedMasks threshold_segment(const GrayImage& image, const Thresholds& t) {
  if (!(t.tissue_low >= 0.0 && t.tissue_low < t.bone && t.bone <= 1.0)) {
    throw std::invalid_argument("threshold_segment: need 0 <= t_tissue_low < t_bone <= 1");
  }
  SegmentedMasks out{BinaryMask(image.width, image.height), BinaryMask(image.width, image.height)};
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const double v = image.pixels[i];
    if (v >= t.bone) {
      out.bone.bits[i] = 1;
    } else if (v >= t.tissue_low) {
      out.tissue.bits[i] = 1;
    }
  }
  return out;
}

std::vector<Component> connected_components(const BinaryMask& mask) {
  const auto w = mask.width, h = mask.height;
  std::vector<std::uint8_t> seen(mask.bits.size(), 0);
  std::vector<Component> comps;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < mask.bits.size(); ++start) {
    if (!mask.bits[start] || seen[start]) continue;
    Component c;
    c.box = {start % w, start / w, start % w, start / w};
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const auto p = stack.back();
      stack.pop_back();
      c.pixels.push_back(p);
      const auto px = p % w, py = p / w;
      c.box.x0 = std::min(c.box.x0, px);
      c.box.x1 = std::max(c.box.x1, px);
      c.box.y0 = std::min(c.box.y0, py);
      c.box.y1 = std::max(c.box.y1, py);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const auto nx = static_cast<long>(px) + dx, ny = static_cast<long>(py) + dy;
          if (nx < 0 || ny < 0 || nx >= static_cast<long>(w) || ny >= static_cast<long>(h)) continue;
          const auto q = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
          if (mask.bits[q] && !seen[q]) {
            seen[q] = 1;
            stack.push_back(q);
          }
        }
    }
    std::sort(c.pixels.begin(), c.pixels.end());
    c.pixel_count = c.pixels.size();
    comps.push_back(std::move(c));
  }
  // Discovery order is scan order of each component's first pixel, so a
  // stable sort by size gives the documented tie-break.
  std::stable_sort(comps.begin(), comps.end(), [](const Component& a, const Component& b) {
    return a.pixel_count > b.pixel_count;
  });
  for (std::size_t i = 0; i < comps.size(); ++i) comps[i].label = static_cast<int>(i + 1);
  return comps;
}

GrayImage strip_nonbrain(const GrayImage& image, const StripConfig& config) {
  if (!(config.min_area_fraction >= 0.0 && config.min_area_fraction <= 1.0)) {
    throw std::invalid_argument("strip_nonbrain: min_area_fraction must lie in [0, 1]");
  }
  const auto masks = threshold_segment(image, config.thresholds);
  const double min_area = config.min_area_fraction * static_cast<double>(image.size());
  std::vector<Component> kept;
  for (auto& c : connected_components(masks.tissue)) {
    if (static_cast<double>(c.pixel_count) >= min_area) kept.push_back(std::move(c));
  }
  if (kept.empty()) throw EmptyBrainError("strip_nonbrain: no tissue component found");

  GrayImage out(image.width, image.height, 0.0);
  const BoundingBox brain = kept.front().box;
  for (const auto& c : kept) {
    if (&c != &kept.front() && !brain.contains(c.box)) continue;
    for (auto p : c.pixels) out.pixels[p] = image.pixels[p];
  }
  return out;
}

IntensityStats tissue_statistics(std::span<const GrayImage> images) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& img : images)
    for (double v : img.pixels)
      if (v != 0.0) {
        total += v;
        ++n;
      }
  if (n == 0) throw std::invalid_argument("tissue_statistics: no tissue pixels");
  const double mean = total / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& img : images)
    for (double v : img.pixels)
      if (v != 0.0) ss += (v - mean) * (v - mean);
  const double std = std::sqrt(ss / static_cast<double>(n));
  if (std < 1e-6) throw std::invalid_argument("tissue_statistics: degenerate std (constant tissue)");
  return {mean, std};
}

num::Tensor standardize(const GrayImage& image, double mean, double std, num::DType dtype) {
  if (!(std >= 1e-6)) throw std::invalid_argument("standardize: degenerate std");
  std::vector<double> v(image.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (image.pixels[i] - mean) / std;
  return num::Tensor::from({1, image.height, image.width}, std::move(v), dtype);
}

void write_stats(const std::filesystem::path& path, const IntensityStats& stats) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", stats.mean);
  out << "mean=" << buf << '\n';
  std::snprintf(buf, sizeof(buf), "%.17g", stats.std);
  out << "std=" << buf << '\n';
}

IntensityStats read_stats(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  IntensityStats s;
  bool have_mean = false, have_std = false;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const auto key = line.substr(0, eq);
    const double value = std::stod(line.substr(eq + 1));
    if (key == "mean") {
      s.mean = value;
      have_mean = true;
    } else if (key == "std") {
      s.std = value;
      have_std = true;
    }
  }
  if (!have_mean || !have_std) throw std::runtime_error(path.string() + ": missing mean= or std=");
  return s;
}

}  // namespace gcsich::prep
