#include "gcsich/dataset.hpp"

#include "gcsich/image.hpp"

namespace gcsich::data {

GrayImage load_slice(const std::filesystem::path& path, std::size_t size) {
  GrayImage img = read_png(path);
  if (img.width == size && img.height == size) return img;
  GrayImage out(size, size);
  out.pixels = resize_bilinear(img.pixels, img.width, img.height, size, size);
  return out;
}

prep::IntensityStats fold_statistics(std::span<const cohort::SliceRecord> slices, std::size_t size) {
  std::vector<GrayImage> images;
  images.reserve(slices.size());
  for (const auto& s : slices) images.push_back(load_slice(s.slice_path, size));
  return prep::tissue_statistics(images);
}

Sample make_sample(const GrayImage& image, int gcs, int label, const prep::IntensityStats& stats,
                   num::DType dtype, std::string patient_id) {
  Sample s;
  s.patient_id = std::move(patient_id);
  s.gcs = gcs;
  s.label = label;
  s.image = prep::standardize(image, stats.mean, stats.std, dtype);
  return s;
}

Dataset load_dataset(std::span<const cohort::SliceRecord> slices, const prep::IntensityStats& stats,
                     std::size_t size, num::DType dtype) {
  Dataset out;
  out.reserve(slices.size());
  for (const auto& rec : slices) {
    auto s = make_sample(load_slice(rec.slice_path, size), rec.gcs, rec.label, stats, dtype, rec.patient_id);
    s.path = rec.slice_path;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace gcsich::data
