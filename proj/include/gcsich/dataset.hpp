#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gcsich/cohort.hpp"
#include "gcsich/ctprep.hpp"
#include "gcsich/tensor.hpp"

namespace gcsich::data {

struct Sample {
  std::string patient_id;
  std::filesystem::path path;
  int gcs = 15;
  int label = 0;
  num::Tensor image;  // [1 x S x S], standardized
};

using Dataset = std::vector<Sample>;

/// Reads a slice PNG and resizes it to size x size when needed.
GrayImage load_slice(const std::filesystem::path& path, std::size_t size);

/// Tissue statistics over the given slices (meant for the training fold).
prep::IntensityStats fold_statistics(std::span<const cohort::SliceRecord> slices, std::size_t size);

Dataset load_dataset(std::span<const cohort::SliceRecord> slices, const prep::IntensityStats& stats,
                     std::size_t size, num::DType dtype);

/// Builds a sample from an in-memory image.
Sample make_sample(const GrayImage& image, int gcs, int label, const prep::IntensityStats& stats,
                   num::DType dtype, std::string patient_id = {});

}  // namespace gcsich::data
