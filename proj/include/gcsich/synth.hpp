#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gcsich/cohort.hpp"
#include "gcsich/ctprep.hpp"
#include "gcsich/dataset.hpp"
#include "gcsich/image.hpp"

namespace gcsich::synth {

// gcs_only: GOS 5 when gcs >= gcs_threshold, else 2; blobs carry no signal.
// blob_only: a hidden coin sets the outcome; blobs mark unfavorable patients
//   with probability blob_correlation; GCS carries no signal.
// mixed: favorable when gcs + (blob ? -mixed_shift : +mixed_shift) >=
//   gcs_threshold, so neither modality alone decides.
enum class LabelRule { gcs_only, blob_only, mixed };

std::string to_string(LabelRule r);
LabelRule parse_label_rule(const std::string& s);

struct PhantomSpec {
  std::size_t patients = 40;
  std::size_t min_slices = 5;
  std::size_t max_slices = 5;
  std::size_t image_size = 32;
  double background_noise = 0.03;  // background drawn from U(0, noise)
  double skull_intensity = 0.99;
  std::size_t skull_thickness = 2;
  double brain_intensity = 0.45;
  double brain_jitter = 0.05;  // per-slice offset U(-j, j) plus per-pixel U(-j/2, j/2)
  double blob_intensity = 0.8;
  double blob_radius_min = 0.08;  // fractions of the image size
  double blob_radius_max = 0.16;
  LabelRule rule = LabelRule::gcs_only;
  double blob_rate = 0.5;
  double blob_correlation = 1.0;
  int gcs_threshold = 9;
  int mixed_shift = 3;
  std::uint64_t seed = 0;
};

void validate(const PhantomSpec& spec);

struct PhantomSlice {
  GrayImage image;  // already 8-bit quantized
  prep::BinaryMask ring, brain, blob;
};

struct PhantomPatient {
  std::string patient_id;
  int gcs = 15;
  int gos = 5;
  bool has_blob = false;
  std::vector<PhantomSlice> slices;
};

/// GOS implied by the label rule.
int phantom_gos(const PhantomSpec& spec, int gcs, bool has_blob, bool hidden_unfavorable);

std::vector<PhantomPatient> simulate(const PhantomSpec& spec);

/// Writes images/<patient>_s<k>.png and manifest.jsonl under out_dir and
/// returns the cohort as written.
cohort::Cohort generate(const PhantomSpec& spec, const std::filesystem::path& out_dir);

struct PhantomFolds {
  cohort::SplitPlan plan;
  prep::IntensityStats stats;
  data::Dataset train, test;
};

/// In-memory equivalent of prep + split + dataset loading: strips every
/// slice, splits patients, takes tissue statistics on the training fold and
/// standardizes both folds with them.
PhantomFolds phantom_folds(const std::vector<PhantomPatient>& patients, double train_fraction,
                           std::uint64_t split_seed, num::DType dtype, const prep::StripConfig& strip = {});
/// Same with a given plan.
PhantomFolds phantom_folds(const std::vector<PhantomPatient>& patients, const cohort::SplitPlan& plan,
                           num::DType dtype, const prep::StripConfig& strip = {});

cohort::Cohort phantom_records(const std::vector<PhantomPatient>& patients);

}  // namespace gcsich::synth
