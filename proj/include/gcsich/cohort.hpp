#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace gcsich::cohort {

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SplitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kFavorable = 1;
inline constexpr int kUnfavorable = 0;

// GOS >= favorable_min_gos is a favorable prognosis. 4 follows the usual
// clinical split {4, 5}; 5 reproduces a literal "above 4" reading.
struct LabelRule {
  int favorable_min_gos = 4;
};

int binarize_gos(int gos, const LabelRule& rule = {});

struct PatientRecord {
  std::string patient_id;
  int gcs = 15;
  int gos = 5;
  std::vector<std::filesystem::path> slice_paths;

  int label(const LabelRule& rule = {}) const { return binarize_gos(gos, rule); }
};

using Cohort = std::vector<PatientRecord>;

struct SliceRecord {
  std::string patient_id;
  std::filesystem::path slice_path;
  int gcs = 15;
  int label = kUnfavorable;
};

/// JSON Lines, one patient per line. Relative slice paths are resolved
/// against `base_dir`. Blank lines are skipped.
Cohort parse_manifest(std::istream& in, const std::filesystem::path& base_dir);
Cohort load_manifest(const std::filesystem::path& path);
/// Writes slice paths relative to the manifest's directory when possible.
void write_manifest(const std::filesystem::path& path, const Cohort& cohort);

struct SplitPlan {
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  int attempt = 0;  // redraws needed before both folds held both labels
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

/// Patient-level shuffle; train count = round(N * fraction). Redraws (up to
/// 100 attempts) until both folds contain both labels.
SplitPlan split_patients(const Cohort& cohort, double train_fraction, std::uint64_t seed,
                         const LabelRule& rule = {});

/// Stratified k-fold partition: each label group is shuffled and dealt
/// round-robin into k test folds; plan j trains on the other k-1 folds.
/// Every label needs at least k patients so that each fold holds both.
std::vector<SplitPlan> kfold_patients(const Cohort& cohort, std::size_t k, std::uint64_t seed,
                                      const LabelRule& rule = {});

nlohmann::json to_json(const SplitPlan& plan);
SplitPlan split_from_json(const nlohmann::json& j);
void save_split(const std::filesystem::path& path, const SplitPlan& plan);
SplitPlan load_split(const std::filesystem::path& path);

struct SliceFolds {
  std::vector<SliceRecord> train;
  std::vector<SliceRecord> test;
};

/// Every slice of a patient lands in that patient's fold, in cohort order.
SliceFolds expand_slices(const SplitPlan& plan, const Cohort& cohort, const LabelRule& rule = {},
                         bool check_files = true);

/// Seeds used for repeated random splits: base, base + 1, ...
std::vector<std::uint64_t> repeat_seeds(std::uint64_t base, int repeats);

}  // namespace gcsich::cohort
