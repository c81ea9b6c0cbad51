#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gcsich/dataset.hpp"
#include "gcsich/fusionnet.hpp"
#include "json.hpp"

namespace gcsich::eval {

// Positive class is the favorable prognosis (label 1).
struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

// Ratios with a zero denominator are left empty ("undefined").
struct ConfusionMetrics {
  ConfusionCounts counts;
  std::optional<double> accuracy, tpr, tnr, f1;
};

ConfusionCounts count_confusion(std::span<const int> predictions, std::span<const int> truths);
ConfusionMetrics metrics_from_counts(const ConfusionCounts& counts);
ConfusionMetrics confusion_metrics(std::span<const int> predictions, std::span<const int> truths);

struct VoteResult {
  int prediction = 0;
  bool tie = false;
};

/// Strict majority of favorable votes; an exact tie goes to unfavorable and
/// sets `tie`.
VoteResult majority_vote(std::span<const int> slice_predictions);

struct SlicePrediction {
  std::string patient_id;
  std::string slice;
  int truth = 0;
  double score = 0.0;  // favorable-class probability
  int prediction = 0;
};

struct PatientPrediction {
  std::string patient_id;
  int truth = 0;
  int prediction = 0;
  bool tie = false;
  std::size_t slices = 0;
  double score = 0.0;  // mean slice score
};

/// Groups by patient in order of first appearance.
std::vector<PatientPrediction> patient_vote(std::span<const SlicePrediction> slices);

struct RocPoint {
  double fpr = 0.0, tpr = 0.0;
  double threshold = 0.0;  // +inf for the (0, 0) corner
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

/// Thresholds at every distinct score, highest first; AUC by trapezoids.
/// Both classes must be present.
RocCurve roc_auc(std::span<const double> scores, std::span<const int> truths);

struct EvalReport {
  ConfusionMetrics slice;
  ConfusionMetrics patient;
  std::size_t ties = 0;
  RocCurve roc;  // slice-level
  std::optional<double> slice_auc;
  std::optional<double> patient_auc;
  std::vector<SlicePrediction> slices;
  std::vector<PatientPrediction> patients;
};

EvalReport evaluate_predictions(std::vector<SlicePrediction> slices);

/// Favorable-class probability for one slice.
using Predictor = std::function<double(const data::Sample&)>;

std::vector<SlicePrediction> predict_slices(const Predictor& predictor, const data::Dataset& test);
EvalReport evaluate_run(const Predictor& predictor, const data::Dataset& test);
/// Eval-mode forward pass per slice; slice prediction is the argmax.
EvalReport evaluate_run(const net::FusionModel& model, const data::Dataset& test,
                        net::InputMode input = net::InputMode::fusion);
Predictor model_predictor(const net::FusionModel& model, net::InputMode input);

nlohmann::json to_json(const ConfusionMetrics& m);
nlohmann::json to_json(const EvalReport& report);
void write_report(const std::filesystem::path& path, const EvalReport& report);
void write_roc_csv(const std::filesystem::path& path, const RocCurve& roc);

/// Reads `patient_id,slice,truth,score` rows (header optional); the
/// prediction is the argmax, i.e. score > 0.5.
std::vector<SlicePrediction> read_predictions_csv(const std::filesystem::path& path);
void write_predictions_csv(const std::filesystem::path& path, std::span<const SlicePrediction> rows);

}  // namespace gcsich::eval
