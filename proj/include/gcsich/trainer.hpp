#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcsich/dataset.hpp"
#include "gcsich/fusionnet.hpp"

namespace gcsich::train {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// -log softmax(logits)[label] via log-sum-exp, times `weight`.
num::Tensor cross_entropy(const num::Tensor& logits, int label, double weight = 1.0);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::size_t step = 0;
  std::vector<std::vector<double>> m, v;
};

AdamState make_adam(const std::vector<num::Tensor>& params, const AdamConfig& config);

/// One bias-corrected Adam update; the step counter is incremented first.
void adam_step(const std::vector<num::Tensor>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state);
/// Same, reading each parameter's accumulated gradient.
void adam_step(const std::vector<num::Tensor>& params, AdamState& state);

struct TrainConfig {
  std::size_t epochs = 300;
  double lr = 1e-4;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double dropout = 0.1;
  std::size_t eval_every = 1;
  // Inverse-frequency class weights in the loss.
  bool class_weighting = false;
  net::InputMode input = net::InputMode::fusion;
};

void validate(const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_slice_acc, val_patient_acc, val_auc;
};

struct FitResult {
  net::FusionModel final_model;
  net::FusionModel best_model;
  std::size_t best_epoch = 0;
  std::optional<double> best_val_patient_acc;
  std::vector<EpochRecord> history;
};

/// Order of sample indices for one epoch (a seeded permutation).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

/// Mini-batch Adam on the mean cross-entropy of each batch; the final short
/// batch is kept. Validation metrics are computed every `eval_every` epochs
/// and on the last one. The best checkpoint maximizes validation patient
/// accuracy (earliest epoch wins ties); without a validation set it is the
/// final model. config.dropout overrides model_config.dropout, and the model
/// is initialized from config.seed. When `out_dir` is given, final.gich, best.gich and
/// history.csv are written there.
FitResult fit(const data::Dataset& train, const data::Dataset& val, const net::ModelConfig& model_config,
              const TrainConfig& config, const std::optional<std::filesystem::path>& out_dir = std::nullopt);

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

/// Fraction of samples whose argmax matches the label.
double slice_accuracy(const net::FusionModel& model, const data::Dataset& samples, net::InputMode input);

}  // namespace gcsich::train
