#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gcsich/ops.hpp"
#include "gcsich/tensor.hpp"

namespace gcsich::net {

inline constexpr std::size_t kImageFeatures = 128;
inline constexpr std::size_t kGcsFeatures = 64;
inline constexpr std::size_t kModelWidth = kImageFeatures + kGcsFeatures;  // 192
inline constexpr std::size_t kClasses = 2;
inline constexpr int kGcsMin = 3;
inline constexpr int kGcsMax = 15;

enum class Backbone { tiny, resnet50 };
enum class HeadPreset { tiny, densenet121 };
// single_token: concat then unsqueeze to one token of width 192.
// two_token: image and GCS features each projected to 192, two tokens.
enum class FusionLayout { single_token, two_token };
// Which modality feeds the fused vector; the other is replaced by zeros.
enum class InputMode { fusion, image_only, gcs_only };

std::string to_string(Backbone b);
std::string to_string(HeadPreset h);
std::string to_string(FusionLayout f);
std::string to_string(InputMode m);
Backbone parse_backbone(const std::string& s);
HeadPreset parse_head(const std::string& s);
FusionLayout parse_fusion(const std::string& s);
InputMode parse_input_mode(const std::string& s);

struct ModelConfig {
  std::size_t input_size = 32;
  Backbone backbone = Backbone::tiny;
  HeadPreset head = HeadPreset::tiny;
  FusionLayout fusion = FusionLayout::single_token;
  double dropout = 0.1;
  bool encoder_block = true;  // pre-norm residual + feed-forward around attention
  std::size_t heads = 16;
  std::size_t ff_width = 192;
  num::DType dtype = num::DType::f32;

  static ModelConfig tiny();
  /// resnet50-shaped backbone at 224x224, densenet121-shaped head.
  static ModelConfig paper_scale();
};

// Named parameter tensors in registration order.
class ParamSet {
 public:
  void add(const std::string& name, num::Tensor t);
  const num::Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::string, num::Tensor>>& entries() const { return entries_; }
  std::vector<num::Tensor> tensors() const;
  std::size_t parameter_count() const;

  void zero_grad();
  /// Deep copy with fresh gradient state.
  ParamSet clone() const;

 private:
  std::vector<std::pair<std::string, num::Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

using FusionModelParams = ParamSet;

struct FusionModel {
  ModelConfig config;
  FusionModelParams params;
};

/// Fan-in scaled uniform weights U(-sqrt(3/fan_in), sqrt(3/fan_in)), zero
/// biases, unit layer-norm gains.
FusionModel init_model(const ModelConfig& config, std::uint64_t seed);

struct RunOptions {
  num::Mode mode = num::Mode::eval;
  InputMode input = InputMode::fusion;
  std::uint64_t dropout_seed = 0;
  std::string dropout_stream = "dropout";
};

/// Image pathway: residual CNN, global average pool, affine + dropout layers.
/// Returns [128]; `last_conv` receives the final conv stage activation.
num::Tensor encode_image(const num::Tensor& image, const FusionModel& model, const RunOptions& run,
                         num::Tensor* last_conv = nullptr);

/// GCS pathway: MLP over (g - 3) / 12 with hidden widths 32, 128, 256; [64].
num::Tensor encode_gcs(int gcs, const FusionModel& model, const RunOptions& run);
double normalize_gcs(int gcs);

/// Image features first, then GCS features, as one token: [1 x 192].
num::Tensor fuse_global(const num::Tensor& image_features, const num::Tensor& gcs_features);

/// Concat(head_1..head_h) W_O with head_j = softmax(Q_j K_j^T / sqrt(d_k)) V_j,
/// where Q = x W_Q, etc. and head j owns columns [j d_k, (j+1) d_k).
num::Tensor multi_head_attention(const num::Tensor& x, const num::Tensor& w_q,
                                 const num::Tensor& w_k, const num::Tensor& w_v,
                                 const num::Tensor& w_o, std::size_t heads);

/// Attention over tokens [L x 192], wrapped in the encoder block when enabled.
num::Tensor attention_fuse(const num::Tensor& tokens, const FusionModel& model);

/// 1-D dense-block classifier over a [1 x 192] fused vector; 2 logits.
num::Tensor classify_head(const num::Tensor& fused, const FusionModel& model, const RunOptions& run);

struct ForwardTrace {
  num::Tensor last_conv;  // undefined in gcs_only mode
  num::Tensor image_features;
  num::Tensor gcs_features;
  num::Tensor tokens;
  num::Tensor mixed;
  num::Tensor logits;
  num::Tensor probabilities;
};

ForwardTrace forward_trace(const num::Tensor& image, int gcs, const FusionModel& model,
                           const RunOptions& run = {});
/// Class probabilities [2]: index 1 is the favorable class.
num::Tensor forward(const num::Tensor& image, int gcs, const FusionModel& model,
                    const RunOptions& run = {});

}  // namespace gcsich::net
