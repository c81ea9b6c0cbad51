#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <vector>

#include "gcsich/fusionnet.hpp"
#include "gcsich/image.hpp"
#include "gcsich/tensor.hpp"

namespace gcsich::explain {

class ExplainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Values in [0, 1], row-major, same extent as the input image.
struct SaliencyMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;

  double max() const;
  bool operator==(const SaliencyMap&) const = default;
};

// What a model exposes for class activation maps: the final conv stage
// activation [C x h x w] and the pre-softmax logits [2], both on one graph.
struct CamForward {
  num::Tensor activation;
  num::Tensor logits;
};

// Runs the model on an input image [1 x H x W] inside an active tape.
using CamModel = std::function<CamForward(const num::Tensor& image)>;

/// Eval-mode fusion model at a fixed GCS. The parameters are copied without
/// gradient tracking so the model's own gradients are never touched.
CamModel fusion_cam_model(const net::FusionModel& model, int gcs, net::InputMode input = net::InputMode::fusion);

/// Gradient of the target logit w.r.t. the activation, averaged per channel,
/// weights the channels; relu, bilinearly upsampled to the image size and
/// max-normalized (all zero when the max is 0).
SaliencyMap grad_cam(const CamModel& model, const num::Tensor& image, int target_class);

struct SmoothOptions {
  std::size_t n_samples = 25;
  double sigma = 0.1;  // noise std as a fraction of the input's max - min
  std::uint64_t seed = 0;
};

/// Mean of grad_cam over noisy copies of the image, renormalized by its max.
/// Sample i draws its noise from its own stream, so the result is order
/// independent.
SaliencyMap smooth_grad_cam(const CamModel& model, const num::Tensor& image, int target_class,
                            const SmoothOptions& options = {});

/// Grayscale base in all three channels with alpha * map added to red.
RgbImage render_overlay(const GrayImage& base, const SaliencyMap& map, double alpha = 0.6);

GrayImage to_image(const SaliencyMap& map);

struct ExplainFiles {
  std::filesystem::path overlay, map, sidecar;
};

/// Writes <stem>_overlay.png, <stem>_map.png and <stem>.json under dir.
ExplainFiles write_explanation(const std::filesystem::path& dir, const std::string& stem, const GrayImage& base,
                               const SaliencyMap& map, int target_class, const SmoothOptions& options,
                               double alpha = 0.6);

}  // namespace gcsich::explain
