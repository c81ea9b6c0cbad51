#include "gcsich/explain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gcsich/ops.hpp"
#include "gcsich/rng.hpp"
#include "json.hpp"

namespace gcsich::explain {

using num::Tensor;

double SaliencyMap::max() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, v);
  return m;
}

CamModel fusion_cam_model(const net::FusionModel& model, int gcs, net::InputMode input) {
  if (input == net::InputMode::gcs_only) throw ExplainError("grad_cam: gcs-only mode has no conv stage");
  net::FusionModel frozen{model.config, {}};
  for (const auto& [name, t] : model.params.entries()) frozen.params.add(name, t.clone(false));
  return [frozen = std::move(frozen), gcs, input](const Tensor& image) {
    net::RunOptions run;
    run.input = input;
    auto t = net::forward_trace(image, gcs, frozen, run);
    return CamForward{t.last_conv, t.logits};
  };
}

namespace {

void check_target(int target_class) {
  if (target_class != 0 && target_class != 1) throw std::invalid_argument("target class must be 0 or 1");
}

SaliencyMap normalized(std::vector<double> values, std::size_t w, std::size_t h) {
  double m = 0.0;
  for (double v : values) m = std::max(m, v);
  if (m > 0.0) {
    for (auto& v : values) v /= m;
  } else {
    std::fill(values.begin(), values.end(), 0.0);
  }
  return {w, h, std::move(values)};
}

}  // namespace

SaliencyMap grad_cam(const CamModel& model, const Tensor& image, int target_class) {
  check_target(target_class);
  if (image.rank() != 3 || image.dim(0) != 1) throw std::invalid_argument("grad_cam: image must be [1 x H x W]");
  const auto height = image.dim(1), width = image.dim(2);
  auto input = image.clone(true);

  CamForward fwd;
  {
    num::GradTape tape;
    fwd = model(input);
    if (!fwd.activation.defined()) throw ExplainError("grad_cam: model has no conv stage");
    if (fwd.activation.rank() != 3) throw ExplainError("grad_cam: activation must be [C x h x w]");
    if (!fwd.logits.defined() || fwd.logits.numel() != 2) throw ExplainError("grad_cam: expected 2 logits");
    tape.backward(num::element(fwd.logits, static_cast<std::size_t>(target_class)));
  }
  const auto& a = fwd.activation;
  const auto c = a.dim(0), h = a.dim(1), w = a.dim(2), plane = h * w;
  const auto act = a.data();
  const auto grad = a.grad();

  std::vector<double> cam(plane, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double weight = 0.0;
    for (std::size_t i = 0; i < plane; ++i) weight += grad[ch * plane + i];
    weight /= static_cast<double>(plane);
    if (weight == 0.0) continue;
    for (std::size_t i = 0; i < plane; ++i) cam[i] += weight * act[ch * plane + i];
  }
  for (auto& v : cam) v = std::max(v, 0.0);
  // Normalizing after the upsampling keeps the peak at exactly 1.
  return normalized(resize_bilinear(cam, w, h, width, height), width, height);
}

SaliencyMap smooth_grad_cam(const CamModel& model, const Tensor& image, int target_class,
                            const SmoothOptions& options) {
  check_target(target_class);
  if (options.n_samples == 0) throw std::invalid_argument("smooth_grad_cam: n_samples must be at least 1");
  if (!(options.sigma >= 0.0) || !std::isfinite(options.sigma)) {
    throw std::invalid_argument("smooth_grad_cam: sigma must be non-negative");
  }
  const auto pixels = image.to_vector();
  double lo = 0.0, hi = 0.0;
  if (!pixels.empty()) {
    const auto [mn, mx] = std::minmax_element(pixels.begin(), pixels.end());
    lo = *mn;
    hi = *mx;
  }
  const double stddev = options.sigma * (hi - lo);

  std::vector<double> sum;
  std::size_t width = 0, height = 0;
  for (std::size_t i = 0; i < options.n_samples; ++i) {
    Tensor noisy = image;
    if (stddev > 0.0) {
      num::RngStream rng(options.seed, "smooth-grad-cam/sample-" + std::to_string(i));
      auto v = pixels;
      for (auto& x : v) x += stddev * rng.normal();
      noisy = Tensor::from(image.shape(), std::move(v), image.dtype());
    }
    const auto m = grad_cam(model, noisy, target_class);
    if (sum.empty()) {
      sum.assign(m.values.size(), 0.0);
      width = m.width;
      height = m.height;
    }
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += m.values[k];
  }
  for (auto& v : sum) v /= static_cast<double>(options.n_samples);
  return normalized(std::move(sum), width, height);
}

RgbImage render_overlay(const GrayImage& base, const SaliencyMap& map, double alpha) {
  if (base.width != map.width || base.height != map.height) {
    throw ImageError("render_overlay: base is " + std::to_string(base.width) + "x" + std::to_string(base.height) +
                     ", map is " + std::to_string(map.width) + "x" + std::to_string(map.height));
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("render_overlay: alpha must lie in [0, 1]");
  RgbImage out(base.width, base.height);
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double g = base.pixels[i];
    out.rgb[3 * i] = std::min(1.0, g + alpha * map.values[i]);
    out.rgb[3 * i + 1] = g;
    out.rgb[3 * i + 2] = g;
  }
  return out;
}

GrayImage to_image(const SaliencyMap& map) {
  GrayImage g(map.width, map.height);
  g.pixels = map.values;
  return g;
}

ExplainFiles write_explanation(const std::filesystem::path& dir, const std::string& stem, const GrayImage& base,
                               const SaliencyMap& map, int target_class, const SmoothOptions& options,
                               double alpha) {
  std::filesystem::create_directories(dir);
  ExplainFiles f{dir / (stem + "_overlay.png"), dir / (stem + "_map.png"), dir / (stem + ".json")};
  write_png(f.overlay, render_overlay(base, map, alpha));
  write_png(f.map, to_image(map));
  const nlohmann::json j = {{"class", target_class},
                            {"n_samples", options.n_samples},
                            {"sigma", options.sigma},
                            {"seed", options.seed},
                            {"alpha", alpha},
                            {"width", map.width},
                            {"height", map.height},
                            {"max", map.max()}};
  std::ofstream out(f.sidecar);
  if (!out) throw ExplainError("cannot write " + f.sidecar.string());
  out << j.dump(2) << '\n';
  return f;
}

}  // namespace gcsich::explain
