#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gcsich/rng.hpp"
#include "gcsich/tensor.hpp"

namespace gcsich::num {

enum class Mode { train, eval };

// Elementwise, same shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

/// a[m x k] . b[k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// W[m x n] x[n] + b[m]. `b` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor relu(const Tensor& x);

/// While alive, every relu on this thread folds the on/off state of its
/// inputs into a running fingerprint. Two forward passes with equal
/// fingerprints took the same linear piece of every relu.
class ReluPatternProbe {
 public:
  ReluPatternProbe();
  ~ReluPatternProbe();
  ReluPatternProbe(const ReluPatternProbe&) = delete;
  ReluPatternProbe& operator=(const ReluPatternProbe&) = delete;

  std::uint64_t fingerprint() const { return hash_; }
  void fold(const Tensor& x);

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
  ReluPatternProbe* saved_;
};

/// Inverted dropout: kept values are divided by (1 - p). p == 1 yields zeros.
/// Eval mode and p == 0 return `x` unchanged.
Tensor dropout(const Tensor& x, double p, Mode mode, RngStream& rng);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);

struct Conv2dOptions {
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
};

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

/// Cross-correlation (kernels are not flipped) of input[C_in x H x W] with
/// kernels[C_out x C_in x kh x kw], zero padding. `bias` ([C_out]) may be
/// undefined.
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              Conv2dOptions options = {});

/// Average pooling over windows that fit entirely inside the input.
Tensor avg_pool2d(const Tensor& input, std::size_t kh, std::size_t kw, std::size_t sh,
                  std::size_t sw);
/// [C x H x W] -> [C]
Tensor global_avg_pool(const Tensor& input);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
Tensor reshape(const Tensor& x, Shape shape);

/// Row-wise normalization of x[L x D] with affine gamma[D], beta[D].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Sum of all elements, shape [1].
Tensor sum(const Tensor& x);
/// Mean along `axis`; the axis is removed (a rank-1 input gives shape [1]).
Tensor mean(const Tensor& x, std::size_t axis);
/// Flat element `index` as a [1] tensor.
Tensor element(const Tensor& x, std::size_t index);

/// Elementwise op with a caller-supplied adjoint. `backward` receives the
/// input values, output values and upstream gradient and returns d/dx.
using UnaryForward = std::function<double(double)>;
using UnaryBackward =
    std::function<std::vector<double>(std::span<const double> x, std::span<const double> y,
                                      std::span<const double> upstream)>;
Tensor custom_unary(const Tensor& x, const UnaryForward& forward, const UnaryBackward& backward,
                    const std::string& name);

}  // namespace gcsich::num
