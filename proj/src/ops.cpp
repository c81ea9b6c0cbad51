#include "gcsich/ops.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>

namespace gcsich::num {

namespace {

using Impl = detail::TensorImpl;
using ImplPtr = std::shared_ptr<Impl>;

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (GradTape::active() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->defined() && t->requires_grad(); });
}

DType result_dtype(std::initializer_list<const Tensor*> inputs) {
  DType d = DType::f32;
  for (const auto* t : inputs) {
    if (t->defined()) d = promote(d, t->dtype());
  }
  return d;
}

std::vector<double>& grad_of(Impl& t) {
  if (t.grad.size() != t.data.size()) t.grad.assign(t.data.size(), 0.0);
  return t.grad;
}

bool wants_grad(const ImplPtr& t) { return t && t->requires_grad; }

void require(bool ok, const std::string& op, const std::string& what) {
  if (!ok) throw NumericError(op + ": " + what);
}

void require_defined(const Tensor& t, const std::string& op) {
  require(t.defined(), op, "undefined input tensor");
}

Tensor finish(const std::string& op, Shape shape, DType dtype, std::vector<double> values,
              bool track) {
  for (auto& v : values) {
    if (!std::isfinite(v)) throw NumericError(op + ": non-finite output");
    v = round_to(dtype, v);
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->dtype = dtype;
  impl->data = std::move(values);
  impl->requires_grad = track;
  return Tensor(impl);
}

void record(std::function<void()> adjoint) { GradTape::active()->record(std::move(adjoint)); }

// Splits a shape around `axis` into (outer, extent, inner) counts.
struct AxisView {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

Tensor elementwise(const std::string& op, const Tensor& a, const Tensor& b,
                   double (*f)(double, double), double (*da)(double, double),
                   double (*db)(double, double)) {
  require_defined(a, op);
  require_defined(b, op);
  require(a.shape() == b.shape(), op,
          "shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const auto n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i], b[i]);
  const bool track = tracking({&a, &b});
  auto result = finish(op, a.shape(), result_dtype({&a, &b}), std::move(out), track);
  if (track) {
    record([o = result.impl(), ai = a.impl(), bi = b.impl(), da, db] {
      if (o->grad.empty()) return;
      const auto n = o->data.size();
      if (wants_grad(ai)) {
        auto& g = grad_of(*ai);
        for (std::size_t i = 0; i < n; ++i) g[i] += o->grad[i] * da(ai->data[i], bi->data[i]);
      }
      if (wants_grad(bi)) {
        auto& g = grad_of(*bi);
        for (std::size_t i = 0; i < n; ++i) g[i] += o->grad[i] * db(ai->data[i], bi->data[i]);
      }
    });
  }
  return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  require_defined(a, "scale");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  const bool track = tracking({&a});
  auto result = finish("scale", a.shape(), a.dtype(), std::move(out), track);
  if (track) {
    record([o = result.impl(), ai = a.impl(), factor] {
      if (o->grad.empty()) return;
      auto& g = grad_of(*ai);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * factor;
    });
  }
  return result;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  require(a.rank() == 2 && b.rank() == 2, "matmul", "both operands must be rank 2");
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul",
          "inner extents differ: " + shape_string(a.shape()) + " . " + shape_string(b.shape()));
  std::vector<double> out(m * n, 0.0);
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      if (av == 0.0) continue;
      const double* __restrict brow = &bd[p * n];
      double* __restrict orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  const bool track = tracking({&a, &b});
  auto result = finish("matmul", {m, n}, result_dtype({&a, &b}), std::move(out), track);
  if (track) {
    record([o = result.impl(), ai = a.impl(), bi = b.impl(), m, k, n] {
      if (o->grad.empty()) return;
      const auto& g = o->grad;
      if (wants_grad(ai)) {
        auto& ga = grad_of(*ai);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bi->data[p * n + j];
            ga[i * k + p] += s;
          }
      }
      if (wants_grad(bi)) {
        double* __restrict gb = grad_of(*bi).data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double av = ai->data[i * k + p];
            if (av == 0.0) continue;
            const double* __restrict grow = g.data() + i * n;
            double* __restrict dst = gb + p * n;
            for (std::size_t j = 0; j < n; ++j) dst[j] += av * grow[j];
          }
      }
    });
  }
  return result;
}

Tensor transpose(const Tensor& a) {
  require_defined(a, "transpose");
  require(a.rank() == 2, "transpose", "operand must be rank 2");
  const auto m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  const bool track = tracking({&a});
  auto result = finish("transpose", {n, m}, a.dtype(), std::move(out), track);
  if (track) {
    record([o = result.impl(), ai = a.impl(), m, n] {
      if (o->grad.empty()) return;
      auto& g = grad_of(*ai);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += o->grad[j * m + i];
    });
  }
  return result;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_defined(x, "linear");
  require_defined(weight, "linear");
  require(x.rank() == 1 && weight.rank() == 2, "linear", "expects x[n] and W[m x n]");
  const auto m = weight.dim(0), n = weight.dim(1);
  require(x.dim(0) == n, "linear",
          "W " + shape_string(weight.shape()) + " does not accept x " + shape_string(x.shape()));
  if (bias.defined()) {
    require(bias.rank() == 1 && bias.dim(0) == m, "linear",
            "bias " + shape_string(bias.shape()) + " does not match " + std::to_string(m) +
                " outputs");
  }
  std::vector<double> out(m);
  const auto xd = x.data();
  const auto wd = weight.data();
  for (std::size_t i = 0; i < m; ++i) {
    double s = bias.defined() ? bias[i] : 0.0;
    const double* row = &wd[i * n];
    for (std::size_t j = 0; j < n; ++j) s += row[j] * xd[j];
    out[i] = s;
  }
  const bool track = tracking({&x, &weight, &bias});
  auto result = finish("linear", {m}, result_dtype({&x, &weight, &bias}), std::move(out), track);
  if (track) {
    record([o = result.impl(), xi = x.impl(), wi = weight.impl(), bi = bias.impl(), m, n] {
      if (o->grad.empty()) return;
      const auto& g = o->grad;
      if (wants_grad(xi)) {
        double* __restrict gx = grad_of(*xi).data();
        for (std::size_t i = 0; i < m; ++i) {
          if (g[i] == 0.0) continue;
          const double gi = g[i];
          const double* __restrict row = wi->data.data() + i * n;
          for (std::size_t j = 0; j < n; ++j) gx[j] += gi * row[j];
        }
      }
      if (wants_grad(wi)) {
        double* __restrict gw = grad_of(*wi).data();
        const double* __restrict xv = xi->data.data();
        for (std::size_t i = 0; i < m; ++i) {
          if (g[i] == 0.0) continue;
          const double gi = g[i];
          double* __restrict row = gw + i * n;
          for (std::size_t j = 0; j < n; ++j) row[j] += gi * xv[j];
        }
      }
      if (wants_grad(bi)) {
        auto& gb = grad_of(*bi);
        for (std::size_t i = 0; i < m; ++i) gb[i] += g[i];
      }
    });
  }
  return result;
}

namespace {
thread_local ReluPatternProbe* g_relu_probe = nullptr;
}  // namespace

ReluPatternProbe::ReluPatternProbe() : saved_(g_relu_probe) { g_relu_probe = this; }
ReluPatternProbe::~ReluPatternProbe() { g_relu_probe = saved_; }

void ReluPatternProbe::fold(const Tensor& x) {
  for (std::size_t i = 0; i < x.numel(); ++i) {
    hash_ ^= x[i] > 0.0 ? 0x9eULL : 0x3bULL;
    hash_ *= 0x100000001b3ULL;
  }
}

Tensor relu(const Tensor& x) {
  require_defined(x, "relu");
  if (g_relu_probe) g_relu_probe->fold(x);
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  const bool track = tracking({&x});
  auto result = finish("relu", x.shape(), x.dtype(), std::move(out), track);
  if (track) {
    record([o = result.impl(), xi = x.impl()] {
      if (o->grad.empty()) return;
      auto& g = grad_of(*xi);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xi->data[i] > 0.0) g[i] += o->grad[i];
      }
    });
  }
  return result;
}

Tensor dropout(const Tensor& x, double p, Mode mode, RngStream& rng) {
  require_defined(x, "dropout");
  require(p >= 0.0 && p <= 1.0, "dropout", "rate must lie in [0, 1]");
  if (mode == Mode::eval || p == 0.0) return x;
  std::vector<double> mask(x.numel(), 0.0);
  if (p < 1.0) {
    const double keep_scale = 1.0 / (1.0 - p);
    for (auto& m : mask) m = rng.uniform() >= p ? keep_scale : 0.0;
  }
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  const bool track = tracking({&x});
  auto result = finish("dropout", x.shape(), x.dtype(), std::move(out), track);
  if (track) {
    record([o = result.impl(), xi = x.impl(), mask = std::move(mask)] {
      if (o->grad.empty()) return;
      auto& g = grad_of(*xi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * mask[i];
    });
  }
  return result;
}

namespace {

void check_finite_input(const Tensor& x, const std::string& op) {
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw NumericError(op + ": non-finite input");
  }
}

std::vector<double> softmax_values(const Tensor& x, const AxisView& v) {
  std::vector<double> out(x.numel());
  const auto d = x.data();
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.extent * v.inner + in;
      double mx = d[base];
      for (std::size_t k = 1; k < v.extent; ++k) mx = std::max(mx, d[base + k * v.inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < v.extent; ++k) {
        const double e = std::exp(d[base + k * v.inner] - mx);
        out[base + k * v.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < v.extent; ++k) out[base + k * v.inner] /= total;
    }
  return out;
}

}  // namespace

Tensor softmax(const Tensor& x, std::size_t axis) {
  require_defined(x, "softmax");
  require(axis < x.rank(), "softmax", "axis out of range");
  check_finite_input(x, "softmax");
  const auto v = axis_view(x.shape(), axis);
  auto out = softmax_values(x, v);
  const bool track = tracking({&x});
  auto result = finish("softmax", x.shape(), x.dtype(), std::move(out), track);
  if (track) {
    record([o = result.impl(), xi = x.impl(), v] {
      if (o->grad.empty()) return;
      auto& g = grad_of(*xi);
      const auto& y = o->data;
      const auto& up = o->grad;
      for (std::size_t a = 0; a < v.outer; ++a)
        for (std::size_t in = 0; in < v.inner; ++in) {
          const std::size_t base = a * v.extent * v.inner + in;
          double dot = 0.0;
          for (std::size_t k = 0; k < v.extent; ++k) {
            const auto idx = base + k * v.inner;
            dot += up[idx] * y[idx];
          }
          for (std::size_t k = 0; k < v.extent; ++k) {
            const auto idx = base + k * v.inner;
            g[idx] += y[idx] * (up[idx] - dot);
          }
        }
    });
  }
  return result;
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  require_defined(x, "log_softmax");
  require(axis < x.rank(), "log_softmax", "axis out of range");
  check_finite_input(x, "log_softmax");
  const auto v = axis_view(x.shape(), axis);
  std::vector<double> out(x.numel());
  const auto d = x.data();
  for (std::size_t a = 0; a < v.outer; ++a)
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = a * v.extent * v.inner + in;
      double mx = d[base];
      for (std::size_t k = 1; k < v.extent; ++k) mx = std::max(mx, d[base + k * v.inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < v.extent; ++k) total += std::exp(d[base + k * v.inner] - mx);
      const double lse = mx + std::log(total);
      for (std::size_t k = 0; k < v.extent; ++k) out[base + k * v.inner] = d[base + k * v.inner] - lse;
    }
  const bool track = tracking({&x});
  auto result = finish("log_softmax", x.shape(), x.dtype(), std::move(out), track);
  if (track) {
    record([o = result.impl(), xi = x.impl(), v] {
      if (o->grad.empty()) return;
      auto& g = grad_of(*xi);
      const auto& up = o->grad;
      for (std::size_t a = 0; a < v.outer; ++a)
        for (std::size_t in = 0; in < v.inner; ++in) {
          const std::size_t base = a * v.extent * v.inner + in;
          double total = 0.0;
          for (std::size_t k = 0; k < v.extent; ++k) total += up[base + k * v.inner];
          for (std::size_t k = 0; k < v.extent; ++k) {
            const auto idx = base + k * v.inner;
            g[idx] += up[idx] - std::exp(o->data[idx]) * total;
          }
        }
    });
  }
  return result;
}

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                            std::size_t pad) {
  if (stride == 0) throw NumericError("conv2d: stride must be positive");
  if (in + 2 * pad < kernel) {
    throw NumericError("conv2d: kernel " + std::to_string(kernel) + " exceeds padded extent " +
                       std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              Conv2dOptions opt) {
  require_defined(input, "conv2d");
  require_defined(kernels, "conv2d");
  require(input.rank() == 3, "conv2d", "input must be [C x H x W]");
  require(kernels.rank() == 4, "conv2d", "kernels must be [C_out x C_in x kh x kw]");
  const auto cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const auto cout = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  require(kernels.dim(1) == cin, "conv2d",
          "kernel channels " + std::to_string(kernels.dim(1)) + " != input channels " +
              std::to_string(cin));
  if (bias.defined()) {
    require(bias.rank() == 1 && bias.dim(0) == cout, "conv2d", "bias must be [C_out]");
  }
  const auto oh = conv_out_extent(h, kh, opt.stride_h, opt.pad_h);
  const auto ow = conv_out_extent(w, kw, opt.stride_w, opt.pad_w);

  // Valid output column range for a given kernel column, so the inner loop
  // needs no bounds checks.
  auto col_range = [&](std::size_t kx, std::size_t& lo, std::size_t& hi) {
    // input column = ox*sw + kx - pw must lie in [0, w)
    lo = 0;
    while (lo < ow && lo * opt.stride_w + kx < opt.pad_w) ++lo;
    hi = lo;
    while (hi < ow && hi * opt.stride_w + kx - opt.pad_w < w) ++hi;
  };
  std::vector<std::size_t> col_lo(kw), col_hi(kw);
  for (std::size_t kx = 0; kx < kw; ++kx) col_range(kx, col_lo[kx], col_hi[kx]);

  const auto in = input.data();
  const auto kd = kernels.data();
  std::vector<double> out(cout * oh * ow, 0.0);
  for (std::size_t co = 0; co < cout; ++co) {
    double* oplane = &out[co * oh * ow];
    if (bias.defined()) std::fill(oplane, oplane + oh * ow, bias[co]);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* iplane = &in[ci * h * w];
      for (std::size_t ky = 0; ky < kh; ++ky)
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const double kv = kd[((co * cin + ci) * kh + ky) * kw + kx];
          if (kv == 0.0) continue;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const std::size_t iy_p = oy * opt.stride_h + ky;
            if (iy_p < opt.pad_h || iy_p - opt.pad_h >= h) continue;
            const double* irow = iplane + (iy_p - opt.pad_h) * w;
            double* __restrict orow = oplane + oy * ow;
            if (opt.stride_w == 1) {
              const std::size_t lo = col_lo[kx], n = col_hi[kx] - lo;
              const double* __restrict src = irow + lo + kx - opt.pad_w;
              double* __restrict dst = orow + lo;
              for (std::size_t j = 0; j < n; ++j) dst[j] += kv * src[j];
            } else {
              for (std::size_t ox = col_lo[kx]; ox < col_hi[kx]; ++ox)
                orow[ox] += kv * irow[ox * opt.stride_w + kx - opt.pad_w];
            }
          }
        }
    }
  }
  const bool track = tracking({&input, &kernels, &bias});
  auto result = finish("conv2d", {cout, oh, ow}, result_dtype({&input, &kernels, &bias}),
                       std::move(out), track);
  if (track) {
    record([o = result.impl(), ii = input.impl(), ki = kernels.impl(), bi = bias.impl(), opt, cin,
            h, w, cout, kh, kw, oh, ow, col_lo, col_hi] {
      if (o->grad.empty()) return;
      const auto& g = o->grad;
      const bool gi = wants_grad(ii), gk = wants_grad(ki);
      std::vector<double>* gin = gi ? &grad_of(*ii) : nullptr;
      std::vector<double>* gker = gk ? &grad_of(*ki) : nullptr;
      for (std::size_t co = 0; co < cout; ++co) {
        const double* gplane = &g[co * oh * ow];
        for (std::size_t ci = 0; ci < cin; ++ci) {
          for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::size_t kidx = ((co * cin + ci) * kh + ky) * kw + kx;
              const double kv = ki->data[kidx];
              double ksum = 0.0;
              for (std::size_t oy = 0; oy < oh; ++oy) {
                const std::size_t iy_p = oy * opt.stride_h + ky;
                if (iy_p < opt.pad_h || iy_p - opt.pad_h >= h) continue;
                const std::size_t sw = opt.stride_w, lo = col_lo[kx], n = col_hi[kx] - lo;
                const std::size_t first = ci * h * w + (iy_p - opt.pad_h) * w + lo * sw + kx - opt.pad_w;
                const double* __restrict grow = gplane + oy * ow + lo;
                const double* __restrict xin = ii->data.data() + first;
                if (gi) {
                  double* __restrict gx = gin->data() + first;
                  for (std::size_t j = 0; j < n; ++j) gx[j * sw] += grow[j] * kv;
                }
                if (gk) {
                  for (std::size_t j = 0; j < n; ++j) ksum += grow[j] * xin[j * sw];
                }
              }
              if (gk) (*gker)[kidx] += ksum;
            }
        }
      }
      if (wants_grad(bi)) {
        auto& gb = grad_of(*bi);
        for (std::size_t co = 0; co < cout; ++co) {
          double s = 0.0;
          for (std::size_t j = 0; j < oh * ow; ++j) s += g[co * oh * ow + j];
          gb[co] += s;
        }
      }
    });
  }
  return result;
}

Tensor avg_pool2d(const Tensor& input, std::size_t kh, std::size_t kw, std::size_t sh,
                  std::size_t sw) {
  require_defined(input, "avg_pool2d");
  require(input.rank() == 3, "avg_pool2d", "input must be [C x H x W]");
  require(kh > 0 && kw > 0, "avg_pool2d", "window must be positive");
  const auto c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const auto oh = conv_out_extent(h, kh, sh, 0);
  const auto ow = conv_out_extent(w, kw, sw, 0);
  const double inv = 1.0 / static_cast<double>(kh * kw);
  std::vector<double> out(c * oh * ow, 0.0);
  const auto d = input.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double s = 0.0;
        for (std::size_t ky = 0; ky < kh; ++ky)
          for (std::size_t kx = 0; kx < kw; ++kx)
            s += d[(ch * h + oy * sh + ky) * w + ox * sw + kx];
        out[(ch * oh + oy) * ow + ox] = s * inv;
      }
  const bool track = tracking({&input});
  auto result = finish("avg_pool2d", {c, oh, ow}, input.dtype(), std::move(out), track);
  if (track) {
    record([o = result.impl(), ii = input.impl(), c, h, w, oh, ow, kh, kw, sh, sw, inv] {
      if (o->grad.empty()) return;
      auto& g = grad_of(*ii);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t oy = 0; oy < oh; ++oy)
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const double up = o->grad[(ch * oh + oy) * ow + ox] * inv;
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx)
                g[(ch * h + oy * sh + ky) * w + ox * sw + kx] += up;
          }
    });
  }
  return result;
}

Tensor global_avg_pool(const Tensor& input) {
  require_defined(input, "global_avg_pool");
  require(input.rank() == 3, "global_avg_pool", "input must be [C x H x W]");
  const auto c = input.dim(0), plane = input.dim(1) * input.dim(2);
  std::vector<double> out(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t j = 0; j < plane; ++j) s += input[ch * plane + j];
    out[ch] = s / static_cast<double>(plane);
  }
  const bool track = tracking({&input});
  auto result = finish("global_avg_pool", {c}, input.dtype(), std::move(out), track);
  if (track) {
    record([o = result.impl(), ii = input.impl(), c, plane] {
      if (o->grad.empty()) return;
      auto& g = grad_of(*ii);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double up = o->grad[ch] / static_cast<double>(plane);
        for (std::size_t j = 0; j < plane; ++j) g[ch * plane + j] += up;
      }
    });
  }
  return result;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  require(!parts.empty(), "concat", "no inputs");
  for (const auto& p : parts) require_defined(p, "concat");
  const auto& first = parts.front().shape();
  require(axis < first.size(), "concat", "axis out of range");
  Shape shape = first;
  shape[axis] = 0;
  DType dtype = DType::f32;
  bool track = false;
  for (const auto& p : parts) {
    require(p.rank() == first.size(), "concat", "rank mismatch");
    for (std::size_t i = 0; i < first.size(); ++i) {
      require(i == axis || p.dim(i) == first[i], "concat",
              "extent mismatch " + shape_string(p.shape()) + " vs " + shape_string(first));
    }
    shape[axis] += p.dim(axis);
    dtype = promote(dtype, p.dtype());
    track = track || tracking({&p});
  }
  const auto v = axis_view(shape, axis);
  std::vector<double> out(shape_numel(shape));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto ext = p.dim(axis);
    for (std::size_t a = 0; a < v.outer; ++a)
      for (std::size_t k = 0; k < ext; ++k)
        for (std::size_t in = 0; in < v.inner; ++in)
          out[(a * v.extent + offset + k) * v.inner + in] = p[(a * ext + k) * v.inner + in];
    offset += ext;
  }
  auto result = finish("concat", shape, dtype, std::move(out), track);
  if (track) {
    std::vector<ImplPtr> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    record([o = result.impl(), impls, axis, v] {
      if (o->grad.empty()) return;
      std::size_t offset = 0;
      for (const auto& pi : impls) {
        const auto ext = pi->shape[axis];
        if (wants_grad(pi)) {
          auto& g = grad_of(*pi);
          for (std::size_t a = 0; a < v.outer; ++a)
            for (std::size_t k = 0; k < ext; ++k)
              for (std::size_t in = 0; in < v.inner; ++in)
                g[(a * ext + k) * v.inner + in] += o->grad[(a * v.extent + offset + k) * v.inner + in];
        }
        offset += ext;
      }
    });
  }
  return result;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  require_defined(x, "slice");
  require(axis < x.rank(), "slice", "axis out of range");
  require(length > 0 && start + length <= x.dim(axis), "slice", "range out of bounds");
  const auto v = axis_view(x.shape(), axis);
  Shape shape = x.shape();
  shape[axis] = length;
  std::vector<double> out(shape_numel(shape));
  for (std::size_t a = 0; a < v.outer; ++a)
    for (std::size_t k = 0; k < length; ++k)
      for (std::size_t in = 0; in < v.inner; ++in)
        out[(a * length + k) * v.inner + in] = x[(a * v.extent + start + k) * v.inner + in];
  const bool track = tracking({&x});
  auto result = finish("slice", shape, x.dtype(), std::move(out), track);
  if (track) {
    record([o = result.impl(), xi = x.impl(), v, start, length] {
      if (o->grad.empty()) return;
      auto& g = grad_of(*xi);
      for (std::size_t a = 0; a < v.outer; ++a)
        for (std::size_t k = 0; k < length; ++k)
          for (std::size_t in = 0; in < v.inner; ++in)
            g[(a * v.extent + start + k) * v.inner + in] += o->grad[(a * length + k) * v.inner + in];
    });
  }
  return result;
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  require(shape_numel(shape) == x.numel(), "reshape",
          shape_string(x.shape()) + " cannot become " + shape_string(shape));
  const bool track = tracking({&x});
  auto result = finish("reshape", std::move(shape), x.dtype(), x.to_vector(), track);
  if (track) {
    record([o = result.impl(), xi = x.impl()] {
      if (o->grad.empty()) return;
      auto& g = grad_of(*xi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
    });
  }
  return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_defined(x, "layer_norm");
  require_defined(gamma, "layer_norm");
  require_defined(beta, "layer_norm");
  require(x.rank() == 2, "layer_norm", "input must be [L x D]");
  const auto rows = x.dim(0), d = x.dim(1);
  require(gamma.shape() == Shape{d} && beta.shape() == Shape{d}, "layer_norm",
          "gamma/beta must be [D]");
  std::vector<double> out(rows * d), xhat(rows * d), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += x[r * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (x[r * d + j] - mu) * (x[r * d + j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (x[r * d + j] - mu) * inv_std[r];
      out[r * d + j] = gamma[j] * xhat[r * d + j] + beta[j];
    }
  }
  const bool track = tracking({&x, &gamma, &beta});
  auto result = finish("layer_norm", x.shape(), result_dtype({&x, &gamma, &beta}),
                       std::move(out), track);
  if (track) {
    record([o = result.impl(), xi = x.impl(), gi = gamma.impl(), bi = beta.impl(),
            xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d] {
      if (o->grad.empty()) return;
      const auto& up = o->grad;
      if (wants_grad(gi)) {
        auto& gg = grad_of(*gi);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) gg[j] += up[r * d + j] * xhat[r * d + j];
      }
      if (wants_grad(bi)) {
        auto& gb = grad_of(*bi);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) gb[j] += up[r * d + j];
      }
      if (wants_grad(xi)) {
        auto& gx = grad_of(*xi);
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_dh = 0.0, mean_dh_xh = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = up[r * d + j] * gi->data[j];
            mean_dh += dh;
            mean_dh_xh += dh * xhat[r * d + j];
          }
          mean_dh *= inv_d;
          mean_dh_xh *= inv_d;
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = up[r * d + j] * gi->data[j];
            gx[r * d + j] += inv_std[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_xh);
          }
        }
      }
    });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  double s = 0.0;
  for (double v : x.data()) s += v;
  const bool track = tracking({&x});
  auto result = finish("sum", {1}, x.dtype(), {s}, track);
  if (track) {
    record([o = result.impl(), xi = x.impl()] {
      if (o->grad.empty()) return;
      auto& g = grad_of(*xi);
      for (auto& v : g) v += o->grad[0];
    });
  }
  return result;
}

Tensor mean(const Tensor& x, std::size_t axis) {
  require_defined(x, "mean");
  require(axis < x.rank(), "mean", "axis out of range");
  const auto v = axis_view(x.shape(), axis);
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (shape.empty()) shape = {1};
  std::vector<double> out(v.outer * v.inner, 0.0);
  for (std::size_t a = 0; a < v.outer; ++a)
    for (std::size_t in = 0; in < v.inner; ++in) {
      double s = 0.0;
      for (std::size_t k = 0; k < v.extent; ++k) s += x[(a * v.extent + k) * v.inner + in];
      out[a * v.inner + in] = s / static_cast<double>(v.extent);
    }
  const bool track = tracking({&x});
  auto result = finish("mean", shape, x.dtype(), std::move(out), track);
  if (track) {
    record([o = result.impl(), xi = x.impl(), v] {
      if (o->grad.empty()) return;
      auto& g = grad_of(*xi);
      for (std::size_t a = 0; a < v.outer; ++a)
        for (std::size_t in = 0; in < v.inner; ++in) {
          const double up = o->grad[a * v.inner + in] / static_cast<double>(v.extent);
          for (std::size_t k = 0; k < v.extent; ++k) g[(a * v.extent + k) * v.inner + in] += up;
        }
    });
  }
  return result;
}

Tensor element(const Tensor& x, std::size_t index) {
  require_defined(x, "element");
  require(index < x.numel(), "element", "index out of range");
  const bool track = tracking({&x});
  auto result = finish("element", {1}, x.dtype(), {x[index]}, track);
  if (track) {
    record([o = result.impl(), xi = x.impl(), index] {
      if (o->grad.empty()) return;
      grad_of(*xi)[index] += o->grad[0];
    });
  }
  return result;
}

Tensor custom_unary(const Tensor& x, const UnaryForward& forward, const UnaryBackward& backward,
                    const std::string& name) {
  require_defined(x, name);
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(x[i]);
  const bool track = tracking({&x});
  auto result = finish(name, x.shape(), x.dtype(), std::move(out), track);
  if (track) {
    record([o = result.impl(), xi = x.impl(), backward, name] {
      if (o->grad.empty()) return;
      const auto dx = backward(xi->data, o->data, o->grad);
      if (dx.size() != xi->data.size()) throw NumericError(name + ": adjoint size mismatch");
      auto& g = grad_of(*xi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dx[i];
    });
  }
  return result;
}

}  // namespace gcsich::num
