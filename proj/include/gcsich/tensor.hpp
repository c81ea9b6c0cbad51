#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gcsich::num {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

using Shape = std::vector<std::size_t>;

std::string to_string(DType dtype);
std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Raised on shape errors, non-finite values and other numeric contract
/// violations. The message always starts with the name of the failing op.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
struct TensorImpl {
  Shape shape;
  DType dtype = DType::f32;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first touched by backward
  bool requires_grad = false;
};
}  // namespace detail

// Dense row-major tensor. Values are held as double; a tensor tagged f32 has
// every stored value rounded to the nearest float, so f32 tensors behave as
// single precision storage with double accumulation inside ops.
//
// Copies are shallow: two Tensor handles may share one buffer. Data is not
// modified by ops; only optimizer updates and explicit setters mutate it.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = DType::f32, bool requires_grad = false);
  static Tensor full(Shape shape, double value, DType dtype = DType::f32, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, DType dtype = DType::f32,
                     bool requires_grad = false);
  static Tensor scalar(double value, DType dtype = DType::f32, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  DType dtype() const;

  std::span<const double> data() const;
  double operator[](std::size_t i) const { return data()[i]; }
  double item() const;
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);

  // Gradient accumulated by backward. Zero-filled when nothing reached this
  // tensor; always the same length as data().
  std::span<const double> grad() const;
  void zero_grad();

  /// Overwrites the values in place (optimizer updates, checkpoint loads),
  /// rounding to the tensor's dtype.
  void assign(std::span<const double> values);
  void set(std::size_t i, double value);

  /// Deep copy detached from any tape; requires_grad as given.
  Tensor clone(bool requires_grad = false) const;
  /// Deep copy converted to `dtype`.
  Tensor to(DType dtype, bool requires_grad = false) const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

double round_to(DType dtype, double v);
DType promote(DType a, DType b);

// Record of executed ops. Constructing a tape makes it the active tape of the
// calling thread until it is destroyed; ops executed while a tape is active
// and touching a requires_grad tensor register an adjoint on it.
class GradTape {
 public:
  GradTape();
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  static GradTape* active();

  void record(std::function<void()> adjoint);
  std::size_t size() const { return adjoints_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and replays adjoints newest-first. Gradients
  /// accumulate into existing grad buffers. The tape is cleared afterwards.
  void backward(const Tensor& loss);
  void clear() { adjoints_.clear(); }

 private:
  std::vector<std::function<void()>> adjoints_;
  GradTape* previous_ = nullptr;
};

/// Suspends recording on this thread for the lifetime of the guard.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  GradTape* saved_;
};

/// backward() on the active tape. Throws if none is active or the loss is
/// not a single element.
void backward(const Tensor& loss);

}  // namespace gcsich::num
