#include "gcsich/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gcsich::num {

namespace {
thread_local GradTape* g_active_tape = nullptr;

std::shared_ptr<detail::TensorImpl> make_impl(Shape shape, DType dtype, bool requires_grad) {
  for (auto e : shape) {
    if (e == 0) throw NumericError("tensor: zero extent in shape " + shape_string(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.assign(shape_numel(shape), 0.0);
  impl->shape = std::move(shape);
  impl->dtype = dtype;
  impl->requires_grad = requires_grad;
  return impl;
}
}  // namespace

std::string to_string(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

double round_to(DType dtype, double v) {
  return dtype == DType::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

DType promote(DType a, DType b) {
  return (a == DType::f64 || b == DType::f64) ? DType::f64 : DType::f32;
}

Tensor Tensor::zeros(Shape shape, DType dtype, bool requires_grad) {
  return Tensor(make_impl(std::move(shape), dtype, requires_grad));
}

Tensor Tensor::full(Shape shape, double value, DType dtype, bool requires_grad) {
  auto impl = make_impl(std::move(shape), dtype, requires_grad);
  std::fill(impl->data.begin(), impl->data.end(), round_to(dtype, value));
  return Tensor(impl);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, DType dtype, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw NumericError("tensor: shape " + shape_string(shape) + " does not match " +
                       std::to_string(values.size()) + " values");
  }
  auto impl = make_impl(std::move(shape), dtype, requires_grad);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw NumericError("tensor: non-finite input value");
    impl->data[i] = round_to(dtype, values[i]);
  }
  return Tensor(impl);
}

Tensor Tensor::scalar(double value, DType dtype, bool requires_grad) {
  return from({1}, {value}, dtype, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw NumericError("tensor: axis out of range");
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }
DType Tensor::dtype() const { return impl_->dtype; }
std::span<const double> Tensor::data() const { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) throw NumericError("item: tensor has " + std::to_string(numel()) + " elements");
  return impl_->data[0];
}

std::vector<double> Tensor::to_vector() const { return impl_->data; }

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool on) { impl_->requires_grad = on; }

std::span<const double> Tensor::grad() const {
  if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }

void Tensor::assign(std::span<const double> values) {
  if (values.size() != numel()) throw NumericError("assign: size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw NumericError("assign: non-finite value");
    impl_->data[i] = round_to(impl_->dtype, values[i]);
  }
}

void Tensor::set(std::size_t i, double value) {
  if (!std::isfinite(value)) throw NumericError("set: non-finite value");
  impl_->data.at(i) = round_to(impl_->dtype, value);
}

Tensor Tensor::clone(bool requires_grad) const { return to(dtype(), requires_grad); }

Tensor Tensor::to(DType target, bool requires_grad) const {
  auto impl = make_impl(shape(), target, requires_grad);
  for (std::size_t i = 0; i < numel(); ++i) impl->data[i] = round_to(target, impl_->data[i]);
  return Tensor(impl);
}

GradTape::GradTape() : previous_(g_active_tape) { g_active_tape = this; }

GradTape::~GradTape() { g_active_tape = previous_; }

GradTape* GradTape::active() { return g_active_tape; }

void GradTape::record(std::function<void()> adjoint) { adjoints_.push_back(std::move(adjoint)); }

void GradTape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw NumericError("backward: loss must be a single-element tensor");
  }
  auto impl = loss.impl();
  if (impl->grad.size() != 1) impl->grad.assign(1, 0.0);
  impl->grad[0] += 1.0;
  for (auto it = adjoints_.rbegin(); it != adjoints_.rend(); ++it) (*it)();
  adjoints_.clear();
}

NoGradGuard::NoGradGuard() : saved_(g_active_tape) { g_active_tape = nullptr; }
NoGradGuard::~NoGradGuard() { g_active_tape = saved_; }

void backward(const Tensor& loss) {
  auto* tape = GradTape::active();
  if (tape == nullptr) throw NumericError("backward: no active tape");
  tape->backward(loss);
}

}  // namespace gcsich::num
