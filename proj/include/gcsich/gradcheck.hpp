#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gcsich/tensor.hpp"

namespace gcsich::num {

struct GradCheckReport {
  bool passed = true;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t failures = 0;
  // Location of the worst element: input number and flat index.
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  std::string summary() const;
};

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

/// Compares reverse-mode gradients of the scalar `f` with central differences
/// for every element of every tensor in `inputs`. Inputs must be f64 leaves
/// with requires_grad set; their values are perturbed in place and restored.
GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                           double eps = 1e-4, double tol = 1e-5);

struct GradCheckOptions {
  double eps = 1e-4;
  double tol = 1e-5;
  // Check at most this many elements per input, chosen without replacement
  // by a seeded stream; 0 checks every element.
  std::size_t max_per_input = 0;
  std::uint64_t seed = 0;
  // Richardson-extrapolated central differences (steps h and h/2). h starts
  // at eps and shrinks tenfold, down to min_eps, until no relu inside f
  // changes state anywhere on the stencil.
  bool extrapolate = false;
  double min_eps = 1e-7;
};

GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& options);

/// Single-input form: x is copied to an f64 leaf and passed to f.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double eps = 1e-4, double tol = 1e-5);

}  // namespace gcsich::num
