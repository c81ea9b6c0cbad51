#include "gcsich/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gcsich/ops.hpp"
#include "gcsich/rng.hpp"

namespace gcsich::num {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "pass" : "FAIL") << " checked=" << checked << " failures=" << failures
     << " max_rel_error=" << max_rel_error << " worst=(input " << worst_input << ", index "
     << worst_index << ", analytic " << worst_analytic << ", numeric " << worst_numeric << ")";
  return os.str();
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                           double eps, double tol) {
  GradCheckOptions options;
  options.eps = eps;
  options.tol = tol;
  return grad_check(f, std::move(inputs), options);
}

GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& options) {
  const double tol = options.tol;
  for (const auto& t : inputs) {
    if (t.dtype() != DType::f64 || !t.requires_grad()) {
      throw NumericError("grad_check: inputs must be f64 tensors with requires_grad");
    }
  }
  std::vector<std::vector<double>> analytic;
  {
    for (auto& t : inputs) t.zero_grad();
    GradTape tape;
    const Tensor loss = f();
    tape.backward(loss);
    for (const auto& t : inputs) {
      const auto g = t.grad();
      analytic.emplace_back(g.begin(), g.end());
    }
  }

  GradCheckReport report;
  auto evaluate = [&] {
    NoGradGuard guard;
    return f().item();
  };
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto& t = inputs[ti];
    const auto values = t.to_vector();
    std::vector<std::size_t> indices(values.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (options.max_per_input != 0 && indices.size() > options.max_per_input) {
      RngStream rng(options.seed, "grad_check/" + std::to_string(ti));
      rng.shuffle(indices);
      indices.resize(options.max_per_input);
      std::sort(indices.begin(), indices.end());
    }
    for (const auto i : indices) {
      const double original = values[i];
      auto central = [&](double h) {
        t.set(i, original + h);
        const double up = evaluate();
        t.set(i, original - h);
        const double down = evaluate();
        t.set(i, original);
        return (up - down) / (2.0 * h);
      };
      double numeric = 0.0;
      if (!options.extrapolate) {
        numeric = central(options.eps);
      } else {
        // Largest step whose four stencil points stay on the relu piece of
        // the unperturbed point; f is smooth there.
        auto fingerprint_at = [&](double h) {
          t.set(i, original + h);
          ReluPatternProbe probe;
          evaluate();
          t.set(i, original);
          return probe.fingerprint();
        };
        const std::uint64_t base = fingerprint_at(0.0);
        double h = options.eps;
        while (h / 10.0 >= options.min_eps &&
               !(fingerprint_at(h) == base && fingerprint_at(-h) == base &&
                 fingerprint_at(h / 2.0) == base && fingerprint_at(-h / 2.0) == base)) {
          h /= 10.0;
        }
        numeric = (4.0 * central(h / 2.0) - central(h)) / 3.0;
      }
      const double err = relative_error(analytic[ti][i], numeric);
      ++report.checked;
      if (err > tol) ++report.failures;
      if (err >= report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_input = ti;
        report.worst_index = i;
        report.worst_analytic = analytic[ti][i];
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.failures == 0;
  return report;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double eps, double tol) {
  Tensor leaf = x.to(DType::f64, true);
  return grad_check([&] { return f(leaf); }, {leaf}, eps, tol);
}

}  // namespace gcsich::num
