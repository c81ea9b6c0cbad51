#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gcsich/gradcheck.hpp"
#include "gcsich/ops.hpp"
#include "test_support.hpp"

namespace gcsich::testing {

// One random instance generator and one op application per differentiable op.
struct OpCase {
  std::string name;
  std::function<std::vector<num::Tensor>(num::RngStream&)> make;
  std::function<num::Tensor(const std::vector<num::Tensor>&, num::RngStream&)> op;
};

inline std::vector<OpCase> op_cases() {
  using num::DType;
  using num::Tensor;
  auto dim = [](num::RngStream& r, int lo, int hi) {
    return static_cast<std::size_t>(r.between(lo, hi));
  };
  return {
      {"add",
       [&](auto& r) {
         num::Shape s{dim(r, 1, 4), dim(r, 1, 4)};
         return std::vector{random_tensor(r, s, -1, 1, DType::f64, true),
                            random_tensor(r, s, -1, 1, DType::f64, true)};
       },
       [](auto& in, auto&) { return num::add(in[0], in[1]); }},
      {"sub",
       [&](auto& r) {
         num::Shape s{dim(r, 1, 6)};
         return std::vector{random_tensor(r, s, -1, 1, DType::f64, true),
                            random_tensor(r, s, -1, 1, DType::f64, true)};
       },
       [](auto& in, auto&) { return num::sub(in[0], in[1]); }},
      {"mul",
       [&](auto& r) {
         num::Shape s{dim(r, 1, 3), dim(r, 1, 5)};
         return std::vector{random_tensor(r, s, -1, 1, DType::f64, true),
                            random_tensor(r, s, -1, 1, DType::f64, true)};
       },
       [](auto& in, auto&) { return num::mul(in[0], in[1]); }},
      {"scale",
       [&](auto& r) {
         return std::vector{random_tensor(r, {dim(r, 1, 7)}, -1, 1, DType::f64, true)};
       },
       [](auto& in, auto&) { return num::scale(in[0], -1.75); }},
      {"matmul",
       [&](auto& r) {
         auto m = dim(r, 1, 4), k = dim(r, 1, 4), n = dim(r, 1, 4);
         return std::vector{random_tensor(r, {m, k}, -1, 1, DType::f64, true),
                            random_tensor(r, {k, n}, -1, 1, DType::f64, true)};
       },
       [](auto& in, auto&) { return num::matmul(in[0], in[1]); }},
      {"transpose",
       [&](auto& r) {
         return std::vector{
             random_tensor(r, {dim(r, 1, 4), dim(r, 1, 4)}, -1, 1, DType::f64, true)};
       },
       [](auto& in, auto&) { return num::transpose(in[0]); }},
      {"linear",
       [&](auto& r) {
         auto m = dim(r, 1, 5), n = dim(r, 1, 5);
         return std::vector{random_tensor(r, {n}, -1, 1, DType::f64, true),
                            random_tensor(r, {m, n}, -1, 1, DType::f64, true),
                            random_tensor(r, {m}, -1, 1, DType::f64, true)};
       },
       [](auto& in, auto&) { return num::linear(in[0], in[1], in[2]); }},
      {"relu",
       [&](auto& r) {
         return std::vector{random_away_from_zero(r, {dim(r, 1, 8)})};
       },
       [](auto& in, auto&) { return num::relu(in[0]); }},
      {"dropout",
       [&](auto& r) {
         return std::vector{random_tensor(r, {dim(r, 2, 8)}, -1, 1, DType::f64, true)};
       },
       [](auto& in, auto& r) {
         auto stream = r.child("mask");
         return num::dropout(in[0], 0.3, num::Mode::train, stream);
       }},
      {"softmax",
       [&](auto& r) {
         return std::vector{
             random_tensor(r, {dim(r, 1, 4), dim(r, 2, 5)}, -2, 2, DType::f64, true)};
       },
       [](auto& in, auto&) { return num::softmax(in[0], 1); }},
      {"softmax axis0",
       [&](auto& r) {
         return std::vector{
             random_tensor(r, {dim(r, 2, 4), dim(r, 1, 3)}, -2, 2, DType::f64, true)};
       },
       [](auto& in, auto&) { return num::softmax(in[0], 0); }},
      {"log_softmax",
       [&](auto& r) {
         return std::vector{random_tensor(r, {dim(r, 2, 6)}, -3, 3, DType::f64, true)};
       },
       [](auto& in, auto&) { return num::log_softmax(in[0], 0); }},
      {"conv2d",
       [&](auto& r) {
         auto cin = dim(r, 1, 3), cout = dim(r, 1, 3), k = dim(r, 1, 3);
         return std::vector{
             random_tensor(r, {cin, dim(r, 3, 6), dim(r, 3, 6)}, -1, 1, DType::f64, true),
             random_tensor(r, {cout, cin, k, k}, -1, 1, DType::f64, true),
             random_tensor(r, {cout}, -1, 1, DType::f64, true)};
       },
       [](auto& in, auto& r) {
         num::Conv2dOptions o;
         o.stride_h = o.stride_w = static_cast<std::size_t>(r.between(1, 2));
         o.pad_h = o.pad_w = static_cast<std::size_t>(r.between(0, 1));
         return num::conv2d(in[0], in[1], in[2], o);
       }},
      {"conv1d-shaped",
       [&](auto& r) {
         return std::vector{random_tensor(r, {2, 1, dim(r, 4, 9)}, -1, 1, DType::f64, true),
                            random_tensor(r, {3, 2, 1, 3}, -1, 1, DType::f64, true)};
       },
       [](auto& in, auto&) { return num::conv2d(in[0], in[1], Tensor{}, {1, 2, 0, 1}); }},
      {"avg_pool2d",
       [&](auto& r) {
         return std::vector{
             random_tensor(r, {dim(r, 1, 3), dim(r, 2, 6), dim(r, 2, 6)}, -1, 1, DType::f64, true)};
       },
       [](auto& in, auto&) { return num::avg_pool2d(in[0], 2, 2, 2, 2); }},
      {"global_avg_pool",
       [&](auto& r) {
         return std::vector{
             random_tensor(r, {dim(r, 1, 3), dim(r, 1, 4), dim(r, 1, 4)}, -1, 1, DType::f64, true)};
       },
       [](auto& in, auto&) { return num::global_avg_pool(in[0]); }},
      {"concat",
       [&](auto& r) {
         auto rows = dim(r, 1, 3);
         return std::vector{random_tensor(r, {rows, dim(r, 1, 4)}, -1, 1, DType::f64, true),
                            random_tensor(r, {rows, dim(r, 1, 4)}, -1, 1, DType::f64, true)};
       },
       [](auto& in, auto&) { return num::concat({in[0], in[1]}, 1); }},
      {"slice",
       [&](auto& r) {
         return std::vector{random_tensor(r, {3, dim(r, 3, 6)}, -1, 1, DType::f64, true)};
       },
       [](auto& in, auto&) { return num::slice(in[0], 1, 1, 2); }},
      {"reshape",
       [&](auto& r) {
         return std::vector{random_tensor(r, {2, dim(r, 1, 4)}, -1, 1, DType::f64, true)};
       },
       [](auto& in, auto&) { return num::reshape(in[0], {in[0].numel()}); }},
      {"layer_norm",
       [&](auto& r) {
         auto d = dim(r, 2, 6);
         return std::vector{random_tensor(r, {dim(r, 1, 3), d}, -2, 2, DType::f64, true),
                            random_tensor(r, {d}, 0.5, 1.5, DType::f64, true),
                            random_tensor(r, {d}, -1, 1, DType::f64, true)};
       },
       [](auto& in, auto&) { return num::layer_norm(in[0], in[1], in[2]); }},
      {"mean",
       [&](auto& r) {
         return std::vector{random_tensor(r, {dim(r, 1, 4), dim(r, 1, 4)}, -1, 1, DType::f64, true)};
       },
       [](auto& in, auto&) { return num::mean(in[0], 0); }},
      {"element",
       [&](auto& r) {
         return std::vector{random_tensor(r, {dim(r, 2, 5)}, -1, 1, DType::f64, true)};
       },
       [](auto& in, auto&) { return num::scale(num::element(in[0], 1), 3.0); }},
  };}

// Central-difference check of one case at one seed; the dropout mask is fixed
// by copying the op stream for every evaluation.
inline num::GradCheckReport check_op_case(const OpCase& c, std::uint64_t seed) {
  num::RngStream rng(seed, c.name);
  auto inputs = c.make(rng);
  num::RngStream op_rng(seed, c.name + "/op");
  auto f = [&] {
    auto stream = op_rng;
    return weighted_sum(c.op(inputs, stream), seed);
  };
  return num::grad_check(f, inputs, 1e-4, 1e-5);
}

}  // namespace gcsich::testing
