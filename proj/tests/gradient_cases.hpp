#pragma once

#include <functional>
#include <random>
#include <vector>

#include "spikecomp/ops.hpp"
#include "test_util.hpp"

namespace spikecomp::testing_util {

/// Scalar-valued wrappers around every smooth primitive, for finite-difference checks.
struct PrimitiveCase {
  const char* name;
  Shape shape;
  std::function<Tensor(const Tensor&)> fn;
};

inline std::vector<PrimitiveCase> smooth_primitives() {
  std::mt19937_64 rng(5);
  const Tensor other = random_tensor({2, 3}, rng);
  const Tensor mat = random_tensor({3, 4}, rng);
  const Tensor kernel = random_tensor({2, 2, 3, 3}, rng);
  const Tensor image = random_tensor({2, 2, 5, 5}, rng);
  const Tensor fc_w = random_tensor({3, 4}, rng);
  const Tensor fc_b = random_tensor({3}, rng);
  const Tensor gamma = random_tensor({2}, rng, 0.5, 1.5);
  const Tensor beta = random_tensor({2}, rng);
  const std::vector<int> labels{0, 2, 1};
  return {
      {"add", {2, 3}, [=](const Tensor& x) { return project(add(x, other)); }},
      {"sub", {2, 3}, [=](const Tensor& x) { return project(sub(other, x)); }},
      {"mul", {2, 3}, [=](const Tensor& x) { return project(mul(x, other)); }},
      {"mul_self", {2, 3}, [=](const Tensor& x) { return project(mul(x, x)); }},
      {"add_scalar", {4}, [](const Tensor& x) { return project(add_scalar(x, 0.3)); }},
      {"rsub_scalar", {4}, [](const Tensor& x) { return project(rsub_scalar(2.0, x)); }},
      {"scale", {3}, [](const Tensor& x) { return project(scale(x, select(x, 1))); }},
      {"stack", {3}, [](const Tensor& x) {
         std::vector<Tensor> parts{select(x, 2), mul(select(x, 0), select(x, 1))};
         return project(stack_scalars(parts));
       }},
      {"mean", {2, 3}, [](const Tensor& x) { return mul_scalar(mean(mul(x, x)), 1.7); }},
      {"mean_axes", {2, 3, 2}, [](const Tensor& x) { return project(mean(mul(x, x), {0, 2})); }},
      {"matmul_lhs", {2, 3}, [=](const Tensor& x) { return project(matmul(x, mat)); }},
      {"matmul_rhs", {3, 4}, [=](const Tensor& x) { return project(matmul(other, x)); }},
      {"linear_x", {2, 4}, [=](const Tensor& x) { return project(linear(x, fc_w, fc_b)); }},
      {"linear_w", {3, 4}, [=](const Tensor& w) { return project(linear(mat.clone().detach(), w, fc_b)); }},
      {"conv_input", {2, 2, 5, 5}, [=](const Tensor& x) { return project(conv2d(x, kernel, 1, 1)); }},
      {"conv_weight_s2", {2, 2, 3, 3}, [=](const Tensor& w) { return project(conv2d(image, w, 2, 1)); }},
      {"concat", {2, 3}, [=](const Tensor& x) {
         std::vector<Tensor> parts{x, mul(x, other)};
         return project(concat(parts, 1));
       }},
      {"slice_reshape", {4, 3}, [](const Tensor& x) { return project(reshape(slice_rows(x, 1, 3), {3, 2})); }},
      {"softmax", {5}, [](const Tensor& x) { return project(softmax(x)); }},
      {"cross_entropy", {3, 4}, [=](const Tensor& x) { return cross_entropy(x, labels); }},
      {"batch_norm", {3, 2, 2, 2}, [=](const Tensor& x) {
         BatchNormState st{Tensor::zeros({2}), Tensor::ones({2})};
         return project(batch_norm(x, gamma, beta, st, true));
       }},
      {"global_avg_pool", {2, 2, 3, 3}, [](const Tensor& x) { return project(global_avg_pool(mul(x, x))); }},
      {"subsample_duplicate", {1, 2, 4, 4}, [](const Tensor& x) { return project(subsample_duplicate(x)); }},
  };
}

}  // namespace spikecomp::testing_util
