#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "spikecomp/network.hpp"

namespace spikecomp {

/// buffer <- momentum * buffer + grad; param <- param - lr * buffer
void momentum_update(std::span<double> param, std::span<const double> grad, std::span<double> buffer, double lr,
                     double momentum);

struct AdamHyper {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected adaptive-moment step; `step` is the 1-based update count.
void adaptive_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                     const AdamHyper& hyper, std::size_t step);

/// SGD with momentum over a fixed list of named tensors.
class MomentumOptimizer {
 public:
  MomentumOptimizer(std::vector<NamedTensor> params, double lr, double momentum);

  /// Applies one update from the accumulated gradients, then zeroes them.
  void step();
  void zero_grad();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  const std::vector<NamedTensor>& params() const { return params_; }
  /// Momentum buffers named "<param>.momentum".
  std::vector<NamedTensor> state() const;

 private:
  std::vector<NamedTensor> params_;
  std::vector<Tensor> buffers_;
  double lr_;
  double momentum_;
};

class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<NamedTensor> params, AdamHyper hyper);

  void step();
  void zero_grad();
  void set_lr(double lr) { hyper_.lr = lr; }
  double lr() const { return hyper_.lr; }
  std::size_t steps() const { return steps_; }
  void set_steps(std::size_t steps) { steps_ = steps; }

  const std::vector<NamedTensor>& params() const { return params_; }
  /// Moment buffers named "<param>.adam_m" and "<param>.adam_v".
  std::vector<NamedTensor> state() const;

 private:
  std::vector<NamedTensor> params_;
  std::vector<Tensor> m_, v_;
  AdamHyper hyper_;
  std::size_t steps_ = 0;
};

/// Cosine annealing from base_lr to 0 over total_steps.
double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps);

}  // namespace spikecomp
