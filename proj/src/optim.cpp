#include "spikecomp/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace spikecomp {

void momentum_update(std::span<double> param, std::span<const double> grad, std::span<double> buffer, double lr,
                     double momentum) {
  if (param.size() != buffer.size() || (!grad.empty() && grad.size() != param.size())) {
    throw ShapeError("momentum_update: parameter, gradient and buffer sizes differ");
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.empty() ? 0.0 : grad[i];
    buffer[i] = momentum * buffer[i] + g;
    param[i] -= lr * buffer[i];
  }
}

void adaptive_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                     const AdamHyper& hyper, std::size_t step) {
  if (step == 0) throw std::invalid_argument("adaptive_update: step count starts at 1");
  if (param.size() != m.size() || param.size() != v.size() || (!grad.empty() && grad.size() != param.size())) {
    throw ShapeError("adaptive_update: parameter, gradient and moment sizes differ");
  }
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.empty() ? 0.0 : grad[i];
    m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
    v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    param[i] -= hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
  }
}

MomentumOptimizer::MomentumOptimizer(std::vector<NamedTensor> params, double lr, double momentum)
    : params_(std::move(params)), lr_(lr), momentum_(momentum) {
  for (const auto& p : params_) buffers_.push_back(Tensor::zeros(p.tensor.shape()));
}

void MomentumOptimizer::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].tensor;
    momentum_update(p.data(), p.grad_span(), buffers_[i].data(), lr_, momentum_);
  }
  zero_grad();
}

void MomentumOptimizer::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::vector<NamedTensor> MomentumOptimizer::state() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < params_.size(); ++i) out.push_back({params_[i].name + ".momentum", buffers_[i]});
  return out;
}

AdamOptimizer::AdamOptimizer(std::vector<NamedTensor> params, AdamHyper hyper)
    : params_(std::move(params)), hyper_(hyper) {
  for (const auto& p : params_) {
    m_.push_back(Tensor::zeros(p.tensor.shape()));
    v_.push_back(Tensor::zeros(p.tensor.shape()));
  }
}

void AdamOptimizer::step() {
  ++steps_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].tensor;
    adaptive_update(p.data(), p.grad_span(), m_[i].data(), v_[i].data(), hyper_, steps_);
  }
  zero_grad();
}

void AdamOptimizer::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::vector<NamedTensor> AdamOptimizer::state() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({params_[i].name + ".adam_m", m_[i]});
    out.push_back({params_[i].name + ".adam_v", v_[i]});
  }
  return out;
}

double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) return base_lr;
  const double progress = static_cast<double>(std::min(step, total_steps)) / static_cast<double>(total_steps);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace spikecomp
