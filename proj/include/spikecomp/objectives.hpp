#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "spikecomp/compression.hpp"
#include "spikecomp/tensor.hpp"

namespace spikecomp {

struct LossConfig {
  double lambda1 = 0.0;  // per bit of model size
  double lambda2 = 0.0;  // per bit-SynOp
  double prune_rate = 0.0;

  void validate() const;
};

/// Cost-relevant facts about one weight layer, collected during a forward pass.
struct LayerCostDescriptor {
  std::string name;
  std::size_t kernel_h = 1, kernel_w = 1;
  std::size_t in_channels = 1, out_channels = 1;
  std::size_t out_h = 1, out_w = 1;
  double prune_rate = 0.0;
  std::vector<double> rates;  // s^(t): spikes entering the layer's synapses per tap, per timestep
  bool counts_synops = true;
  Tensor edge_weight;  // softmax(alpha) of the owning conv op; undefined means 1
  Tensor bits;         // effective bit-width b_w as a scalar tensor
  std::size_t cell = std::numeric_limits<std::size_t>::max();

  double parameter_count() const {
    return static_cast<double>(kernel_h * kernel_w * in_channels * out_channels);
  }
};

/// Per-timestep fraction of (output position, kernel tap, input channel)
/// slots that carry a nonzero input, for a (T*N, C, H, W) layer input.
/// Padding taps count as silent.
std::vector<double> synaptic_input_rates(const Tensor& input, std::size_t timesteps, const ConvGeometry& geometry);

/// S = sum_t w_t * sum_{t' <= t} s^(t'), with w a normalized weight vector.
double timestep_weighted_rate(std::span<const double> rates, std::span<const double> weights);
Tensor timestep_weighted_rate(std::span<const double> rates, const Tensor& weights);
/// Same with w = softmax(psi).
double weighted_spike_rate(std::span<const double> rates, std::span<const double> psi);
Tensor weighted_spike_rate(std::span<const double> rates, const Tensor& psi);

/// (1 - p/100) k_h k_w C_in C_out H W S
double synops(const LayerCostDescriptor& layer, double spike_rate);
Tensor synops(const LayerCostDescriptor& layer, const Tensor& spike_rate);

/// b_w = sum_j softmax(beta)_j B_j
double effective_bitwidth(std::span<const double> beta, std::span<const int> bits);
Tensor effective_bitwidth(const Tensor& beta, std::span<const int> bits);

/// Model size in bits: sum of b_w k_h k_w C_in C_out (1 - p/100), each term
/// scaled by its edge weight when one is attached.
Tensor loss_mem(std::span<const LayerCostDescriptor> layers);

/// bit-SynOps: sum of b_w * SynOps. With psi defined, each layer's S is the
/// psi-weighted prefix sum of its rates; otherwise S = sum of all rates.
Tensor loss_comp(std::span<const LayerCostDescriptor> layers, const Tensor& psi);

double loss_comp(double bitwidth, double synops_value);

/// CE((1/T) sum_t O(t), y) on time-major logits (T*N, K).
Tensor averaged_ce(const Tensor& logits, std::span<const int> labels, std::size_t timesteps);

/// Per-t prefix-averaged cross-entropies CE^(t), t = 1..T, as a 1-D tensor.
Tensor prefix_ce(const Tensor& logits, std::span<const int> labels, std::size_t timesteps);

/// sum_t softmax(psi)_t CE^(t)
Tensor weighted_ce(const Tensor& logits, std::span<const int> labels, std::size_t timesteps, const Tensor& psi);

Tensor total_loss(const Tensor& ce, const Tensor& mem, const Tensor& comp, const LossConfig& cfg);
double total_loss(double ce, double mem, double comp, const LossConfig& cfg);

}  // namespace spikecomp
