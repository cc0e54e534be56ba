#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "spikecomp/tensor.hpp"

namespace spikecomp {

struct NeuronParams {
  double tau_decay = 0.2;
  double v_th = 0.5;
  double v_reset = 0.0;  // realized by the multiplicative reset, kept for the record
  double surrogate_temperature = 3.0;

  /// Throws std::invalid_argument unless 0 <= tau_decay < 1, v_th > 0, b > 0.
  void validate() const;
};

/// Membrane potential and last emitted spikes of one neuron population.
struct LIFState {
  Tensor u;
  Tensor y_prev;

  static LIFState zeros(const Shape& shape);
};

struct LIFStep {
  LIFState state;
  Tensor spikes;
};

/// One LIF update: u = tau * u_prev * (1 - y_prev) + input, spikes = [u >= v_th].
/// The reset factor is treated as a constant in the backward pass.
LIFStep lif_step(const LIFState& state, const Tensor& input, const NeuronParams& params);

/// Dspike derivative b(1 - tanh^2(b(u - v_th))) / (2 tanh(b/2)) on the unit-width
/// window |u - v_th| <= 1/2, zero outside. Integrates to exactly 1 over the window.
double dspike_surrogate_factor(double u, const NeuronParams& params);
Tensor dspike_surrogate_factor(const Tensor& u, const NeuronParams& params);

/// Heaviside spike generation whose backward rule is the Dspike factor.
Tensor spike(const Tensor& u, const NeuronParams& params);

struct LayerSpikeStats {
  std::string name;
  std::size_t neurons = 0;  // per sample
  std::size_t samples = 0;
  std::vector<std::uint64_t> spikes;  // per timestep, summed over samples

  /// Average spikes per neuron at timestep t (0-based).
  double rate(std::size_t t) const;
};

struct SpikeStats {
  std::vector<LayerSpikeStats> layers;

  const LayerSpikeStats* find(const std::string& name) const;
};

/// Runs a time-major current sequence (T*N, ...) through one LIF population,
/// starting from u = 0, y_prev = 0. Returns spikes in the same layout.
Tensor lif_sequence(const Tensor& currents, std::size_t timesteps, const NeuronParams& params,
                    SpikeStats* stats = nullptr, const std::string& name = "lif");

/// Fully connected spiking stack used for small experiments: every layer is
/// weights followed by LIF, and the readout is the last layer's input current.
struct DenseSpikingNet {
  std::vector<Tensor> weights;  // (out, in) per layer; the last one is the readout
  NeuronParams params;

  /// inputs (T*N, F) -> readout currents (T*N, K)
  Tensor forward_sequence(const Tensor& inputs, std::size_t timesteps, SpikeStats* stats) const;
};

struct TemporalOutput {
  std::vector<Tensor> outputs;  // O(t), one (N, K) tensor per timestep
  SpikeStats stats;
};

/// Unrolls `net` over T timesteps. `inputs` is time-major with T*N rows.
template <class Net>
TemporalOutput run_temporal(const Net& net, const Tensor& inputs, std::size_t timesteps);

Tensor split_timestep(const Tensor& sequence, std::size_t timesteps, std::size_t t);

template <class Net>
TemporalOutput run_temporal(const Net& net, const Tensor& inputs, std::size_t timesteps) {
  if (timesteps == 0) throw std::invalid_argument("run_temporal: T must be at least 1");
  TemporalOutput result;
  Tensor logits = net.forward_sequence(inputs, timesteps, &result.stats);
  for (std::size_t t = 0; t < timesteps; ++t) result.outputs.push_back(split_timestep(logits, timesteps, t));
  return result;
}

}  // namespace spikecomp
