#include "spikecomp/neuron.hpp"

#include <cmath>

#include "spikecomp/ops.hpp"

namespace spikecomp {

void NeuronParams::validate() const {
  if (!(tau_decay >= 0.0 && tau_decay < 1.0)) throw std::invalid_argument("tau_decay must lie in [0, 1)");
  if (!(v_th > 0.0)) throw std::invalid_argument("v_th must be positive");
  if (!(surrogate_temperature > 0.0)) throw std::invalid_argument("surrogate temperature must be positive");
}

LIFState LIFState::zeros(const Shape& shape) { return {Tensor::zeros(shape), Tensor::zeros(shape)}; }

double dspike_surrogate_factor(double u, const NeuronParams& params) {
  const double b = params.surrogate_temperature;
  const double x = u - params.v_th;
  if (std::abs(x) > 0.5) return 0.0;
  const double th = std::tanh(b * x);
  return b * (1.0 - th * th) / (2.0 * std::tanh(b / 2.0));
}

Tensor dspike_surrogate_factor(const Tensor& u, const NeuronParams& params) {
  Tensor out(u.shape());
  auto src = u.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = dspike_surrogate_factor(src[i], params);
  return out;
}

Tensor spike(const Tensor& u, const NeuronParams& params) {
  Tensor y = heaviside(u, params.v_th);
  if (y.grad_fn()) {
    register_custom_gradient(y, [params](std::span<const double> g, std::span<const Tensor> inputs) {
      auto uv = inputs[0].data();
      std::vector<double> gu(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) gu[i] = g[i] * dspike_surrogate_factor(uv[i], params);
      return std::vector<std::vector<double>>{std::move(gu)};
    });
  }
  return y;
}

LIFStep lif_step(const LIFState& state, const Tensor& input, const NeuronParams& params) {
  if (state.u.shape() != input.shape() || state.y_prev.shape() != input.shape()) {
    throw ShapeError("lif_step: state " + shape_str(state.u.shape()) + " vs input " + shape_str(input.shape()));
  }
  Tensor keep = rsub_scalar(1.0, state.y_prev.detach());
  Tensor carry = mul_scalar(mul(state.u, keep), params.tau_decay);
  Tensor u = add(carry, input);
  Tensor y = spike(u, params);
  return {LIFState{u, y}, y};
}

double LayerSpikeStats::rate(std::size_t t) const {
  if (neurons == 0 || samples == 0) return 0.0;
  return static_cast<double>(spikes.at(t)) / static_cast<double>(neurons * samples);
}

const LayerSpikeStats* SpikeStats::find(const std::string& name) const {
  for (const auto& l : layers) {
    if (l.name == name) return &l;
  }
  return nullptr;
}

Tensor lif_sequence(const Tensor& currents, std::size_t timesteps, const NeuronParams& params,
                    SpikeStats* stats, const std::string& name) {
  if (timesteps == 0) throw std::invalid_argument("lif_sequence: T must be at least 1");
  if (currents.ndim() == 0 || currents.dim(0) % timesteps != 0) {
    throw ShapeError("lif_sequence: leading axis of " + shape_str(currents.shape()) + " not divisible by T=" +
                     std::to_string(timesteps));
  }
  const std::size_t batch = currents.dim(0) / timesteps;
  Shape step_shape = currents.shape();
  step_shape[0] = batch;

  LayerSpikeStats rec;
  rec.name = name;
  rec.samples = batch;
  rec.neurons = numel(step_shape) / batch;

  LIFState state = LIFState::zeros(step_shape);
  std::vector<Tensor> outs;
  outs.reserve(timesteps);
  for (std::size_t t = 0; t < timesteps; ++t) {
    Tensor input = timesteps == 1 ? currents : slice_rows(currents, t * batch, (t + 1) * batch);
    LIFStep step = lif_step(state, input, params);
    state = std::move(step.state);
    if (stats) {
      std::uint64_t count = 0;
      for (double v : step.spikes.data()) count += v != 0.0;
      rec.spikes.push_back(count);
    }
    outs.push_back(std::move(step.spikes));
  }
  if (stats) stats->layers.push_back(std::move(rec));
  return timesteps == 1 ? outs[0] : concat(outs, 0);
}

Tensor split_timestep(const Tensor& sequence, std::size_t timesteps, std::size_t t) {
  const std::size_t batch = sequence.dim(0) / timesteps;
  return slice_rows(sequence, t * batch, (t + 1) * batch);
}

Tensor DenseSpikingNet::forward_sequence(const Tensor& inputs, std::size_t timesteps, SpikeStats* stats) const {
  if (weights.empty()) throw std::invalid_argument("DenseSpikingNet: no layers");
  Tensor x = inputs;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Tensor bias = Tensor::zeros({weights[l].dim(0)});
    Tensor current = linear(x, weights[l], bias);
    if (l + 1 == weights.size()) return current;
    x = lif_sequence(current, timesteps, params, stats, "layer" + std::to_string(l));
  }
  return x;
}

}  // namespace spikecomp
