#include "spikecomp/objectives.hpp"

#include <cmath>
#include <stdexcept>

#include "spikecomp/ops.hpp"

namespace spikecomp {

void LossConfig::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw std::invalid_argument("lambda1 and lambda2 must be non-negative");
  keep_count(1, prune_rate);
}

namespace {

// Number of (output index, kernel tap) pairs along one axis that read input index i.
std::vector<double> axis_coverage(std::size_t in, std::size_t out, const ConvGeometry& g) {
  std::vector<double> cov(in, 0.0);
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t k = 0; k < g.kernel; ++k) {
      const std::ptrdiff_t i = static_cast<std::ptrdiff_t>(o * g.stride + k) - static_cast<std::ptrdiff_t>(g.padding);
      if (i >= 0 && static_cast<std::size_t>(i) < in) cov[static_cast<std::size_t>(i)] += 1.0;
    }
  return cov;
}

std::vector<double> prefix_sums(std::span<const double> rates) {
  std::vector<double> out(rates.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    acc += rates[i];
    out[i] = acc;
  }
  return out;
}

}  // namespace

std::vector<double> synaptic_input_rates(const Tensor& input, std::size_t timesteps, const ConvGeometry& geometry) {
  if (input.ndim() != 4 || timesteps == 0 || input.dim(0) % timesteps != 0) {
    throw ShapeError("synaptic_input_rates: bad input " + shape_str(input.shape()));
  }
  const std::size_t batch = input.dim(0) / timesteps;
  const std::size_t c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t ho = conv_out_size(h, geometry.kernel, geometry.stride, geometry.padding);
  const std::size_t wo = conv_out_size(w, geometry.kernel, geometry.stride, geometry.padding);
  const auto cov_y = axis_coverage(h, ho, geometry);
  const auto cov_x = axis_coverage(w, wo, geometry);
  const double slots = static_cast<double>(batch * geometry.kernel * geometry.kernel * c * ho * wo);
  std::vector<double> rates(timesteps, 0.0);
  auto x = input.data();
  for (std::size_t t = 0; t < timesteps; ++t) {
    double hits = 0.0;
    for (std::size_t n = 0; n < batch * c; ++n) {
      const double* plane = x.data() + (t * batch * c + n) * h * w;
      for (std::size_t iy = 0; iy < h; ++iy)
        for (std::size_t ix = 0; ix < w; ++ix) {
          if (plane[iy * w + ix] != 0.0) hits += cov_y[iy] * cov_x[ix];
        }
    }
    rates[t] = hits / slots;
  }
  return rates;
}

double timestep_weighted_rate(std::span<const double> rates, std::span<const double> weights) {
  if (rates.size() != weights.size()) {
    throw ShapeError("weighted_spike_rate: " + std::to_string(rates.size()) + " rates for " +
                     std::to_string(weights.size()) + " timestep weights");
  }
  const auto prefix = prefix_sums(rates);
  double s = 0.0;
  for (std::size_t t = 0; t < prefix.size(); ++t) s += weights[t] * prefix[t];
  return s;
}

Tensor timestep_weighted_rate(std::span<const double> rates, const Tensor& weights) {
  if (rates.size() != weights.numel()) {
    throw ShapeError("weighted_spike_rate: " + std::to_string(rates.size()) + " rates for " +
                     std::to_string(weights.numel()) + " timestep weights");
  }
  return dot(weights, Tensor::vector(prefix_sums(rates)));
}

double weighted_spike_rate(std::span<const double> rates, std::span<const double> psi) {
  NoGradGuard no_grad;
  Tensor w = softmax(Tensor::vector(std::vector<double>(psi.begin(), psi.end())));
  return timestep_weighted_rate(rates, w.data());
}

Tensor weighted_spike_rate(std::span<const double> rates, const Tensor& psi) {
  return timestep_weighted_rate(rates, softmax(psi));
}

double synops(const LayerCostDescriptor& layer, double spike_rate) {
  return (1.0 - layer.prune_rate / 100.0) * layer.parameter_count() * static_cast<double>(layer.out_h * layer.out_w) *
         spike_rate;
}

Tensor synops(const LayerCostDescriptor& layer, const Tensor& spike_rate) {
  return mul_scalar(spike_rate, synops(layer, 1.0));
}

double effective_bitwidth(std::span<const double> beta, std::span<const int> bits) {
  NoGradGuard no_grad;
  return effective_bitwidth(Tensor::vector(std::vector<double>(beta.begin(), beta.end())), bits).item();
}

Tensor effective_bitwidth(const Tensor& beta, std::span<const int> bits) {
  if (beta.numel() != bits.size() || bits.empty()) {
    throw ShapeError("effective_bitwidth: |beta| = " + std::to_string(beta.numel()) + ", |B| = " +
                     std::to_string(bits.size()));
  }
  return dot(softmax(beta), Tensor::vector(std::vector<double>(bits.begin(), bits.end())));
}

namespace {

Tensor weighted_term(const LayerCostDescriptor& layer, Tensor term) {
  Tensor out = layer.bits.defined() ? mul(term, layer.bits) : mul_scalar(term, 32.0);
  if (layer.edge_weight.defined()) out = mul(out, layer.edge_weight);
  return out;
}

Tensor accumulate_terms(std::vector<Tensor> terms) {
  if (terms.empty()) return Tensor::scalar(0.0);
  Tensor acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

}  // namespace

Tensor loss_mem(std::span<const LayerCostDescriptor> layers) {
  std::vector<Tensor> terms;
  for (const auto& layer : layers) {
    const double size = layer.parameter_count() * (1.0 - layer.prune_rate / 100.0);
    terms.push_back(weighted_term(layer, Tensor::scalar(size)));
  }
  return accumulate_terms(std::move(terms));
}

Tensor loss_comp(std::span<const LayerCostDescriptor> layers, const Tensor& psi) {
  std::vector<Tensor> terms;
  for (const auto& layer : layers) {
    if (!layer.counts_synops || layer.rates.empty()) continue;
    Tensor s;
    if (psi.defined()) {
      s = weighted_spike_rate(layer.rates, psi);
    } else {
      double total = 0.0;
      for (double r : layer.rates) total += r;
      s = Tensor::scalar(total);
    }
    terms.push_back(weighted_term(layer, synops(layer, s)));
  }
  return accumulate_terms(std::move(terms));
}

double loss_comp(double bitwidth, double synops_value) { return bitwidth * synops_value; }

Tensor averaged_ce(const Tensor& logits, std::span<const int> labels, std::size_t timesteps) {
  if (timesteps == 0 || logits.ndim() != 2 || logits.dim(0) % timesteps != 0) {
    throw ShapeError("averaged_ce: logits " + shape_str(logits.shape()) + " not divisible into T=" +
                     std::to_string(timesteps));
  }
  const std::size_t batch = logits.dim(0) / timesteps;
  Tensor acc = slice_rows(logits, 0, batch);
  for (std::size_t t = 1; t < timesteps; ++t) acc = add(acc, slice_rows(logits, t * batch, (t + 1) * batch));
  return cross_entropy(mul_scalar(acc, 1.0 / static_cast<double>(timesteps)), labels);
}

Tensor prefix_ce(const Tensor& logits, std::span<const int> labels, std::size_t timesteps) {
  if (timesteps == 0 || logits.ndim() != 2 || logits.dim(0) % timesteps != 0) {
    throw ShapeError("prefix_ce: logits " + shape_str(logits.shape()) + " not divisible into T=" +
                     std::to_string(timesteps));
  }
  const std::size_t batch = logits.dim(0) / timesteps;
  std::vector<Tensor> ces;
  Tensor running;
  for (std::size_t t = 0; t < timesteps; ++t) {
    Tensor step = slice_rows(logits, t * batch, (t + 1) * batch);
    running = running.defined() ? add(running, step) : step;
    ces.push_back(cross_entropy(mul_scalar(running, 1.0 / static_cast<double>(t + 1)), labels));
  }
  return stack_scalars(ces);
}

Tensor weighted_ce(const Tensor& logits, std::span<const int> labels, std::size_t timesteps, const Tensor& psi) {
  if (psi.numel() != timesteps) {
    throw ShapeError("weighted_ce: |psi| = " + std::to_string(psi.numel()) + " for T = " + std::to_string(timesteps));
  }
  return dot(softmax(psi), prefix_ce(logits, labels, timesteps));
}

Tensor total_loss(const Tensor& ce, const Tensor& mem, const Tensor& comp, const LossConfig& cfg) {
  return add(add(ce, mul_scalar(mem, cfg.lambda1)), mul_scalar(comp, cfg.lambda2));
}

double total_loss(double ce, double mem, double comp, const LossConfig& cfg) {
  return ce + cfg.lambda1 * mem + cfg.lambda2 * comp;
}

}  // namespace spikecomp
