#include "spikecomp/compression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "spikecomp/ops.hpp"

namespace spikecomp {

namespace {

std::vector<std::vector<double>> straight_through(std::span<const double> g, std::span<const Tensor>) {
  return {std::vector<double>(g.begin(), g.end())};
}

}  // namespace

double quantizer_step(double max_abs, int bits) {
  if (bits < 2) throw std::invalid_argument("quantizer_step: defined for k >= 2");
  const double levels = std::ldexp(1.0, bits - 1) - 1.0;
  return max_abs / levels;
}

Tensor quantize(const Tensor& w, int bits) {
  if (bits < 1) throw std::invalid_argument("quantize: bit-width must be at least 1");
  if (w.numel() == 0) throw std::invalid_argument("quantize: empty tensor");
  auto src = w.data();
  std::vector<double> out(src.size(), 0.0);
  if (bits == 1) {
    double mu = 0.0;
    for (double v : src) mu += std::abs(v);
    mu /= static_cast<double>(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = src[i] >= 0.0 ? mu : -mu;
  } else {
    double max_abs = 0.0;
    for (double v : src) max_abs = std::max(max_abs, std::abs(v));
    if (max_abs > 0.0) {
      const double step = quantizer_step(max_abs, bits);
      for (std::size_t i = 0; i < src.size(); ++i) out[i] = std::round(src[i] / step) * step;
    }
  }
  return custom_op("quantize" + std::to_string(bits), w.shape(), std::move(out), {w}, straight_through);
}

Tensor mixture_of_quantized(const Tensor& w, std::span<const int> bits, const Tensor& mix) {
  if (bits.empty()) throw std::invalid_argument("mixed_precision_average: empty bit-width set");
  if (mix.numel() != bits.size()) {
    throw ShapeError("mixed_precision_average: " + std::to_string(mix.numel()) + " mixture weights for " +
                     std::to_string(bits.size()) + " candidates");
  }
  Tensor acc;
  for (std::size_t j = 0; j < bits.size(); ++j) {
    Tensor term = scale(quantize(w, bits[j]), select(mix, j));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return acc;
}

Tensor mixed_precision_average(const Tensor& w, std::span<const int> bits, const Tensor& beta) {
  if (bits.empty()) throw std::invalid_argument("mixed_precision_average: empty bit-width set");
  if (beta.numel() != bits.size()) {
    throw ShapeError("mixed_precision_average: |beta| = " + std::to_string(beta.numel()) + " but |B| = " +
                     std::to_string(bits.size()));
  }
  return mixture_of_quantized(w, bits, softmax(beta));
}

std::size_t keep_count(std::size_t n, double prune_rate) {
  if (!(prune_rate >= 0.0 && prune_rate < 100.0)) {
    throw std::invalid_argument("pruning rate must lie in [0, 100), got " + std::to_string(prune_rate));
  }
  // (100 - p) * n is exact for integral p, so the guard only absorbs rounding
  // noise for fractional rates.
  const double exact = (100.0 - prune_rate) * static_cast<double>(n) / 100.0;
  const double kept = std::ceil(exact - 1e-9 * std::max(1.0, exact));
  return std::min(n, static_cast<std::size_t>(std::max(0.0, kept)));
}

Tensor mask_from_scores(const Tensor& scores, double prune_rate) {
  const std::size_t n = scores.numel();
  const std::size_t keep = keep_count(n, prune_rate);
  std::vector<double> out(n, 0.0);
  if (keep == n) {
    std::fill(out.begin(), out.end(), 1.0);
  } else {
    auto s = scores.data();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(s[a]) > std::abs(s[b]); });
    for (std::size_t i = 0; i < keep; ++i) out[order[i]] = 1.0;
  }
  return custom_op("topk_mask", scores.shape(), std::move(out), {scores}, straight_through);
}

Precision Precision::fixed(int bits) {
  if (bits < 1) throw std::invalid_argument("Precision: bit-width must be at least 1");
  Precision p;
  p.kind = Kind::Fixed;
  p.bits = bits;
  return p;
}

Precision Precision::mixture(std::vector<int> candidates, Tensor mix) {
  if (candidates.empty()) throw std::invalid_argument("Precision: empty bit-width set");
  if (mix.numel() != candidates.size()) throw ShapeError("Precision: mixture size mismatch");
  Precision p;
  p.kind = Kind::Mixture;
  p.candidates = std::move(candidates);
  p.mix = std::move(mix);
  return p;
}

Tensor Precision::apply(const Tensor& w) const {
  switch (kind) {
    case Kind::Full:
      return w;
    case Kind::Fixed:
      return quantize(w, bits);
    case Kind::Mixture:
      return mixture_of_quantized(w, candidates, mix);
  }
  return w;
}

Tensor Precision::effective_bits() const {
  switch (kind) {
    case Kind::Full:
      return Tensor::scalar(32.0);
    case Kind::Fixed:
      return Tensor::scalar(static_cast<double>(bits));
    case Kind::Mixture: {
      std::vector<double> b(candidates.begin(), candidates.end());
      return dot(mix, Tensor::vector(std::move(b)));
    }
  }
  return Tensor::scalar(32.0);
}

CompConvLayer::CompConvLayer(std::string name, ConvGeometry geometry, double prune_rate, std::mt19937_64& rng)
    : name_(std::move(name)), geometry_(geometry), prune_rate_(prune_rate) {
  keep_count(1, prune_rate);  // validates the rate
  const auto& g = geometry_;
  if (g.kernel % 2 == 0) throw ShapeError("CompConvLayer: kernel must be odd");
  const double fan_in = static_cast<double>(g.in_channels * g.kernel * g.kernel);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  weight_ = Tensor({g.out_channels, g.in_channels, g.kernel, g.kernel});
  for (auto& v : weight_.data()) v = dist(rng);
  scores_ = Tensor(weight_.shape());
  for (std::size_t i = 0; i < scores_.numel(); ++i) scores_.data()[i] = std::abs(weight_[i]);
  weight_.set_requires_grad(true);
  scores_.set_requires_grad(true);
}

Tensor CompConvLayer::mask() const {
  if (frozen_mask_) return *frozen_mask_;
  return mask_from_scores(scores_, prune_rate_);
}

void CompConvLayer::freeze_mask() {
  NoGradGuard no_grad;
  frozen_mask_ = mask_from_scores(scores_, prune_rate_).detach();
}

void CompConvLayer::freeze_mask(Tensor mask) {
  if (mask.shape() != weight_.shape()) throw ShapeError("freeze_mask: shape mismatch for " + name_);
  frozen_mask_ = mask.detach();
}

Tensor CompConvLayer::effective_weight(const Precision& precision) const {
  return mul(precision.apply(weight_), mask());
}

Tensor CompConvLayer::forward(const Tensor& spikes_in, const Precision& precision) const {
  return conv2d(spikes_in, effective_weight(precision), geometry_.stride, geometry_.padding);
}

Tensor NaiveBranchBlock::forward(const Tensor& spikes_in) const {
  if (bits.empty() || weights.size() != bits.size() || masks.size() != bits.size() || beta.numel() != bits.size()) {
    throw ShapeError("NaiveBranchBlock: branch count mismatch");
  }
  Tensor mix = softmax(beta);
  Tensor acc;
  for (std::size_t j = 0; j < bits.size(); ++j) {
    Tensor branch_weight = mul(quantize(weights[j], bits[j]), masks[j]);
    Tensor term = scale(conv2d(spikes_in, branch_weight, stride, padding), select(mix, j));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return acc;
}

std::size_t WeightHistogram::total(const std::string& series) const {
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.series == series) n += r.frequency;
  }
  return n;
}

WeightHistogram weight_histogram(const CompConvLayer& layer, const Precision& precision, std::size_t bins) {
  if (bins < 2) throw std::invalid_argument("weight_histogram: need at least 2 bins");
  NoGradGuard no_grad;
  const Tensor w = layer.weight().detach();
  const Tensor ew = precision.apply(w).detach();
  const Tensor mask = layer.mask().detach();

  double range = 0.0;
  for (double v : w.data()) range = std::max(range, std::abs(v));
  for (double v : ew.data()) range = std::max(range, std::abs(v));
  if (range == 0.0) range = 1.0;
  const double width = 2.0 * range / static_cast<double>(bins);
  auto bin_of = [&](double v) {
    const double pos = std::floor((v + range) / width);
    return static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(bins - 1)));
  };

  WeightHistogram hist;
  hist.weights = w.numel();
  const char* names[] = {"W", "eW", "Woutput"};
  std::vector<std::vector<std::size_t>> counts(3, std::vector<std::size_t>(bins, 0));
  for (std::size_t i = 0; i < w.numel(); ++i) {
    counts[0][bin_of(w[i])]++;
    counts[1][bin_of(ew[i])]++;
    const bool kept = mask[i] != 0.0;
    if (!kept) hist.pruned++;
    counts[2][bin_of(kept ? ew[i] : 0.0)]++;
  }
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t b = 0; b < bins; ++b) {
      hist.rows.push_back({names[s], -range + (static_cast<double>(b) + 0.5) * width, counts[s][b]});
    }
  return hist;
}

void write_histogram_csv(std::ostream& os, const WeightHistogram& hist) {
  os << "series,bin_center,frequency\n";
  for (const auto& r : hist.rows) os << r.series << ',' << r.bin_center << ',' << r.frequency << '\n';
}

}  // namespace spikecomp
