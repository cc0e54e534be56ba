#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spikecomp/tensor.hpp"

namespace spikecomp {

/// Grid step of the k-bit symmetric quantizer for weights with the given
/// max magnitude: max|W| / (2^(k-1) - 1). Only meaningful for k >= 2.
double quantizer_step(double max_abs, int bits);

/// Per-tensor symmetric uniform quantizer.
///   k >= 2: round-half-away(w / step) * step with step = max|W| / (2^(k-1) - 1)
///   k == 1: sign(w) * mean|W|, sign(0) = +
/// Backward is straight-through (identity).
Tensor quantize(const Tensor& w, int bits);

/// Softmax(beta)-weighted average of quantize(W, B_j). Differentiable in beta
/// exactly and in W through the straight-through quantizers.
Tensor mixed_precision_average(const Tensor& w, std::span<const int> bits, const Tensor& beta);
/// Same with precomputed mixture weights (one per candidate, summing to 1).
Tensor mixture_of_quantized(const Tensor& w, std::span<const int> bits, const Tensor& mix);

/// Number of weights that survive pruning rate p (percent): ceil((1 - p/100) n).
std::size_t keep_count(std::size_t n, double prune_rate);

/// Binary mask with ones at the keep_count largest |s|; ties go to the lowest
/// flat index. Backward passes the gradient straight through to the scores.
Tensor mask_from_scores(const Tensor& scores, double prune_rate);

/// How one forward pass quantizes a layer's weights.
struct Precision {
  enum class Kind { Full, Fixed, Mixture };
  Kind kind = Kind::Full;
  int bits = 32;
  std::vector<int> candidates;
  Tensor mix;  // softmax(beta), Mixture only

  static Precision full() { return {}; }
  static Precision fixed(int bits);
  static Precision mixture(std::vector<int> candidates, Tensor mix);

  Tensor apply(const Tensor& w) const;
  /// Effective bit-width as a scalar tensor (differentiable for mixtures).
  Tensor effective_bits() const;
};

struct ConvGeometry {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;

  std::size_t weight_count() const { return out_channels * in_channels * kernel * kernel; }
};

/// Convolution with one shared full-precision weight tensor, mixed-precision
/// quantization branches and one shared learned pruning mask:
///   W_output = ebar(W) * mask(s),  out = conv2d(x, W_output)
class CompConvLayer {
 public:
  CompConvLayer() = default;
  /// Kaiming-normal weights; scores start as a copy of |W|.
  CompConvLayer(std::string name, ConvGeometry geometry, double prune_rate, std::mt19937_64& rng);

  const std::string& name() const { return name_; }
  const ConvGeometry& geometry() const { return geometry_; }
  double prune_rate() const { return prune_rate_; }

  Tensor& weight() { return weight_; }
  const Tensor& weight() const { return weight_; }
  Tensor& scores() { return scores_; }
  const Tensor& scores() const { return scores_; }

  /// Current mask: frozen copy if frozen, otherwise recomputed from scores.
  Tensor mask() const;
  bool mask_frozen() const { return frozen_mask_.has_value(); }
  void freeze_mask();
  void freeze_mask(Tensor mask);
  const std::optional<Tensor>& frozen_mask() const { return frozen_mask_; }

  Tensor effective_weight(const Precision& precision) const;
  Tensor forward(const Tensor& spikes_in, const Precision& precision) const;

 private:
  std::string name_;
  ConvGeometry geometry_;
  double prune_rate_ = 0.0;
  Tensor weight_;
  Tensor scores_;
  std::optional<Tensor> frozen_mask_;
};

/// Reference block with separate weights and masks per bit-width branch,
/// mixing branch outputs by softmax(beta).
struct NaiveBranchBlock {
  std::vector<int> bits;
  std::vector<Tensor> weights;
  std::vector<Tensor> masks;
  Tensor beta;
  std::size_t stride = 1;
  std::size_t padding = 1;

  Tensor forward(const Tensor& spikes_in) const;
};

struct HistogramRow {
  std::string series;  // W, eW or Woutput
  double bin_center = 0.0;
  std::size_t frequency = 0;
};

struct WeightHistogram {
  std::vector<HistogramRow> rows;
  std::size_t weights = 0;
  std::size_t pruned = 0;  // zeros forced by the mask, counted in Woutput's zero bin

  std::size_t total(const std::string& series) const;
};

/// Histograms of W, ebar(W) and W_output over a shared range [-max|W|, max|W|].
WeightHistogram weight_histogram(const CompConvLayer& layer, const Precision& precision, std::size_t bins);
void write_histogram_csv(std::ostream& os, const WeightHistogram& hist);

}  // namespace spikecomp
