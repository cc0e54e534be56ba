#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "spikecomp/architecture.hpp"
#include "spikecomp/compression.hpp"
#include "spikecomp/neuron.hpp"
#include "spikecomp/objectives.hpp"
#include "spikecomp/ops.hpp"

namespace spikecomp {

/// Shape and search-space description of a cell-based spiking backbone.
struct BackboneConfig {
  std::string profile = "desk";
  std::size_t in_channels = 2;
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t classes = 3;
  std::size_t cells = 2;
  std::size_t init_channels = 8;
  std::size_t nodes = 2;
  std::vector<std::size_t> reduction_cells{2};  // 1-based
  std::vector<int> bit_candidates{1, 2, 4};
  std::size_t timesteps = 4;  // T_max
  double prune_rate = 50.0;
  bool share_alpha = true;
  bool quantize_stem = false;
  bool quantize_classifier = false;
  NeuronParams neuron;

  static BackboneConfig cifar();
  static BackboneConfig gsc();
  static BackboneConfig desk();
  static BackboneConfig named(const std::string& profile);

  bool is_reduction(std::size_t cell) const;  // 1-based
  /// Output channels of a cell (1-based); 0 gives the stem.
  std::size_t cell_channels(std::size_t cell) const;
  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

/// Which parts of the network are fixed. Anything left open is searched.
struct NetworkPlan {
  std::optional<std::vector<std::vector<DecodedEdge>>> topology;  // per cell
  std::vector<int> cell_bits;  // empty: mixture over bit_candidates with learned beta
  std::size_t timesteps = 0;   // 0: psi over 1..T_max
  std::size_t aux_cell = 0;    // 1-based; 0 disables the auxiliary head

  static NetworkPlan from(const DecodedArchitecture& arch);
};

struct ConvTrace {
  std::string name;
  ConvGeometry geometry;
  Tensor input;  // (T*N, C, H, W), detached
  Tensor mask;   // (C_out, C_in, k, k) binary, detached
  std::size_t out_h = 0, out_w = 0;
  bool spiking_input = true;  // false for the stem on real-valued input
  bool has_bn = true;
};

/// Everything the operation counter needs from one forward pass.
struct NetworkTrace {
  std::size_t timesteps = 0;
  std::size_t batch = 0;
  std::vector<ConvTrace> convs;
  std::size_t lif_neurons = 0;        // per sample per timestep
  std::size_t merge_additions = 0;    // per sample per timestep, summing edges into nodes
  std::size_t pool_elements = 0;      // per sample per timestep
  std::size_t pool_channels = 0;
  std::size_t fc_inputs = 0, fc_outputs = 0;
  SpikeStats stats;
};

struct ForwardOptions {
  bool training = false;
  bool collect_costs = false;
  NetworkTrace* trace = nullptr;
};

struct ForwardResult {
  std::size_t timesteps = 0;
  Tensor logits;      // (T*N, K), time-major
  Tensor aux_logits;  // undefined without an auxiliary head
  std::vector<LayerCostDescriptor> costs;
  SpikeStats stats;
  std::vector<Shape> feature_shapes;  // (C, H, W) after the stem and after each cell
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Cell-based spiking network. With an empty plan it is the search supernet
/// (every edge mixes conv and skip by softmax(alpha), every cell mixes
/// bit-widths by softmax(beta), psi weights timestep counts); with a decoded
/// plan it is the single-path network. Parameter names are identical in both.
class SpikingNetwork {
 public:
  SpikingNetwork(BackboneConfig config, NetworkPlan plan, std::mt19937_64& rng);

  const BackboneConfig& config() const { return config_; }
  const NetworkPlan& plan() const { return plan_; }

  bool searches_topology() const { return !plan_.topology.has_value(); }
  bool searches_bits() const { return plan_.cell_bits.empty(); }
  bool searches_timesteps() const { return plan_.timesteps == 0; }
  /// Timesteps a forward pass runs by default: T_max while searching, else the fixed count.
  std::size_t timesteps() const;

  /// input: time-major (T*N, C, H, W).
  ForwardResult forward(const Tensor& input, std::size_t timesteps, const ForwardOptions& options);

  /// Weight group: conv weights, BN affine parameters, stem, classifier, aux head.
  std::vector<NamedTensor> weight_parameters() const;
  /// Architecture group: alpha, beta, pruning scores (unfrozen masks only), psi.
  std::vector<NamedTensor> arch_parameters() const;
  /// Non-trainable state: BN running statistics and frozen masks.
  std::vector<NamedTensor> buffers() const;
  /// All of the above, sorted by name.
  std::vector<NamedTensor> state() const;

  std::vector<CompConvLayer*> conv_layers();
  std::vector<const CompConvLayer*> conv_layers() const;

  /// Alpha logits (E, 2) governing cell c (1-based); undefined when the topology is fixed.
  Tensor alpha(std::size_t cell) const;
  /// Beta logits of cell c (1-based); undefined when bits are fixed.
  Tensor beta(std::size_t cell) const;
  Tensor psi() const { return psi_; }
  int cell_bits(std::size_t cell) const;  // fixed bits, 0 when searched

  /// Precision applied to cell c's convolutions in the current state.
  Precision cell_precision(std::size_t cell) const;

  /// Freezes every mask at its current top-k selection.
  void freeze_masks();
  bool pruning_active() const { return config_.prune_rate > 0.0; }

  /// Edges present in cell c (1-based) in flat-index order.
  std::vector<DecodedEdge> cell_edges(std::size_t cell) const;

  /// Channel x height x width after the stem (index 0) and after each cell, for
  /// the given input size. Pure shape propagation.
  std::vector<Shape> shape_schedule() const;

 private:
  struct ConvOp {
    CompConvLayer conv;
    Tensor gamma, beta;
    BatchNormState bn;
    bool has_bn = true;
  };
  struct EdgeModule {
    DecodedEdge edge;
    bool mixed = true;  // searched edge: conv and skip mixed by alpha
    bool reduce = false;
    std::optional<ConvOp> conv;
  };
  struct CellModule {
    std::size_t index = 0;  // 1-based
    bool reduction = false;
    std::size_t node_channels = 0;
    ConvOp pre0, pre1;
    bool pre0_stride2 = false;
    std::vector<EdgeModule> edges;
    Tensor beta;
    Tensor alpha;  // per-cell alpha when not shared
  };

  struct ConvCall;

  ConvOp make_conv(const std::string& name, ConvGeometry geometry, double prune_rate, bool bn, std::mt19937_64& rng);
  Tensor run_conv(ConvOp& op, const Tensor& x, const Precision& precision, const ConvCall& call);
  const Tensor& alpha_for(const CellModule& cell) const;

  BackboneConfig config_;
  NetworkPlan plan_;
  ConvOp stem_;
  std::vector<CellModule> cells_;
  Tensor alpha_normal_, alpha_reduce_;
  Tensor psi_;
  Tensor classifier_w_, classifier_b_;
  Tensor aux_w_, aux_b_;
};

}  // namespace spikecomp
