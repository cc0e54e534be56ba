#include "spikecomp/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace spikecomp {

BackboneConfig BackboneConfig::cifar() {
  BackboneConfig c;
  c.profile = "cifar";
  c.in_channels = 3;
  c.height = c.width = 32;
  c.classes = 10;
  c.cells = 8;
  c.init_channels = 48;
  c.nodes = 4;
  c.reduction_cells = {3, 6};
  c.timesteps = 6;
  c.prune_rate = 50.0;
  return c;
}

BackboneConfig BackboneConfig::gsc() {
  BackboneConfig c;
  c.profile = "gsc";
  c.in_channels = 1;
  c.height = 40;
  c.width = 98;
  c.classes = 12;
  c.cells = 6;
  c.init_channels = 16;
  c.nodes = 4;
  c.reduction_cells = {3, 5};
  c.timesteps = 6;
  c.prune_rate = 50.0;
  return c;
}

BackboneConfig BackboneConfig::desk() { return BackboneConfig{}; }

BackboneConfig BackboneConfig::named(const std::string& profile) {
  if (profile == "cifar") return cifar();
  if (profile == "gsc") return gsc();
  if (profile == "desk") return desk();
  throw std::invalid_argument("unknown profile '" + profile + "' (expected cifar, gsc or desk)");
}

bool BackboneConfig::is_reduction(std::size_t cell) const {
  return std::find(reduction_cells.begin(), reduction_cells.end(), cell) != reduction_cells.end();
}

std::size_t BackboneConfig::cell_channels(std::size_t cell) const {
  std::size_t ch = init_channels;
  for (std::size_t c = 1; c <= cell; ++c) {
    if (is_reduction(c)) ch *= 2;
  }
  return ch;
}

void BackboneConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("backbone: " + msg); };
  if (in_channels == 0 || height == 0 || width == 0) fail("input shape must be positive");
  if (classes < 2) fail("need at least 2 classes");
  if (cells == 0) fail("need at least one cell");
  if (nodes == 0) fail("need at least one node per cell");
  if (init_channels == 0) fail("init_channels must be positive");
  if (timesteps == 0) fail("timesteps must be at least 1");
  if (bit_candidates.empty()) fail("empty bit-width candidate set");
  for (int b : bit_candidates) {
    if (b < 1) fail("bit-widths must be at least 1");
  }
  if (!(prune_rate >= 0.0 && prune_rate < 100.0)) fail("prune_rate must lie in [0, 100)");
  std::vector<std::size_t> red = reduction_cells;
  std::sort(red.begin(), red.end());
  if (std::adjacent_find(red.begin(), red.end()) != red.end()) fail("duplicate reduction cell");
  for (std::size_t r : red) {
    if (r < 1 || r > cells) {
      fail("reduction cell " + std::to_string(r) + " outside 1.." + std::to_string(cells));
    }
  }
  for (std::size_t c = 1; c <= cells; ++c) {
    const std::size_t ch = cell_channels(c);
    if (ch % nodes != 0) {
      fail("cell " + std::to_string(c) + " has " + std::to_string(ch) + " channels, not divisible by " +
           std::to_string(nodes) + " nodes");
    }
    if (is_reduction(c) && (ch / nodes) % 2 != 0) {
      fail("reduction cell " + std::to_string(c) + " needs an even per-node channel count");
    }
  }
  neuron.validate();
}

NetworkPlan NetworkPlan::from(const DecodedArchitecture& arch) {
  NetworkPlan plan;
  std::vector<std::vector<DecodedEdge>> topo;
  for (const auto& cell : arch.cells) {
    topo.push_back(cell.edges);
    plan.cell_bits.push_back(cell.bits);
  }
  plan.topology = std::move(topo);
  plan.timesteps = arch.timesteps;
  return plan;
}

struct SpikingNetwork::ConvCall {
  std::size_t timesteps = 1;
  const ForwardOptions* options = nullptr;
  ForwardResult* result = nullptr;
  Tensor edge_weight;
  std::size_t cell = 0;
  bool counts_synops = true;
  bool spiking_input = true;
};

namespace {

Tensor trainable(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return trainable(t);
}

Tensor row(const Tensor& matrix, std::size_t r) {
  return reshape(slice_rows(matrix, r, r + 1), Shape{matrix.dim(1)});
}

Tensor sum_all(const std::vector<Tensor>& terms) {
  Tensor acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

Shape feature_shape(const Tensor& x) { return Shape(x.shape().begin() + 1, x.shape().end()); }

std::string cell_prefix(std::size_t c) { return "cell" + std::to_string(c); }

}  // namespace

SpikingNetwork::ConvOp SpikingNetwork::make_conv(const std::string& name, ConvGeometry geometry, double prune_rate,
                                                 bool bn, std::mt19937_64& rng) {
  ConvOp op;
  op.conv = CompConvLayer(name + ".conv", geometry, prune_rate, rng);
  op.has_bn = bn;
  if (bn) {
    op.gamma = trainable(Tensor::ones({geometry.out_channels}));
    op.beta = trainable(Tensor::zeros({geometry.out_channels}));
    op.bn.running_mean = Tensor::zeros({geometry.out_channels});
    op.bn.running_var = Tensor::ones({geometry.out_channels});
  }
  return op;
}

SpikingNetwork::SpikingNetwork(BackboneConfig config, NetworkPlan plan, std::mt19937_64& rng)
    : config_(std::move(config)), plan_(std::move(plan)) {
  config_.validate();
  const std::size_t n_nodes = config_.nodes;
  if (plan_.topology && plan_.topology->size() != config_.cells) {
    throw std::invalid_argument("architecture has " + std::to_string(plan_.topology->size()) +
                                " cells but the backbone has " + std::to_string(config_.cells));
  }
  if (!plan_.cell_bits.empty() && plan_.cell_bits.size() != config_.cells) {
    throw std::invalid_argument("architecture lists bit-widths for " + std::to_string(plan_.cell_bits.size()) +
                                " cells but the backbone has " + std::to_string(config_.cells));
  }
  for (int b : plan_.cell_bits) {
    if (b < 1) throw std::invalid_argument("architecture bit-width must be at least 1");
  }
  if (plan_.timesteps > config_.timesteps) {
    throw std::invalid_argument("architecture uses " + std::to_string(plan_.timesteps) + " timesteps, above T_max " +
                                std::to_string(config_.timesteps));
  }
  if (plan_.aux_cell > config_.cells) throw std::invalid_argument("aux cell outside the backbone");

  stem_ = make_conv("stem", {config_.in_channels, config_.init_channels, 3, 1, 1}, 0.0, true, rng);

  for (std::size_t c = 1; c <= config_.cells; ++c) {
    CellModule cell;
    cell.index = c;
    cell.reduction = config_.is_reduction(c);
    cell.node_channels = config_.cell_channels(c) / n_nodes;
    const std::size_t c_in = cell.reduction ? cell.node_channels / 2 : cell.node_channels;
    const std::size_t ch_pp = c >= 2 ? config_.cell_channels(c - 2) : config_.init_channels;
    const std::size_t ch_p = config_.cell_channels(c - 1);
    cell.pre0_stride2 = c >= 2 && config_.is_reduction(c - 1);
    const std::string prefix = cell_prefix(c);
    cell.pre0 = make_conv(prefix + ".pre0", {ch_pp, c_in, 1, cell.pre0_stride2 ? 2u : 1u, 0}, config_.prune_rate,
                          true, rng);
    cell.pre1 = make_conv(prefix + ".pre1", {ch_p, c_in, 1, 1, 0}, config_.prune_rate, true, rng);

    std::vector<DecodedEdge> wanted;
    if (plan_.topology) {
      wanted = (*plan_.topology)[c - 1];
      for (const auto& e : wanted) {
        if (e.to >= n_nodes || e.from >= e.to + 2) {
          throw std::invalid_argument("architecture edge " + std::to_string(e.from) + " -> " + std::to_string(e.to) +
                                      " is invalid in cell " + std::to_string(c));
        }
      }
      for (std::size_t j = 0; j < n_nodes; ++j) {
        const auto incoming = std::count_if(wanted.begin(), wanted.end(), [j](const DecodedEdge& e) { return e.to == j; });
        if (incoming == 0) {
          throw std::invalid_argument("architecture node " + std::to_string(j) + " of cell " + std::to_string(c) +
                                      " has no incoming edge");
        }
      }
      std::sort(wanted.begin(), wanted.end(),
                [](const DecodedEdge& a, const DecodedEdge& b) { return edge_index(a.from, a.to) < edge_index(b.from, b.to); });
      if (std::adjacent_find(wanted.begin(), wanted.end(), [](const DecodedEdge& a, const DecodedEdge& b) {
            return a.from == b.from && a.to == b.to;
          }) != wanted.end()) {
        throw std::invalid_argument("architecture repeats an edge in cell " + std::to_string(c));
      }
    } else {
      for (std::size_t j = 0; j < n_nodes; ++j)
        for (std::size_t i = 0; i < j + 2; ++i) wanted.push_back({i, j, EdgeOp::Conv});
    }
    for (const auto& e : wanted) {
      EdgeModule em;
      em.edge = e;
      em.mixed = !plan_.topology.has_value();
      em.reduce = cell.reduction && e.from < 2;
      if (em.mixed || e.op == EdgeOp::Conv) {
        const std::size_t in_ch = e.from < 2 ? c_in : cell.node_channels;
        em.conv = make_conv(prefix + ".edge" + std::to_string(edge_index(e.from, e.to)),
                            {in_ch, cell.node_channels, 3, em.reduce ? 2u : 1u, 1}, config_.prune_rate, true, rng);
      }
      cell.edges.push_back(std::move(em));
    }
    if (searches_bits()) cell.beta = trainable(Tensor::zeros({config_.bit_candidates.size()}));
    if (searches_topology() && !config_.share_alpha) {
      cell.alpha = trainable(Tensor::zeros({cell_edge_count(n_nodes), kEdgeOpCount}));
    }
    cells_.push_back(std::move(cell));
  }
  if (searches_topology() && config_.share_alpha) {
    const bool any_normal = config_.reduction_cells.size() < config_.cells;
    if (any_normal) alpha_normal_ = trainable(Tensor::zeros({cell_edge_count(n_nodes), kEdgeOpCount}));
    if (!config_.reduction_cells.empty()) {
      alpha_reduce_ = trainable(Tensor::zeros({cell_edge_count(n_nodes), kEdgeOpCount}));
    }
  }
  if (searches_timesteps()) psi_ = trainable(Tensor::zeros({config_.timesteps}));

  const std::size_t final_ch = config_.cell_channels(config_.cells);
  const double bound = 1.0 / std::sqrt(static_cast<double>(final_ch));
  classifier_w_ = uniform_tensor({config_.classes, final_ch}, bound, rng);
  classifier_b_ = uniform_tensor({config_.classes}, bound, rng);
  if (plan_.aux_cell > 0) {
    const std::size_t aux_ch = config_.cell_channels(plan_.aux_cell);
    const double aux_bound = 1.0 / std::sqrt(static_cast<double>(aux_ch));
    aux_w_ = uniform_tensor({config_.classes, aux_ch}, aux_bound, rng);
    aux_b_ = uniform_tensor({config_.classes}, aux_bound, rng);
  }
}

std::size_t SpikingNetwork::timesteps() const {
  return searches_timesteps() ? config_.timesteps : plan_.timesteps;
}

const Tensor& SpikingNetwork::alpha_for(const CellModule& cell) const {
  if (!config_.share_alpha) return cell.alpha;
  return cell.reduction ? alpha_reduce_ : alpha_normal_;
}

Tensor SpikingNetwork::alpha(std::size_t cell) const {
  if (cell < 1 || cell > cells_.size()) throw std::out_of_range("alpha: no cell " + std::to_string(cell));
  if (!searches_topology()) return {};
  return alpha_for(cells_[cell - 1]);
}

Tensor SpikingNetwork::beta(std::size_t cell) const {
  if (cell < 1 || cell > cells_.size()) throw std::out_of_range("beta: no cell " + std::to_string(cell));
  return cells_[cell - 1].beta;
}

int SpikingNetwork::cell_bits(std::size_t cell) const {
  if (cell < 1 || cell > cells_.size()) throw std::out_of_range("cell_bits: no cell " + std::to_string(cell));
  return plan_.cell_bits.empty() ? 0 : plan_.cell_bits[cell - 1];
}

Precision SpikingNetwork::cell_precision(std::size_t cell) const {
  if (!plan_.cell_bits.empty()) {
    const int b = cell_bits(cell);
    return b >= 32 ? Precision::full() : Precision::fixed(b);
  }
  const auto& cand = config_.bit_candidates;
  if (std::all_of(cand.begin(), cand.end(), [](int b) { return b >= 32; })) return Precision::full();
  return Precision::mixture(cand, softmax(cells_.at(cell - 1).beta));
}

std::vector<DecodedEdge> SpikingNetwork::cell_edges(std::size_t cell) const {
  if (cell < 1 || cell > cells_.size()) throw std::out_of_range("cell_edges: no cell " + std::to_string(cell));
  std::vector<DecodedEdge> out;
  for (const auto& e : cells_[cell - 1].edges) out.push_back(e.edge);
  return out;
}

Tensor SpikingNetwork::run_conv(ConvOp& op, const Tensor& x, const Precision& precision, const ConvCall& call) {
  const ConvGeometry& g = op.conv.geometry();
  Tensor w_out = op.conv.effective_weight(precision);
  Tensor y = conv2d(x, w_out, g.stride, g.padding);
  if (call.options->collect_costs) {
    LayerCostDescriptor d;
    d.name = op.conv.name();
    d.kernel_h = d.kernel_w = g.kernel;
    d.in_channels = g.in_channels;
    d.out_channels = g.out_channels;
    d.out_h = y.dim(2);
    d.out_w = y.dim(3);
    d.prune_rate = op.conv.prune_rate();
    d.rates = synaptic_input_rates(x, call.timesteps, g);
    d.counts_synops = call.counts_synops;
    d.edge_weight = call.edge_weight;
    d.bits = precision.effective_bits();
    d.cell = call.cell;
    call.result->costs.push_back(std::move(d));
  }
  if (call.options->trace) {
    NoGradGuard no_grad;
    ConvTrace tr;
    tr.name = op.conv.name();
    tr.geometry = g;
    tr.input = x.detach();
    tr.mask = op.conv.mask().detach();
    tr.out_h = y.dim(2);
    tr.out_w = y.dim(3);
    tr.spiking_input = call.spiking_input;
    tr.has_bn = op.has_bn;
    call.options->trace->convs.push_back(std::move(tr));
  }
  if (!op.has_bn) return y;
  return batch_norm(y, op.gamma, op.beta, op.bn, call.options->training);
}

ForwardResult SpikingNetwork::forward(const Tensor& input, std::size_t timesteps, const ForwardOptions& options) {
  if (timesteps == 0) throw std::invalid_argument("forward: T must be at least 1");
  if (input.ndim() != 4 || input.dim(0) % timesteps != 0 || input.dim(1) != config_.in_channels ||
      input.dim(2) != config_.height || input.dim(3) != config_.width) {
    throw ShapeError("forward: expected (T*N, " + std::to_string(config_.in_channels) + ", " +
                     std::to_string(config_.height) + ", " + std::to_string(config_.width) + ") with T=" +
                     std::to_string(timesteps) + ", got " + shape_str(input.shape()));
  }
  const std::size_t batch = input.dim(0) / timesteps;
  const NeuronParams& np = config_.neuron;
  ForwardResult result;
  result.timesteps = timesteps;
  SpikeStats* stats = &result.stats;
  NetworkTrace* trace = options.trace;
  if (trace) {
    *trace = NetworkTrace{};
    trace->timesteps = timesteps;
    trace->batch = batch;
  }
  auto lif = [&](const Tensor& current, const std::string& name) {
    Tensor s = lif_sequence(current, timesteps, np, stats, name);
    if (trace) trace->lif_neurons += s.numel() / s.dim(0);
    return s;
  };

  ConvCall call;
  call.timesteps = timesteps;
  call.options = &options;
  call.result = &result;

  const Precision first = cell_precision(1);
  const Precision last = cell_precision(config_.cells);

  call.cell = 0;
  call.spiking_input = std::all_of(input.data().begin(), input.data().end(), [](double v) { return v == 0.0 || v == 1.0; });
  Tensor stem_out = lif(run_conv(stem_, input, config_.quantize_stem ? first : Precision::full(), call), "stem.lif");
  call.spiking_input = true;
  result.feature_shapes.push_back(feature_shape(stem_out));

  Tensor s0 = stem_out, s1 = stem_out;
  for (auto& cell : cells_) {
    const Precision prec = cell_precision(cell.index);
    const std::string prefix = cell_prefix(cell.index);
    call.cell = cell.index;
    call.edge_weight = Tensor();
    std::vector<Tensor> states;
    states.push_back(lif(run_conv(cell.pre0, s0, prec, call), prefix + ".pre0.lif"));
    states.push_back(lif(run_conv(cell.pre1, s1, prec, call), prefix + ".pre1.lif"));

    std::vector<Tensor> mixes;
    if (searches_topology()) {
      const Tensor& a = alpha_for(cell);
      for (std::size_t e = 0; e < a.dim(0); ++e) mixes.push_back(softmax(row(a, e)));
    }
    std::vector<Tensor> nodes;
    for (std::size_t j = 0; j < config_.nodes; ++j) {
      std::vector<Tensor> terms;
      for (auto& em : cell.edges) {
        if (em.edge.to != j) continue;
        const Tensor& xin = states.at(em.edge.from);
        auto skip = [&] { return em.reduce ? subsample_duplicate(xin) : xin; };
        if (em.mixed) {
          const Tensor& mix = mixes.at(edge_index(em.edge.from, em.edge.to));
          Tensor w_conv = select(mix, static_cast<std::size_t>(EdgeOp::Conv));
          Tensor w_skip = select(mix, static_cast<std::size_t>(EdgeOp::Skip));
          call.edge_weight = w_conv;
          Tensor conv_out = run_conv(*em.conv, xin, prec, call);
          call.edge_weight = Tensor();
          terms.push_back(add(scale(conv_out, w_conv), scale(skip(), w_skip)));
        } else if (em.edge.op == EdgeOp::Conv) {
          terms.push_back(run_conv(*em.conv, xin, prec, call));
        } else {
          terms.push_back(skip());
        }
      }
      Tensor total = sum_all(terms);
      if (trace) trace->merge_additions += (terms.size() - 1) * (total.numel() / total.dim(0));
      Tensor node = lif(total, prefix + ".node" + std::to_string(j) + ".lif");
      states.push_back(node);
      nodes.push_back(node);
    }
    Tensor out = nodes.size() == 1 ? nodes[0] : concat(nodes, 1);
    result.feature_shapes.push_back(feature_shape(out));
    if (plan_.aux_cell == cell.index) {
      result.aux_logits = linear(global_avg_pool(out), aux_w_, aux_b_);
    }
    s0 = s1;
    s1 = out;
  }

  Tensor pooled = global_avg_pool(s1);
  Tensor w_cls = config_.quantize_classifier ? last.apply(classifier_w_) : classifier_w_;
  result.logits = linear(pooled, w_cls, classifier_b_);
  if (options.collect_costs) {
    LayerCostDescriptor d;
    d.name = "classifier";
    d.in_channels = classifier_w_.dim(1) + 1;  // bias folded in as one more input
    d.out_channels = classifier_w_.dim(0);
    d.counts_synops = false;
    d.bits = config_.quantize_classifier ? last.effective_bits() : Tensor();
    result.costs.push_back(std::move(d));
  }
  if (trace) {
    trace->pool_elements = s1.numel() / s1.dim(0);
    trace->pool_channels = s1.dim(1);
    trace->fc_inputs = classifier_w_.dim(1);
    trace->fc_outputs = classifier_w_.dim(0);
    trace->stats = result.stats;
  }
  return result;
}

std::vector<NamedTensor> SpikingNetwork::weight_parameters() const {
  std::vector<NamedTensor> out;
  auto add_conv = [&](const ConvOp& op) {
    out.push_back({op.conv.name() + ".W", op.conv.weight()});
    if (op.has_bn) {
      const std::string bn = op.conv.name().substr(0, op.conv.name().size() - 5) + ".bn";
      out.push_back({bn + ".gamma", op.gamma});
      out.push_back({bn + ".beta", op.beta});
    }
  };
  add_conv(stem_);
  for (const auto& cell : cells_) {
    add_conv(cell.pre0);
    add_conv(cell.pre1);
    for (const auto& em : cell.edges) {
      if (em.conv) add_conv(*em.conv);
    }
  }
  out.push_back({"classifier.W", classifier_w_});
  out.push_back({"classifier.b", classifier_b_});
  if (aux_w_.defined()) {
    out.push_back({"aux.W", aux_w_});
    out.push_back({"aux.b", aux_b_});
  }
  return out;
}

std::vector<NamedTensor> SpikingNetwork::arch_parameters() const {
  std::vector<NamedTensor> out;
  if (alpha_normal_.defined()) out.push_back({"alpha.normal", alpha_normal_});
  if (alpha_reduce_.defined()) out.push_back({"alpha.reduce", alpha_reduce_});
  for (const auto& cell : cells_) {
    const std::string prefix = cell_prefix(cell.index);
    if (cell.alpha.defined()) out.push_back({prefix + ".alpha", cell.alpha});
    if (cell.beta.defined()) out.push_back({prefix + ".beta", cell.beta});
  }
  for (const CompConvLayer* conv : conv_layers()) {
    if (conv->prune_rate() > 0.0 && !conv->mask_frozen()) out.push_back({conv->name() + ".scores", conv->scores()});
  }
  if (psi_.defined()) out.push_back({"psi", psi_});
  return out;
}

std::vector<NamedTensor> SpikingNetwork::buffers() const {
  std::vector<NamedTensor> out;
  auto add_op = [&](const ConvOp& op) {
    if (op.has_bn) {
      const std::string bn = op.conv.name().substr(0, op.conv.name().size() - 5) + ".bn";
      out.push_back({bn + ".running_mean", op.bn.running_mean});
      out.push_back({bn + ".running_var", op.bn.running_var});
    }
    if (op.conv.mask_frozen()) out.push_back({op.conv.name() + ".mask", *op.conv.frozen_mask()});
  };
  add_op(stem_);
  for (const auto& cell : cells_) {
    add_op(cell.pre0);
    add_op(cell.pre1);
    for (const auto& em : cell.edges) {
      if (em.conv) add_op(*em.conv);
    }
  }
  return out;
}

std::vector<NamedTensor> SpikingNetwork::state() const {
  std::vector<NamedTensor> out = weight_parameters();
  for (auto& t : arch_parameters()) out.push_back(std::move(t));
  for (auto& t : buffers()) out.push_back(std::move(t));
  // Scores of pruned layers are state even when their masks are frozen.
  for (const CompConvLayer* conv : conv_layers()) {
    if (conv->prune_rate() > 0.0 && conv->mask_frozen()) out.push_back({conv->name() + ".scores", conv->scores()});
  }
  std::sort(out.begin(), out.end(), [](const NamedTensor& a, const NamedTensor& b) { return a.name < b.name; });
  return out;
}

std::vector<CompConvLayer*> SpikingNetwork::conv_layers() {
  std::vector<CompConvLayer*> out{&stem_.conv};
  for (auto& cell : cells_) {
    out.push_back(&cell.pre0.conv);
    out.push_back(&cell.pre1.conv);
    for (auto& em : cell.edges) {
      if (em.conv) out.push_back(&em.conv->conv);
    }
  }
  return out;
}

std::vector<const CompConvLayer*> SpikingNetwork::conv_layers() const {
  std::vector<const CompConvLayer*> out;
  for (CompConvLayer* c : const_cast<SpikingNetwork*>(this)->conv_layers()) out.push_back(c);
  return out;
}

void SpikingNetwork::freeze_masks() {
  for (CompConvLayer* conv : conv_layers()) {
    if (conv->prune_rate() > 0.0) conv->freeze_mask();
  }
}

std::vector<Shape> SpikingNetwork::shape_schedule() const {
  std::vector<Shape> out;
  std::size_t h = config_.height, w = config_.width;
  out.push_back({config_.init_channels, h, w});
  for (std::size_t c = 1; c <= config_.cells; ++c) {
    if (config_.is_reduction(c)) {
      h = conv_out_size(h, 3, 2, 1);
      w = conv_out_size(w, 3, 2, 1);
    }
    out.push_back({config_.cell_channels(c), h, w});
  }
  return out;
}

}  // namespace spikecomp
