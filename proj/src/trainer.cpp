#include "spikecomp/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

namespace spikecomp {

IterationMetrics LossTerms::metrics(std::size_t iter) const {
  IterationMetrics m;
  m.iter = iter;
  m.loss = total.item();
  m.ce = ce.item();
  m.mem_bits = mem.item();
  m.bit_synops = comp.item();
  m.S = S;
  m.b_w_mean = b_w_mean;
  return m;
}

LossTerms compute_loss(const SpikingNetwork& net, const ForwardResult& result, std::span<const int> labels,
                       const LossConfig& loss, double aux_weight) {
  const std::size_t T = result.timesteps;
  const bool weighted = net.searches_timesteps() && T == net.config().timesteps;
  LossTerms terms;
  terms.ce = weighted ? weighted_ce(result.logits, labels, T, net.psi()) : averaged_ce(result.logits, labels, T);
  if (result.aux_logits.defined() && aux_weight > 0.0) {
    terms.ce = add(terms.ce, mul_scalar(averaged_ce(result.aux_logits, labels, T), aux_weight));
  }
  const Tensor psi = weighted ? net.psi() : Tensor();
  terms.mem = loss_mem(result.costs);
  terms.comp = loss_comp(result.costs, psi);
  terms.total = total_loss(terms.ce, terms.mem, terms.comp, loss);

  std::vector<double> psi_values;
  if (psi.defined()) psi_values.assign(psi.data().begin(), psi.data().end());
  double s_sum = 0.0;
  std::size_t s_count = 0;
  for (const auto& d : result.costs) {
    if (!d.counts_synops || d.rates.empty()) continue;
    s_sum += psi.defined() ? weighted_spike_rate(d.rates, psi_values)
                           : std::accumulate(d.rates.begin(), d.rates.end(), 0.0);
    ++s_count;
  }
  terms.S = s_count ? s_sum / static_cast<double>(s_count) : 0.0;
  NoGradGuard no_grad;
  double bits = 0.0;
  for (std::size_t c = 1; c <= net.config().cells; ++c) bits += net.cell_precision(c).effective_bits().item();
  terms.b_w_mean = bits / static_cast<double>(net.config().cells);
  return terms;
}

DatasetSplit split_for_search(const Dataset& train, const RunConfig& cfg) {
  return split_dataset(train, cfg.arch_split, cfg.seed + 3);
}

DatasetSplit split_train_test(const Dataset& data, const RunConfig& cfg) {
  return split_dataset(data, cfg.dataset.test_fraction, cfg.seed + 2);
}

namespace {

void check_against_config(const DecodedArchitecture& arch, const BackboneConfig& cfg) {
  if (arch.cells.size() != cfg.cells) {
    throw std::invalid_argument("decoded architecture has " + std::to_string(arch.cells.size()) +
                                " cells, configuration expects " + std::to_string(cfg.cells));
  }
  for (std::size_t c = 0; c < arch.cells.size(); ++c) {
    if (arch.cells[c].reduction != cfg.is_reduction(c + 1)) {
      throw std::invalid_argument("decoded architecture and configuration disagree on the reduction flag of cell " +
                                  std::to_string(c + 1));
    }
    for (const auto& e : arch.cells[c].edges) {
      if (e.to >= cfg.nodes) {
        throw std::invalid_argument("decoded architecture has node " + std::to_string(e.to) + " but cells have " +
                                    std::to_string(cfg.nodes) + " nodes");
      }
    }
  }
  if (arch.timesteps > cfg.timesteps) {
    throw std::invalid_argument("decoded architecture uses " + std::to_string(arch.timesteps) +
                                " timesteps, above the configured T_max");
  }
}

std::vector<std::size_t> shuffled(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

std::vector<std::size_t> batch_of(const std::vector<std::size_t>& order, std::size_t b, std::size_t size) {
  const std::size_t begin = b * size;
  const std::size_t end = std::min(order.size(), begin + size);
  return {order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end)};
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// Plan fields that are not implied by the configuration travel in the checkpoint meta.
void store_plan(const NetworkPlan& plan, const BackboneConfig& cfg, Checkpoint& ck) {
  ck.meta["plan.fixed_topology"] = plan.topology ? "yes" : "no";
  ck.meta["plan.fixed_bits"] = plan.cell_bits.empty() ? "no" : "yes";
  ck.meta["plan.timesteps"] = std::to_string(plan.timesteps);
  ck.meta["plan.aux_cell"] = std::to_string(plan.aux_cell);
  if (plan.topology) {
    DecodedArchitecture arch;
    arch.timesteps = plan.timesteps ? plan.timesteps : cfg.timesteps;
    for (std::size_t c = 0; c < cfg.cells; ++c) {
      DecodedCell cell;
      cell.bits = plan.cell_bits.empty() ? 32 : plan.cell_bits[c];
      cell.reduction = cfg.is_reduction(c + 1);
      cell.edges = (*plan.topology)[c];
      arch.cells.push_back(std::move(cell));
    }
    ck.arch_text = architecture_to_string(arch);
  }
}

NetworkPlan load_plan(const Checkpoint& ck) {
  auto get = [&](const std::string& key) {
    const auto it = ck.meta.find(key);
    if (it == ck.meta.end()) throw CheckpointError("checkpoint lacks '" + key + "'");
    return it->second;
  };
  NetworkPlan plan;
  if (get("plan.fixed_topology") == "yes") {
    const DecodedArchitecture arch = architecture_from_string(ck.arch_text);
    plan = NetworkPlan::from(arch);
    if (get("plan.fixed_bits") != "yes") plan.cell_bits.clear();
  } else if (get("plan.fixed_bits") == "yes") {
    throw CheckpointError("checkpoint fixes bit-widths without a topology");
  }
  plan.timesteps = std::stoul(get("plan.timesteps"));
  plan.aux_cell = std::stoul(get("plan.aux_cell"));
  return plan;
}

}  // namespace

TrainingSession::TrainingSession(const RunConfig& cfg, Kind kind, NetworkPlan plan) : config_(cfg), kind_(kind) {
  config_.validate();
  std::mt19937_64 init(config_.seed);
  net_ = std::make_unique<SpikingNetwork>(config_.backbone, std::move(plan), init);
  rng_.seed(config_.seed + 1);
  reset_optimizers();
}

TrainingSession TrainingSession::search(const RunConfig& cfg, NetworkPlan plan) {
  plan.aux_cell = 0;
  return TrainingSession(cfg, Kind::Search, std::move(plan));
}

TrainingSession TrainingSession::retrain(const RunConfig& cfg, const DecodedArchitecture& arch) {
  check_against_config(arch, cfg.backbone);
  NetworkPlan plan = NetworkPlan::from(arch);
  plan.aux_cell = cfg.aux_cell;
  return TrainingSession(cfg, Kind::Retrain, std::move(plan));
}

void TrainingSession::reset_optimizers() {
  const double lr = kind_ == Kind::Search ? config_.weight_lr : config_.retrain_lr;
  weight_opt_ = std::make_unique<MomentumOptimizer>(net_->weight_parameters(), lr, config_.weight_momentum);
  AdamHyper hyper;
  hyper.lr = config_.arch_lr;
  arch_opt_ = std::make_unique<AdamOptimizer>(net_->arch_parameters(), hyper);
}

LossTerms TrainingSession::forward_loss(const Tensor& x, std::span<const int> y) {
  if (y.empty()) throw std::invalid_argument("training step: empty batch");
  ForwardOptions opts;
  opts.training = true;
  opts.collect_costs = true;
  const ForwardResult r = net_->forward(x, net_->timesteps(), opts);
  if (kind_ == Kind::Search) return compute_loss(*net_, r, y, config_.loss, 0.0);
  LossConfig plain;
  plain.prune_rate = config_.loss.prune_rate;
  return compute_loss(*net_, r, y, plain, config_.aux_weight);
}

void TrainingSession::guard(const LossTerms& terms, const char* stage) {
  const double values[] = {terms.total.item(), terms.ce.item(), terms.mem.item(), terms.comp.item()};
  for (double v : values) {
    if (std::isfinite(v)) continue;
    std::string where;
    if (!diagnostic_path_.empty()) {
      Checkpoint ck = checkpoint();
      ck.kind = "diagnostic";
      ck.meta["diverged_at"] = stage;
      save_checkpoint(diagnostic_path_, ck);
      where = "; diagnostic checkpoint written to " + diagnostic_path_;
    }
    throw DivergenceError(std::string("loss became non-finite in ") + stage + " at iteration " +
                          std::to_string(iteration_ + 1) + where);
  }
}

IterationMetrics TrainingSession::joint_step(const Tensor& weight_x, std::span<const int> weight_y,
                                             const Tensor& arch_x, std::span<const int> arch_y) {
  LossTerms first = forward_loss(weight_x, weight_y);
  guard(first, "weight step");
  backward(first.total);
  weight_opt_->step();
  arch_opt_->zero_grad();

  if (!arch_frozen_ && !arch_opt_->params().empty()) {
    LossTerms second = forward_loss(arch_x, arch_y);
    guard(second, "architecture step");
    backward(second.total);
    arch_opt_->step();
    weight_opt_->zero_grad();
  }
  ++iteration_;
  IterationMetrics m = first.metrics(iteration_);
  history_.push_back(m);
  return m;
}

IterationMetrics TrainingSession::retrain_step(const Tensor& x, std::span<const int> y) {
  weight_opt_->set_lr(cosine_lr(config_.retrain_lr, iteration_, planned_iterations_));
  LossTerms terms = forward_loss(x, y);
  guard(terms, "retraining step");
  backward(terms.total);
  weight_opt_->step();
  if (arch_opt_->params().empty()) {
    arch_opt_->zero_grad();
  } else {
    arch_opt_->step();
  }
  ++iteration_;
  IterationMetrics m = terms.metrics(iteration_);
  history_.push_back(m);
  return m;
}

std::size_t TrainingSession::total_epochs() const {
  return kind_ == Kind::Search ? config_.search_epochs : config_.retrain_epochs;
}

std::size_t TrainingSession::iterations_per_epoch(const Dataset& weight_data, const Dataset*) const {
  return ceil_div(weight_data.size(), config_.batch_size);
}

void TrainingSession::run_epoch(const Dataset& weight_data, const Dataset* arch_data) {
  if (weight_data.size() == 0) throw std::invalid_argument("training: empty weight split");
  if (kind_ == Kind::Search && (!arch_data || arch_data->size() == 0)) {
    throw std::invalid_argument("search: empty architecture split");
  }
  const std::size_t bs = config_.batch_size;
  const std::size_t T = net_->timesteps();
  const auto w_order = shuffled(weight_data.size(), rng_);
  const auto a_order = kind_ == Kind::Search ? shuffled(arch_data->size(), rng_) : std::vector<std::size_t>{};
  const std::size_t n_batches = iterations_per_epoch(weight_data, arch_data);
  for (std::size_t b = 0; b < n_batches; ++b) {
    const auto wi = batch_of(w_order, b, bs);
    const Tensor wx = encode_input(weight_data, wi, T, config_.encoding);
    const auto wy = gather_labels(weight_data, wi);
    if (kind_ == Kind::Search) {
      const auto ai = batch_of(a_order, b % ceil_div(a_order.size(), bs), bs);
      const Tensor ax = encode_input(*arch_data, ai, T, config_.encoding);
      const auto ay = gather_labels(*arch_data, ai);
      joint_step(wx, wy, ax, ay);
    } else {
      retrain_step(wx, wy);
    }
  }
  ++epoch_;
}

void TrainingSession::run(const Dataset& weight_data, const Dataset* arch_data) {
  planned_iterations_ = total_epochs() * iterations_per_epoch(weight_data, arch_data);
  while (epoch_ < total_epochs()) run_epoch(weight_data, arch_data);
}

Checkpoint TrainingSession::checkpoint() const {
  Checkpoint ck;
  ck.kind = kind_ == Kind::Search ? "search" : "retrain";
  ck.config_text = config_.to_text();
  ck.seed = config_.seed;
  ck.epoch = epoch_;
  ck.iteration = iteration_;
  std::ostringstream rng_text;
  rng_text << rng_;
  ck.rng_state = rng_text.str();
  store_plan(net_->plan(), config_.backbone, ck);
  ck.meta["adam_steps"] = std::to_string(arch_opt_->steps());
  ck.meta["arch_frozen"] = arch_frozen_ ? "yes" : "no";
  ck.meta["config_hash"] = config_.hash();
  ck.tensors = net_->state();
  for (auto& t : weight_opt_->state()) ck.tensors.push_back(std::move(t));
  for (auto& t : arch_opt_->state()) ck.tensors.push_back(std::move(t));
  return ck;
}

std::unique_ptr<SpikingNetwork> network_from_checkpoint(const Checkpoint& ckpt) {
  const RunConfig cfg = parse_config(ckpt.config_text);
  std::mt19937_64 init(cfg.seed);
  auto net = std::make_unique<SpikingNetwork>(cfg.backbone, load_plan(ckpt), init);
  load_network_state(*net, ckpt);
  return net;
}

TrainingSession TrainingSession::from_checkpoint(const Checkpoint& ckpt) {
  Kind kind;
  if (ckpt.kind == "search" || ckpt.kind == "diagnostic") {
    kind = Kind::Search;
  } else if (ckpt.kind == "retrain") {
    kind = Kind::Retrain;
  } else {
    throw CheckpointError("cannot resume a '" + ckpt.kind + "' checkpoint");
  }
  const RunConfig cfg = parse_config(ckpt.config_text);
  TrainingSession s(cfg, kind, load_plan(ckpt));
  load_network_state(*s.net_, ckpt);
  s.reset_optimizers();
  restore_tensors(ckpt, s.weight_opt_->state());
  restore_tensors(ckpt, s.arch_opt_->state());
  s.arch_opt_->set_steps(std::stoul(ckpt.meta.at("adam_steps")));
  s.arch_frozen_ = ckpt.meta.at("arch_frozen") == "yes";
  s.epoch_ = ckpt.epoch;
  s.iteration_ = ckpt.iteration;
  std::istringstream rng_text(ckpt.rng_state);
  rng_text >> s.rng_;
  if (!rng_text) throw CheckpointError("checkpoint has an unreadable generator state");
  return s;
}

void load_network_state(SpikingNetwork& net, const Checkpoint& ckpt) {
  for (CompConvLayer* conv : net.conv_layers()) {
    if (const Tensor* mask = ckpt.find(conv->name() + ".mask")) conv->freeze_mask(mask->clone());
  }
  restore_tensors(ckpt, net.state());
}

std::size_t transfer_state(const SpikingNetwork& from, SpikingNetwork& to) {
  std::map<std::string, Tensor> source;
  for (const auto& nt : from.state()) source.emplace(nt.name, nt.tensor);
  for (CompConvLayer* conv : to.conv_layers()) {
    const auto it = source.find(conv->name() + ".mask");
    if (it != source.end() && it->second.shape() == conv->weight().shape()) conv->freeze_mask(it->second.clone());
  }
  std::size_t copied = 0;
  for (const auto& nt : to.state()) {
    const auto it = source.find(nt.name);
    if (it == source.end() || it->second.shape() != nt.tensor.shape()) continue;
    Tensor dst = nt.tensor;
    std::copy(it->second.data().begin(), it->second.data().end(), dst.data().begin());
    ++copied;
  }
  return copied;
}

void write_metrics_csv(std::ostream& os, const std::vector<IterationMetrics>& rows, const std::string& config_hash) {
  os << "# config_hash=" << config_hash << '\n';
  os << "iter,loss,ce,mem_bits,bit_synops,S,b_w_mean\n";
  const auto old = os.precision(12);
  for (const auto& r : rows) {
    os << r.iter << ',' << r.loss << ',' << r.ce << ',' << r.mem_bits << ',' << r.bit_synops << ',' << r.S << ','
       << r.b_w_mean << '\n';
  }
  os.precision(old);
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

PipelineResult joint_pipeline(const RunConfig& cfg, const Dataset& train, const Dataset& test) {
  const auto start = std::chrono::steady_clock::now();
  PipelineResult out;
  out.name = "joint";
  const DatasetSplit split = split_for_search(train, cfg);
  TrainingSession search = TrainingSession::search(cfg);
  search.run(split.first, &split.second);
  out.search_accuracy = evaluate_accuracy(search.net(), test, cfg.encoding, search.net().timesteps(), cfg.batch_size);
  out.arch = decode_architecture(search.net());
  out.search_history = search.history();

  TrainingSession retrain = TrainingSession::retrain(cfg, out.arch);
  retrain.run(train, nullptr);
  out.retrain_history = retrain.history();
  out.wall_seconds = seconds_since(start);
  out.report = measure_resources(retrain.net(), test, cfg.encoding, out.arch.timesteps, cfg.batch_size, out.name);
  out.report.config_hash = cfg.hash();
  std::mt19937_64 unused(cfg.seed);
  out.model = std::make_unique<SpikingNetwork>(retrain.net().config(), retrain.net().plan(), unused);
  transfer_state(retrain.net(), *out.model);
  return out;
}

std::size_t select_timesteps(std::span<const double> accuracy_by_t, double tolerance) {
  if (accuracy_by_t.empty()) throw std::invalid_argument("select_timesteps: no candidates");
  const double best = *std::max_element(accuracy_by_t.begin(), accuracy_by_t.end());
  for (std::size_t t = 0; t < accuracy_by_t.size(); ++t) {
    if (accuracy_by_t[t] >= best - tolerance) return t + 1;
  }
  return accuracy_by_t.size();
}

PipelineResult sequential_pipeline(const RunConfig& cfg, const Dataset& train, const Dataset& test, double tolerance) {
  const auto start = std::chrono::steady_clock::now();
  PipelineResult out;
  out.name = "sequential";
  const DatasetSplit split = split_for_search(train, cfg);
  auto staged = [](const char* stage, auto&& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string("sequential stage ") + stage + ": " + e.what());
    }
  };

  // A: architecture only.
  const DecodedArchitecture arch_a = staged("A", [&] {
    RunConfig a = cfg;
    a.loss.lambda1 = a.loss.lambda2 = 0.0;
    a.backbone.prune_rate = a.loss.prune_rate = 0.0;
    a.backbone.bit_candidates = {32};
    NetworkPlan plan;
    plan.timesteps = a.backbone.timesteps;
    TrainingSession s = TrainingSession::search(a, plan);
    s.run(split.first, &split.second);
    out.search_accuracy = evaluate_accuracy(s.net(), test, a.encoding, s.net().timesteps(), a.batch_size);
    out.search_history = s.history();
    return decode_architecture(s.net());
  });

  // P: retrain the full-precision architecture with pruning.
  RunConfig p_cfg = cfg;
  p_cfg.loss.lambda1 = p_cfg.loss.lambda2 = 0.0;
  TrainingSession pruned = staged("P", [&] {
    TrainingSession s = TrainingSession::retrain(p_cfg, arch_a);
    s.run(train, nullptr);
    s.net().freeze_masks();
    return s;
  });

  // Q: bit-width search on the frozen masks, then retrain at the decoded bit-widths.
  TrainingSession quantized = staged("Q", [&] {
    NetworkPlan plan = NetworkPlan::from(arch_a);
    plan.cell_bits.clear();
    TrainingSession q = TrainingSession::search(cfg, plan);
    transfer_state(pruned.net(), q.net());
    q.reset_optimizers();
    q.run(split.first, &split.second);
    const DecodedArchitecture arch_q = decode_architecture(q.net());
    TrainingSession r = TrainingSession::retrain(cfg, arch_q);
    transfer_state(q.net(), r.net());
    r.reset_optimizers();
    r.run(train, nullptr);
    return r;
  });

  // T: smallest timestep count within tolerance of the best held-out accuracy.
  staged("T", [&] {
    std::vector<double> acc;
    for (std::size_t t = 1; t <= cfg.backbone.timesteps; ++t) {
      acc.push_back(evaluate_accuracy(quantized.net(), split.second, cfg.encoding, t, cfg.batch_size));
    }
    out.arch = decode_architecture(quantized.net());
    out.arch.timesteps = select_timesteps(acc, tolerance);
    std::mt19937_64 unused(cfg.seed);
    out.model = std::make_unique<SpikingNetwork>(cfg.backbone, NetworkPlan::from(out.arch), unused);
    transfer_state(quantized.net(), *out.model);
    return 0;
  });
  out.retrain_history = quantized.history();
  out.wall_seconds = seconds_since(start);
  out.report = measure_resources(*out.model, test, cfg.encoding, out.arch.timesteps, cfg.batch_size, out.name);
  out.report.config_hash = cfg.hash();
  return out;
}

std::vector<SweepPoint> lambda_sweep(const RunConfig& cfg, std::span<const std::pair<double, double>> lambdas,
                                     const Dataset& train, const Dataset& test) {
  const DatasetSplit split = split_for_search(train, cfg);
  std::vector<SweepPoint> out;
  for (const auto& [l1, l2] : lambdas) {
    RunConfig c = cfg;
    c.loss.lambda1 = l1;
    c.loss.lambda2 = l2;
    TrainingSession s = TrainingSession::search(c);
    s.run(split.first, &split.second);
    SweepPoint pt;
    pt.lambda1 = l1;
    pt.lambda2 = l2;
    pt.arch = decode_architecture(s.net());
    std::mt19937_64 init(c.seed);
    SpikingNetwork decoded(c.backbone, NetworkPlan::from(pt.arch), init);
    transfer_state(s.net(), decoded);
    std::ostringstream name;
    name << "lambda1=" << l1 << ";lambda2=" << l2;
    pt.report = measure_resources(decoded, test, c.encoding, pt.arch.timesteps, c.batch_size, name.str());
    pt.report.config_hash = c.hash();
    out.push_back(std::move(pt));
  }
  return out;
}

void write_comparison_csv(std::ostream& os, std::span<const PipelineResult* const> rows, const std::string& config_hash) {
  os << "# config_hash=" << config_hash << '\n';
  os << "pipeline,acc,model_size_mb,bit_synops,timesteps,design_seconds\n";
  const auto old = os.precision(10);
  for (const PipelineResult* r : rows) {
    os << r->name << ',' << r->report.accuracy << ',' << r->report.model_size_mb << ',' << r->report.bit_synops << ','
       << r->report.timesteps << ',' << r->wall_seconds << '\n';
  }
  os.precision(old);
}

}  // namespace spikecomp
