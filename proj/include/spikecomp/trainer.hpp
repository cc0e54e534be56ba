#pragma once

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spikecomp/architecture.hpp"
#include "spikecomp/checkpoint.hpp"
#include "spikecomp/config.hpp"
#include "spikecomp/dataset.hpp"
#include "spikecomp/metrics.hpp"
#include "spikecomp/network.hpp"
#include "spikecomp/optim.hpp"

namespace spikecomp {

/// Raised when a loss turns non-finite. A diagnostic checkpoint is written
/// first when the session has a diagnostic path.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IterationMetrics {
  std::size_t iter = 0;
  double loss = 0.0;
  double ce = 0.0;
  double mem_bits = 0.0;
  double bit_synops = 0.0;
  double S = 0.0;         // mean weighted spike rate over synaptic layers
  double b_w_mean = 0.0;  // mean effective bit-width over cells
};

struct LossTerms {
  Tensor total;
  Tensor ce;
  Tensor mem;
  Tensor comp;
  double S = 0.0;
  double b_w_mean = 0.0;

  IterationMetrics metrics(std::size_t iter) const;
};

/// Cross-entropy (psi-weighted while timesteps are searched, plain averaged
/// otherwise, plus aux_weight times the auxiliary head's CE), model-size bits
/// and bit-SynOps, combined with the configured lambdas.
LossTerms compute_loss(const SpikingNetwork& net, const ForwardResult& result, std::span<const int> labels,
                       const LossConfig& loss, double aux_weight);

/// Seeded partition of the training data: weights learn on `first`, the
/// architecture group on `second`.
DatasetSplit split_for_search(const Dataset& train, const RunConfig& cfg);
/// Train/test partition of the full dataset.
DatasetSplit split_train_test(const Dataset& data, const RunConfig& cfg);

/// Everything that evolves during one optimization run.
class TrainingSession {
 public:
  enum class Kind { Search, Retrain };

  /// Supernet search (or a partially fixed plan, e.g. bit-width search on a fixed topology).
  static TrainingSession search(const RunConfig& cfg, NetworkPlan plan = {});
  /// Single-path retraining of a decoded architecture from a fresh seeded initialization.
  static TrainingSession retrain(const RunConfig& cfg, const DecodedArchitecture& arch);
  static TrainingSession from_checkpoint(const Checkpoint& ckpt);

  Kind kind() const { return kind_; }
  const RunConfig& config() const { return config_; }
  SpikingNetwork& net() { return *net_; }
  const SpikingNetwork& net() const { return *net_; }
  MomentumOptimizer& weight_optimizer() { return *weight_opt_; }
  AdamOptimizer& arch_optimizer() { return *arch_opt_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t iteration() const { return iteration_; }
  const std::vector<IterationMetrics>& history() const { return history_; }

  /// Rebuilds both optimizers from the network's current parameter groups,
  /// discarding their buffers. Call after freezing masks or loading weights.
  void reset_optimizers();
  /// Arch group frozen: step 2 of the joint step is skipped.
  void set_arch_frozen(bool frozen) { arch_frozen_ = frozen; }
  void set_diagnostic_path(std::string path) { diagnostic_path_ = std::move(path); }

  /// Step 1: weights on the weight batch. Step 2: architecture group on the
  /// arch batch with the updated weights. Both use the same loss definition.
  /// Returns the step-1 metrics.
  IterationMetrics joint_step(const Tensor& weight_x, std::span<const int> weight_y, const Tensor& arch_x,
                              std::span<const int> arch_y);
  /// One retraining step: weights (cosine-scheduled SGD) and pruning scores together.
  IterationMetrics retrain_step(const Tensor& x, std::span<const int> y);

  /// One pass over the data: joint steps over zipped weight/arch batches for a
  /// search, plain steps over `weight_data` for a retrain.
  void run_epoch(const Dataset& weight_data, const Dataset* arch_data);
  /// Runs epochs up to the configured count (resumes where a checkpoint stopped).
  void run(const Dataset& weight_data, const Dataset* arch_data);

  Checkpoint checkpoint() const;

 private:
  TrainingSession(const RunConfig& cfg, Kind kind, NetworkPlan plan);
  std::size_t total_epochs() const;
  std::size_t iterations_per_epoch(const Dataset& weight_data, const Dataset* arch_data) const;
  LossTerms forward_loss(const Tensor& x, std::span<const int> y);
  void guard(const LossTerms& terms, const char* stage);

  RunConfig config_;
  Kind kind_;
  std::unique_ptr<SpikingNetwork> net_;
  std::unique_ptr<MomentumOptimizer> weight_opt_;
  std::unique_ptr<AdamOptimizer> arch_opt_;
  std::mt19937_64 rng_;
  std::size_t epoch_ = 0;
  std::size_t iteration_ = 0;
  std::size_t planned_iterations_ = 0;
  bool arch_frozen_ = false;
  std::string diagnostic_path_;
  std::vector<IterationMetrics> history_;
};

/// Copies every tensor of `from` whose name and shape also exist in `to`
/// (weights, BN state, scores, frozen masks). Returns the number copied.
std::size_t transfer_state(const SpikingNetwork& from, SpikingNetwork& to);

/// Applies a checkpoint's tensors to a network built from the same plan,
/// freezing masks that the checkpoint stores as frozen.
void load_network_state(SpikingNetwork& net, const Checkpoint& ckpt);

/// Rebuilds the network stored in a checkpoint (search or retrain).
std::unique_ptr<SpikingNetwork> network_from_checkpoint(const Checkpoint& ckpt);

void write_metrics_csv(std::ostream& os, const std::vector<IterationMetrics>& rows, const std::string& config_hash);

/// Result of search -> decode -> retrain on one configuration.
struct PipelineResult {
  std::string name;
  DecodedArchitecture arch;
  double search_accuracy = 0.0;
  ResourceReport report;
  double wall_seconds = 0.0;
  std::vector<IterationMetrics> search_history;
  std::vector<IterationMetrics> retrain_history;
  std::unique_ptr<SpikingNetwork> model;
};

/// Joint search with the configured lambdas and p, then decode and retrain.
PipelineResult joint_pipeline(const RunConfig& cfg, const Dataset& train, const Dataset& test);

/// Sequential baseline: architecture search only (A), retrain with pruning (P),
/// bit-width search on the frozen masks and retrain (Q), then the smallest
/// timestep count within `tolerance` of the best held-out accuracy (T).
PipelineResult sequential_pipeline(const RunConfig& cfg, const Dataset& train, const Dataset& test,
                                   double tolerance = 0.005);

/// Smallest t whose accuracy is within `tolerance` (absolute) of the best.
std::size_t select_timesteps(std::span<const double> accuracy_by_t, double tolerance);

struct SweepPoint {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  DecodedArchitecture arch;
  ResourceReport report;  // decoded network carrying the searched weights
};

/// Searches once per (lambda1, lambda2) pair with the same seed and measures
/// each decoded network with the weights it inherited from its supernet.
std::vector<SweepPoint> lambda_sweep(const RunConfig& cfg, std::span<const std::pair<double, double>> lambdas,
                                     const Dataset& train, const Dataset& test);

/// Joint-versus-sequential comparison: pipeline,acc,model_size_mb,bit_synops,timesteps,design_seconds
void write_comparison_csv(std::ostream& os, std::span<const PipelineResult* const> rows, const std::string& config_hash);

}  // namespace spikecomp
