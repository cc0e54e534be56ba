#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "spikecomp/dataset.hpp"
#include "spikecomp/network.hpp"

namespace spikecomp {

inline constexpr double kAddEnergyPicojoule = 0.9;
inline constexpr double kMultEnergyPicojoule = 3.7;

/// Exact operation totals over a recorded trace, itemized by source.
struct OperationCount {
  std::uint64_t samples = 0;
  std::uint64_t synaptic_additions = 0;  // accumulate-only events of spiking synapses
  std::uint64_t mac_operations = 0;      // real-valued multiply-accumulates (stem on direct input, classifier)
  std::uint64_t decay_operations = 0;    // one multiply and one add per neuron per timestep
  std::uint64_t bn_operations = 0;       // one multiply and one add per normalized element
  std::uint64_t pool_additions = 0;
  std::uint64_t pool_multiplications = 0;
  std::uint64_t merge_additions = 0;
  std::uint64_t bias_additions = 0;

  std::uint64_t additions() const;
  std::uint64_t multiplications() const;
  /// Averages per single forward pass (one sample).
  double additions_per_sample() const;
  double multiplications_per_sample() const;
  double synaptic_additions_per_sample() const;

  OperationCount& operator+=(const OperationCount& other);
};

enum class CountMode {
  Spiking,  // synapses fire on spikes (AC); membrane decay is charged
  Ann,  // conventional-network baseline: every synapse is a MAC at a single timestep
};

/// Counts operations recorded in `trace`. Throws std::invalid_argument for an
/// empty trace.
OperationCount count_operations(const NetworkTrace& trace, CountMode mode = CountMode::Spiking);

/// Energy in mJ at 0.9 pJ per addition and 3.7 pJ per multiplication.
double energy_mj(double additions, double multiplications);
double energy_mj(const OperationCount& count);

/// bits / (8 * 2^20)
double bits_to_mb(double bits);

/// Classification accuracy of the time-averaged output over `timesteps` steps.
double evaluate_accuracy(SpikingNetwork& net, const Dataset& data, Encoding encoding, std::size_t timesteps,
                         std::size_t batch_size);

struct ResourceReport {
  std::string model;
  std::string config_hash;
  double accuracy = 0.0;
  double model_size_bits = 0.0;
  double dense_size_bits = 0.0;  // same layers at 32 bits with no pruning
  double model_size_mb = 0.0;
  double synops = 0.0;
  double bit_synops = 0.0;
  double additions = 0.0;
  double multiplications = 0.0;
  double synaptic_additions = 0.0;
  double energy_mj = 0.0;
  std::size_t timesteps = 0;
  std::vector<int> cell_bits;
  double prune_rate = 0.0;
  OperationCount counts;
};

/// Measurement pass over `data` in evaluation mode: accuracy, size, SynOps,
/// bit-SynOps, exact operation counts and energy, all per sample.
ResourceReport measure_resources(SpikingNetwork& net, const Dataset& data, Encoding encoding, std::size_t timesteps,
                                 std::size_t batch_size, const std::string& model_name);

void write_report_csv_header(std::ostream& os, const std::string& config_hash);
void write_report_csv_row(std::ostream& os, const ResourceReport& report);
/// Human-readable block with the itemized counts.
void write_report_text(std::ostream& os, const ResourceReport& report);

}  // namespace spikecomp
