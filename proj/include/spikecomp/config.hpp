#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>

#include "spikecomp/dataset.hpp"
#include "spikecomp/network.hpp"
#include "spikecomp/objectives.hpp"

namespace spikecomp {

/// Every knob of a search / retrain / report run.
struct RunConfig {
  BackboneConfig backbone;
  LossConfig loss;  // loss.prune_rate mirrors backbone.prune_rate
  DatasetSpec dataset;
  Encoding encoding = Encoding::Spike;

  std::size_t search_epochs = 20;
  std::size_t retrain_epochs = 20;
  std::size_t batch_size = 30;
  double weight_lr = 0.025;
  double weight_momentum = 0.9;
  double arch_lr = 3e-4;
  double retrain_lr = 0.025;
  double arch_split = 0.5;  // fraction of training data held out for arch steps
  std::size_t aux_cell = 1;  // 1-based; 0 disables
  double aux_weight = 0.4;
  std::uint64_t seed = 7;

  /// Profile defaults: cifar, gsc or desk.
  static RunConfig defaults(const std::string& profile);

  void validate() const;
  /// Canonical key = value text; parse(to_text()) reproduces the config.
  std::string to_text() const;
  /// FNV-1a of to_text(), as 16 hex digits.
  std::string hash() const;
};

/// Parses key = value lines ('#' starts a comment). The `profile` key, or the
/// override when non-empty, selects the defaults the remaining keys modify.
/// Unknown or repeated keys and malformed values are errors.
RunConfig parse_config(const std::string& text, const std::string& profile_override = "");
RunConfig load_config(const std::string& path, const std::string& profile_override = "");

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace spikecomp
