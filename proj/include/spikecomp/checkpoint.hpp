#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "spikecomp/network.hpp"

namespace spikecomp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Raised for unreadable, truncated, corrupted or incompatible checkpoints.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  std::string kind;         // search, retrain, diagnostic, ...
  std::string config_text;  // RunConfig::to_text()
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::uint64_t iteration = 0;
  std::string rng_state;  // textual std::mt19937_64 state
  std::string arch_text;  // decoded architecture, empty for a supernet
  std::map<std::string, std::string> meta;
  std::vector<NamedTensor> tensors;

  const Tensor* find(const std::string& name) const;
};

/// Binary layout: magic "SPKCKPT", version, header fields, tensors by name
/// (shape + raw little-endian doubles), FNV-1a checksum of everything before it.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

/// Writes through a temporary file and renames, so a crash never leaves a half-written file.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Copies checkpoint tensors into `targets` by name. Every target must be
/// present with a matching shape; nothing is modified when any check fails.
void restore_tensors(const Checkpoint& ckpt, const std::vector<NamedTensor>& targets);

}  // namespace spikecomp
