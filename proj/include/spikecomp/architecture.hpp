#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace spikecomp {

class SpikingNetwork;

enum class EdgeOp { Conv = 0, Skip = 1 };

inline constexpr std::size_t kEdgeOpCount = 2;

const char* edge_op_name(EdgeOp op);

/// Number of incoming edges of all nodes of a cell with `nodes` nodes.
std::size_t cell_edge_count(std::size_t nodes);
/// Flat index of the edge from source `from` (0, 1 = cell inputs, 2 + k = node k)
/// into node `to`. Edges are ordered node by node.
std::size_t edge_index(std::size_t from, std::size_t to);

struct DecodedEdge {
  std::size_t from = 0;
  std::size_t to = 0;
  EdgeOp op = EdgeOp::Conv;

  bool operator==(const DecodedEdge&) const = default;
};

struct DecodedCell {
  int bits = 32;
  bool reduction = false;
  std::vector<DecodedEdge> edges;  // two per node, sorted by (to, from)

  bool operator==(const DecodedCell&) const = default;
};

struct DecodedArchitecture {
  std::size_t timesteps = 1;
  std::vector<DecodedCell> cells;

  bool operator==(const DecodedArchitecture&) const = default;
};

/// Picks, per node, the two incoming edges with the largest max_o softmax(alpha)_o,
/// each with its argmax operation; per cell the argmax-beta bit-width; and the
/// argmax-psi timestep count. Ties go to the lowest index. Parts of the network
/// that are already fixed (topology, bits, timesteps) are copied through.
DecodedArchitecture decode_architecture(const SpikingNetwork& net);

/// Human-readable format:
///   arch v1
///   timesteps 4
///   cell 1 bits 2 reduction no
///   edge 0 -> 0 conv3x3
///   ...
///   end
void write_architecture(std::ostream& os, const DecodedArchitecture& arch);
std::string architecture_to_string(const DecodedArchitecture& arch);
/// Throws std::runtime_error with the offending line number on malformed input.
DecodedArchitecture read_architecture(std::istream& is);
DecodedArchitecture architecture_from_string(const std::string& text);

}  // namespace spikecomp
