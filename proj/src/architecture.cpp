#include "spikecomp/architecture.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "spikecomp/network.hpp"

namespace spikecomp {

const char* edge_op_name(EdgeOp op) { return op == EdgeOp::Conv ? "conv3x3" : "skip"; }

std::size_t cell_edge_count(std::size_t nodes) { return nodes * (nodes + 3) / 2; }

std::size_t edge_index(std::size_t from, std::size_t to) { return to * (to + 3) / 2 + from; }

namespace {

// Index of the largest value; the first one wins ties.
std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace

DecodedArchitecture decode_architecture(const SpikingNetwork& net) {
  NoGradGuard no_grad;
  const BackboneConfig& cfg = net.config();
  DecodedArchitecture arch;
  arch.timesteps = net.searches_timesteps() ? argmax(net.psi().data()) + 1 : net.timesteps();

  for (std::size_t c = 1; c <= cfg.cells; ++c) {
    DecodedCell cell;
    cell.reduction = cfg.is_reduction(c);
    cell.bits = net.searches_bits() ? cfg.bit_candidates[argmax(net.beta(c).data())] : net.cell_bits(c);

    if (!net.searches_topology()) {
      cell.edges = net.cell_edges(c);
    } else {
      const Tensor alpha = net.alpha(c);
      for (std::size_t j = 0; j < cfg.nodes; ++j) {
        std::vector<std::size_t> sources(j + 2);
        std::iota(sources.begin(), sources.end(), 0);
        std::vector<double> strength(j + 2);
        std::vector<EdgeOp> best_op(j + 2);
        for (std::size_t i : sources) {
          const std::size_t e = edge_index(i, j);
          std::vector<double> logits{alpha[e * kEdgeOpCount], alpha[e * kEdgeOpCount + 1]};
          const Tensor w = softmax(Tensor::vector(logits));
          const std::size_t op = argmax(w.data());
          strength[i] = w[op];
          best_op[i] = static_cast<EdgeOp>(op);
        }
        std::stable_sort(sources.begin(), sources.end(),
                         [&](std::size_t a, std::size_t b) { return strength[a] > strength[b]; });
        std::vector<std::size_t> kept(sources.begin(), sources.begin() + 2);
        std::sort(kept.begin(), kept.end());
        for (std::size_t i : kept) cell.edges.push_back({i, j, best_op[i]});
      }
    }
    arch.cells.push_back(std::move(cell));
  }
  return arch;
}

void write_architecture(std::ostream& os, const DecodedArchitecture& arch) {
  os << "arch v1\n";
  os << "timesteps " << arch.timesteps << '\n';
  for (std::size_t c = 0; c < arch.cells.size(); ++c) {
    const auto& cell = arch.cells[c];
    os << "cell " << c + 1 << " bits " << cell.bits << " reduction " << (cell.reduction ? "yes" : "no") << '\n';
    for (const auto& e : cell.edges) os << "edge " << e.from << " -> " << e.to << ' ' << edge_op_name(e.op) << '\n';
  }
  os << "end\n";
}

std::string architecture_to_string(const DecodedArchitecture& arch) {
  std::ostringstream os;
  write_architecture(os, arch);
  return os.str();
}

DecodedArchitecture read_architecture(std::istream& is) {
  DecodedArchitecture arch;
  std::string line;
  std::size_t lineno = 0;
  bool header = false, ended = false, have_timesteps = false;
  auto fail = [&](const std::string& msg) {
    throw std::runtime_error("architecture line " + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (ended) fail("content after 'end'");
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (!header) {
      std::string version;
      ls >> version;
      if (key != "arch" || version != "v1") fail("expected header 'arch v1'");
      header = true;
    } else if (key == "timesteps") {
      if (!(ls >> arch.timesteps) || arch.timesteps == 0) fail("timesteps must be a positive integer");
      have_timesteps = true;
    } else if (key == "cell") {
      std::size_t index = 0;
      std::string bits_kw, red_kw, red;
      DecodedCell cell;
      if (!(ls >> index >> bits_kw >> cell.bits >> red_kw >> red) || bits_kw != "bits" || red_kw != "reduction" ||
          (red != "yes" && red != "no")) {
        fail("expected 'cell <k> bits <b> reduction yes|no'");
      }
      if (index != arch.cells.size() + 1) fail("cells must be numbered 1, 2, ... in order");
      if (cell.bits < 1) fail("bit-width must be at least 1");
      cell.reduction = red == "yes";
      arch.cells.push_back(cell);
    } else if (key == "edge") {
      if (arch.cells.empty()) fail("edge before any cell");
      DecodedEdge e;
      std::string arrow, op;
      if (!(ls >> e.from >> arrow >> e.to >> op) || arrow != "->") fail("expected 'edge <i> -> <j> <op>'");
      if (op == "conv3x3") {
        e.op = EdgeOp::Conv;
      } else if (op == "skip") {
        e.op = EdgeOp::Skip;
      } else {
        fail("unknown operation '" + op + "'");
      }
      if (e.from >= e.to + 2) fail("edge source must precede its target node");
      arch.cells.back().edges.push_back(e);
    } else if (key == "end") {
      ended = true;
    } else {
      fail("unknown keyword '" + key + "'");
    }
    std::string extra;
    if (ls >> extra) fail("trailing text '" + extra + "'");
  }
  if (!header) throw std::runtime_error("architecture: empty input");
  if (!ended) throw std::runtime_error("architecture: missing 'end' (truncated file?)");
  if (!have_timesteps) throw std::runtime_error("architecture: missing timesteps line");
  return arch;
}

DecodedArchitecture architecture_from_string(const std::string& text) {
  std::istringstream is(text);
  return read_architecture(is);
}

}  // namespace spikecomp
