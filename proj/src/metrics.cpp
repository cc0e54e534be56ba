#include "spikecomp/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace spikecomp {

std::uint64_t OperationCount::additions() const {
  return synaptic_additions + mac_operations + decay_operations + bn_operations + pool_additions + merge_additions +
         bias_additions;
}

std::uint64_t OperationCount::multiplications() const {
  return mac_operations + decay_operations + bn_operations + pool_multiplications;
}

namespace {

double per_sample(std::uint64_t total, std::uint64_t samples) {
  return samples == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(samples);
}

// For every input position, the number of unpruned synapses it reaches:
// sum over kernel taps that map it onto some output position.
std::vector<std::uint64_t> reach_table(const ConvTrace& conv, std::size_t h, std::size_t w) {
  const ConvGeometry& g = conv.geometry;
  const std::size_t k = g.kernel;
  std::vector<std::uint64_t> kept(g.in_channels * k * k, 0);
  auto m = conv.mask.data();
  for (std::size_t co = 0; co < g.out_channels; ++co)
    for (std::size_t i = 0; i < kept.size(); ++i) kept[i] += m[co * kept.size() + i] != 0.0;

  auto hits = [&](std::size_t tap, std::size_t pos, std::size_t out) {
    const std::ptrdiff_t shifted = static_cast<std::ptrdiff_t>(pos + g.padding) - static_cast<std::ptrdiff_t>(tap);
    if (shifted < 0 || shifted % static_cast<std::ptrdiff_t>(g.stride) != 0) return false;
    return static_cast<std::size_t>(shifted) / g.stride < out;
  };
  std::vector<std::uint64_t> table(g.in_channels * h * w, 0);
  for (std::size_t ci = 0; ci < g.in_channels; ++ci)
    for (std::size_t iy = 0; iy < h; ++iy)
      for (std::size_t ix = 0; ix < w; ++ix) {
        std::uint64_t r = 0;
        for (std::size_t ky = 0; ky < k; ++ky) {
          if (!hits(ky, iy, conv.out_h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            if (hits(kx, ix, conv.out_w)) r += kept[(ci * k + ky) * k + kx];
          }
        }
        table[(ci * h + iy) * w + ix] = r;
      }
  return table;
}

}  // namespace

double OperationCount::additions_per_sample() const { return per_sample(additions(), samples); }
double OperationCount::multiplications_per_sample() const { return per_sample(multiplications(), samples); }
double OperationCount::synaptic_additions_per_sample() const { return per_sample(synaptic_additions, samples); }

OperationCount& OperationCount::operator+=(const OperationCount& o) {
  samples += o.samples;
  synaptic_additions += o.synaptic_additions;
  mac_operations += o.mac_operations;
  decay_operations += o.decay_operations;
  bn_operations += o.bn_operations;
  pool_additions += o.pool_additions;
  pool_multiplications += o.pool_multiplications;
  merge_additions += o.merge_additions;
  bias_additions += o.bias_additions;
  return *this;
}

OperationCount count_operations(const NetworkTrace& trace, CountMode mode) {
  if (trace.timesteps == 0 || trace.batch == 0 || trace.convs.empty()) {
    throw std::invalid_argument("count_operations: no recorded trace");
  }
  const bool ann = mode == CountMode::Ann;
  const std::uint64_t n = trace.batch;
  const std::uint64_t steps = ann ? 1 : trace.timesteps;
  OperationCount c;
  c.samples = n;
  for (const auto& conv : trace.convs) {
    const std::size_t h = conv.input.dim(2), w = conv.input.dim(3);
    const auto table = reach_table(conv, h, w);
    const std::uint64_t dense = std::accumulate(table.begin(), table.end(), std::uint64_t{0});
    if (ann || !conv.spiking_input) {
      c.mac_operations += dense * n * steps;
    } else {
      auto x = conv.input.data();
      const std::size_t plane = table.size();
      for (std::size_t r = 0; r < conv.input.dim(0); ++r)
        for (std::size_t i = 0; i < plane; ++i) {
          if (x[r * plane + i] != 0.0) c.synaptic_additions += table[i];
        }
    }
    if (conv.has_bn) c.bn_operations += conv.geometry.out_channels * conv.out_h * conv.out_w * n * steps;
  }
  c.mac_operations += std::uint64_t{trace.fc_inputs} * trace.fc_outputs * n * steps;
  if (!ann) {
    c.decay_operations = std::uint64_t{trace.lif_neurons} * n * steps;
    c.merge_additions = std::uint64_t{trace.merge_additions} * n * steps;
    c.pool_additions = std::uint64_t{trace.pool_elements} * n * steps;
    c.pool_multiplications = std::uint64_t{trace.pool_channels} * n * steps;
    c.bias_additions = std::uint64_t{trace.fc_outputs} * n * steps;
  }
  return c;
}

double energy_mj(double additions, double multiplications) {
  const double joules = additions * kAddEnergyPicojoule * 1e-12 + multiplications * kMultEnergyPicojoule * 1e-12;
  return joules * 1e3;
}

double energy_mj(const OperationCount& count) {
  return energy_mj(count.additions_per_sample(), count.multiplications_per_sample());
}

double bits_to_mb(double bits) { return bits / (8.0 * 1024.0 * 1024.0); }

namespace {

std::vector<std::size_t> predictions(const Tensor& logits, std::size_t timesteps) {
  const std::size_t batch = logits.dim(0) / timesteps;
  const std::size_t k = logits.dim(1);
  std::vector<double> avg(batch * k, 0.0);
  auto l = logits.data();
  for (std::size_t t = 0; t < timesteps; ++t)
    for (std::size_t i = 0; i < batch * k; ++i) avg[i] += l[t * batch * k + i];
  std::vector<std::size_t> out(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto first = avg.begin() + static_cast<std::ptrdiff_t>(b * k);
    out[b] = static_cast<std::size_t>(std::max_element(first, first + static_cast<std::ptrdiff_t>(k)) - first);
  }
  return out;
}

std::size_t correct_count(const Tensor& logits, std::size_t timesteps, std::span<const int> labels) {
  const auto pred = predictions(logits, timesteps);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == static_cast<std::size_t>(labels[i]);
  return hits;
}

std::vector<std::size_t> batch_range(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return idx;
}

}  // namespace

double evaluate_accuracy(SpikingNetwork& net, const Dataset& data, Encoding encoding, std::size_t timesteps,
                         std::size_t batch_size) {
  if (data.size() == 0) throw std::invalid_argument("evaluate_accuracy: empty dataset");
  if (batch_size == 0) throw std::invalid_argument("evaluate_accuracy: batch size must be positive");
  NoGradGuard no_grad;
  std::size_t hits = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const auto idx = batch_range(begin, std::min(data.size(), begin + batch_size));
    const Tensor x = encode_input(data, idx, timesteps, encoding);
    const ForwardResult r = net.forward(x, timesteps, ForwardOptions{});
    hits += correct_count(r.logits, timesteps, gather_labels(data, idx));
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

ResourceReport measure_resources(SpikingNetwork& net, const Dataset& data, Encoding encoding, std::size_t timesteps,
                                 std::size_t batch_size, const std::string& model_name) {
  if (data.size() == 0) throw std::invalid_argument("measure_resources: empty dataset");
  if (batch_size == 0) throw std::invalid_argument("measure_resources: batch size must be positive");
  NoGradGuard no_grad;
  ResourceReport rep;
  rep.model = model_name;
  rep.timesteps = timesteps;
  rep.prune_rate = net.config().prune_rate;
  for (std::size_t c = 1; c <= net.config().cells; ++c) {
    const int fixed = net.cell_bits(c);
    rep.cell_bits.push_back(fixed != 0 ? fixed : decode_architecture(net).cells[c - 1].bits);
  }
  std::size_t hits = 0;
  double synops_total = 0.0, bit_synops_total = 0.0;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const auto idx = batch_range(begin, std::min(data.size(), begin + batch_size));
    const Tensor x = encode_input(data, idx, timesteps, encoding);
    NetworkTrace trace;
    ForwardOptions opts;
    opts.collect_costs = true;
    opts.trace = &trace;
    const ForwardResult r = net.forward(x, timesteps, opts);
    hits += correct_count(r.logits, timesteps, gather_labels(data, idx));
    rep.counts += count_operations(trace);
    if (begin == 0) {
      rep.model_size_bits = loss_mem(r.costs).item();
      for (const auto& d : r.costs) rep.dense_size_bits += 32.0 * d.parameter_count();
    }
    for (const auto& d : r.costs) {
      if (!d.counts_synops) continue;
      double s = 0.0;
      for (double v : d.rates) s += v;
      const double layer_synops = synops(d, s) * static_cast<double>(idx.size());
      const double bits = d.bits.defined() ? d.bits.item() : 32.0;
      const double weight = d.edge_weight.defined() ? d.edge_weight.item() : 1.0;
      synops_total += weight * layer_synops;
      bit_synops_total += weight * bits * layer_synops;
    }
  }
  const double n = static_cast<double>(data.size());
  rep.accuracy = static_cast<double>(hits) / n;
  rep.model_size_mb = bits_to_mb(rep.model_size_bits);
  rep.synops = synops_total / n;
  rep.bit_synops = bit_synops_total / n;
  rep.additions = rep.counts.additions_per_sample();
  rep.multiplications = rep.counts.multiplications_per_sample();
  rep.synaptic_additions = rep.counts.synaptic_additions_per_sample();
  rep.energy_mj = energy_mj(rep.counts);
  return rep;
}

void write_report_csv_header(std::ostream& os, const std::string& config_hash) {
  os << "# config_hash=" << config_hash << '\n';
  os << "model,acc,model_size_mb,synops,bit_synops,adds,mults,energy_mj,timesteps\n";
}

void write_report_csv_row(std::ostream& os, const ResourceReport& r) {
  const auto old = os.precision(10);
  os << r.model << ',' << r.accuracy << ',' << r.model_size_mb << ',' << r.synops << ',' << r.bit_synops << ','
     << r.additions << ',' << r.multiplications << ',' << r.energy_mj << ',' << r.timesteps << '\n';
  os.precision(old);
}

void write_report_text(std::ostream& os, const ResourceReport& r) {
  const auto old = os.precision(10);
  os << "model " << r.model << '\n';
  if (!r.config_hash.empty()) os << "config_hash " << r.config_hash << '\n';
  os << "accuracy " << r.accuracy << '\n';
  os << "model_size_bits " << r.model_size_bits << '\n';
  os << "dense_size_bits " << r.dense_size_bits << '\n';
  os << "model_size_mb " << r.model_size_mb << '\n';
  os << "timesteps " << r.timesteps << '\n';
  os << "prune_rate " << r.prune_rate << '\n';
  os << "cell_bits";
  for (int b : r.cell_bits) os << ' ' << b;
  os << '\n';
  os << "synops " << r.synops << '\n';
  os << "bit_synops " << r.bit_synops << '\n';
  os << "additions " << r.additions << '\n';
  os << "multiplications " << r.multiplications << '\n';
  os << "synaptic_additions " << r.synaptic_additions << '\n';
  const double n = static_cast<double>(std::max<std::uint64_t>(1, r.counts.samples));
  os << "mac_operations " << static_cast<double>(r.counts.mac_operations) / n << '\n';
  os << "decay_operations " << static_cast<double>(r.counts.decay_operations) / n << '\n';
  os << "bn_operations " << static_cast<double>(r.counts.bn_operations) / n << '\n';
  os << "pool_additions " << static_cast<double>(r.counts.pool_additions) / n << '\n';
  os << "pool_multiplications " << static_cast<double>(r.counts.pool_multiplications) / n << '\n';
  os << "merge_additions " << static_cast<double>(r.counts.merge_additions) / n << '\n';
  os << "bias_additions " << static_cast<double>(r.counts.bias_additions) / n << '\n';
  os << "energy_mj " << r.energy_mj << '\n';
  os.precision(old);
}

}  // namespace spikecomp
