#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "spikecomp/metrics.hpp"
#include "spikecomp/trainer.hpp"
#include "test_util.hpp"

using namespace spikecomp;
using testing_util::random_spikes;
using testing_util::tiny_config;

namespace {

struct EnergyRow {
  const char* model;
  double adds_m, mults_m, energy;
};

// Reference single-forward counts (millions) and energies (mJ).
constexpr EnergyRow kEnergyRows[] = {
    {"ANN (large)", 970.12, 970.12, 4.46},    {"ANN (medium)", 413.53, 413.53, 1.90},
    {"ANN (small)", 221.63, 221.63, 1.02},    {"AutoSNN", 585.60, 28.31, 0.63},
    {"SpikeDHS", 1305.65, 23.89, 1.26},       {"LitESNN (large)", 705.01, 11.94, 0.68},
    {"LitESNN (medium)", 271.41, 4.78, 0.26}, {"LitESNN (small)", 129.74, 2.39, 0.13},
};

ConvTrace pointwise_trace(Tensor input, std::size_t out_channels, Tensor mask) {
  ConvTrace c;
  c.name = "probe";
  c.geometry = {input.dim(1), out_channels, 1, 1, 0};
  c.input = std::move(input);
  c.mask = std::move(mask);
  c.out_h = c.input.dim(2);
  c.out_w = c.input.dim(3);
  c.has_bn = false;
  return c;
}

DecodedArchitecture all_conv_arch(const RunConfig& cfg, std::size_t timesteps, int bits) {
  DecodedArchitecture a;
  a.timesteps = timesteps;
  for (std::size_t c = 1; c <= cfg.backbone.cells; ++c) {
    DecodedCell cell;
    cell.bits = bits;
    cell.reduction = cfg.backbone.is_reduction(c);
    for (std::size_t j = 0; j < cfg.backbone.nodes; ++j) {
      cell.edges.push_back({0, j, EdgeOp::Conv});
      cell.edges.push_back({1, j, EdgeOp::Conv});
    }
    a.cells.push_back(cell);
  }
  return a;
}

}  // namespace

TEST(Energy, ReferenceRowArithmetic) {
  for (const auto& row : kEnergyRows) {
    EXPECT_NEAR(energy_mj(row.adds_m * 1e6, row.mults_m * 1e6), row.energy, 0.01) << row.model;
  }
  EXPECT_NEAR(energy_mj(705.01e6, 11.94e6), 0.6787, 1e-4);
  EXPECT_NEAR(energy_mj(413.53e6, 413.53e6), 413.53e6 * 4.6e-9, 1e-12);
  EXPECT_EQ(energy_mj(0.0, 0.0), 0.0);
}

TEST(Counting, OneSpikeThroughDensePointwiseConv) {
  NetworkTrace trace;
  trace.timesteps = 1;
  trace.batch = 1;
  Tensor x = Tensor::zeros({1, 3, 2, 2});
  x.data()[5] = 1.0;
  trace.convs.push_back(pointwise_trace(x, 8, Tensor::ones({8, 3, 1, 1})));
  const OperationCount c = count_operations(trace);
  EXPECT_EQ(c.synaptic_additions, 8u);
  EXPECT_EQ(c.additions(), 8u);
  EXPECT_EQ(c.multiplications(), 0u);
}

TEST(Counting, SilentTraceCostsOnlyDecay) {
  NetworkTrace trace;
  trace.timesteps = 4;
  trace.batch = 2;
  trace.lif_neurons = 10;
  trace.convs.push_back(pointwise_trace(Tensor::zeros({8, 3, 2, 2}), 4, Tensor::ones({4, 3, 1, 1})));
  const OperationCount c = count_operations(trace);
  EXPECT_EQ(c.synaptic_additions, 0u);
  EXPECT_EQ(c.additions(), 10u * 2 * 4);
  EXPECT_EQ(c.multiplications(), 10u * 2 * 4);
  EXPECT_DOUBLE_EQ(c.additions_per_sample(), 40.0);
}

TEST(Counting, EmptyTraceRejected) {
  EXPECT_THROW(count_operations(NetworkTrace{}), std::invalid_argument);
}

TEST(Counting, AnnModeChargesEveryMacOnce) {
  std::mt19937_64 rng(1);
  RunConfig cfg = tiny_config();
  SpikingNetwork net(cfg.backbone, NetworkPlan::from(all_conv_arch(cfg, 3, 32)), rng);
  NetworkTrace trace;
  ForwardOptions opts;
  opts.trace = &trace;
  net.forward(random_spikes({3 * 2, 2, 8, 8}, rng), 3, opts);
  const OperationCount ann = count_operations(trace, CountMode::Ann);
  EXPECT_EQ(ann.additions(), ann.multiplications());
  EXPECT_EQ(ann.synaptic_additions, 0u);
  const OperationCount snn = count_operations(trace, CountMode::Spiking);
  EXPECT_LT(snn.multiplications(), ann.multiplications() * 3);
  EXPECT_EQ(count_operations(trace).additions(), snn.additions());
}

TEST(Counting, MorePruningMeansFewerAdditions) {
  std::mt19937_64 rng(2);
  Tensor x = random_spikes({4, 6, 5, 5}, rng, 0.5);
  std::uint64_t previous = std::numeric_limits<std::uint64_t>::max();
  for (double p : {0.0, 25.0, 50.0, 75.0, 90.0}) {
    std::mt19937_64 scores_rng(3);
    Tensor scores = testing_util::random_tensor({5, 6, 3, 3}, scores_rng);
    // Nested masks: every weight kept at rate p is also kept at any lower rate.
    ConvTrace conv;
    conv.geometry = {6, 5, 3, 1, 1};
    conv.input = x;
    conv.mask = mask_from_scores(scores, p).detach();
    conv.out_h = conv.out_w = 5;
    conv.has_bn = false;
    NetworkTrace trace;
    trace.timesteps = 2;
    trace.batch = 2;
    trace.convs.push_back(conv);
    const std::uint64_t adds = count_operations(trace).synaptic_additions;
    EXPECT_LT(adds, previous) << "p = " << p;
    EXPECT_EQ(count_operations(trace).synaptic_additions, adds);
    previous = adds;
  }
}

TEST(ModelSize, Megabytes) {
  EXPECT_NEAR(bits_to_mb(32e6), 3.81, 5e-3);
  EXPECT_DOUBLE_EQ(bits_to_mb(32e6) / bits_to_mb(4e6 * 0.5), 16.0);
  EXPECT_EQ(bits_to_mb(0.0), 0.0);
}

class ReportTest : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg = tiny_config();
    cfg.backbone.prune_rate = 0.0;
    cfg.loss.prune_rate = 0.0;
    data = load_dataset(cfg.dataset, cfg.seed);
    data = data.subset(std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  }
  RunConfig cfg;
  Dataset data;
};

TEST_F(ReportTest, SynOpsFormulaEqualsEventCountWithoutPruning) {
  std::mt19937_64 rng(4);
  SpikingNetwork net(cfg.backbone, NetworkPlan::from(all_conv_arch(cfg, 3, 4)), rng);
  const ResourceReport r = measure_resources(net, data, Encoding::Spike, 3, 4, "probe");
  EXPECT_GT(r.synops, 0.0);
  EXPECT_NEAR(r.synops, r.synaptic_additions, 1e-9 * r.synops);
  // Cells run at 4 bits; the full-precision stem pushes the total above 4x.
  EXPECT_GT(r.bit_synops, 4.0 * r.synops);
  EXPECT_LT(r.bit_synops, 32.0 * r.synops);
  EXPECT_EQ(r.energy_mj, energy_mj(r.counts));
  EXPECT_EQ(r.timesteps, 3u);
  EXPECT_EQ(r.cell_bits, (std::vector<int>{4, 4}));
}

TEST_F(ReportTest, RepeatedReportsAreByteIdentical) {
  auto render = [&] {
    std::mt19937_64 rng(5);
    SpikingNetwork net(cfg.backbone, NetworkPlan::from(all_conv_arch(cfg, 2, 2)), rng);
    ResourceReport r = measure_resources(net, data, Encoding::Spike, 2, 5, "probe");
    std::ostringstream os;
    write_report_csv_header(os, cfg.hash());
    write_report_csv_row(os, r);
    write_report_text(os, r);
    return os.str();
  };
  EXPECT_EQ(render(), render());
}

TEST_F(ReportTest, CsvSchema) {
  std::mt19937_64 rng(6);
  SpikingNetwork net(cfg.backbone, NetworkPlan::from(all_conv_arch(cfg, 2, 2)), rng);
  const ResourceReport r = measure_resources(net, data, Encoding::Spike, 2, 5, "probe");
  std::ostringstream os;
  write_report_csv_header(os, "abc");
  write_report_csv_row(os, r);
  std::istringstream is(os.str());
  std::string hash, header, row;
  std::getline(is, hash);
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(hash, "# config_hash=abc");
  EXPECT_EQ(header, "model,acc,model_size_mb,synops,bit_synops,adds,mults,energy_mj,timesteps");
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 8);
  EXPECT_EQ(row.substr(0, 6), "probe,");
  EXPECT_EQ(row.substr(row.rfind(',') + 1), "2");
}

TEST_F(ReportTest, FourBitHalfPrunedCellsAreSixteenTimesSmaller) {
  RunConfig pruned = cfg;
  pruned.backbone.prune_rate = 50.0;
  std::mt19937_64 a(7), b(7);
  SpikingNetwork dense(cfg.backbone, NetworkPlan::from(all_conv_arch(cfg, 1, 32)), a);
  SpikingNetwork small(pruned.backbone, NetworkPlan::from(all_conv_arch(pruned, 1, 4)), b);
  auto cell_bits = [&](SpikingNetwork& net) {
    ForwardOptions opts;
    opts.collect_costs = true;
    const ForwardResult r = net.forward(encode_input(data, std::vector<std::size_t>{0}, 1, Encoding::Spike), 1, opts);
    std::vector<LayerCostDescriptor> cells;
    for (const auto& d : r.costs) {
      if (d.cell >= 1 && d.cell <= cfg.backbone.cells) cells.push_back(d);
    }
    return loss_mem(cells).item();
  };
  EXPECT_DOUBLE_EQ(cell_bits(dense) / cell_bits(small), 16.0);

  const ResourceReport rd = measure_resources(dense, data, Encoding::Spike, 1, 11, "dense");
  const ResourceReport rs = measure_resources(small, data, Encoding::Spike, 1, 11, "small");
  EXPECT_EQ(rd.model_size_bits, rd.dense_size_bits);
  EXPECT_EQ(rs.dense_size_bits, rd.dense_size_bits);
  EXPECT_LT(rs.model_size_bits, rd.model_size_bits);
}
