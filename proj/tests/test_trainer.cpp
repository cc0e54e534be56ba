#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <sstream>

#include "spikecomp/checkpoint.hpp"
#include "spikecomp/trainer.hpp"
#include "test_util.hpp"

using namespace spikecomp;
using testing_util::tiny_config;

namespace {

struct Batch {
  Tensor x;
  std::vector<int> y;
};

Batch make_batch(const Dataset& data, std::size_t begin, std::size_t count, std::size_t timesteps) {
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), begin);
  return {encode_input(data, idx, timesteps, Encoding::Spike), gather_labels(data, idx)};
}

std::vector<std::vector<double>> snapshot(const std::vector<NamedTensor>& group) {
  std::vector<std::vector<double>> out;
  for (const auto& p : group) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

bool same_values(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!testing_util::bit_equal(a[i], b[i])) return false;
  }
  return true;
}

DecodedArchitecture tiny_arch(const RunConfig& cfg, std::size_t timesteps) {
  DecodedArchitecture a;
  a.timesteps = timesteps;
  for (std::size_t c = 1; c <= cfg.backbone.cells; ++c) {
    DecodedCell cell;
    cell.bits = 2;
    cell.reduction = cfg.backbone.is_reduction(c);
    for (std::size_t j = 0; j < cfg.backbone.nodes; ++j) {
      cell.edges.push_back({0, j, EdgeOp::Conv});
      cell.edges.push_back({j + 1, j, EdgeOp::Skip});
    }
    a.cells.push_back(cell);
  }
  return a;
}

class TrainerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg = tiny_config();
    data = load_dataset(cfg.dataset, cfg.seed);
    const std::size_t t = cfg.backbone.timesteps;
    weight_batch = make_batch(data, 0, 10, t);
    arch_batch = make_batch(data, 30, 10, t);
  }

  RunConfig cfg;
  Dataset data;
  Batch weight_batch, arch_batch;
};

}  // namespace

TEST_F(TrainerTest, StepOneLeavesArchitectureAloneAndStepTwoLeavesWeightsAlone) {
  TrainingSession frozen = TrainingSession::search(cfg);
  TrainingSession full = TrainingSession::search(cfg);
  frozen.set_arch_frozen(true);
  const auto arch_before = snapshot(frozen.net().arch_parameters());
  ASSERT_TRUE(same_values(arch_before, snapshot(full.net().arch_parameters())));

  frozen.joint_step(weight_batch.x, weight_batch.y, arch_batch.x, arch_batch.y);
  full.joint_step(weight_batch.x, weight_batch.y, arch_batch.x, arch_batch.y);

  // Only step 1 ran in `frozen`: the architecture group is untouched.
  EXPECT_TRUE(same_values(snapshot(frozen.net().arch_parameters()), arch_before));
  // Step 2 in `full` must not have moved any weight past where step 1 left it.
  EXPECT_TRUE(same_values(snapshot(full.net().weight_parameters()), snapshot(frozen.net().weight_parameters())));
  EXPECT_FALSE(same_values(snapshot(full.net().arch_parameters()), arch_before));
  const auto psi = full.net().psi();
  EXPECT_FALSE(std::all_of(psi.data().begin(), psi.data().end(), [](double v) { return v == 0.0; }));
}

TEST_F(TrainerTest, EmptyBatchRejected) {
  TrainingSession s = TrainingSession::search(cfg);
  EXPECT_THROW(s.joint_step(weight_batch.x, std::vector<int>{}, arch_batch.x, arch_batch.y), std::invalid_argument);
}

TEST_F(TrainerTest, SameSeedSameRun) {
  auto run_once = [&] {
    TrainingSession s = TrainingSession::search(cfg);
    const DatasetSplit split = split_for_search(data, cfg);
    s.run(split.first, &split.second);
    return std::make_pair(s.history(), serialize_checkpoint(s.checkpoint()));
  };
  const auto [h1, c1] = run_once();
  const auto [h2, c2] = run_once();
  ASSERT_EQ(h1.size(), h2.size());
  for (std::size_t i = 0; i < h1.size(); ++i) EXPECT_EQ(h1[i].loss, h2[i].loss);
  EXPECT_EQ(c1, c2);
}

TEST_F(TrainerTest, CheckpointRoundTripThenStepIsBitIdentical) {
  cfg.search_epochs = 2;
  const DatasetSplit split = split_for_search(data, cfg);
  TrainingSession a = TrainingSession::search(cfg);
  a.run_epoch(split.first, &split.second);

  TrainingSession b = TrainingSession::from_checkpoint(deserialize_checkpoint(serialize_checkpoint(a.checkpoint())));
  EXPECT_EQ(b.epoch(), 1u);
  EXPECT_EQ(b.iteration(), a.iteration());

  const IterationMetrics ma = a.joint_step(weight_batch.x, weight_batch.y, arch_batch.x, arch_batch.y);
  const IterationMetrics mb = b.joint_step(weight_batch.x, weight_batch.y, arch_batch.x, arch_batch.y);
  EXPECT_EQ(ma.loss, mb.loss);
  a.run_epoch(split.first, &split.second);
  b.run_epoch(split.first, &split.second);
  EXPECT_EQ(serialize_checkpoint(a.checkpoint()), serialize_checkpoint(b.checkpoint()));
}

TEST_F(TrainerTest, RetrainCheckpointRoundTrip) {
  TrainingSession a = TrainingSession::retrain(cfg, tiny_arch(cfg, 2));
  const auto first = make_batch(data, 0, 10, 2);
  a.retrain_step(first.x, first.y);
  TrainingSession b = TrainingSession::from_checkpoint(deserialize_checkpoint(serialize_checkpoint(a.checkpoint())));
  EXPECT_EQ(b.kind(), TrainingSession::Kind::Retrain);
  const auto xs = make_batch(data, 10, 10, 2);
  EXPECT_EQ(a.retrain_step(xs.x, xs.y).loss, b.retrain_step(xs.x, xs.y).loss);
  EXPECT_EQ(serialize_checkpoint(a.checkpoint()), serialize_checkpoint(b.checkpoint()));
}

TEST_F(TrainerTest, FrozenArchitectureTrainingReducesCrossEntropy) {
  cfg.loss.lambda1 = cfg.loss.lambda2 = 0.0;
  TrainingSession s = TrainingSession::search(cfg);
  s.net().psi().data()[cfg.backbone.timesteps - 1] = 1000.0;
  s.set_arch_frozen(true);
  std::vector<double> ce;
  for (int i = 0; i < 20; ++i) ce.push_back(s.joint_step(weight_batch.x, weight_batch.y, arch_batch.x, arch_batch.y).ce);
  const double head = std::accumulate(ce.begin(), ce.begin() + 5, 0.0) / 5.0;
  const double tail = std::accumulate(ce.end() - 5, ce.end(), 0.0) / 5.0;
  EXPECT_LT(tail, head - 0.02);
  EXPECT_LT(ce.back(), ce.front());
}

TEST_F(TrainerTest, FrozenOneHotSupernetTrainsLikeTheFixedNetwork) {
  cfg.backbone.nodes = 1;
  cfg.loss.lambda1 = cfg.loss.lambda2 = 0.0;
  TrainingSession super = TrainingSession::search(cfg);
  for (std::size_t c = 1; c <= cfg.backbone.cells; ++c) {
    Tensor alpha = super.net().alpha(c);
    for (std::size_t e = 0; e < alpha.dim(0); ++e) alpha.data()[e * 2 + (e + c) % 2] = 1000.0;
    super.net().beta(c).data()[1] = 1000.0;
  }
  super.net().psi().data()[cfg.backbone.timesteps - 1] = 1000.0;
  const DecodedArchitecture arch = decode_architecture(super.net());
  ASSERT_EQ(arch.timesteps, cfg.backbone.timesteps);

  TrainingSession fixed = TrainingSession::search(cfg, NetworkPlan::from(arch));
  transfer_state(super.net(), fixed.net());
  super.set_arch_frozen(true);
  fixed.set_arch_frozen(true);
  for (int i = 0; i < 5; ++i) {
    const auto a = super.joint_step(weight_batch.x, weight_batch.y, arch_batch.x, arch_batch.y);
    const auto b = fixed.joint_step(weight_batch.x, weight_batch.y, arch_batch.x, arch_batch.y);
    EXPECT_EQ(a.ce, b.ce) << "iteration " << i;
  }
}

TEST_F(TrainerTest, AuxiliaryWeightZeroLeavesMainCrossEntropy) {
  TrainingSession s = TrainingSession::retrain(cfg, tiny_arch(cfg, 3));
  const auto b = make_batch(data, 0, 6, 3);
  ForwardOptions opts;
  opts.collect_costs = true;
  const ForwardResult r = s.net().forward(b.x, 3, opts);
  ASSERT_TRUE(r.aux_logits.defined());
  const double main_ce = averaged_ce(r.logits, b.y, 3).item();
  const double aux_ce = averaged_ce(r.aux_logits, b.y, 3).item();
  EXPECT_EQ(compute_loss(s.net(), r, b.y, LossConfig{}, 0.0).total.item(), main_ce);
  EXPECT_NEAR(compute_loss(s.net(), r, b.y, LossConfig{}, 0.4).total.item(), main_ce + 0.4 * aux_ce, 1e-12);
}

TEST_F(TrainerTest, DecodedSizeIsFourBitsTimesHalfTheWeights) {
  DecodedArchitecture arch = tiny_arch(cfg, 2);
  for (auto& cell : arch.cells) cell.bits = 4;
  TrainingSession s = TrainingSession::retrain(cfg, arch);
  ForwardOptions opts;
  opts.collect_costs = true;
  const ForwardResult r = s.net().forward(make_batch(data, 0, 2, 2).x, 2, opts);
  double expect = 0.0;
  for (const auto& d : r.costs) {
    const double kept = d.parameter_count() * (1.0 - d.prune_rate / 100.0);
    expect += d.bits.defined() ? d.bits.item() * kept : 32.0 * kept;
    if (d.cell >= 1 && d.cell <= cfg.backbone.cells) {
      EXPECT_EQ(d.bits.item(), 4.0) << d.name;
      EXPECT_EQ(d.prune_rate, 50.0) << d.name;
    }
  }
  EXPECT_DOUBLE_EQ(loss_mem(r.costs).item(), expect);
}

TEST_F(TrainerTest, DecodedConfigMismatchRejected) {
  DecodedArchitecture arch = tiny_arch(cfg, 2);
  arch.cells.push_back(arch.cells.back());
  EXPECT_THROW(TrainingSession::retrain(cfg, arch), std::invalid_argument);

  arch = tiny_arch(cfg, cfg.backbone.timesteps + 1);
  EXPECT_THROW(TrainingSession::retrain(cfg, arch), std::invalid_argument);

  arch = tiny_arch(cfg, 2);
  arch.cells[0].reduction = !arch.cells[0].reduction;
  EXPECT_THROW(TrainingSession::retrain(cfg, arch), std::invalid_argument);

  arch = tiny_arch(cfg, 2);
  arch.cells[0].edges.push_back({0, cfg.backbone.nodes, EdgeOp::Conv});
  EXPECT_THROW(TrainingSession::retrain(cfg, arch), std::invalid_argument);
}

TEST(StageT, FlatAccuracyPicksOneTimestep) {
  EXPECT_EQ(select_timesteps(std::vector<double>{0.8, 0.8, 0.8, 0.8}, 0.005), 1u);
  EXPECT_EQ(select_timesteps(std::vector<double>{0.5, 0.9, 0.903, 0.85}, 0.005), 2u);
  EXPECT_EQ(select_timesteps(std::vector<double>{0.5, 0.89, 0.903, 0.85}, 0.005), 3u);
}

TEST_F(TrainerTest, DivergenceAbortsWithDiagnosticCheckpoint) {
  const auto dir = std::filesystem::temp_directory_path() / "spikecomp_divergence_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "diag.ckpt").string();
  std::filesystem::remove(path);

  TrainingSession s = TrainingSession::search(cfg);
  s.set_diagnostic_path(path);
  // Spiking layers turn NaN potentials into silence, so poison the classifier bias.
  for (auto& p : s.net().weight_parameters()) {
    if (p.name == "classifier.b") p.tensor.data()[0] = std::numeric_limits<double>::quiet_NaN();
  }
  EXPECT_THROW(s.joint_step(weight_batch.x, weight_batch.y, arch_batch.x, arch_batch.y), DivergenceError);
  const Checkpoint ck = load_checkpoint(path);
  EXPECT_EQ(ck.kind, "diagnostic");
  EXPECT_EQ(ck.meta.at("diverged_at"), "weight step");
  EXPECT_NO_THROW(TrainingSession::from_checkpoint(ck));
  std::filesystem::remove_all(dir);
}

TEST_F(TrainerTest, MetricsCsvCarriesConfigHash) {
  TrainingSession s = TrainingSession::search(cfg);
  s.joint_step(weight_batch.x, weight_batch.y, arch_batch.x, arch_batch.y);
  std::ostringstream os;
  write_metrics_csv(os, s.history(), cfg.hash());
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "# config_hash=" + cfg.hash());
  std::getline(is, line);
  EXPECT_EQ(line, "iter,loss,ce,mem_bits,bit_synops,S,b_w_mean");
  std::getline(is, line);
  EXPECT_EQ(std::count(line.begin(), line.end(), ','), 6);
  EXPECT_EQ(line.substr(0, 2), "1,");
}
