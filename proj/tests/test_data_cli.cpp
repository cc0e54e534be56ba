#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "spikecomp/checkpoint.hpp"
#include "spikecomp/cli.hpp"
#include "spikecomp/config.hpp"
#include "spikecomp/dataset.hpp"
#include "spikecomp/trainer.hpp"
#include "test_util.hpp"

using namespace spikecomp;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("spikecomp_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

std::string be32(std::uint32_t v) {
  return {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8), static_cast<char>(v)};
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "spikecomp");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

constexpr const char* kTinyConfig =
    "profile = desk\n"
    "init_channels = 4\n"
    "dataset.samples = 60\n"
    "search_epochs = 1\n"
    "retrain_epochs = 1\n"
    "batch_size = 10\n";

}  // namespace

TEST(Synthetic, RegenerationIsBitIdentical) {
  DatasetSpec spec;
  spec.samples = 300;
  const Dataset a = make_synthetic_patterns(spec, 7);
  const Dataset b = make_synthetic_patterns(spec, 7);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_TRUE(testing_util::bit_equal(a.inputs.data(), b.inputs.data()));
  EXPECT_EQ(a.inputs.shape(), (Shape{300, 4, 2, 8, 8}));
  const Dataset c = make_synthetic_patterns(spec, 8);
  EXPECT_FALSE(testing_util::bit_equal(a.inputs.data(), c.inputs.data()));
  for (int y : a.labels) EXPECT_TRUE(y >= 0 && y < 3);
  for (double v : a.inputs.data()) EXPECT_TRUE(v == 0.0 || v == 1.0);
}

TEST(Synthetic, FirstFrameCarriesNoClassInformation) {
  DatasetSpec spec;
  spec.samples = 30;
  spec.noise = 0.0;
  const Dataset d = make_synthetic_patterns(spec, 3);
  const std::size_t frame = 2 * 8 * 8, sample = 4 * frame;
  for (std::size_t i = 1; i < d.size(); ++i)
    for (std::size_t j = 0; j < frame; ++j) ASSERT_EQ(d.inputs[i * sample + j], d.inputs[j]);
}

TEST(Idx, FourSampleFixture) {
  const fs::path dir = scratch_dir("idx");
  std::string images = be32(0x00000803) + be32(4) + be32(2) + be32(3);
  for (int i = 0; i < 24; ++i) images.push_back(static_cast<char>(i * 10));
  std::string labels = be32(0x00000801) + be32(4) + std::string{1, 0, 2, 1};
  write_file(dir / "img.idx", images);
  write_file(dir / "lab.idx", labels);
  const Dataset d = load_idx((dir / "img.idx").string(), (dir / "lab.idx").string(), 3);
  EXPECT_EQ(d.inputs.shape(), (Shape{4, 1, 2, 3}));
  EXPECT_EQ(d.labels, (std::vector<int>{1, 0, 2, 1}));
  EXPECT_DOUBLE_EQ(d.inputs[7], 70.0 / 255.0);

  write_file(dir / "bad.idx", be32(0x00000801) + be32(4) + be32(2) + be32(3));
  EXPECT_THROW(load_idx((dir / "bad.idx").string(), (dir / "lab.idx").string(), 3), std::runtime_error);
  write_file(dir / "short.idx", images.substr(0, 30));
  EXPECT_THROW(load_idx((dir / "short.idx").string(), (dir / "lab.idx").string(), 3), std::runtime_error);
  EXPECT_THROW(load_idx((dir / "missing.idx").string(), (dir / "lab.idx").string(), 3), std::runtime_error);
  fs::remove_all(dir);
}

TEST(Csv, TableLoadsAndMissingLabelIsAnError) {
  const fs::path dir = scratch_dir("csv");
  write_file(dir / "ok.csv", "f0,label,f1\n0.5,1,0.25\n1,0,0\n");
  const Dataset d = load_csv((dir / "ok.csv").string(), 2, 1, 1, 2);
  EXPECT_EQ(d.labels, (std::vector<int>{1, 0}));
  EXPECT_EQ(d.inputs.shape(), (Shape{2, 1, 1, 2}));
  EXPECT_EQ(d.inputs[1], 0.25);

  write_file(dir / "nolabel.csv", "f0,f1\n0.5,0.25\n");
  try {
    load_csv((dir / "nolabel.csv").string(), 2, 1, 1, 2);
    ADD_FAILURE() << "missing label column accepted";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("label"), std::string::npos);
  }
  write_file(dir / "badlabel.csv", "f0,label,f1\n0.5,7,0.25\n");
  EXPECT_THROW(load_csv((dir / "badlabel.csv").string(), 2, 1, 1, 2), std::runtime_error);
  fs::remove_all(dir);
}

TEST(Encoding, DirectRepeatsAndSpikePassesThrough) {
  std::mt19937_64 rng(1);
  const Tensor x = testing_util::random_tensor({2, 1, 2, 2}, rng, 0.0, 1.0);
  const Tensor d = encode_input(x, 4, Encoding::Direct);
  ASSERT_EQ(d.shape(), (Shape{8, 1, 2, 2}));
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(d[t * 8 + i], x[i]);

  const Tensor s = testing_util::random_spikes({2, 1, 2, 2}, rng);
  EXPECT_TRUE(testing_util::bit_equal(encode_input(s, 1, Encoding::Spike).data(), s.data()));
  EXPECT_THROW(encode_input(x, 2, Encoding::Spike), std::invalid_argument);
  EXPECT_THROW(encode_input(s, 0, Encoding::Spike), std::invalid_argument);
}

TEST(Encoding, TemporalDataSuppliesLeadingFrames) {
  DatasetSpec spec;
  spec.samples = 6;
  const Dataset d = make_synthetic_patterns(spec, 2);
  const std::vector<std::size_t> idx{4, 1};
  const Tensor x = encode_input(d, idx, 3, Encoding::Spike);
  ASSERT_EQ(x.shape(), (Shape{6, 2, 8, 8}));
  const std::size_t frame = 2 * 8 * 8;
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t j = 0; j < frame; ++j) ASSERT_EQ(x[(t * 2 + n) * frame + j], d.inputs[(idx[n] * 4 + t) * frame + j]);
  EXPECT_THROW(encode_input(d, idx, 5, Encoding::Spike), std::invalid_argument);
  EXPECT_THROW(encode_input(d, idx, 2, Encoding::Direct), std::invalid_argument);
}

TEST(Config, TextRoundTripAndHash) {
  const RunConfig cfg = RunConfig::defaults("desk");
  const RunConfig back = parse_config(cfg.to_text());
  EXPECT_EQ(back.to_text(), cfg.to_text());
  EXPECT_EQ(back.hash(), cfg.hash());
  EXPECT_EQ(cfg.hash().size(), 16u);
  RunConfig other = cfg;
  other.seed = 8;
  EXPECT_NE(other.hash(), cfg.hash());
}

TEST(Config, ProfilesAndOverrides) {
  const RunConfig c = parse_config("seed = 3\nlambda1 = 0\n", "cifar");
  EXPECT_EQ(c.backbone.profile, "cifar");
  EXPECT_EQ(c.backbone.init_channels, 48u);
  EXPECT_EQ(c.seed, 3u);
  const RunConfig d = parse_config("# comment\nprofile = desk\n\nnodes = 1  # trailing comment\n");
  EXPECT_EQ(d.backbone.nodes, 1u);
}

TEST(Config, MalformedInputRejected) {
  for (const char* text : {"unknown_key = 1\n", "seed = 1\nseed = 2\n", "seed = -4\n", "lambda1 = abc\n",
                           "share_alpha = maybe\n", "just words\n", "profile = imagenet\n", "batch_size = 0\n",
                           "aux_cell = 9\n", "lambda1 = -1\n"}) {
    EXPECT_THROW(parse_config(text), std::invalid_argument) << text;
  }
  EXPECT_THROW(load_config("/nonexistent/desk.cfg"), std::runtime_error);
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    TrainingSession s = TrainingSession::search(testing_util::tiny_config());
    ck = s.checkpoint();
    bytes = serialize_checkpoint(ck);
  }
  Checkpoint ck;
  std::string bytes;
};

TEST_F(CheckpointTest, RoundTripIsByteExact) {
  const Checkpoint back = deserialize_checkpoint(bytes);
  ASSERT_EQ(back.tensors.size(), ck.tensors.size());
  for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
    EXPECT_EQ(back.tensors[i].name, ck.tensors[i].name);
    EXPECT_EQ(back.tensors[i].tensor.shape(), ck.tensors[i].tensor.shape());
    EXPECT_TRUE(testing_util::bit_equal(back.tensors[i].tensor.data(), ck.tensors[i].tensor.data()));
  }
  EXPECT_EQ(back.meta, ck.meta);
  EXPECT_EQ(back.config_text, ck.config_text);
  EXPECT_EQ(serialize_checkpoint(back), bytes);

  const fs::path dir = scratch_dir("ckpt");
  save_checkpoint((dir / "a.ckpt").string(), ck);
  EXPECT_EQ(read_file(dir / "a.ckpt"), bytes);
  EXPECT_EQ(serialize_checkpoint(load_checkpoint((dir / "a.ckpt").string())), bytes);
  fs::remove_all(dir);
}

TEST_F(CheckpointTest, VersionMismatchRefused) {
  std::string bad = bytes;
  bad[8] = 2;
  try {
    deserialize_checkpoint(bad);
    ADD_FAILURE() << "accepted a future version";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version 2"), std::string::npos);
  }
}

TEST_F(CheckpointTest, TruncationAndCorruptionDetected) {
  for (std::size_t keep : {std::size_t{0}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, keep)), CheckpointError) << keep;
  }
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  EXPECT_THROW(deserialize_checkpoint(flipped), CheckpointError);
  EXPECT_THROW(deserialize_checkpoint("definitely not a checkpoint"), CheckpointError);
  EXPECT_THROW(load_checkpoint("/nonexistent/x.ckpt"), CheckpointError);
}

TEST_F(CheckpointTest, FailedRestoreLeavesTargetsUntouched) {
  Tensor a = Tensor::vector({1.0, 2.0});
  Tensor b = Tensor::vector({3.0});
  Checkpoint partial;
  partial.tensors = {{"a", Tensor::vector({9.0, 9.0})}};
  EXPECT_THROW(restore_tensors(partial, {{"a", a}, {"b", b}}), CheckpointError);
  EXPECT_EQ(a[0], 1.0);
  partial.tensors.push_back({"b", Tensor::vector({1.0, 2.0})});
  EXPECT_THROW(restore_tensors(partial, {{"a", a}, {"b", b}}), CheckpointError);
  EXPECT_EQ(a[0], 1.0);
}

TEST(Cli, SearchTwiceGivesIdenticalCheckpoints) {
  const fs::path dir = scratch_dir("cli_search");
  write_file(dir / "tiny.cfg", kTinyConfig);
  const std::string cfg = (dir / "tiny.cfg").string();
  ASSERT_EQ(run_cli({"search", cfg, "--seed", "7", "--out-dir", (dir / "a").string()}), 0);
  ASSERT_EQ(run_cli({"--seed", "7", "--out-dir", (dir / "b").string(), "search", cfg}), 0);
  EXPECT_EQ(read_file(dir / "a" / "search.ckpt"), read_file(dir / "b" / "search.ckpt"));
  EXPECT_EQ(read_file(dir / "a" / "search_metrics.csv"), read_file(dir / "b" / "search_metrics.csv"));
  const std::string metrics = read_file(dir / "a" / "search_metrics.csv");
  EXPECT_EQ(metrics.rfind("# config_hash=", 0), 0u);

  ASSERT_EQ(run_cli({"search", cfg, "--seed", "8", "--out-dir", (dir / "c").string()}), 0);
  EXPECT_NE(read_file(dir / "a" / "search.ckpt"), read_file(dir / "c" / "search.ckpt"));
  fs::remove_all(dir);
}

TEST(Cli, DecodeFreshCheckpointPicksLowestIndexTies) {
  const fs::path dir = scratch_dir("cli_decode");
  const RunConfig cfg = testing_util::tiny_config();
  save_checkpoint((dir / "fresh.ckpt").string(), TrainingSession::search(cfg).checkpoint());
  ASSERT_EQ(run_cli({"decode", (dir / "fresh.ckpt").string(), "--out-dir", dir.string()}), 0);
  std::ifstream in(dir / "arch.txt");
  const DecodedArchitecture arch = read_architecture(in);
  EXPECT_EQ(arch.timesteps, 1u);
  ASSERT_EQ(arch.cells.size(), cfg.backbone.cells);
  for (const auto& cell : arch.cells) {
    EXPECT_EQ(cell.bits, cfg.backbone.bit_candidates.front());
    for (const auto& e : cell.edges) EXPECT_EQ(e.op, EdgeOp::Conv);
  }
  fs::remove_all(dir);
}

TEST(Cli, RetrainEvaluateAndReportSchema) {
  const fs::path dir = scratch_dir("cli_report");
  write_file(dir / "tiny.cfg", kTinyConfig);
  const std::string cfg = (dir / "tiny.cfg").string();
  write_file(dir / "arch.txt",
             "arch v1\ntimesteps 2\n"
             "cell 1 bits 2 reduction no\nedge 0 -> 0 conv3x3\nedge 1 -> 0 skip\nedge 0 -> 1 conv3x3\nedge 2 -> 1 conv3x3\n"
             "cell 2 bits 4 reduction yes\nedge 0 -> 0 conv3x3\nedge 1 -> 0 conv3x3\nedge 0 -> 1 skip\nedge 2 -> 1 conv3x3\n"
             "end\n");
  ASSERT_EQ(run_cli({"retrain", (dir / "arch.txt").string(), cfg, "--out-dir", dir.string()}), 0);
  ASSERT_TRUE(fs::exists(dir / "model.ckpt"));
  EXPECT_EQ(run_cli({"evaluate", (dir / "model.ckpt").string(), cfg}), 0);
  ASSERT_EQ(run_cli({"report", (dir / "model.ckpt").string(), cfg, "--out-dir", dir.string()}), 0);
  std::istringstream csv(read_file(dir / "report.csv"));
  std::string hash, header, row;
  std::getline(csv, hash);
  std::getline(csv, header);
  std::getline(csv, row);
  EXPECT_EQ(hash, "# config_hash=" + parse_config(kTinyConfig).hash());
  EXPECT_EQ(header, "model,acc,model_size_mb,synops,bit_synops,adds,mults,energy_mj,timesteps");
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 8);
  EXPECT_EQ(row.substr(row.rfind(',') + 1), "2");
  EXPECT_NE(read_file(dir / "report.txt").find("energy"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, ErrorsReturnNonzero) {
  EXPECT_NE(run_cli({"search", "/nonexistent.cfg"}), 0);
  EXPECT_NE(run_cli({"decode", "/nonexistent.ckpt"}), 0);
  EXPECT_NE(run_cli({"frobnicate"}), 0);
  EXPECT_NE(run_cli({"--profile", "imagenet", "search", "x.cfg"}), 0);
  EXPECT_NE(run_cli({"sweep", "x.cfg", "--lambda1", "1e-9,2e-9", "--lambda2", "1e-13"}), 0);
}
