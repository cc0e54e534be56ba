#include "spikecomp/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "spikecomp/checkpoint.hpp"
#include "spikecomp/config.hpp"
#include "spikecomp/metrics.hpp"
#include "spikecomp/trainer.hpp"

namespace spikecomp {

namespace {

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::string profile;
};

RunConfig resolve_config(const std::string& path, const GlobalOptions& g) {
  RunConfig cfg = load_config(path, g.profile);
  if (g.seed) cfg.seed = *g.seed;
  cfg.validate();
  return cfg;
}

std::string out_path(const GlobalOptions& g, const std::string& file) {
  std::filesystem::create_directories(g.out_dir);
  return (std::filesystem::path(g.out_dir) / file).string();
}

std::ofstream open_output(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  return os;
}

DatasetSplit load_split(const RunConfig& cfg) {
  return split_train_test(load_dataset(cfg.dataset, cfg.seed), cfg);
}

// Evaluation data: a config file selects its held-out test split; a .csv or
// IDX file is used whole, shaped like the model's own configuration.
Dataset resolve_dataset(const std::string& arg, const std::string& labels, const RunConfig& model_cfg,
                        const GlobalOptions& g) {
  const std::string ext = std::filesystem::path(arg).extension().string();
  if (ext == ".cfg" || ext == ".conf") return load_split(resolve_config(arg, g)).second;
  DatasetSpec spec = model_cfg.dataset;
  spec.path = arg;
  if (ext == ".csv") {
    spec.kind = DatasetKind::CsvTable;
  } else {
    if (labels.empty()) throw std::invalid_argument("IDX images need --labels <file>");
    spec.kind = DatasetKind::IdxImages;
    spec.labels_path = labels;
  }
  return load_dataset(spec, model_cfg.seed);
}

void write_arch(const std::string& path, const DecodedArchitecture& arch, const std::string& hash) {
  auto os = open_output(path);
  os << "# config_hash=" << hash << '\n';
  write_architecture(os, arch);
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw std::invalid_argument(std::string("bad ") + what + " value '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument(std::string(what) + " needs at least one value");
  return out;
}

int cmd_search(const std::string& config_path, const std::string& resume, const GlobalOptions& g) {
  const RunConfig cfg = resolve_config(config_path, g);
  const DatasetSplit data = load_split(cfg);
  const DatasetSplit parts = split_for_search(data.first, cfg);
  TrainingSession session = resume.empty() ? TrainingSession::search(cfg)
                                           : TrainingSession::from_checkpoint(load_checkpoint(resume));
  if (!resume.empty() && session.config().hash() != cfg.hash()) {
    throw std::invalid_argument("checkpoint " + resume + " was produced by a different configuration");
  }
  session.set_diagnostic_path(out_path(g, "search.diverged.ckpt"));
  session.run(parts.first, &parts.second);
  save_checkpoint(out_path(g, "search.ckpt"), session.checkpoint());
  auto metrics = open_output(out_path(g, "search_metrics.csv"));
  write_metrics_csv(metrics, session.history(), cfg.hash());
  const DecodedArchitecture arch = decode_architecture(session.net());
  write_arch(out_path(g, "arch.txt"), arch, cfg.hash());
  std::cout << "config_hash " << cfg.hash() << '\n' << architecture_to_string(arch);
  return 0;
}

int cmd_decode(const std::string& ckpt_path, const GlobalOptions& g) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const auto net = network_from_checkpoint(ckpt);
  const DecodedArchitecture arch = decode_architecture(*net);
  const std::string hash = parse_config(ckpt.config_text).hash();
  write_arch(out_path(g, "arch.txt"), arch, hash);
  std::cout << "config_hash " << hash << '\n' << architecture_to_string(arch);
  return 0;
}

int cmd_retrain(const std::string& arch_path, const std::string& config_path, const GlobalOptions& g) {
  const RunConfig cfg = resolve_config(config_path, g);
  std::ifstream is(arch_path);
  if (!is) throw std::runtime_error("cannot open architecture file " + arch_path);
  const DecodedArchitecture arch = read_architecture(is);
  const DatasetSplit data = load_split(cfg);
  TrainingSession session = TrainingSession::retrain(cfg, arch);
  session.set_diagnostic_path(out_path(g, "retrain.diverged.ckpt"));
  session.run(data.first, nullptr);
  save_checkpoint(out_path(g, "model.ckpt"), session.checkpoint());
  auto metrics = open_output(out_path(g, "retrain_metrics.csv"));
  write_metrics_csv(metrics, session.history(), cfg.hash());
  const double acc = evaluate_accuracy(session.net(), data.second, cfg.encoding, arch.timesteps, cfg.batch_size);
  std::cout << "config_hash " << cfg.hash() << "\ntest_accuracy " << acc << '\n';
  return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& dataset, const std::string& labels,
                 const GlobalOptions& g) {
  const Checkpoint ckpt = load_checkpoint(model_path);
  const RunConfig cfg = parse_config(ckpt.config_text);
  const auto net = network_from_checkpoint(ckpt);
  const Dataset data = resolve_dataset(dataset, labels, cfg, g);
  const double acc = evaluate_accuracy(*net, data, cfg.encoding, net->timesteps(), cfg.batch_size);
  std::cout << "config_hash " << cfg.hash() << "\nsamples " << data.size() << "\naccuracy " << acc << '\n';
  return 0;
}

int cmd_report(const std::string& model_path, const std::string& dataset, const std::string& labels,
               const GlobalOptions& g) {
  const Checkpoint ckpt = load_checkpoint(model_path);
  const RunConfig cfg = parse_config(ckpt.config_text);
  const auto net = network_from_checkpoint(ckpt);
  const Dataset data = resolve_dataset(dataset, labels, cfg, g);
  ResourceReport report = measure_resources(*net, data, cfg.encoding, net->timesteps(), cfg.batch_size,
                                            std::filesystem::path(model_path).stem().string());
  report.config_hash = cfg.hash();
  {
    auto csv = open_output(out_path(g, "report.csv"));
    write_report_csv_header(csv, report.config_hash);
    write_report_csv_row(csv, report);
  }
  {
    auto text = open_output(out_path(g, "report.txt"));
    write_report_text(text, report);
  }
  write_report_csv_header(std::cout, report.config_hash);
  write_report_csv_row(std::cout, report);
  return 0;
}

int cmd_sequential(const std::string& config_path, bool with_joint, const GlobalOptions& g) {
  const RunConfig cfg = resolve_config(config_path, g);
  const DatasetSplit data = load_split(cfg);
  std::vector<PipelineResult> results;
  results.push_back(sequential_pipeline(cfg, data.first, data.second));
  if (with_joint) results.push_back(joint_pipeline(cfg, data.first, data.second));
  std::vector<const PipelineResult*> rows;
  for (const auto& r : results) rows.push_back(&r);
  auto csv = open_output(out_path(g, "comparison.csv"));
  write_comparison_csv(csv, rows, cfg.hash());
  write_arch(out_path(g, "sequential_arch.txt"), results.front().arch, cfg.hash());
  write_comparison_csv(std::cout, rows, cfg.hash());
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& l1_text, const std::string& l2_text,
              const GlobalOptions& g) {
  const RunConfig cfg = resolve_config(config_path, g);
  const auto l1 = parse_list(l1_text, "--lambda1");
  const auto l2 = parse_list(l2_text, "--lambda2");
  if (l1.size() != l2.size()) throw std::invalid_argument("--lambda1 and --lambda2 need the same number of values");
  std::vector<std::pair<double, double>> grid;
  for (std::size_t i = 0; i < l1.size(); ++i) grid.emplace_back(l1[i], l2[i]);
  const DatasetSplit data = load_split(cfg);
  const auto points = lambda_sweep(cfg, grid, data.first, data.second);
  auto csv = open_output(out_path(g, "sweep.csv"));
  write_report_csv_header(csv, cfg.hash());
  for (const auto& p : points) write_report_csv_row(csv, p.report);
  write_report_csv_header(std::cout, cfg.hash());
  for (const auto& p : points) write_report_csv_row(std::cout, p.report);
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Joint architecture, bit-width, pruning and timestep search for spiking networks"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--seed", g.seed, "Override the configured seed");
  app.add_option("--out-dir", g.out_dir, "Directory for checkpoints, CSVs and architecture files");
  app.add_option("--profile", g.profile, "Backbone defaults")->check(CLI::IsMember({"cifar", "gsc", "desk"}));

  std::string config, checkpoint, arch, model, dataset, labels, resume, lambda1, lambda2;
  bool with_joint = false;
  std::function<int()> action;

  auto* search = app.add_subcommand("search", "Joint search; writes search.ckpt, search_metrics.csv, arch.txt");
  search->add_option("config", config)->required();
  search->add_option("--resume", resume, "Continue from a search checkpoint");
  search->callback([&] { action = [&] { return cmd_search(config, resume, g); }; });

  auto* decode = app.add_subcommand("decode", "Decode a search checkpoint into arch.txt");
  decode->add_option("checkpoint", checkpoint)->required();
  decode->callback([&] { action = [&] { return cmd_decode(checkpoint, g); }; });

  auto* retrain = app.add_subcommand("retrain", "Retrain a decoded architecture; writes model.ckpt");
  retrain->add_option("arch", arch)->required();
  retrain->add_option("config", config)->required();
  retrain->callback([&] { action = [&] { return cmd_retrain(arch, config, g); }; });

  auto* evaluate = app.add_subcommand("evaluate", "Accuracy of a retrained model");
  evaluate->add_option("model", model)->required();
  evaluate->add_option("dataset", dataset, "Config file (test split), CSV table or IDX images")->required();
  evaluate->add_option("--labels", labels, "IDX label file");
  evaluate->callback([&] { action = [&] { return cmd_evaluate(model, dataset, labels, g); }; });

  auto* report = app.add_subcommand("report", "Resource report; writes report.csv and report.txt");
  report->add_option("model", model)->required();
  report->add_option("dataset", dataset, "Config file (test split), CSV table or IDX images")->required();
  report->add_option("--labels", labels, "IDX label file");
  report->callback([&] { action = [&] { return cmd_report(model, dataset, labels, g); }; });

  auto* sequential = app.add_subcommand("sequential", "Staged baseline; writes comparison.csv");
  sequential->add_option("config", config)->required();
  sequential->add_flag("--with-joint", with_joint, "Also run the joint pipeline for comparison");
  sequential->callback([&] { action = [&] { return cmd_sequential(config, with_joint, g); }; });

  auto* sweep = app.add_subcommand("sweep", "Search once per (lambda1, lambda2) pair; writes sweep.csv");
  sweep->add_option("config", config)->required();
  sweep->add_option("--lambda1", lambda1, "Comma-separated values")->required();
  sweep->add_option("--lambda2", lambda2, "Comma-separated values, paired with --lambda1")->required();
  sweep->callback([&] { action = [&] { return cmd_sweep(config, lambda1, lambda2, g); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    return action();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace spikecomp
