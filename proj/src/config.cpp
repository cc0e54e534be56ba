#include "spikecomp/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace spikecomp {

RunConfig RunConfig::defaults(const std::string& profile) {
  RunConfig cfg;
  cfg.backbone = BackboneConfig::named(profile);
  const auto& b = cfg.backbone;
  cfg.dataset.classes = b.classes;
  cfg.dataset.channels = b.in_channels;
  cfg.dataset.height = b.height;
  cfg.dataset.width = b.width;
  cfg.dataset.frames = b.timesteps;
  if (profile == "desk") {
    cfg.loss.lambda1 = 1e-9;
    cfg.loss.lambda2 = 1e-13;
    cfg.aux_cell = b.cells - 1;
    cfg.weight_lr = 0.1;
    cfg.retrain_lr = 0.1;
  } else {
    cfg.search_epochs = 50;
    cfg.retrain_epochs = 200;
    cfg.aux_cell = profile == "cifar" ? 6 : 5;
  }
  cfg.loss.prune_rate = b.prune_rate;
  return cfg;
}

void RunConfig::validate() const {
  backbone.validate();
  loss.validate();
  dataset.validate();
  if (loss.prune_rate != backbone.prune_rate) throw std::invalid_argument("config: prune rates disagree");
  if (dataset.classes != backbone.classes || dataset.channels != backbone.in_channels ||
      dataset.height != backbone.height || dataset.width != backbone.width) {
    throw std::invalid_argument("config: dataset shape does not match the backbone input");
  }
  if (batch_size == 0) throw std::invalid_argument("config: batch_size must be positive");
  if (!(weight_lr > 0.0) || !(arch_lr > 0.0) || !(retrain_lr > 0.0)) {
    throw std::invalid_argument("config: learning rates must be positive");
  }
  if (!(weight_momentum >= 0.0 && weight_momentum < 1.0)) {
    throw std::invalid_argument("config: weight_momentum must lie in [0, 1)");
  }
  if (!(arch_split > 0.0 && arch_split < 1.0)) throw std::invalid_argument("config: arch_split must lie in (0, 1)");
  if (aux_cell > backbone.cells) throw std::invalid_argument("config: aux_cell outside the backbone");
  if (!(aux_weight >= 0.0)) throw std::invalid_argument("config: aux_weight must be non-negative");
  if (dataset.kind == DatasetKind::SyntheticPatterns && encoding == Encoding::Spike &&
      dataset.frames < backbone.timesteps) {
    throw std::invalid_argument("config: synthetic samples need at least T_max frames");
  }
}

namespace {

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double to_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument("config: '" + key + "' expects a number, got '" + s + "'");
  }
  return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument("config: '" + key + "' expects a non-negative integer, got '" + s + "'");
  }
  return v;
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  throw std::invalid_argument("config: '" + key + "' expects yes/no, got '" + s + "'");
}

template <class T>
std::vector<T> to_list(const std::string& key, const std::string& s) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b == std::string::npos) continue;
    out.push_back(static_cast<T>(to_uint(key, item.substr(b, e - b + 1))));
  }
  return out;
}

template <class T>
std::string from_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

#define SIZE_FIELD(name, member) \
  Field{name, [](const RunConfig& c) { return std::to_string(c.member); }, \
        [](RunConfig& c, const std::string& v) { c.member = static_cast<std::size_t>(to_uint(name, v)); }}
#define DOUBLE_FIELD(name, member) \
  Field{name, [](const RunConfig& c) { return fmt_double(c.member); }, \
        [](RunConfig& c, const std::string& v) { c.member = to_double(name, v); }}
#define BOOL_FIELD(name, member) \
  Field{name, [](const RunConfig& c) { return std::string(c.member ? "yes" : "no"); }, \
        [](RunConfig& c, const std::string& v) { c.member = to_bool(name, v); }}
#define STRING_FIELD(name, member) \
  Field{name, [](const RunConfig& c) { return c.member; }, [](RunConfig& c, const std::string& v) { c.member = v; }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"profile", [](const RunConfig& c) { return c.backbone.profile; }, [](RunConfig&, const std::string&) {}},
      SIZE_FIELD("in_channels", backbone.in_channels),
      SIZE_FIELD("height", backbone.height),
      SIZE_FIELD("width", backbone.width),
      SIZE_FIELD("classes", backbone.classes),
      SIZE_FIELD("cells", backbone.cells),
      SIZE_FIELD("init_channels", backbone.init_channels),
      SIZE_FIELD("nodes", backbone.nodes),
      Field{"reduction_cells", [](const RunConfig& c) { return from_list(c.backbone.reduction_cells); },
            [](RunConfig& c, const std::string& v) {
              c.backbone.reduction_cells = to_list<std::size_t>("reduction_cells", v);
            }},
      Field{"bit_candidates", [](const RunConfig& c) { return from_list(c.backbone.bit_candidates); },
            [](RunConfig& c, const std::string& v) { c.backbone.bit_candidates = to_list<int>("bit_candidates", v); }},
      SIZE_FIELD("timesteps", backbone.timesteps),
      DOUBLE_FIELD("prune_rate", backbone.prune_rate),
      BOOL_FIELD("share_alpha", backbone.share_alpha),
      BOOL_FIELD("quantize_stem", backbone.quantize_stem),
      BOOL_FIELD("quantize_classifier", backbone.quantize_classifier),
      DOUBLE_FIELD("tau_decay", backbone.neuron.tau_decay),
      DOUBLE_FIELD("v_th", backbone.neuron.v_th),
      DOUBLE_FIELD("surrogate_temperature", backbone.neuron.surrogate_temperature),
      DOUBLE_FIELD("lambda1", loss.lambda1),
      DOUBLE_FIELD("lambda2", loss.lambda2),
      SIZE_FIELD("search_epochs", search_epochs),
      SIZE_FIELD("retrain_epochs", retrain_epochs),
      SIZE_FIELD("batch_size", batch_size),
      DOUBLE_FIELD("weight_lr", weight_lr),
      DOUBLE_FIELD("weight_momentum", weight_momentum),
      DOUBLE_FIELD("arch_lr", arch_lr),
      DOUBLE_FIELD("retrain_lr", retrain_lr),
      DOUBLE_FIELD("arch_split", arch_split),
      SIZE_FIELD("aux_cell", aux_cell),
      DOUBLE_FIELD("aux_weight", aux_weight),
      Field{"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
            [](RunConfig& c, const std::string& v) { c.seed = to_uint("seed", v); }},
      Field{"encoding", [](const RunConfig& c) { return encoding_name(c.encoding); },
            [](RunConfig& c, const std::string& v) { c.encoding = parse_encoding(v); }},
      Field{"dataset.kind", [](const RunConfig& c) { return dataset_kind_name(c.dataset.kind); },
            [](RunConfig& c, const std::string& v) { c.dataset.kind = parse_dataset_kind(v); }},
      SIZE_FIELD("dataset.samples", dataset.samples),
      SIZE_FIELD("dataset.frames", dataset.frames),
      DOUBLE_FIELD("dataset.noise", dataset.noise),
      DOUBLE_FIELD("dataset.density", dataset.density),
      STRING_FIELD("dataset.path", dataset.path),
      STRING_FIELD("dataset.labels_path", dataset.labels_path),
      DOUBLE_FIELD("dataset.test_fraction", dataset.test_fraction),
  };
  return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD
#undef STRING_FIELD

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string RunConfig::hash() const {
  const std::string text = to_text();
  return hex64(fnv1a(text.data(), text.size()));
}

RunConfig parse_config(const std::string& text, const std::string& profile_override) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::set<std::string> seen;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  std::string profile = "desk";
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.erase(hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool known = false;
    for (const auto& f : fields()) known = known || f.key == key;
    if (!known) throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": repeated key '" + key + "'");
    }
    if (key == "profile") {
      profile = value;
    } else {
      entries.emplace_back(key, value);
    }
  }
  if (!profile_override.empty()) profile = profile_override;
  RunConfig cfg = RunConfig::defaults(profile);
  for (const auto& [key, value] : entries) {
    for (const auto& f : fields()) {
      if (f.key == key) f.set(cfg, value);
    }
  }
  // Keys that describe the same quantity twice stay in sync.
  cfg.loss.prune_rate = cfg.backbone.prune_rate;
  cfg.dataset.classes = cfg.backbone.classes;
  cfg.dataset.channels = cfg.backbone.in_channels;
  cfg.dataset.height = cfg.backbone.height;
  cfg.dataset.width = cfg.backbone.width;
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path, const std::string& profile_override) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), profile_override);
}

}  // namespace spikecomp
