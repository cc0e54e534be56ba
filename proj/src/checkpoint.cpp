#include "spikecomp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "spikecomp/config.hpp"

namespace spikecomp {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'P', 'K', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}
  void raw(void* p, std::size_t n) {
    if (n > end_ - pos_) throw CheckpointError("checkpoint truncated or corrupt");
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::string str() {
    const std::uint64_t n = u64();
    if (n > end_ - pos_) throw CheckpointError("checkpoint truncated or corrupt");
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == end_; }

 private:
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.tensor;
  }
  return nullptr;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.str(ckpt.kind);
  w.str(ckpt.config_text);
  w.u64(ckpt.seed);
  w.u64(ckpt.epoch);
  w.u64(ckpt.iteration);
  w.str(ckpt.rng_state);
  w.str(ckpt.arch_text);
  w.u64(ckpt.meta.size());
  for (const auto& [k, v] : ckpt.meta) {
    w.str(k);
    w.str(v);
  }
  w.u64(ckpt.tensors.size());
  for (const auto& nt : ckpt.tensors) {
    w.str(nt.name);
    w.u64(nt.tensor.ndim());
    for (std::size_t d : nt.tensor.shape()) w.u64(d);
    w.raw(nt.tensor.data().data(), nt.tensor.numel() * sizeof(double));
  }
  const std::uint64_t sum = fnv1a(w.bytes().data(), w.bytes().size());
  w.u64(sum);
  return std::move(w.bytes());
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + 4 + 8) throw CheckpointError("checkpoint truncated or corrupt");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw CheckpointError("not a checkpoint file (bad magic)");
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + sizeof kMagic, sizeof version);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body, sizeof stored);
  if (fnv1a(bytes.data(), body) != stored) throw CheckpointError("checkpoint truncated or corrupt (checksum mismatch)");

  Reader r(bytes, body);
  char magic[sizeof kMagic];
  r.raw(magic, sizeof magic);
  r.u32();
  Checkpoint ckpt;
  ckpt.kind = r.str();
  ckpt.config_text = r.str();
  ckpt.seed = r.u64();
  ckpt.epoch = r.u64();
  ckpt.iteration = r.u64();
  ckpt.rng_state = r.str();
  ckpt.arch_text = r.str();
  const std::uint64_t n_meta = r.u64();
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    ckpt.meta[k] = r.str();
  }
  const std::uint64_t n_tensors = r.u64();
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    NamedTensor nt;
    nt.name = r.str();
    const std::uint64_t nd = r.u64();
    if (nd > 8) throw CheckpointError("checkpoint truncated or corrupt");
    Shape shape(nd);
    for (auto& d : shape) d = r.u64();
    std::vector<double> values(numel(shape));
    r.raw(values.data(), values.size() * sizeof(double));
    nt.tensor = Tensor(std::move(shape), std::move(values));
    ckpt.tensors.push_back(std::move(nt));
  }
  if (!r.done()) throw CheckpointError("checkpoint truncated or corrupt (trailing bytes)");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write '" + tmp + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write to '" + tmp + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

void restore_tensors(const Checkpoint& ckpt, const std::vector<NamedTensor>& targets) {
  std::vector<const Tensor*> sources;
  for (const auto& t : targets) {
    const Tensor* src = ckpt.find(t.name);
    if (!src) throw CheckpointError("checkpoint has no tensor '" + t.name + "'");
    if (src->shape() != t.tensor.shape()) {
      throw CheckpointError("checkpoint tensor '" + t.name + "' has shape " + shape_str(src->shape()) + ", expected " +
                            shape_str(t.tensor.shape()));
    }
    sources.push_back(src);
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    Tensor dst = targets[i].tensor;
    std::copy(sources[i]->data().begin(), sources[i]->data().end(), dst.data().begin());
  }
}

}  // namespace spikecomp
