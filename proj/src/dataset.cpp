#include "spikecomp/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace spikecomp {

DatasetKind parse_dataset_kind(const std::string& s) {
  if (s == "synthetic-patterns") return DatasetKind::SyntheticPatterns;
  if (s == "idx-images") return DatasetKind::IdxImages;
  if (s == "csv-table") return DatasetKind::CsvTable;
  throw std::invalid_argument("unknown dataset kind '" + s + "' (synthetic-patterns, idx-images, csv-table)");
}

std::string dataset_kind_name(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::SyntheticPatterns:
      return "synthetic-patterns";
    case DatasetKind::IdxImages:
      return "idx-images";
    case DatasetKind::CsvTable:
      return "csv-table";
  }
  return "?";
}

Encoding parse_encoding(const std::string& s) {
  if (s == "direct") return Encoding::Direct;
  if (s == "spike") return Encoding::Spike;
  throw std::invalid_argument("unknown encoding '" + s + "' (direct, spike)");
}

std::string encoding_name(Encoding e) { return e == Encoding::Direct ? "direct" : "spike"; }

void DatasetSpec::validate() const {
  if (classes < 2) throw std::invalid_argument("dataset: need at least 2 classes");
  if (channels == 0 || height == 0 || width == 0) throw std::invalid_argument("dataset: sample shape must be positive");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("dataset: test_fraction must lie in (0, 1)");
  if (kind == DatasetKind::SyntheticPatterns) {
    if (samples < classes) throw std::invalid_argument("dataset: fewer samples than classes");
    if (frames == 0) throw std::invalid_argument("dataset: frames must be at least 1");
    if (!(noise >= 0.0 && noise <= 0.5)) throw std::invalid_argument("dataset: noise must lie in [0, 0.5]");
    if (!(density > 0.0 && density < 1.0)) throw std::invalid_argument("dataset: density must lie in (0, 1)");
  } else if (path.empty()) {
    throw std::invalid_argument("dataset: path is required for " + dataset_kind_name(kind));
  } else if (kind == DatasetKind::IdxImages && labels_path.empty()) {
    throw std::invalid_argument("dataset: labels_path is required for idx-images");
  }
}

std::size_t Dataset::channels() const { return inputs.dim(inputs.ndim() - 3); }
std::size_t Dataset::height() const { return inputs.dim(inputs.ndim() - 2); }
std::size_t Dataset::width() const { return inputs.dim(inputs.ndim() - 1); }

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.classes = classes;
  out.frames = frames;
  Shape shape = inputs.shape();
  const std::size_t stride = inputs.numel() / shape[0];
  shape[0] = indices.size();
  std::vector<double> values;
  values.reserve(indices.size() * stride);
  auto src = inputs.data();
  for (std::size_t i : indices) {
    if (i >= size()) throw std::out_of_range("Dataset::subset: index " + std::to_string(i));
    values.insert(values.end(), src.begin() + static_cast<std::ptrdiff_t>(i * stride),
                  src.begin() + static_cast<std::ptrdiff_t>((i + 1) * stride));
    out.labels.push_back(labels[i]);
  }
  out.inputs = Tensor(std::move(shape), std::move(values));
  return out;
}

Dataset make_synthetic_patterns(const DatasetSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  const std::size_t frame_size = spec.channels * spec.height * spec.width;
  std::bernoulli_distribution fire(spec.density);
  std::bernoulli_distribution flip(spec.noise);

  std::vector<std::uint8_t> shared(frame_size);
  for (auto& b : shared) b = fire(rng);
  std::vector<std::vector<std::uint8_t>> templates(spec.classes);
  for (auto& tpl : templates) {
    tpl.assign(spec.frames * frame_size, 0);
    std::copy(shared.begin(), shared.end(), tpl.begin());
    for (std::size_t i = frame_size; i < tpl.size(); ++i) tpl[i] = fire(rng);
  }

  Dataset ds;
  ds.classes = spec.classes;
  ds.frames = spec.frames;
  std::vector<double> values;
  values.reserve(spec.samples * spec.frames * frame_size);
  for (std::size_t n = 0; n < spec.samples; ++n) {
    const int label = static_cast<int>(n % spec.classes);
    ds.labels.push_back(label);
    for (std::uint8_t bit : templates[static_cast<std::size_t>(label)]) {
      values.push_back(static_cast<double>(bit ^ static_cast<std::uint8_t>(flip(rng))));
    }
  }
  ds.inputs = Tensor({spec.samples, spec.frames, spec.channels, spec.height, spec.width}, std::move(values));
  return ds;
}

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t big_endian_u32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::string& path) {
  if (offset + 4 > bytes.size()) throw std::runtime_error("'" + path + "': truncated IDX header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t classes) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);
  const std::uint32_t img_magic = big_endian_u32(img, 0, images_path);
  if (img_magic != 0x00000803) {
    throw std::runtime_error("'" + images_path + "': bad IDX image magic (expected 0x00000803)");
  }
  const std::uint32_t lab_magic = big_endian_u32(lab, 0, labels_path);
  if (lab_magic != 0x00000801) {
    throw std::runtime_error("'" + labels_path + "': bad IDX label magic (expected 0x00000801)");
  }
  const std::size_t count = big_endian_u32(img, 4, images_path);
  const std::size_t rows = big_endian_u32(img, 8, images_path);
  const std::size_t cols = big_endian_u32(img, 12, images_path);
  const std::size_t label_count = big_endian_u32(lab, 4, labels_path);
  if (label_count != count) {
    throw std::runtime_error("IDX: " + std::to_string(count) + " images but " + std::to_string(label_count) +
                             " labels");
  }
  if (img.size() != 16 + count * rows * cols) throw std::runtime_error("'" + images_path + "': size does not match header");
  if (lab.size() != 8 + count) throw std::runtime_error("'" + labels_path + "': size does not match header");

  Dataset ds;
  ds.classes = classes;
  std::vector<double> values(count * rows * cols);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<double>(img[16 + i]) / 255.0;
  ds.inputs = Tensor({count, 1, rows, cols}, std::move(values));
  for (std::size_t i = 0; i < count; ++i) {
    const int label = lab[8 + i];
    if (static_cast<std::size_t>(label) >= classes) {
      throw std::runtime_error("IDX: label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
    }
    ds.labels.push_back(label);
  }
  return ds;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

Dataset load_csv(const std::string& path, std::size_t classes, std::size_t channels, std::size_t height,
                 std::size_t width) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("'" + path + "': empty file");
  const auto header = split_csv_line(line);
  const auto label_it = std::find(header.begin(), header.end(), "label");
  if (label_it == header.end()) throw std::runtime_error("'" + path + "': no 'label' column in header");
  const std::size_t label_col = static_cast<std::size_t>(label_it - header.begin());
  const std::size_t features = header.size() - 1;
  if (features != channels * height * width) {
    throw std::runtime_error("'" + path + "': " + std::to_string(features) + " feature columns, expected " +
                             std::to_string(channels * height * width));
  }
  Dataset ds;
  ds.classes = classes;
  std::vector<double> values;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error("'" + path + "' line " + std::to_string(lineno) + ": expected " +
                               std::to_string(header.size()) + " columns, got " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      try {
        std::size_t used = 0;
        v = std::stod(cells[c], &used);
        if (used != cells[c].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw std::runtime_error("'" + path + "' line " + std::to_string(lineno) + ": '" + cells[c] +
                                 "' is not a number");
      }
      if (c == label_col) {
        if (v < 0 || v != static_cast<double>(static_cast<long>(v)) || static_cast<std::size_t>(v) >= classes) {
          throw std::runtime_error("'" + path + "' line " + std::to_string(lineno) + ": invalid label " + cells[c]);
        }
        ds.labels.push_back(static_cast<int>(v));
      } else {
        values.push_back(v);
      }
    }
  }
  if (ds.labels.empty()) throw std::runtime_error("'" + path + "': no data rows");
  ds.inputs = Tensor({ds.labels.size(), channels, height, width}, std::move(values));
  return ds;
}

Dataset load_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  spec.validate();
  Dataset ds;
  switch (spec.kind) {
    case DatasetKind::SyntheticPatterns:
      return make_synthetic_patterns(spec, seed);
    case DatasetKind::IdxImages:
      ds = load_idx(spec.path, spec.labels_path, spec.classes);
      break;
    case DatasetKind::CsvTable:
      ds = load_csv(spec.path, spec.classes, spec.channels, spec.height, spec.width);
      break;
  }
  if (ds.channels() != spec.channels || ds.height() != spec.height || ds.width() != spec.width) {
    throw std::runtime_error("dataset samples are " + shape_str({ds.channels(), ds.height(), ds.width()}) +
                             " but the configuration expects " + shape_str({spec.channels, spec.height, spec.width}));
  }
  return ds;
}

DatasetSplit split_dataset(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("split_dataset: fraction must lie in (0, 1)");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto cut = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.size())));
  if (cut == 0 || cut == data.size()) throw std::invalid_argument("split_dataset: a split would be empty");
  std::vector<std::size_t> second(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
  std::vector<std::size_t> first(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end());
  return {data.subset(first), data.subset(second)};
}

namespace {

void require_binary(std::span<const double> values) {
  for (double v : values) {
    if (v != 0.0 && v != 1.0) throw std::invalid_argument("spike encoding requires binary input, found " + std::to_string(v));
  }
}

}  // namespace

Tensor encode_input(const Tensor& x, std::size_t timesteps, Encoding mode) {
  if (timesteps == 0) throw std::invalid_argument("encode_input: T must be at least 1");
  if (x.ndim() != 4) throw ShapeError("encode_input: expected (N, C, H, W), got " + shape_str(x.shape()));
  if (mode == Encoding::Spike) require_binary(x.data());
  Shape shape = x.shape();
  shape[0] *= timesteps;
  std::vector<double> values;
  values.reserve(numel(shape));
  for (std::size_t t = 0; t < timesteps; ++t) values.insert(values.end(), x.data().begin(), x.data().end());
  return Tensor(std::move(shape), std::move(values));
}

Tensor encode_input(const Dataset& data, std::span<const std::size_t> indices, std::size_t timesteps, Encoding mode) {
  if (timesteps == 0) throw std::invalid_argument("encode_input: T must be at least 1");
  if (indices.empty()) throw std::invalid_argument("encode_input: empty batch");
  const std::size_t c = data.channels(), h = data.height(), w = data.width();
  const std::size_t frame = c * h * w;
  auto src = data.inputs.data();
  if (data.frames == 0) {
    Dataset batch = data.subset(indices);
    return encode_input(batch.inputs, timesteps, mode);
  }
  if (mode == Encoding::Direct) throw std::invalid_argument("direct encoding needs static samples; this dataset is temporal");
  if (timesteps > data.frames) {
    throw std::invalid_argument("requested " + std::to_string(timesteps) + " timesteps but samples have only " +
                                std::to_string(data.frames) + " frames");
  }
  std::vector<double> values;
  values.reserve(timesteps * indices.size() * frame);
  for (std::size_t t = 0; t < timesteps; ++t)
    for (std::size_t i : indices) {
      if (i >= data.size()) throw std::out_of_range("encode_input: index " + std::to_string(i));
      const auto begin = src.begin() + static_cast<std::ptrdiff_t>((i * data.frames + t) * frame);
      values.insert(values.end(), begin, begin + static_cast<std::ptrdiff_t>(frame));
    }
  require_binary(values);
  return Tensor({timesteps * indices.size(), c, h, w}, std::move(values));
}

std::vector<int> gather_labels(const Dataset& data, std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(data.labels.at(i));
  return out;
}

}  // namespace spikecomp
