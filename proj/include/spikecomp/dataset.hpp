#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spikecomp/tensor.hpp"

namespace spikecomp {

enum class DatasetKind { SyntheticPatterns, IdxImages, CsvTable };
enum class Encoding { Direct, Spike };

DatasetKind parse_dataset_kind(const std::string& s);
std::string dataset_kind_name(DatasetKind kind);
Encoding parse_encoding(const std::string& s);
std::string encoding_name(Encoding e);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::SyntheticPatterns;
  std::size_t classes = 3;
  std::size_t channels = 2;
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t samples = 600;   // synthetic only
  std::size_t frames = 4;      // synthetic only: frames per sample
  double noise = 0.1;          // synthetic only: per-bit flip probability
  double density = 0.3;        // synthetic only: template firing probability
  std::string path;            // IDX images or CSV table
  std::string labels_path;     // IDX labels
  double test_fraction = 0.25;

  void validate() const;
};

/// Inputs plus integer labels. Static samples are (M, C, H, W); temporal ones
/// (M, F, C, H, W) with F frames.
struct Dataset {
  Tensor inputs;
  std::vector<int> labels;
  std::size_t classes = 0;
  std::size_t frames = 0;  // 0 for static data

  std::size_t size() const { return labels.size(); }
  std::size_t channels() const;
  std::size_t height() const;
  std::size_t width() const;
  Dataset subset(std::span<const std::size_t> indices) const;
};

/// Class-conditional spatio-temporal spike templates with flip noise. The
/// first frame is shared by all classes, so a single timestep carries no class
/// information and accuracy grows with the number of frames observed.
Dataset make_synthetic_patterns(const DatasetSpec& spec, std::uint64_t seed);
/// IDX image file (magic 0x00000803, unsigned bytes, scaled to [0,1]) plus IDX
/// label file (magic 0x00000801).
Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t classes);
/// Headered CSV with a "label" column; remaining columns are features reshaped
/// to (channels, height, width).
Dataset load_csv(const std::string& path, std::size_t classes, std::size_t channels, std::size_t height,
                 std::size_t width);

Dataset load_dataset(const DatasetSpec& spec, std::uint64_t seed);

struct DatasetSplit {
  Dataset first;
  Dataset second;
};

/// Seeded shuffle, then the leading `fraction` of samples go to `second`.
DatasetSplit split_dataset(const Dataset& data, double fraction, std::uint64_t seed);

/// Per-timestep input for samples `indices`, time-major (T*N, C, H, W).
///   Direct: static real-valued samples repeated at every timestep.
///   Spike: binary data passed through unchanged; temporal data supplies its
///   first T frames, static binary data repeats.
Tensor encode_input(const Dataset& data, std::span<const std::size_t> indices, std::size_t timesteps, Encoding mode);
/// Same for a raw (N, C, H, W) tensor.
Tensor encode_input(const Tensor& x, std::size_t timesteps, Encoding mode);

std::vector<int> gather_labels(const Dataset& data, std::span<const std::size_t> indices);

}  // namespace spikecomp
