#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "wave/tensor.hpp"

namespace wave {

struct Split {
  Matrix images;  // one sample per row, (y, x, channel) pixel order
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

// Images normalized to zero mean / unit std per channel using train-split
// statistics.
struct Dataset {
  std::size_t image_size = 0;
  std::size_t channels = 0;
  std::size_t classes = 0;
  Split train;
  Split val;
};

// Class-conditional blob patterns with random translation, amplitude jitter
// and pixel noise. Labels are drawn uniformly.
struct SyntheticSpec {
  std::size_t classes = 4;
  std::size_t samples = 400;
  std::uint64_t seed = 7;
  std::size_t image_size = 16;
  std::size_t channels = 1;
  double val_fraction = 0.2;
  double noise = 0.6;
  std::size_t max_shift = 2;
};

// An IDX image file (magic 0x00000803, u8 pixels) and label file (magic
// 0x00000801). The last val_fraction of the samples form the val split.
struct IdxSpec {
  std::filesystem::path images;
  std::filesystem::path labels;
  double val_fraction = 0.2;
  std::size_t max_samples = 0;  // 0 = all
};

using DatasetSource = std::variant<SyntheticSpec, IdxSpec>;

Dataset load_dataset(const DatasetSource& source);
Dataset make_synthetic(const SyntheticSpec& spec);
Dataset load_idx(const IdxSpec& spec);

// Writes u8 IDX files; pixel values are clamped to [0, 255].
void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
               std::span<const std::uint8_t> pixels, std::size_t count, std::size_t rows,
               std::size_t cols, std::span<const std::uint8_t> labels);

// Gathers rows `indices` of a split.
Split gather(const Split& split, std::span<const std::size_t> indices);

}  // namespace wave
