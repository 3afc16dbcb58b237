#include "wave/dataset.hpp"

#include <cmath>
#include <fstream>

#include "wave/error.hpp"
#include "wave/random.hpp"

namespace wave {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw FormatError(FormatErrorKind::truncated, path.string() + ": truncated IDX header");
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

// Standardizes each channel with the statistics of `train`.
void normalize(Dataset& d) {
  const std::size_t C = d.channels;
  std::vector<double> mean(C, 0.0), var(C, 0.0);
  std::vector<std::size_t> n(C, 0);
  for (std::size_t r = 0; r < d.train.images.rows(); ++r) {
    auto row = d.train.images.row(r);
    for (std::size_t i = 0; i < row.size(); ++i) {
      mean[i % C] += row[i];
      ++n[i % C];
    }
  }
  for (std::size_t c = 0; c < C; ++c) mean[c] /= static_cast<double>(n[c]);
  for (std::size_t r = 0; r < d.train.images.rows(); ++r) {
    auto row = d.train.images.row(r);
    for (std::size_t i = 0; i < row.size(); ++i) {
      const double dv = row[i] - mean[i % C];
      var[i % C] += dv * dv;
    }
  }
  std::vector<double> inv_std(C);
  for (std::size_t c = 0; c < C; ++c) {
    const double sd = std::sqrt(var[c] / static_cast<double>(n[c]));
    inv_std[c] = sd > 0.0 ? 1.0 / sd : 1.0;
  }
  for (Split* s : {&d.train, &d.val}) {
    for (double* p = s->images.data().data(), *end = p + s->images.size(); p != end;) {
      for (std::size_t c = 0; c < C; ++c, ++p) *p = (*p - mean[c]) * inv_std[c];
    }
  }
}

void split_tail(const Matrix& images, const std::vector<int>& labels, double val_fraction,
                Dataset& d) {
  const std::size_t n = labels.size();
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw InputError("val_fraction must be in (0, 1)");
  }
  const std::size_t n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * val_fraction));
  if (n_val == 0 || n_val >= n) {
    throw InputError("dataset of " + std::to_string(n) + " samples leaves an empty split");
  }
  std::vector<std::size_t> train_idx(n - n_val), val_idx(n_val);
  for (std::size_t i = 0; i < n - n_val; ++i) train_idx[i] = i;
  for (std::size_t i = 0; i < n_val; ++i) val_idx[i] = n - n_val + i;
  const Split all{images, labels};
  d.train = gather(all, train_idx);
  d.val = gather(all, val_idx);
}

}  // namespace

Split gather(const Split& split, std::span<const std::size_t> indices) {
  Split out;
  out.images = Matrix(indices.size(), split.images.cols());
  out.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = split.images.row(indices[i]);
    std::copy(src.begin(), src.end(), out.images.row(i).begin());
    out.labels[i] = split.labels[indices[i]];
  }
  return out;
}

Dataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw InputError("synthetic dataset needs >= 2 classes");
  if (spec.image_size < 4) throw InputError("synthetic image_size must be >= 4");
  if (spec.channels < 1) throw InputError("synthetic channels must be >= 1");
  if (spec.samples < 2) throw InputError("synthetic dataset needs >= 2 samples");
  const std::size_t S = spec.image_size, C = spec.channels;
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Each class is a few signed blobs with per-channel weights.
  constexpr std::size_t kBlobs = 3;
  struct Blob {
    double y, x, sigma, sign;
    std::vector<double> channel_weight;
  };
  std::vector<std::vector<Blob>> prototypes(spec.classes);
  const double lo = 1.5, hi = static_cast<double>(S) - 2.5;
  for (auto& proto : prototypes) {
    for (std::size_t b = 0; b < kBlobs; ++b) {
      Blob blob{lo + (hi - lo) * unit(rng), lo + (hi - lo) * unit(rng), 0.8 + 0.8 * unit(rng),
                unit(rng) < 0.5 ? -1.0 : 1.0, std::vector<double>(C)};
      for (double& w : blob.channel_weight) w = 0.5 + unit(rng);
      proto.push_back(std::move(blob));
    }
  }

  std::uniform_int_distribution<int> label_dist(0, static_cast<int>(spec.classes) - 1);
  const int shift = static_cast<int>(spec.max_shift);
  std::uniform_int_distribution<int> shift_dist(-shift, shift);
  Matrix images(spec.samples, S * S * C);
  std::vector<int> labels(spec.samples);
  for (std::size_t n = 0; n < spec.samples; ++n) {
    const int y = label_dist(rng);
    labels[n] = y;
    const double dy = shift_dist(rng), dx = shift_dist(rng);
    const double amp = 0.7 + 0.6 * unit(rng);
    auto img = images.row(n);
    for (const Blob& blob : prototypes[static_cast<std::size_t>(y)]) {
      const double cy = blob.y + dy, cx = blob.x + dx;
      const double inv = 1.0 / (2.0 * blob.sigma * blob.sigma);
      for (std::size_t r = 0; r < S; ++r) {
        for (std::size_t c = 0; c < S; ++c) {
          const double d2 = (r - cy) * (r - cy) + (c - cx) * (c - cx);
          const double v = amp * blob.sign * std::exp(-d2 * inv);
          for (std::size_t ch = 0; ch < C; ++ch) img[(r * S + c) * C + ch] += v * blob.channel_weight[ch];
        }
      }
    }
    for (double& p : img) p += spec.noise * gauss(rng);
  }

  Dataset d;
  d.image_size = S;
  d.channels = C;
  d.classes = spec.classes;
  split_tail(images, labels, spec.val_fraction, d);
  normalize(d);
  return d;
}

Dataset load_idx(const IdxSpec& spec) {
  std::ifstream img(spec.images, std::ios::binary);
  if (!img) throw IoError("cannot open IDX image file " + spec.images.string());
  std::ifstream lab(spec.labels, std::ios::binary);
  if (!lab) throw IoError("cannot open IDX label file " + spec.labels.string());

  const std::uint32_t magic = read_be32(img, spec.images);
  if (magic != kIdxImagesMagic) {
    throw FormatError(FormatErrorKind::bad_magic, spec.images.string() + ": IDX image magic is " +
                                                      std::to_string(magic) + ", expected 0x00000803");
  }
  const std::size_t count = read_be32(img, spec.images);
  const std::size_t rows = read_be32(img, spec.images);
  const std::size_t cols = read_be32(img, spec.images);
  if (rows != cols || rows == 0) {
    throw FormatError(FormatErrorKind::malformed, spec.images.string() + ": images must be square");
  }
  const std::uint32_t lmagic = read_be32(lab, spec.labels);
  if (lmagic != kIdxLabelsMagic) {
    throw FormatError(FormatErrorKind::bad_magic, spec.labels.string() + ": IDX label magic is " +
                                                      std::to_string(lmagic) + ", expected 0x00000801");
  }
  const std::size_t lcount = read_be32(lab, spec.labels);
  if (lcount != count) {
    throw FormatError(FormatErrorKind::malformed, "IDX count mismatch: " + std::to_string(count) +
                                                      " images, " + std::to_string(lcount) + " labels");
  }
  const std::size_t n = spec.max_samples > 0 ? std::min(count, spec.max_samples) : count;
  if (n == 0) throw FormatError(FormatErrorKind::malformed, "IDX files contain no samples");

  std::vector<unsigned char> pixels(n * rows * cols);
  if (!img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()))) {
    throw FormatError(FormatErrorKind::truncated, spec.images.string() + ": truncated pixel data");
  }
  std::vector<unsigned char> raw_labels(n);
  if (!lab.read(reinterpret_cast<char*>(raw_labels.data()), static_cast<std::streamsize>(n))) {
    throw FormatError(FormatErrorKind::truncated, spec.labels.string() + ": truncated label data");
  }

  Matrix images(n, rows * cols);
  auto data = images.data();
  for (std::size_t i = 0; i < pixels.size(); ++i) data[i] = pixels[i] / 255.0;
  std::vector<int> labels(raw_labels.begin(), raw_labels.end());
  int max_label = 0;
  for (int y : labels) max_label = std::max(max_label, y);

  Dataset d;
  d.image_size = rows;
  d.channels = 1;
  d.classes = static_cast<std::size_t>(max_label) + 1;
  split_tail(images, labels, spec.val_fraction, d);
  normalize(d);
  return d;
}

Dataset load_dataset(const DatasetSource& source) {
  return std::visit(
      [](const auto& spec) -> Dataset {
        if constexpr (std::is_same_v<std::decay_t<decltype(spec)>, SyntheticSpec>) {
          return make_synthetic(spec);
        } else {
          return load_idx(spec);
        }
      },
      source);
}

void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
               std::span<const std::uint8_t> pixels, std::size_t count, std::size_t rows,
               std::size_t cols, std::span<const std::uint8_t> labels) {
  if (pixels.size() != count * rows * cols || labels.size() != count) {
    throw ShapeError("write_idx: buffer sizes do not match count/rows/cols");
  }
  std::ofstream img(images_path, std::ios::binary | std::ios::trunc);
  std::ofstream lab(labels_path, std::ios::binary | std::ios::trunc);
  if (!img || !lab) throw IoError("cannot write IDX files at " + images_path.string());
  write_be32(img, kIdxImagesMagic);
  write_be32(img, static_cast<std::uint32_t>(count));
  write_be32(img, static_cast<std::uint32_t>(rows));
  write_be32(img, static_cast<std::uint32_t>(cols));
  img.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  write_be32(lab, kIdxLabelsMagic);
  write_be32(lab, static_cast<std::uint32_t>(count));
  lab.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
  if (!img || !lab) throw IoError("write failed for IDX files at " + images_path.string());
}

}  // namespace wave
