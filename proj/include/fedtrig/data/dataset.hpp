#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fedtrig/autodiff/tensor.hpp"
#include "fedtrig/nn/model.hpp"

namespace fedtrig::data {

using nn::ImageShape;

// Labeled images, pixels in [0, 1], stored (N, H, W, Ch).
class Dataset {
 public:
  Dataset() = default;

  Dataset(ImageShape shape, std::size_t classes, std::vector<double> pixels,
          std::vector<std::size_t> labels)
      : shape_(shape), classes_(classes), pixels_(std::move(pixels)),
        labels_(std::move(labels)) {
    if (classes_ < 2) throw ArgumentError("Dataset: need at least 2 classes");
    if (labels_.empty()) throw ArgumentError("Dataset: must hold at least one sample");
    if (pixels_.size() != labels_.size() * shape_.pixels()) {
      throw ShapeError("Dataset: pixel buffer does not match sample count");
    }
    for (auto l : labels_) {
      if (l >= classes_) throw ArgumentError("Dataset: label " + std::to_string(l) + " out of range");
    }
    for (double p : pixels_) {
      if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError("Dataset: pixel outside [0, 1]");
    }
  }

  std::size_t size() const { return labels_.size(); }
  std::size_t classes() const { return classes_; }
  const ImageShape& image_shape() const { return shape_; }
  const std::vector<std::size_t>& labels() const { return labels_; }
  std::size_t label(std::size_t i) const { return labels_[i]; }
  const std::vector<double>& pixels() const { return pixels_; }

  std::span<const double> image(std::size_t i) const {
    return std::span<const double>(pixels_).subspan(i * shape_.pixels(), shape_.pixels());
  }

  ad::Tensor image_tensor(std::size_t i) const {
    auto px = image(i);
    return ad::Tensor({shape_.height, shape_.width, shape_.channels},
                      std::vector<double>(px.begin(), px.end()));
  }

  // All images as a (N, H, W, Ch) tensor.
  ad::Tensor images() const {
    return ad::Tensor({size(), shape_.height, shape_.width, shape_.channels}, pixels_);
  }

  // Selected samples as (n, pixels) rows.
  ad::Tensor pixel_rows(std::span<const std::size_t> indices) const {
    const std::size_t p = shape_.pixels();
    std::vector<double> out(indices.size() * p);
    for (std::size_t k = 0; k < indices.size(); ++k) {
      auto px = image(indices[k]);
      std::copy(px.begin(), px.end(), out.begin() + static_cast<std::ptrdiff_t>(k * p));
    }
    return ad::Tensor({indices.size(), p}, std::move(out));
  }

  Dataset subset(std::span<const std::size_t> indices) const {
    const std::size_t p = shape_.pixels();
    std::vector<double> px(indices.size() * p);
    std::vector<std::size_t> labels(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
      if (indices[k] >= size()) throw ArgumentError("Dataset::subset: index out of range");
      auto src = image(indices[k]);
      std::copy(src.begin(), src.end(), px.begin() + static_cast<std::ptrdiff_t>(k * p));
      labels[k] = labels_[indices[k]];
    }
    return Dataset(shape_, classes_, std::move(px), std::move(labels));
  }

  std::vector<std::size_t> class_histogram() const {
    std::vector<std::size_t> h(classes_, 0);
    for (auto l : labels_) ++h[l];
    return h;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  ImageShape shape_;
  std::size_t classes_ = 0;
  std::vector<double> pixels_;
  std::vector<std::size_t> labels_;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError(path.string() + ": cannot open");
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(file)),
                                    std::istreambuf_iterator<char>());
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                               const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) throw TruncatedFileError(path.string() + ": header truncated");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace detail

// Reads an IDX image/label pair (MNIST distribution format). `limit`, when
// non-zero, keeps only the first `limit` samples.
inline Dataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path, std::size_t classes = 10,
                        std::size_t limit = 0) {
  const auto img = detail::read_all(images_path);
  const auto lab = detail::read_all(labels_path);

  if (detail::read_be32(img, 0, images_path) != kIdxImageMagic) {
    throw BadMagicError(images_path.string() + ": bad IDX image magic");
  }
  if (detail::read_be32(lab, 0, labels_path) != kIdxLabelMagic) {
    throw BadMagicError(labels_path.string() + ": bad IDX label magic");
  }
  const std::size_t n_images = detail::read_be32(img, 4, images_path);
  const std::size_t rows = detail::read_be32(img, 8, images_path);
  const std::size_t cols = detail::read_be32(img, 12, images_path);
  const std::size_t n_labels = detail::read_be32(lab, 4, labels_path);
  if (n_images != n_labels) {
    throw CountMismatchError(images_path.string() + " holds " + std::to_string(n_images) +
                             " images but " + labels_path.string() + " holds " +
                             std::to_string(n_labels) + " labels");
  }
  if (rows == 0 || cols == 0 || n_images == 0) throw FormatError(images_path.string() + ": empty IDX");
  if (img.size() < 16 + n_images * rows * cols) {
    throw TruncatedFileError(images_path.string() + ": pixel data truncated");
  }
  if (lab.size() < 8 + n_labels) throw TruncatedFileError(labels_path.string() + ": label data truncated");

  const std::size_t n = limit == 0 ? n_images : std::min(limit, n_images);
  const std::size_t p = rows * cols;
  std::vector<double> pixels(n * p);
  for (std::size_t i = 0; i < n * p; ++i) pixels[i] = img[16 + i] / 255.0;
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = lab[8 + i];
  return Dataset(ImageShape{rows, cols, 1}, classes, std::move(pixels), std::move(labels));
}

// Row of the horizontal bar and column of the vertical bar drawn for class c.
// Glyphs stay clear of the bottom-right corner where the default trigger sits.
struct Glyph {
  std::size_t bar_row = 0;
  std::size_t bar_col = 0;
  std::size_t extent_rows = 0;
  std::size_t extent_cols = 0;
};

inline Glyph glyph_for(std::size_t c, std::size_t classes, const ImageShape& shape) {
  const std::size_t region_h = shape.height > 6 ? shape.height - 6 : shape.height;
  const std::size_t region_w = shape.width > 6 ? shape.width - 6 : shape.width;
  const std::size_t top = shape.height > 6 ? 1 : 0;
  const std::size_t left = shape.width > 6 ? 1 : 0;
  const std::size_t col_slot = (c * 3) % classes;
  return Glyph{top + (c * region_h) / classes, left + (col_slot * region_w) / classes,
               top + region_h, left + region_w};
}

// Balanced synthetic classes: each class is a horizontal plus a vertical bar
// at class-specific positions, with seeded uniform noise of amplitude 0.2.
inline Dataset synth_dataset(std::size_t classes, std::size_t per_class, const ImageShape& shape,
                             std::uint64_t seed) {
  if (classes < 2) throw ArgumentError("synth_dataset: need at least 2 classes");
  if (per_class == 0 || shape.pixels() == 0) throw ArgumentError("synth_dataset: empty request");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(-0.2, 0.2);
  const std::size_t p = shape.pixels();
  const std::size_t n = classes * per_class;
  std::vector<double> pixels(n * p);
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % classes;
    labels[i] = c;
    const Glyph gl = glyph_for(c, classes, shape);
    double* img = pixels.data() + i * p;
    for (std::size_t r = 0; r < shape.height; ++r) {
      for (std::size_t q = 0; q < shape.width; ++q) {
        const bool on_row = r == gl.bar_row && q < gl.extent_cols;
        const bool on_col = q == gl.bar_col && r < gl.extent_rows;
        const double base = (on_row || on_col) ? 1.0 : 0.0;
        for (std::size_t ch = 0; ch < shape.channels; ++ch) {
          img[(r * shape.width + q) * shape.channels + ch] = std::clamp(base + noise(rng), 0.0, 1.0);
        }
      }
    }
  }
  return Dataset(shape, classes, std::move(pixels), std::move(labels));
}

}  // namespace fedtrig::data
