#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "fedtrig/data/dataset.hpp"

namespace fedtrig::data {

struct PixelAssign {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t channel = 0;
  double value = 1.0;

  friend auto operator<=>(const PixelAssign&, const PixelAssign&) = default;
};

struct BoundingBox {
  std::size_t row0 = 0, col0 = 0, row1 = 0, col1 = 0;  // inclusive
};

// Backdoor pattern: a set of pixel overwrites.
struct TriggerSpec {
  std::vector<PixelAssign> pixels;

  // size x size block of `value` in the bottom-right corner, `margin` pixels
  // in from the edges, written to every channel.
  static TriggerSpec corner_square(const ImageShape& shape, std::size_t size = 3,
                                   std::size_t margin = 1, double value = 1.0) {
    if (size == 0 || size + margin > shape.height || size + margin > shape.width) {
      throw ArgumentError("corner_square: trigger does not fit the image");
    }
    TriggerSpec t;
    const std::size_t r0 = shape.height - margin - size;
    const std::size_t c0 = shape.width - margin - size;
    for (std::size_t r = r0; r < r0 + size; ++r) {
      for (std::size_t c = c0; c < c0 + size; ++c) {
        for (std::size_t ch = 0; ch < shape.channels; ++ch) t.pixels.push_back({r, c, ch, value});
      }
    }
    return t;
  }

  BoundingBox bounding_box() const {
    if (pixels.empty()) throw ArgumentError("TriggerSpec: empty pattern");
    BoundingBox b{pixels[0].row, pixels[0].col, pixels[0].row, pixels[0].col};
    for (const auto& p : pixels) {
      b.row0 = std::min(b.row0, p.row);
      b.col0 = std::min(b.col0, p.col);
      b.row1 = std::max(b.row1, p.row);
      b.col1 = std::max(b.col1, p.col);
    }
    return b;
  }

  void validate(const ImageShape& shape) const {
    if (pixels.empty()) throw ArgumentError("TriggerSpec: empty pattern");
    for (const auto& p : pixels) {
      if (p.row >= shape.height || p.col >= shape.width || p.channel >= shape.channels) {
        throw ArgumentError("TriggerSpec: pixel (" + std::to_string(p.row) + ", " +
                            std::to_string(p.col) + ", " + std::to_string(p.channel) +
                            ") outside the image");
      }
      if (!(p.value >= 0.0 && p.value <= 1.0)) throw ArgumentError("TriggerSpec: value outside [0, 1]");
    }
  }
};

struct PoisonConfig {
  double rate = 0.5;
  std::size_t target = 2;
  TriggerSpec trigger;
};

// Overwrites the trigger pixels of one image laid out (H, W, Ch).
inline void stamp_trigger_inplace(std::span<double> image, const ImageShape& shape,
                                  const TriggerSpec& trigger) {
  trigger.validate(shape);
  for (const auto& p : trigger.pixels) {
    image[(p.row * shape.width + p.col) * shape.channels + p.channel] = p.value;
  }
}

inline ad::Tensor stamp_trigger(const ad::Tensor& image, const TriggerSpec& trigger) {
  if (image.rank() != 3) throw ShapeError("stamp_trigger: image must be (H, W, Ch)");
  const ImageShape shape{image.extent(0), image.extent(1), image.extent(2)};
  std::vector<double> px = image.values();
  stamp_trigger_inplace(px, shape, trigger);
  return ad::Tensor(image.shape(), std::move(px));
}

// Every sample stamped with the trigger; labels untouched.
inline Dataset stamp_all(const Dataset& dataset, const TriggerSpec& trigger) {
  std::vector<double> px = dataset.pixels();
  const std::size_t p = dataset.image_shape().pixels();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    stamp_trigger_inplace(std::span<double>(px).subspan(i * p, p), dataset.image_shape(), trigger);
  }
  return Dataset(dataset.image_shape(), dataset.classes(), std::move(px), dataset.labels());
}

// Number of samples a shard of size n poisons at rate p.
inline std::size_t poison_count(std::size_t n, double rate) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(rate * static_cast<double>(n))));
}

// Stamps and relabels round(rate * n) (at least one) samples chosen without
// replacement among those whose label is not already the target.
inline Dataset poison_client_dataset(const Dataset& shard, const PoisonConfig& config,
                                     std::uint64_t seed) {
  if (config.target >= shard.classes()) throw ArgumentError("PoisonConfig: target out of range");
  if (!(config.rate > 0.0 && config.rate <= 1.0)) throw ArgumentError("PoisonConfig: rate must be in (0, 1]");
  config.trigger.validate(shard.image_shape());

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < shard.size(); ++i) {
    if (shard.label(i) != config.target) eligible.push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(eligible.begin(), eligible.end(), rng);
  eligible.resize(std::min(eligible.size(), poison_count(shard.size(), config.rate)));

  std::vector<double> px = shard.pixels();
  std::vector<std::size_t> labels = shard.labels();
  const std::size_t p = shard.image_shape().pixels();
  for (std::size_t i : eligible) {
    stamp_trigger_inplace(std::span<double>(px).subspan(i * p, p), shard.image_shape(), config.trigger);
    labels[i] = config.target;
  }
  return Dataset(shard.image_shape(), shard.classes(), std::move(px), std::move(labels));
}

}  // namespace fedtrig::data
