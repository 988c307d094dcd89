#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fedtrig/autodiff/ops.hpp"
#include "fedtrig/nn/params.hpp"

namespace fedtrig::nn {

struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;

  std::size_t pixels() const { return height * width * channels; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

struct ClassifierSpec {
  ImageShape input;
  std::vector<std::size_t> hidden;
  std::size_t classes = 10;

  void validate() const {
    if (classes < 2) throw ArgumentError("ClassifierSpec: need at least 2 classes");
    if (input.pixels() == 0) throw ArgumentError("ClassifierSpec: empty input shape");
    for (auto w : hidden) {
      if (w == 0) throw ArgumentError("ClassifierSpec: hidden widths must be positive");
    }
  }

  std::vector<std::size_t> layer_sizes() const {
    std::vector<std::size_t> sizes{input.pixels()};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(classes);
    return sizes;
  }

  friend bool operator==(const ClassifierSpec&, const ClassifierSpec&) = default;
};

// Conditional generator: (noise ++ one-hot label) -> pixels in [0, 1].
struct GeneratorSpec {
  std::size_t latent = 64;
  std::size_t classes = 10;
  ImageShape output;
  std::vector<std::size_t> hidden{256, 512};

  void validate() const {
    if (classes < 2) throw ArgumentError("GeneratorSpec: need at least 2 classes");
    if (latent == 0 || output.pixels() == 0) throw ArgumentError("GeneratorSpec: empty extents");
    for (auto w : hidden) {
      if (w == 0) throw ArgumentError("GeneratorSpec: hidden widths must be positive");
    }
  }

  std::vector<std::size_t> layer_sizes() const {
    std::vector<std::size_t> sizes{latent + classes};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(output.pixels());
    return sizes;
  }
};

// Fully connected ReLU stack stored as one flat parameter vector.
class DenseStack {
 public:
  DenseStack() = default;
  explicit DenseStack(std::vector<std::size_t> sizes)
      : sizes_(std::move(sizes)), layout_(Layout::dense_stack(sizes_)),
        params_(layout_.total, 0.0) {}

  // Glorot-uniform weights, zero biases.
  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (const auto& e : layout_.entries) {
      if (e.name != "weight") continue;
      const double a = std::sqrt(6.0 / static_cast<double>(e.shape[0] + e.shape[1]));
      std::uniform_real_distribution<double> dist(-a, a);
      for (std::size_t i = 0; i < e.size(); ++i) params_[e.offset + i] = dist(rng);
    }
  }

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  const Layout& layout() const { return layout_; }
  std::size_t layers() const { return sizes_.size() - 1; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  ad::Tensor weight(std::size_t layer) const { return slice(layout_.entries[2 * layer]); }
  ad::Tensor bias(std::size_t layer) const { return slice(layout_.entries[2 * layer + 1]); }

  friend bool operator==(const DenseStack& a, const DenseStack& b) {
    return a.sizes_ == b.sizes_ && a.params_ == b.params_;
  }

 private:
  ad::Tensor slice(const LayoutEntry& e) const {
    return ad::Tensor(e.shape, std::vector<double>(params_.begin() + static_cast<std::ptrdiff_t>(e.offset),
                                                   params_.begin() + static_cast<std::ptrdiff_t>(e.offset + e.size())));
  }

  std::vector<std::size_t> sizes_;
  Layout layout_;
  std::vector<double> params_;
};

// A DenseStack placed on a graph, either as trainable leaves or constants.
struct BoundStack {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;

  static BoundStack bind(ad::Graph& g, const DenseStack& net, bool trainable) {
    BoundStack b;
    for (std::size_t l = 0; l < net.layers(); ++l) {
      b.weights.push_back(g.leaf(net.weight(l), trainable));
      b.biases.push_back(g.leaf(net.bias(l), trainable));
    }
    return b;
  }

  // Pre-activation output of the last layer; ReLU between layers.
  ad::Var logits(ad::Var x) const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      x = ad::add_rowwise(ad::matmul(x, weights[l]), biases[l]);
      if (l + 1 < weights.size()) x = ad::relu(x);
    }
    return x;
  }

  // Gradients gathered into the stack's flat layout.
  std::vector<double> gather(const ad::Gradients& grads, const Layout& layout) const {
    std::vector<double> flat(layout.total);
    for (std::size_t l = 0; l < weights.size(); ++l) {
      const auto& gw = grads.of(weights[l]);
      const auto& gb = grads.of(biases[l]);
      std::copy(gw.data().begin(), gw.data().end(), flat.begin() + static_cast<std::ptrdiff_t>(layout.entries[2 * l].offset));
      std::copy(gb.data().begin(), gb.data().end(), flat.begin() + static_cast<std::ptrdiff_t>(layout.entries[2 * l + 1].offset));
    }
    return flat;
  }
};

struct Classifier {
  ClassifierSpec spec;
  DenseStack net;

  friend bool operator==(const Classifier& a, const Classifier& b) {
    return a.spec == b.spec && a.net == b.net;
  }
};

struct Generator {
  GeneratorSpec spec;
  DenseStack net;
};

inline Classifier init_model(const ClassifierSpec& spec, std::uint64_t seed) {
  spec.validate();
  Classifier model{spec, DenseStack(spec.layer_sizes())};
  model.net.init(seed);
  return model;
}

inline Generator init_generator(const GeneratorSpec& spec, std::uint64_t seed) {
  spec.validate();
  Generator gen{spec, DenseStack(spec.layer_sizes())};
  gen.net.init(seed);
  return gen;
}

// Flattens a batch of images (N, H, W, Ch) or a single image (H, W, Ch) to
// rows of pixels, checking the extents against the classifier input.
inline ad::Tensor as_pixel_rows(const ad::Tensor& images, const ImageShape& shape) {
  const auto& s = images.shape();
  const bool single = s.size() == 3;
  const bool batch = s.size() == 4;
  const bool flat = s.size() == 2 && s[1] == shape.pixels();
  if (flat) return images;
  const std::size_t off = single ? 0 : 1;
  if (!(single || batch) || s[off] != shape.height || s[off + 1] != shape.width ||
      s[off + 2] != shape.channels) {
    throw ShapeError("classifier input " + ad::to_string(s) + " does not match " +
                     std::to_string(shape.height) + "x" + std::to_string(shape.width) + "x" +
                     std::to_string(shape.channels));
  }
  const std::size_t n = single ? 1 : s[0];
  return images.reshaped({n, shape.pixels()});
}

// Class-probability rows on a graph; `pixel_rows` is (N, pixels).
inline ad::Var classifier_probs(const BoundStack& bound, ad::Var pixel_rows) {
  return ad::softmax(bound.logits(pixel_rows));
}

// Probabilities (N, C) for a batch of images.
inline ad::Tensor classifier_forward(const Classifier& model, const ad::Tensor& images) {
  ad::Graph g;
  auto bound = BoundStack::bind(g, model.net, false);
  auto x = g.constant(as_pixel_rows(images, model.spec.input));
  return classifier_probs(bound, x).value();
}

// One-hot rows (labels.size(), classes).
inline ad::Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes) {
  std::vector<double> data(labels.size() * classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw ArgumentError("one_hot: label out of range");
    data[i * classes + labels[i]] = 1.0;
  }
  return ad::Tensor({labels.size(), classes}, std::move(data));
}

// Generator output on a graph as pixel rows (C, pixels).
inline ad::Var generator_pixels(const BoundStack& bound, const GeneratorSpec& spec, ad::Var z,
                                std::span<const std::size_t> labels) {
  if (labels.size() != spec.classes) {
    throw ArgumentError("generator: expected " + std::to_string(spec.classes) +
                        " labels, got " + std::to_string(labels.size()));
  }
  if (z.shape() != ad::Shape{spec.classes, spec.latent}) {
    throw ShapeError("generator: noise must be " + std::to_string(spec.classes) + "x" +
                     std::to_string(spec.latent) + ", got " + ad::to_string(z.shape()));
  }
  ad::Graph& g = *z.graph;
  auto cond = g.constant(one_hot(labels, spec.classes));
  return ad::sigmoid(bound.logits(ad::concat({z, cond}, 1)));
}

// Images (C, H, W, Ch) in [0, 1], image i conditioned on labels[i].
inline ad::Tensor generator_forward(const Generator& gen, const ad::Tensor& z,
                                    std::span<const std::size_t> labels) {
  ad::Graph g;
  auto bound = BoundStack::bind(g, gen.net, false);
  auto pixels = generator_pixels(bound, gen.spec, g.constant(z), labels);
  const auto& o = gen.spec.output;
  return pixels.value().reshaped({labels.size(), o.height, o.width, o.channels});
}

inline ParamVector flatten_params(const Classifier& model) {
  return ParamVector{model.net.params(), model.net.layout()};
}

inline Classifier unflatten_params(const ClassifierSpec& spec, const ParamVector& params) {
  spec.validate();
  Classifier model{spec, DenseStack(spec.layer_sizes())};
  if (params.values.size() != model.net.layout().total) {
    throw ShapeError("unflatten_params: expected " + std::to_string(model.net.layout().total) +
                     " values, got " + std::to_string(params.values.size()));
  }
  if (!params.layout.entries.empty() && !(params.layout == model.net.layout())) {
    throw ShapeError("unflatten_params: layout does not match spec");
  }
  model.net.params() = params.values;
  return model;
}

}  // namespace fedtrig::nn
