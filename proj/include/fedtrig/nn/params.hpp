#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fedtrig/error.hpp"

namespace fedtrig::nn {

struct LayoutEntry {
  std::size_t layer = 0;
  std::string name;  // "weight" or "bias"
  std::size_t offset = 0;
  std::vector<std::size_t> shape;

  std::size_t size() const {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
  }

  friend bool operator==(const LayoutEntry&, const LayoutEntry&) = default;
};

// Ordered (layer, tensor-name, row-major) index map of a flat parameter
// vector. Two models with the same architecture produce equal layouts.
struct Layout {
  std::vector<LayoutEntry> entries;
  std::size_t total = 0;

  // Fully connected stack over `sizes` = {in, h1, ..., out}: for each layer a
  // weight of shape (in_l, out_l) followed by a bias of length out_l.
  static Layout dense_stack(const std::vector<std::size_t>& sizes) {
    Layout layout;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      layout.push(l, "weight", {sizes[l], sizes[l + 1]});
      layout.push(l, "bias", {sizes[l + 1]});
    }
    return layout;
  }

  // FNV-1a over names and extents; stored in checkpoints.
  std::uint64_t digest() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t v) {
      for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffU;
        h *= 1099511628211ULL;
      }
    };
    for (const auto& e : entries) {
      mix(e.layer);
      for (char ch : e.name) mix(static_cast<unsigned char>(ch));
      mix(e.shape.size());
      for (auto s : e.shape) mix(s);
    }
    mix(total);
    return h;
  }

  friend bool operator==(const Layout&, const Layout&) = default;

 private:
  void push(std::size_t layer, std::string name, std::vector<std::size_t> shape) {
    LayoutEntry e{layer, std::move(name), total, std::move(shape)};
    total += e.size();
    entries.push_back(std::move(e));
  }
};

// Flat view of a model's parameters; the unit every aggregator works on.
struct ParamVector {
  std::vector<double> values;
  Layout layout;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

inline void require_aligned(const ParamVector& a, const ParamVector& b, const char* where) {
  if (a.values.size() != b.values.size() || !(a.layout == b.layout)) {
    throw ShapeError(std::string(where) + ": parameter layouts do not match (" +
                     std::to_string(a.values.size()) + " vs " +
                     std::to_string(b.values.size()) + " values)");
  }
}

}  // namespace fedtrig::nn
