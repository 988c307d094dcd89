#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "fedtrig/data/dataset.hpp"
#include "fedtrig/nn/sgd.hpp"

namespace fedtrig::nn {

// Mean cross-entropy and gradient of one minibatch.
struct BatchResult {
  double loss = 0.0;
  std::vector<double> grads;
};

inline BatchResult batch_gradient(const Classifier& model, const data::Dataset& dataset,
                                  std::span<const std::size_t> batch) {
  ad::Graph g;
  auto bound = BoundStack::bind(g, model.net, true);
  auto x = g.constant(dataset.pixel_rows(batch));
  std::vector<std::size_t> labels(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) labels[k] = dataset.label(batch[k]);
  auto loss = ad::cross_entropy(classifier_probs(bound, x), labels);
  auto grads = g.backward(loss);
  return {loss.value().item(), bound.gather(grads, model.net.layout())};
}

// Runs config.epochs passes of minibatch SGD over a seeded shuffle of the
// dataset. Returns the mean batch loss of each epoch.
inline std::vector<double> train_classifier(Classifier& model, const data::Dataset& dataset,
                                            const SgdConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  MomentumState state;
  std::vector<double> epoch_losses;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      auto batch = std::span<const std::size_t>(order).subspan(start, end - start);
      auto result = batch_gradient(model, dataset, batch);
      sgd_step(model.net.params(), result.grads, config, state);
      total += result.loss;
      ++batches;
    }
    epoch_losses.push_back(total / static_cast<double>(batches));
  }
  return epoch_losses;
}

// Mean cross-entropy over a dataset, evaluated in chunks.
inline double mean_loss(const Classifier& model, const data::Dataset& dataset) {
  double total = 0.0;
  constexpr std::size_t chunk = 256;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < dataset.size(); start += chunk) {
    const std::size_t end = std::min(dataset.size(), start + chunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    ad::Graph g;
    auto bound = BoundStack::bind(g, model.net, false);
    std::vector<std::size_t> labels(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) labels[k] = dataset.label(idx[k]);
    auto loss = ad::cross_entropy(classifier_probs(bound, g.constant(dataset.pixel_rows(idx))), labels);
    total += loss.value().item() * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(dataset.size());
}

// Predicted class per sample.
inline std::vector<std::size_t> predict(const Classifier& model, const data::Dataset& dataset) {
  std::vector<std::size_t> out;
  out.reserve(dataset.size());
  constexpr std::size_t chunk = 256;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < dataset.size(); start += chunk) {
    const std::size_t end = std::min(dataset.size(), start + chunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    auto probs = classifier_forward(model, dataset.pixel_rows(idx));
    const std::size_t c = probs.last_extent();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto row = probs.data().subspan(r * c, c);
      out.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  }
  return out;
}

}  // namespace fedtrig::nn
