#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "fedtrig/data/dataset.hpp"

namespace fedtrig::data {

struct ClientShard {
  std::size_t client_id = 0;
  std::vector<std::size_t> indices;  // ascending, into the parent dataset
};

// Non-IID split: for each class a proportion vector over clients is drawn
// from Dirichlet(alpha) and the (shuffled) class indices are cut at the
// cumulative proportions. Empty shards then take one sample each from the
// currently largest shard.
inline std::vector<ClientShard> dirichlet_partition(const Dataset& dataset, std::size_t n_clients,
                                                    double alpha, std::uint64_t seed) {
  if (!(alpha > 0.0)) throw ArgumentError("dirichlet_partition: alpha must be > 0");
  if (n_clients == 0) throw ArgumentError("dirichlet_partition: need at least one client");
  if (n_clients > dataset.size()) {
    throw ArgumentError("dirichlet_partition: " + std::to_string(n_clients) +
                        " clients for " + std::to_string(dataset.size()) + " samples");
  }
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gamma(alpha, 1.0);

  std::vector<std::vector<std::size_t>> by_class(dataset.classes());
  for (std::size_t i = 0; i < dataset.size(); ++i) by_class[dataset.label(i)].push_back(i);

  std::vector<ClientShard> shards(n_clients);
  for (std::size_t k = 0; k < n_clients; ++k) shards[k].client_id = k;

  std::vector<double> proportions(n_clients);
  for (auto& members : by_class) {
    double total = 0.0;
    for (auto& p : proportions) {
      p = gamma(rng);
      total += p;
    }
    if (!(total > 0.0)) {
      // every gamma draw underflowed; fall back to a uniform split
      std::fill(proportions.begin(), proportions.end(), 1.0);
      total = static_cast<double>(n_clients);
    }
    std::shuffle(members.begin(), members.end(), rng);
    const double n = static_cast<double>(members.size());
    double cumulative = 0.0;
    std::size_t start = 0;
    for (std::size_t k = 0; k < n_clients; ++k) {
      cumulative += proportions[k] / total;
      const std::size_t end =
          k + 1 == n_clients ? members.size()
                             : std::min(members.size(), static_cast<std::size_t>(cumulative * n));
      for (std::size_t j = start; j < std::max(start, end); ++j) shards[k].indices.push_back(members[j]);
      start = std::max(start, end);
    }
  }

  for (auto& shard : shards) {
    if (!shard.indices.empty()) continue;
    auto largest = std::max_element(shards.begin(), shards.end(), [](const auto& a, const auto& b) {
      return a.indices.size() < b.indices.size();
    });
    shard.indices.push_back(largest->indices.back());
    largest->indices.pop_back();
  }
  for (auto& shard : shards) std::sort(shard.indices.begin(), shard.indices.end());
  return shards;
}

}  // namespace fedtrig::data
