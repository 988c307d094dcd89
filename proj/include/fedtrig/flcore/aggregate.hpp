#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "fedtrig/flcore/types.hpp"

namespace fedtrig {

// Updates ordered by client id, so that floating-point accumulation does not
// depend on the order the list was built in.
inline std::vector<const ClientUpdate*> by_client_id(std::span<const ClientUpdate> updates) {
  std::vector<const ClientUpdate*> sorted;
  for (const auto& u : updates) sorted.push_back(&u);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ClientUpdate* a, const ClientUpdate* b) { return a->client_id < b->client_id; });
  return sorted;
}

// Sample-count weighted coordinate-wise mean.
inline nn::ParamVector fedavg_aggregate(std::span<const ClientUpdate> updates) {
  if (updates.empty()) throw ArgumentError("fedavg_aggregate: no updates");
  const auto sorted = by_client_id(updates);
  double total = 0.0;
  for (const auto* u : sorted) {
    nn::require_aligned(sorted.front()->params, u->params, "fedavg_aggregate");
    if (u->samples == 0) throw ArgumentError("fedavg_aggregate: update with zero samples");
    total += static_cast<double>(u->samples);
  }
  // Weighted mean taken as offsets from the lowest-id update, so identical
  // updates (and a single update) come back bit for bit.
  const nn::ParamVector& base = sorted.front()->params;
  std::vector<double> acc(base.size(), 0.0);
  for (const auto* u : sorted) {
    const double w = static_cast<double>(u->samples) / total;
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * (u->params[i] - base[i]);
  }
  nn::ParamVector out = base;
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] += acc[i];
  return out;
}

}  // namespace fedtrig
