#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "fedtrig/flcore/aggregate.hpp"

// Baseline robust aggregators. Each takes the round's client updates and
// returns the next global parameters.
namespace fedtrig::defenses {

inline double squared_distance(const nn::ParamVector& a, const nn::ParamVector& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    d += t * t;
  }
  return d;
}

// Krum scores: for each update, the sum of its n - f - 2 smallest squared
// distances to the other updates.
inline std::vector<double> krum_scores(std::span<const ClientUpdate> updates, std::size_t f) {
  const std::size_t n = updates.size();
  if (n < f + 3) {
    throw ArgumentError("krum: need n >= f + 3 (n = " + std::to_string(n) + ", f = " + std::to_string(f) + ")");
  }
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    nn::require_aligned(updates[0].params, updates[i].params, "krum");
    for (std::size_t j = i + 1; j < n; ++j) {
      dist[i][j] = dist[j][i] = squared_distance(updates[i].params, updates[j].params);
    }
  }
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> others;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) others.push_back(dist[i][j]);
    }
    std::sort(others.begin(), others.end());
    double s = 0.0;
    for (std::size_t k = 0; k < n - f - 2; ++k) s += others[k];
    scores[i] = s;
  }
  return scores;
}

// Index (into `updates`) of the minimal-score update; ties go to the lowest
// client id.
inline std::size_t krum_index(std::span<const ClientUpdate> updates, std::size_t f) {
  const auto scores = krum_scores(updates, f);
  std::size_t best = 0;
  for (std::size_t i = 1; i < updates.size(); ++i) {
    if (scores[i] < scores[best] ||
        (scores[i] == scores[best] && updates[i].client_id < updates[best].client_id)) {
      best = i;
    }
  }
  return best;
}

inline nn::ParamVector krum_select(std::span<const ClientUpdate> updates, std::size_t f) {
  return updates[krum_index(updates, f)].params;
}

// Client ids picked by repeated Krum, in selection order.
inline std::vector<std::size_t> multi_krum_ids(std::span<const ClientUpdate> updates, std::size_t f,
                                               std::size_t m) {
  if (m == 0) throw ArgumentError("multi_krum: m must be >= 1");
  if (updates.size() < f + 2 + m) {
    throw ArgumentError("multi_krum: need n >= f + 2 + m (n = " + std::to_string(updates.size()) +
                        ", f = " + std::to_string(f) + ", m = " + std::to_string(m) + ")");
  }
  std::vector<ClientUpdate> pool(updates.begin(), updates.end());
  std::vector<std::size_t> picked;
  for (std::size_t r = 0; r < m; ++r) {
    const std::size_t idx = krum_index(pool, f);
    picked.push_back(pool[idx].client_id);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(idx));
  }
  return picked;
}

// Equal-weight mean of the m updates chosen by repeated Krum.
inline nn::ParamVector multi_krum(std::span<const ClientUpdate> updates, std::size_t f, std::size_t m) {
  const auto ids = multi_krum_ids(updates, f, m);
  std::vector<ClientUpdate> chosen;
  for (const auto& u : updates) {
    if (std::find(ids.begin(), ids.end(), u.client_id) != ids.end()) {
      chosen.push_back({u.client_id, u.params, 1});
    }
  }
  return fedavg_aggregate(chosen);
}

namespace detail {

// Applies `reduce` to each coordinate's sorted column of values.
template <class Reduce>
nn::ParamVector per_coordinate(std::span<const ClientUpdate> updates, const char* where, Reduce reduce) {
  if (updates.empty()) throw ArgumentError(std::string(where) + ": no updates");
  nn::ParamVector out = updates[0].params;
  for (const auto& u : updates) nn::require_aligned(out, u.params, where);
  std::vector<double> column(updates.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t k = 0; k < updates.size(); ++k) column[k] = updates[k].params[i];
    std::sort(column.begin(), column.end());
    out[i] = reduce(column);
  }
  return out;
}

}  // namespace detail

// Per-coordinate median; the mean of the two middle values for even counts.
inline nn::ParamVector coordinate_median(std::span<const ClientUpdate> updates) {
  return detail::per_coordinate(updates, "coordinate_median", [](const std::vector<double>& col) {
    const std::size_t n = col.size();
    return n % 2 == 1 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
  });
}

// Per coordinate, the mean after dropping the k largest and k smallest.
inline nn::ParamVector trimmed_mean(std::span<const ClientUpdate> updates, std::size_t k) {
  if (updates.size() <= 2 * k) {
    throw ArgumentError("trimmed_mean: need n > 2k (n = " + std::to_string(updates.size()) +
                        ", k = " + std::to_string(k) + ")");
  }
  return detail::per_coordinate(updates, "trimmed_mean", [k](const std::vector<double>& col) {
    double s = 0.0;
    for (std::size_t j = k; j < col.size() - k; ++j) s += col[j];
    return s / static_cast<double>(col.size() - 2 * k);
  });
}

inline int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

// Robust learning rate: per coordinate the server step is +eta when the
// absolute sum of update signs reaches theta, otherwise -eta.
inline nn::ParamVector rlr_aggregate(const nn::ParamVector& global, std::span<const ClientUpdate> updates,
                                     double theta, double eta) {
  if (updates.empty()) throw ArgumentError("rlr_aggregate: no updates");
  if (!(theta >= 0.0)) throw ArgumentError("rlr_aggregate: theta must be >= 0");
  const auto sorted = by_client_id(updates);
  for (const auto* u : sorted) nn::require_aligned(global, u->params, "rlr_aggregate");
  nn::ParamVector out = global;
  const double n = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    int votes = 0;
    double mean_delta = 0.0;
    for (const auto* u : sorted) {
      const double d = u->params[i] - global[i];
      votes += sign_of(d);
      mean_delta += d;
    }
    mean_delta /= n;
    const double lr = std::abs(static_cast<double>(votes)) >= theta ? eta : -eta;
    out[i] = global[i] + lr * mean_delta;
  }
  return out;
}

// FedAvg plus seeded N(0, sigma^2) noise on every coordinate.
inline nn::ParamVector dp_aggregate(std::span<const ClientUpdate> updates, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ArgumentError("dp_aggregate: sigma must be >= 0");
  nn::ParamVector out = fedavg_aggregate(updates);
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (auto& v : out.values) v += noise(rng);
  return out;
}

}  // namespace fedtrig::defenses
