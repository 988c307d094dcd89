#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>

#include "fedtrig/defenses/robust.hpp"
#include "fedtrig/defenses/trigger_gen.hpp"

namespace fedtrig::defenses {

enum class DefenseKind { none, krum, mkrum, comed, trimmed_mean, rlr, dp, trigger_gen };

inline std::string to_string(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::none: return "none";
    case DefenseKind::krum: return "krum";
    case DefenseKind::mkrum: return "mkrum";
    case DefenseKind::comed: return "comed";
    case DefenseKind::trimmed_mean: return "trimmed_mean";
    case DefenseKind::rlr: return "rlr";
    case DefenseKind::dp: return "dp";
    case DefenseKind::trigger_gen: return "trigger_gen";
  }
  return "?";
}

inline DefenseKind parse_defense_kind(const std::string& name) {
  for (auto k : {DefenseKind::none, DefenseKind::krum, DefenseKind::mkrum, DefenseKind::comed,
                 DefenseKind::trimmed_mean, DefenseKind::rlr, DefenseKind::dp, DefenseKind::trigger_gen}) {
    if (to_string(k) == name) return k;
  }
  throw ArgumentError("unknown defense kind '" + name + "'");
}

struct DefenseConfig {
  DefenseKind kind = DefenseKind::none;
  GenTrainConfig gen;
  // Byzantine count assumed by Krum; negative means floor(eta * n), at least 1.
  long krum_f = -1;
  // Adversary share behind the automatic f; the experiment fills in its own
  // eta when this is unset.
  std::optional<double> eta;
  std::size_t mkrum_m = 5;
  std::size_t trim_k = 3;
  double rlr_theta = 4.0;
  double rlr_eta = 1.0;
  double dp_sigma = 0.015;
};

// Krum's f for n updates: the configured value, or floor(eta * n) with a
// minimum of 1, capped so that the selection bound n >= f + 2 + m holds.
inline std::size_t krum_f_for(const DefenseConfig& cfg, std::size_t n, std::size_t m) {
  long f = cfg.krum_f >= 0 ? cfg.krum_f
                           : std::max(1L, static_cast<long>(std::floor(cfg.eta.value_or(0.0) * static_cast<double>(n))));
  const long cap = static_cast<long>(n) - 2 - static_cast<long>(m);
  if (cfg.krum_f < 0) f = std::min(f, std::max(0L, cap));
  return static_cast<std::size_t>(std::max(0L, f));
}

inline FilterReport keep_all(std::span<const ClientUpdate> updates) {
  FilterReport r;
  for (const auto& u : updates) r.verdicts.push_back({u.client_id});
  return r;
}

inline FilterReport keep_only(std::span<const ClientUpdate> updates, std::span<const std::size_t> kept_ids) {
  FilterReport r;
  for (const auto& u : updates) {
    const bool kept = std::find(kept_ids.begin(), kept_ids.end(), u.client_id) != kept_ids.end();
    r.verdicts.push_back({u.client_id, !kept});
  }
  return r;
}

// Routes (G_old, updates) to the configured aggregator.
inline DefenseOutcome defend(const DefenseConfig& cfg, const nn::Classifier& g_old,
                             std::span<const ClientUpdate> updates, std::uint64_t seed) {
  if (updates.empty()) throw ArgumentError("defend: no updates");
  DefenseOutcome out;
  switch (cfg.kind) {
    case DefenseKind::none:
      out.global = fedavg_aggregate(updates);
      out.report = keep_all(updates);
      break;
    case DefenseKind::krum: {
      const std::size_t idx = krum_index(updates, krum_f_for(cfg, updates.size(), 1));
      out.global = updates[idx].params;
      const std::size_t id = updates[idx].client_id;
      out.report = keep_only(updates, std::span<const std::size_t>(&id, 1));
      break;
    }
    case DefenseKind::mkrum: {
      const auto ids = multi_krum_ids(updates, krum_f_for(cfg, updates.size(), cfg.mkrum_m), cfg.mkrum_m);
      std::vector<ClientUpdate> chosen;
      for (const auto& u : updates) {
        if (std::find(ids.begin(), ids.end(), u.client_id) != ids.end()) chosen.push_back({u.client_id, u.params, 1});
      }
      out.global = fedavg_aggregate(chosen);
      out.report = keep_only(updates, ids);
      break;
    }
    case DefenseKind::comed:
      out.global = coordinate_median(updates);
      out.report = keep_all(updates);
      break;
    case DefenseKind::trimmed_mean:
      out.global = trimmed_mean(updates, cfg.trim_k);
      out.report = keep_all(updates);
      break;
    case DefenseKind::rlr:
      out.global = rlr_aggregate(nn::flatten_params(g_old), updates, cfg.rlr_theta, cfg.rlr_eta);
      out.report = keep_all(updates);
      break;
    case DefenseKind::dp:
      out.global = dp_aggregate(updates, cfg.dp_sigma, seed);
      out.report = keep_all(updates);
      break;
    case DefenseKind::trigger_gen:
      return defend_trigger_generation(g_old, updates, cfg.gen, seed);
  }
  return out;
}

}  // namespace fedtrig::defenses
