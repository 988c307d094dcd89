#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "fedtrig/flcore/types.hpp"
#include "fedtrig/nn/train.hpp"
#include "fedtrig/seed.hpp"

namespace fedtrig::attacks {

// G_old + s * (trained - G_old)
inline nn::ParamVector scale_update(const nn::ParamVector& global, const nn::ParamVector& trained,
                                    double s) {
  nn::require_aligned(global, trained, "scale_update");
  nn::ParamVector out = trained;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = global[i] + s * (trained[i] - global[i]);
  return out;
}

// Splits the trigger into n_parts groups of consecutive pixels in row-major
// order; the first (pixels mod n_parts) groups hold one extra pixel.
inline std::vector<data::TriggerSpec> dba_assign_subtriggers(const data::TriggerSpec& trigger,
                                                             std::size_t n_parts) {
  if (n_parts < 2) throw ArgumentError("dba: need at least 2 parts");
  if (trigger.pixels.size() < n_parts) {
    throw ArgumentError("dba: trigger has " + std::to_string(trigger.pixels.size()) +
                        " pixels, fewer than " + std::to_string(n_parts) + " parts");
  }
  std::vector<data::PixelAssign> sorted = trigger.pixels;
  std::sort(sorted.begin(), sorted.end());
  std::vector<data::TriggerSpec> parts(n_parts);
  const std::size_t base = sorted.size() / n_parts;
  const std::size_t extra = sorted.size() % n_parts;
  std::size_t pos = 0;
  for (std::size_t k = 0; k < n_parts; ++k) {
    const std::size_t len = base + (k < extra ? 1 : 0);
    parts[k].pixels.assign(sorted.begin() + static_cast<std::ptrdiff_t>(pos),
                           sorted.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return parts;
}

// Keeps the ceil(r * dim) coordinates of `delta` whose |reference| is
// smallest (ties by index) and zeroes the rest.
inline nn::ParamVector neurotoxin_project(const nn::ParamVector& delta,
                                          const nn::ParamVector& reference, double ratio) {
  nn::require_aligned(delta, reference, "neurotoxin_project");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ArgumentError("neurotoxin: ratio must be in (0, 1]");
  const std::size_t dim = delta.size();
  const auto keep = std::min(dim, static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(dim) - 1e-9)));
  std::vector<std::size_t> order(dim);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(reference[a]) < std::abs(reference[b]);
  });
  nn::ParamVector out = delta;
  std::fill(out.values.begin(), out.values.end(), 0.0);
  for (std::size_t k = 0; k < keep; ++k) out[order[k]] = delta[order[k]];
  return out;
}

inline bool attack_active(const AttackConfig& attack, const RoundContext& ctx) {
  return attack.kind != AttackKind::single || ctx.round >= attack.activation_round;
}

// Trains on a poisoned copy of the shard with the attacker's own schedule,
// then applies the kind-specific post-processing. A single attacker behaves
// like a benign client before its activation round.
inline ClientUpdate adversarial_local_train(const nn::Classifier& global, const ClientProfile& profile,
                                            const data::Dataset& train, const RoundContext& ctx) {
  if (profile.role != Role::adversarial || !profile.attack) {
    throw ArgumentError("adversarial_local_train: profile " + std::to_string(profile.id) + " is benign");
  }
  if (profile.shard.indices.empty()) throw ArgumentError("adversarial_local_train: empty shard");
  const AttackConfig& attack = *profile.attack;
  attack.validate();
  const data::Dataset shard = train.subset(profile.shard.indices);
  const std::uint64_t train_seed = derive_seed(ctx.master_seed, "local-train", ctx.round, profile.id);
  nn::Classifier model = global;

  if (!attack_active(attack, ctx)) {
    nn::train_classifier(model, shard, profile.training, train_seed);
    return {profile.id, nn::flatten_params(model), shard.size()};
  }

  data::PoisonConfig poison = attack.poison;
  if (attack.kind == AttackKind::dba) {
    poison.trigger = dba_assign_subtriggers(poison.trigger, attack.dba_parts)[attack.dba_index % attack.dba_parts];
  }
  const data::Dataset poisoned =
      data::poison_client_dataset(shard, poison, derive_seed(ctx.master_seed, "poison", ctx.round, profile.id));
  nn::train_classifier(model, poisoned, attack.training, train_seed);

  const nn::ParamVector g_old = nn::flatten_params(global);
  nn::ParamVector trained = nn::flatten_params(model);
  if (attack.kind == AttackKind::neurotoxin) {
    nn::ParamVector delta = trained;
    nn::ParamVector reference = trained;
    for (std::size_t i = 0; i < delta.size(); ++i) {
      delta[i] = trained[i] - g_old[i];
      reference[i] = ctx.previous_global ? g_old[i] - (*ctx.previous_global)[i] : 0.0;
    }
    const nn::ParamVector masked = neurotoxin_project(delta, reference, attack.mask_ratio);
    for (std::size_t i = 0; i < trained.size(); ++i) trained[i] = g_old[i] + masked[i];
  }
  const double s = attack.scale == 0.0 ? static_cast<double>(ctx.selected_count) : attack.scale;
  if (s != 1.0) trained = scale_update(g_old, trained, s);
  return {profile.id, std::move(trained), shard.size()};
}

}  // namespace fedtrig::attacks
