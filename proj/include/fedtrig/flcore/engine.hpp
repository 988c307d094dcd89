#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "fedtrig/attacks/attacks.hpp"
#include "fedtrig/flcore/config.hpp"
#include "fedtrig/harness/metrics.hpp"

namespace fedtrig {

// k distinct client ids drawn uniformly from [0, pool), ascending.
inline std::vector<std::size_t> select_clients(std::size_t pool, std::size_t k, std::uint64_t seed,
                                               std::size_t round) {
  if (k > pool) {
    throw ArgumentError("select_clients: cannot pick " + std::to_string(k) + " of " + std::to_string(pool));
  }
  std::vector<std::size_t> ids(pool);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, "select", round));
  // partial Fisher-Yates
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

// Copies the global model and runs the profile's local schedule on its
// shard. Adversarial profiles are handed to the attack implementation.
inline ClientUpdate local_train(const nn::Classifier& global, const ClientProfile& profile,
                                const data::Dataset& train, const RoundContext& ctx) {
  profile.validate();
  if (profile.role == Role::adversarial) return attacks::adversarial_local_train(global, profile, train, ctx);
  if (profile.shard.indices.empty()) throw ArgumentError("local_train: empty shard");
  const data::Dataset shard = train.subset(profile.shard.indices);
  nn::Classifier model = global;
  if (profile.training.epochs > 0) {
    nn::train_classifier(model, shard, profile.training,
                         derive_seed(ctx.master_seed, "local-train", ctx.round, profile.id));
  }
  return {profile.id, nn::flatten_params(model), shard.size()};
}

struct ExperimentState {
  ExperimentConfig config;
  data::Dataset train;
  data::Dataset test;
  data::TriggerSpec trigger;
  std::vector<ClientProfile> profiles;
  std::vector<std::size_t> adversaries;  // ascending client ids
  nn::Classifier global;
  nn::ParamVector previous_global;
  std::size_t round = 0;
  std::vector<RoundRecord> records;

  bool is_adversary(std::size_t id) const {
    return std::binary_search(adversaries.begin(), adversaries.end(), id);
  }
};

// Builds profiles, shards, the adversary set and the initial global model.
inline ExperimentState init_experiment(const ExperimentConfig& config, data::Dataset train, data::Dataset test) {
  config.validate();
  if (train.image_shape() != config.dataset.shape || train.classes() != config.dataset.classes) {
    throw ConfigError("dataset does not match dataset.shape / dataset.classes");
  }
  ExperimentState s;
  s.config = config;
  s.train = std::move(train);
  s.test = std::move(test);
  s.trigger = data::TriggerSpec::corner_square(config.dataset.shape, config.trigger_size,
                                               config.trigger_margin, config.trigger_value);

  const auto shards = data::dirichlet_partition(s.train, config.clients, config.alpha,
                                                derive_seed(config.seed, "partition"));
  std::size_t n_adv = static_cast<std::size_t>(std::lround(config.eta * static_cast<double>(config.clients)));
  if (config.attack.kind == AttackKind::single) n_adv = std::min<std::size_t>(n_adv, 1);
  std::vector<std::size_t> order(config.clients);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(config.seed, "adversaries"));
  std::shuffle(order.begin(), order.end(), rng);
  s.adversaries.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_adv));
  std::sort(s.adversaries.begin(), s.adversaries.end());

  AttackConfig attack = config.attack;
  attack.poison.trigger = s.trigger;
  if (config.attack_scale) {
    attack.scale = *config.attack_scale;
  } else {
    attack.scale = attack.kind == AttackKind::single ? 0.0 : 1.0;
  }
  const auto tail = static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(config.rounds)));
  attack.activation_round = config.rounds > tail ? config.rounds - tail : 0;

  for (std::size_t id = 0; id < config.clients; ++id) {
    ClientProfile p;
    p.id = id;
    p.shard = shards[id];
    p.training = config.benign;
    if (s.is_adversary(id)) {
      p.role = Role::adversarial;
      AttackConfig a = attack;
      a.dba_index = static_cast<std::size_t>(
          std::lower_bound(s.adversaries.begin(), s.adversaries.end(), id) - s.adversaries.begin());
      p.attack = a;
    }
    s.profiles.push_back(std::move(p));
  }
  s.global = nn::init_model(config.classifier_spec(), derive_seed(config.seed, "global-init"));
  s.previous_global = nn::flatten_params(s.global);
  return s;
}

// Everything a round produced, for callers that want to inspect it.
struct RoundTrace {
  nn::Classifier g_old;
  std::vector<ClientUpdate> updates;
  defenses::DefenseOutcome outcome;
};

inline bool evaluates(const ExperimentConfig& c, std::size_t round) {
  return (round + 1) % c.eval_stride == 0 || round + 1 == c.rounds;
}

// select -> local training -> defense -> evaluation -> record. The state is
// only modified once every step has succeeded.
inline RoundRecord run_round(ExperimentState& state, const defenses::DefenseConfig& defense,
                             RoundTrace* trace = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  const ExperimentConfig& cfg = state.config;
  const std::size_t r = state.round;
  RoundRecord record;
  record.round = r;
  record.selected = select_clients(cfg.clients, cfg.selected, cfg.seed, r);

  RoundContext ctx{r, cfg.rounds, cfg.selected, &state.previous_global, cfg.seed};
  std::vector<ClientUpdate> updates;
  for (auto id : record.selected) updates.push_back(local_train(state.global, state.profiles[id], state.train, ctx));

  defenses::DefenseConfig dcfg = defense;
  if (!dcfg.eta) dcfg.eta = cfg.eta;
  defenses::DefenseOutcome outcome =
      defenses::defend(dcfg, state.global, updates, derive_seed(cfg.seed, "defense", r));
  record.removed = outcome.report.removed_ids();
  nn::Classifier next = nn::unflatten_params(state.global.spec, outcome.global);

  if (evaluates(cfg, r)) {
    record.ma = harness::eval_main_accuracy(next, state.test);
    record.asr = harness::eval_attack_success_rate(next, state.test, state.trigger, cfg.attack.poison.target);
  }
  if (cfg.record_wall_time) {
    record.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }

  if (trace) *trace = RoundTrace{state.global, std::move(updates), std::move(outcome)};
  state.previous_global = nn::flatten_params(state.global);
  state.global = std::move(next);
  state.records.push_back(record);
  ++state.round;
  return record;
}

}  // namespace fedtrig
