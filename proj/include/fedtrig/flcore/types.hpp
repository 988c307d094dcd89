#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "fedtrig/data/partition.hpp"
#include "fedtrig/data/poison.hpp"
#include "fedtrig/nn/sgd.hpp"

namespace fedtrig {

enum class AttackKind { multiple, single, dba, neurotoxin };

inline std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::multiple: return "multiple";
    case AttackKind::single: return "single";
    case AttackKind::dba: return "dba";
    case AttackKind::neurotoxin: return "neurotoxin";
  }
  return "?";
}

inline AttackKind parse_attack_kind(const std::string& name) {
  if (name == "multiple") return AttackKind::multiple;
  if (name == "single") return AttackKind::single;
  if (name == "dba") return AttackKind::dba;
  if (name == "neurotoxin") return AttackKind::neurotoxin;
  throw ArgumentError("unknown attack kind '" + name + "'");
}

struct AttackConfig {
  AttackKind kind = AttackKind::multiple;
  data::PoisonConfig poison;
  nn::SgdConfig training{0.05, 0.9, 0.001, 10, 32};
  // Model-replacement factor; 0 means "number of selected clients".
  double scale = 1.0;
  std::size_t dba_parts = 4;
  // Which sub-trigger this adversary stamps (taken modulo dba_parts).
  std::size_t dba_index = 0;
  double mask_ratio = 0.25;
  // First round at which a single attacker poisons.
  std::size_t activation_round = 0;

  void validate() const {
    if (scale != 0.0 && scale < 1.0) throw ArgumentError("AttackConfig: scale must be >= 1");
    if (!(mask_ratio > 0.0 && mask_ratio <= 1.0)) throw ArgumentError("AttackConfig: mask ratio must be in (0, 1]");
    if (kind == AttackKind::dba && dba_parts < 2) throw ArgumentError("AttackConfig: dba needs >= 2 parts");
    training.validate();
  }
};

enum class Role { benign, adversarial };

struct ClientProfile {
  std::size_t id = 0;
  data::ClientShard shard;
  Role role = Role::benign;
  nn::SgdConfig training;
  std::optional<AttackConfig> attack;

  void validate() const {
    if ((role == Role::adversarial) != attack.has_value()) {
      throw ArgumentError("ClientProfile " + std::to_string(id) +
                          ": adversarial profiles carry an attack config, benign ones do not");
    }
  }
};

struct ClientUpdate {
  std::size_t client_id = 0;
  nn::ParamVector params;
  std::size_t samples = 1;
};

// Per-round audit row.
struct RoundRecord {
  std::size_t round = 0;
  std::vector<std::size_t> selected;
  std::vector<std::size_t> removed;
  std::optional<double> ma;
  std::optional<double> asr;
  double wall_ms = 0.0;
};

// What a client knows about the round it is training in.
struct RoundContext {
  std::size_t round = 0;
  std::size_t total_rounds = 1;
  std::size_t selected_count = 1;
  // Global model of the previous round (equal to the current one at round 0).
  const nn::ParamVector* previous_global = nullptr;
  std::uint64_t master_seed = 0;
};

}  // namespace fedtrig
