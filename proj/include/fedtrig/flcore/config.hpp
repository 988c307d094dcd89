#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedtrig/defenses/defend.hpp"
#include "fedtrig/flcore/types.hpp"

namespace fedtrig {

struct DatasetConfig {
  std::string kind = "synth";  // "synth" or "mnist"
  std::size_t classes = 10;
  std::size_t per_class = 200;
  std::size_t test_per_class = 100;
  nn::ImageShape shape{16, 16, 1};
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  std::size_t train_limit = 2000;
  std::size_t test_limit = 1000;
};

// Everything a run depends on. The run is a pure function of this struct.
struct ExperimentConfig {
  DatasetConfig dataset;
  std::vector<std::size_t> hidden{64, 32};

  std::size_t clients = 30;
  std::size_t selected = 10;
  // When set, overrides `selected` with round(fraction * clients), at least 1.
  std::optional<double> selection_fraction;
  std::size_t rounds = 40;
  double alpha = 0.5;
  double eta = 0.3;  // share of clients that are adversarial
  nn::SgdConfig benign{0.1, 0.9, 0.001, 1, 32};

  AttackConfig attack;
  // Unset: 1 for every attack except single, which scales by the selected count.
  std::optional<double> attack_scale;
  std::size_t trigger_size = 3;
  std::size_t trigger_margin = 1;
  double trigger_value = 1.0;

  defenses::DefenseConfig defense;

  std::uint64_t seed = 1;
  std::size_t eval_stride = 1;
  std::string output_dir = "out";
  bool record_wall_time = false;
  bool dump_images = false;
  bool write_checkpoint = true;

  void validate() const {
    if (clients == 0) throw ConfigError("clients must be >= 1");
    if (selected == 0 || selected > clients) throw ConfigError("selected must be in [1, clients]");
    if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
    if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("eta must be in [0, 1]");
    if (eval_stride == 0) throw ConfigError("eval_stride must be >= 1");
    if (attack.poison.target >= dataset.classes) throw ConfigError("attack.target out of range");
    if (!(attack.poison.rate > 0.0 && attack.poison.rate <= 1.0)) throw ConfigError("attack.poison_rate must be in (0, 1]");
    if (dataset.kind != "synth" && dataset.kind != "mnist") throw ConfigError("dataset.kind must be synth or mnist");
    if (dataset.kind == "mnist") {
      for (const auto* p : {&dataset.train_images, &dataset.train_labels, &dataset.test_images, &dataset.test_labels}) {
        std::error_code ec;
        if (p->empty() || !std::filesystem::is_regular_file(*p, ec)) {
          throw ConfigError("dataset: mnist file '" + *p + "' not found");
        }
      }
    }
    try {
      benign.validate();
      attack.validate();
      if (defense.kind == defenses::DefenseKind::trigger_gen) defense.gen.validate();
    } catch (const ArgumentError& e) {
      throw ConfigError(e.what());
    }
  }

  nn::ClassifierSpec classifier_spec() const {
    return nn::ClassifierSpec{dataset.shape, hidden, dataset.classes};
  }
};

}  // namespace fedtrig
