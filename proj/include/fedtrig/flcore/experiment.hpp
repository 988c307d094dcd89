#pragma once

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fedtrig/flcore/engine.hpp"
#include "fedtrig/harness/io.hpp"
#include "fedtrig/nn/checkpoint.hpp"

namespace fedtrig {

// Environment variable that, when set, prefixes relative output directories.
inline constexpr const char* kOutputRootEnv = "FEDTRIG_OUTPUT_ROOT";

inline std::filesystem::path resolve_output_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0' && p.is_relative()) {
    return std::filesystem::path(root) / p;
  }
  return p;
}

// Train and test sets as configured.
inline std::pair<data::Dataset, data::Dataset> load_datasets(const DatasetConfig& d, std::uint64_t seed) {
  if (d.kind == "mnist") {
    return {data::load_idx(d.train_images, d.train_labels, d.classes, d.train_limit),
            data::load_idx(d.test_images, d.test_labels, d.classes, d.test_limit)};
  }
  return {data::synth_dataset(d.classes, d.per_class, d.shape, derive_seed(seed, "synth-train")),
          data::synth_dataset(d.classes, d.test_per_class, d.shape, derive_seed(seed, "synth-test"))};
}

struct ExperimentResult {
  std::vector<RoundRecord> records;
  nn::Classifier final_model;
  std::vector<std::size_t> adversaries;
  std::filesystem::path csv_path;
};

using RoundCallback = std::function<void(const RoundRecord&, const RoundTrace&)>;

inline void dump_generated(const defenses::GeneratedImageSet& set, const std::filesystem::path& dir,
                           std::size_t round, int stage) {
  for (std::size_t c = 0; c < set.categories(); ++c) {
    const ad::Tensor img = set.image(c);
    if (img.extent(2) != 1) continue;
    harness::dump_pgm(img, dir / ("round_" + std::to_string(round) + "_stage" + std::to_string(stage) + "_cat" +
                                  std::to_string(c) + ".pgm"));
  }
}

// Runs every configured round and writes <output>/rounds.csv plus, when
// enabled, <output>/final_model.ftck and generated-image PGMs.
inline ExperimentResult run_experiment(const ExperimentConfig& config, const RoundCallback& on_round = {}) {
  config.validate();
  auto [train, test] = load_datasets(config.dataset, config.seed);
  ExperimentState state = init_experiment(config, std::move(train), std::move(test));
  const auto out_dir = resolve_output_dir(config.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError(out_dir.string() + ": " + ec.message());

  for (std::size_t r = 0; r < config.rounds; ++r) {
    RoundTrace trace;
    const RoundRecord record = run_round(state, config.defense, &trace);
    if (config.dump_images && trace.outcome.extracted) {
      dump_generated(*trace.outcome.extracted, out_dir / "images", r, 1);
      dump_generated(*trace.outcome.triggers, out_dir / "images", r, 2);
    }
    if (on_round) on_round(record, trace);
  }

  ExperimentResult result{state.records, state.global, state.adversaries, out_dir / "rounds.csv"};
  harness::write_round_csv(result.records, result.csv_path);
  if (config.write_checkpoint) nn::save_checkpoint(result.final_model, out_dir / "final_model.ftck");
  return result;
}

}  // namespace fedtrig
