#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fedtrig/flcore/experiment.hpp"

// Single-pair inspection of the trigger generator: a base model, one benign
// and one poisoned fine-tune of it, and the images each pair yields.
namespace fedtrig::harness {

struct ObserveOptions {
  std::size_t base_epochs = 3;
  std::size_t finetune_samples = 400;
  std::size_t stamp_count = 20;
  bool dump_images = true;
};

struct BranchImages {
  std::string name;  // "benign" or "poisoned"
  defenses::GeneratedImageSet extracted;
  defenses::GeneratedImageSet triggers;
};

// One cell of the cross-inference table: `model` evaluated on image c of `set`.
struct CrossCell {
  std::string set;    // e.g. "poisoned/T"
  std::string model;  // "benign" or "poisoned"
  std::size_t category = 0;
  std::size_t argmax = 0;
  double confidence = 0.0;  // probability of `category`
};

struct ObserveReport {
  std::size_t target = 0;
  double rho = 0.5;
  std::vector<BranchImages> branches;
  std::vector<CrossCell> cross;
  // Mean class probabilities over clean non-target test images overlaid with
  // the poisoned branch's T_target, per model.
  std::vector<double> stamped_poisoned;
  std::vector<double> stamped_benign;
  std::size_t stamped_images = 0;

  // Target confidence of the poisoned model on the stamped images exceeds
  // every other class.
  bool poisoned_target_dominates() const {
    for (std::size_t c = 0; c < stamped_poisoned.size(); ++c) {
      if (c != target && !(stamped_poisoned[target] > stamped_poisoned[c])) return false;
    }
    return true;
  }
};

namespace detail {

inline std::vector<double> mean_rows(const ad::Tensor& probs) {
  const std::size_t n = probs.extent(0);
  const std::size_t k = probs.extent(1);
  std::vector<double> mean(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) mean[c] += probs.at(i, c) / static_cast<double>(n);
  }
  return mean;
}

// clamp(x + pattern) for every row of `rows`.
inline ad::Tensor overlay_rows(const ad::Tensor& rows, std::span<const double> pattern) {
  std::vector<double> out(rows.data().begin(), rows.data().end());
  const std::size_t p = pattern.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i] + pattern[i % p], 0.0, 1.0);
  return ad::Tensor(rows.shape(), std::move(out));
}

inline std::string format_probs(const std::vector<double>& v) {
  std::ostringstream s;
  for (std::size_t c = 0; c < v.size(); ++c) s << (c ? " " : "") << format_fraction(v[c]);
  return s.str();
}

}  // namespace detail

inline ObserveReport observe(const ExperimentConfig& config, const ObserveOptions& opts = {}) {
  config.validate();
  const auto [train, test] = load_datasets(config.dataset, config.seed);
  const auto spec = config.classifier_spec();
  const std::uint64_t seed = config.seed;

  nn::Classifier base = nn::init_model(spec, derive_seed(seed, "observe-base-init"));
  nn::SgdConfig base_cfg = config.benign;
  base_cfg.epochs = opts.base_epochs;
  if (opts.base_epochs > 0) nn::train_classifier(base, train, base_cfg, derive_seed(seed, "observe-base"));

  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, "observe-subset"));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(idx.size(), opts.finetune_samples));
  std::sort(idx.begin(), idx.end());
  const data::Dataset clean = train.subset(idx);

  data::PoisonConfig poison = config.attack.poison;
  poison.trigger = data::TriggerSpec::corner_square(config.dataset.shape, config.trigger_size, config.trigger_margin,
                                                    config.trigger_value);
  const data::Dataset poisoned_data = data::poison_client_dataset(clean, poison, derive_seed(seed, "observe-poison"));

  // Both branches use the same schedule so that only the data differs.
  nn::Classifier benign = base;
  nn::Classifier poisoned = base;
  nn::train_classifier(benign, clean, config.attack.training, derive_seed(seed, "observe-finetune"));
  nn::train_classifier(poisoned, poisoned_data, config.attack.training, derive_seed(seed, "observe-finetune"));

  ObserveReport report;
  report.target = poison.target;
  report.rho = config.defense.gen.rho;
  const auto& gen = config.defense.gen;
  for (const auto* branch : {&benign, &poisoned}) {
    const std::string name = branch == &benign ? "benign" : "poisoned";
    const std::uint64_t s = derive_seed(seed, "observe-" + name);
    auto extracted = defenses::knowledge_extraction(base, *branch, gen, s);
    auto triggers = defenses::trigger_filtering(base, *branch, extracted, gen, s);
    report.branches.push_back({name, std::move(extracted), std::move(triggers)});
  }

  for (const auto& b : report.branches) {
    for (const auto* set : {&b.extracted, &b.triggers}) {
      const std::string set_name = b.name + (set == &b.extracted ? "/I" : "/T");
      for (const auto* model : {&benign, &poisoned}) {
        const ad::Tensor probs = nn::classifier_forward(*model, set->rows());
        for (std::size_t c = 0; c < spec.classes; ++c) {
          auto row = probs.data().subspan(c * spec.classes, spec.classes);
          const auto arg = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
          report.cross.push_back({set_name, model == &benign ? "benign" : "poisoned", c, arg, row[c]});
        }
      }
    }
  }

  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < test.size() && others.size() < opts.stamp_count; ++i) {
    if (test.label(i) != report.target) others.push_back(i);
  }
  if (others.empty()) throw ArgumentError("observe: test set has no non-target samples");
  const ad::Tensor pattern = report.branches[1].triggers.image(report.target);
  const ad::Tensor stamped = detail::overlay_rows(test.pixel_rows(others), pattern.data());
  report.stamped_images = others.size();
  report.stamped_poisoned = detail::mean_rows(nn::classifier_forward(poisoned, stamped));
  report.stamped_benign = detail::mean_rows(nn::classifier_forward(benign, stamped));
  return report;
}

inline std::string format_observe_report(const ObserveReport& r) {
  std::ostringstream out;
  out << "target " << r.target << "  rho " << format_fraction(r.rho) << "\n\n";
  out << "cross-inference (probability of the image's own category; * = argmax agrees)\n";
  std::string current;
  for (const auto& cell : r.cross) {
    const std::string key = cell.set + " on " + cell.model;
    if (key != current) {
      out << (current.empty() ? "" : "\n") << key << ":";
      current = key;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, " %.3f%s", cell.confidence, cell.argmax == cell.category ? "*" : " ");
    out << buf;
  }
  out << "\n\nT_" << r.target << " of the poisoned branch overlaid on " << r.stamped_images
      << " clean non-target test images, mean class probabilities:\n";
  out << "poisoned: " << detail::format_probs(r.stamped_poisoned) << "\n";
  out << "benign:   " << detail::format_probs(r.stamped_benign) << "\n";
  out << "target confidence poisoned " << format_fraction(r.stamped_poisoned[r.target]) << ", benign "
      << format_fraction(r.stamped_benign[r.target]) << "\n";
  return out.str();
}

// observe.csv (set,model,category,argmax,confidence), report.txt and, when
// enabled, images/<branch>_stage<1|2>_cat<c>.pgm under `dir`.
inline void write_observe_outputs(const ObserveReport& r, const std::filesystem::path& dir, bool images) {
  std::string csv = "set,model,category,argmax,confidence\n";
  for (const auto& c : r.cross) {
    csv += c.set + "," + c.model + "," + std::to_string(c.category) + "," + std::to_string(c.argmax) + "," +
           format_fraction(c.confidence) + "\n";
  }
  write_text(dir / "observe.csv", csv);
  write_text(dir / "report.txt", format_observe_report(r));
  if (!images) return;
  for (const auto& b : r.branches) {
    for (std::size_t c = 0; c < b.extracted.categories(); ++c) {
      const ad::Tensor i1 = b.extracted.image(c);
      if (i1.extent(2) != 1) return;
      dump_pgm(i1, dir / "images" / (b.name + "_stage1_cat" + std::to_string(c) + ".pgm"));
      dump_pgm(b.triggers.image(c), dir / "images" / (b.name + "_stage2_cat" + std::to_string(c) + ".pgm"));
    }
  }
}

}  // namespace fedtrig::harness
