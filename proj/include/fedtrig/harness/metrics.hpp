#pragma once

#include <cstddef>
#include <vector>

#include "fedtrig/data/poison.hpp"
#include "fedtrig/nn/train.hpp"

namespace fedtrig::harness {

// Main-task accuracy: share of clean test samples predicted correctly.
inline double eval_main_accuracy(const nn::Classifier& model, const data::Dataset& test) {
  const auto pred = nn::predict(model, test);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) hits += pred[i] == test.label(i);
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

// Attack success rate: over test samples whose true label is not the target,
// the share predicted as the target once the full trigger is stamped on.
inline double eval_attack_success_rate(const nn::Classifier& model, const data::Dataset& test,
                                       const data::TriggerSpec& trigger, std::size_t target) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test.label(i) != target) eligible.push_back(i);
  }
  if (eligible.empty()) throw ArgumentError("eval_attack_success_rate: no samples outside the target class");
  const data::Dataset stamped = data::stamp_all(test.subset(eligible), trigger);
  const auto pred = nn::predict(model, stamped);
  std::size_t hits = 0;
  for (auto p : pred) hits += p == target;
  return static_cast<double>(hits) / static_cast<double>(eligible.size());
}

}  // namespace fedtrig::harness
