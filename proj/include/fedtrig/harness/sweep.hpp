#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fedtrig/flcore/experiment.hpp"
#include "fedtrig/harness/config_file.hpp"

namespace fedtrig::harness {

// Mean of the last `window` evaluated values of MA or ASR; nullopt when no
// round was evaluated.
inline std::optional<double> tail_mean(const std::vector<RoundRecord>& records, bool asr, std::size_t window = 5) {
  double sum = 0.0;
  std::size_t n = 0;
  for (auto it = records.rbegin(); it != records.rend() && n < window; ++it) {
    const auto& v = asr ? it->asr : it->ma;
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

struct SweepPoint {
  std::string value;
  std::filesystem::path dir;
  std::vector<RoundRecord> records;
};

struct SweepResult {
  std::string param;
  std::vector<SweepPoint> points;
  std::filesystem::path merged_csv;
  std::filesystem::path summary_csv;
};

// Splits "0.3,0.5,0.7" into trimmed non-empty items.
inline std::vector<std::string> split_values(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto t = detail::trim(item);
    if (!t.empty()) out.emplace_back(t);
  }
  if (out.empty()) throw ConfigError("sweep: no values given");
  return out;
}

inline std::string directory_token(const std::string& s) {
  std::string out;
  for (char ch : s) out.push_back(std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '-' ? ch : '_');
  return out;
}

// One run per value of `param`, each in <output>/<param>_<value>/, then
// <output>/sweep.csv (every round of every run, prefixed by the value) and
// <output>/sweep_summary.csv (final-5-round means and total removals).
inline SweepResult run_sweep(const ExperimentConfig& base, const std::string& param,
                             const std::vector<std::string>& values, const RoundCallback& on_round = {}) {
  const std::string key = canonical_key(param);
  const std::filesystem::path root = resolve_output_dir(base.output_dir);
  std::vector<ExperimentConfig> configs;
  for (const auto& v : values) {
    ExperimentConfig c = base;
    apply_override(c, key + "=" + v);
    c.output_dir = (root / (directory_token(param) + "_" + directory_token(v))).string();
    finalize_config(c);
    configs.push_back(std::move(c));
  }

  SweepResult result{param, {}, root / "sweep.csv", root / "sweep_summary.csv"};
  std::string merged = param + "," + kRoundCsvHeader + "\n";
  std::string summary = param + ",final_ma,final_asr,total_removed\n";
  for (std::size_t i = 0; i < configs.size(); ++i) {
    auto run = run_experiment(configs[i], on_round);
    std::size_t removed = 0;
    for (const auto& r : run.records) {
      merged += values[i] + "," + format_round_row(r) + "\n";
      removed += r.removed.size();
    }
    const auto ma = tail_mean(run.records, false);
    const auto asr = tail_mean(run.records, true);
    summary += values[i] + "," + (ma ? format_fraction(*ma) : "") + "," + (asr ? format_fraction(*asr) : "") + "," +
               std::to_string(removed) + "\n";
    result.points.push_back({values[i], run.csv_path.parent_path(), std::move(run.records)});
  }
  write_text(result.merged_csv, merged);
  write_text(result.summary_csv, summary);
  return result;
}

}  // namespace fedtrig::harness
