// fedtrig command-line driver.
//
//   fedtrig run <config> [--set key=value]... [--out DIR] [--quiet]
//   fedtrig observe <config> [--set key=value]... [--out DIR]
//   fedtrig sweep <config> --param NAME --values V1,V2,... [--set key=value]... [--out DIR]
//   fedtrig oracle-check [--instances N] [--seed S]
//
// Exit status: 0 success, 1 usage or configuration error, 2 runtime error.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "fedtrig/harness/config_file.hpp"
#include "fedtrig/harness/observe.hpp"
#include "fedtrig/harness/oracle_check.hpp"
#include "fedtrig/harness/sweep.hpp"

namespace {

using namespace fedtrig;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

std::string describe(const RoundRecord& r) {
  std::string line = "round " + std::to_string(r.round);
  if (r.ma) line += "  ma " + harness::format_fraction(*r.ma);
  if (r.asr) line += "  asr " + harness::format_fraction(*r.asr);
  line += "  removed " + std::to_string(r.removed.size());
  return line;
}

ExperimentConfig load(const std::string& path, const std::vector<std::string>& sets, const std::string& out) {
  std::vector<std::string> overrides = sets;
  if (!out.empty()) overrides.push_back("output.dir=\"" + out + "\"");
  return harness::load_config_file(path, overrides);
}

int cmd_run(const std::string& path, const std::vector<std::string>& sets, const std::string& out, bool quiet) {
  const ExperimentConfig config = load(path, sets, out);
  auto result = run_experiment(config, [quiet](const RoundRecord& r, const RoundTrace&) {
    if (!quiet) std::cout << describe(r) << std::endl;
  });
  std::cout << "wrote " << result.csv_path.string() << "\n";
  return kExitOk;
}

int cmd_observe(const std::string& path, const std::vector<std::string>& sets, const std::string& out) {
  const ExperimentConfig config = load(path, sets, out);
  const auto report = harness::observe(config);
  const auto dir = resolve_output_dir(config.output_dir);
  harness::write_observe_outputs(report, dir, true);
  std::cout << harness::format_observe_report(report);
  std::cout << "wrote " << (dir / "report.txt").string() << "\n";
  return kExitOk;
}

int cmd_sweep(const std::string& path, const std::vector<std::string>& sets, const std::string& out,
              const std::string& param, const std::string& values, bool quiet) {
  const ExperimentConfig config = load(path, sets, out);
  const auto list = harness::split_values(values);
  auto result = harness::run_sweep(config, param, list, [quiet](const RoundRecord& r, const RoundTrace&) {
    if (!quiet) std::cout << describe(r) << std::endl;
  });
  for (const auto& p : result.points) std::cout << param << "=" << p.value << " -> " << p.dir.string() << "\n";
  std::cout << "wrote " << result.merged_csv.string() << " and " << result.summary_csv.string() << "\n";
  return kExitOk;
}

int cmd_oracle_check(std::size_t instances, std::uint64_t seed) {
  bool ok = true;
  for (const auto& c : harness::run_oracle_checks(instances, seed)) {
    std::printf("%-18s %s  instances %zu  mismatches %zu  max |diff| %.3g\n", c.name.c_str(),
                c.passed() ? "ok  " : "FAIL", c.instances, c.mismatches, c.max_error);
    ok = ok && c.passed();
  }
  return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedtrig: federated backdoor simulation with trigger-generation filtering"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::vector<std::string> sets;
  bool quiet = false;
  std::string param;
  std::string values;
  std::size_t instances = 200;
  std::uint64_t oracle_seed = 20240601;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "experiment config file")->required();
    sub->add_option("--set", sets, "override a config key, e.g. --set defense.rho=0.7");
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
  };

  auto* run = app.add_subcommand("run", "run one experiment and write rounds.csv");
  add_common(run);
  run->add_flag("-q,--quiet", quiet, "no per-round progress");

  auto* observe = app.add_subcommand("observe", "benign vs poisoned fine-tune inspection of generated images");
  add_common(observe);

  auto* sweep = app.add_subcommand("sweep", "run a grid over one parameter and merge the CSVs");
  add_common(sweep);
  sweep->add_option("--param", param, "config key or alias (rho, eta, alpha, seed, rounds)")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();
  sweep->add_flag("-q,--quiet", quiet, "no per-round progress");

  auto* oracle = app.add_subcommand("oracle-check", "compare robust aggregators with brute-force references");
  oracle->add_option("--instances", instances, "random instances per aggregator");
  oracle->add_option("--seed", oracle_seed, "instance generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << "\n" << app.help();
    return kExitConfig;
  }

  try {
    if (*run) return cmd_run(config_path, sets, out_dir, quiet);
    if (*observe) return cmd_observe(config_path, sets, out_dir);
    if (*sweep) return cmd_sweep(config_path, sets, out_dir, param, values, quiet);
    if (*oracle) return cmd_oracle_check(instances, oracle_seed);
  } catch (const fedtrig::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  std::cerr << app.help();
  return kExitConfig;
}
