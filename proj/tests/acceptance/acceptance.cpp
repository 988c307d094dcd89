// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
// Desk scale throughout: synthetic 16x16 digits (200 per class), MLP
// classifier, 30 clients with 10 per round, alpha 0.5, 40 rounds.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fedtrig/harness/observe.hpp"
#include "fedtrig/harness/oracle_check.hpp"
#include "fedtrig/harness/sweep.hpp"
#include "support/desk.hpp"
#include "support/gradcheck.hpp"

using namespace fedtrig;
namespace fs = std::filesystem;
using defenses::DefenseKind;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

const fs::path& out_root() {
  static const fs::path root = fs::temp_directory_path() / "fedtrig_acceptance";
  return root;
}

struct Tally {
  int failed = 0;
  void report(int id, bool ok, const std::string& detail) {
    std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
    std::fflush(stdout);
    failed += ok ? 0 : 1;
  }
};

// Runs once per name; later lookups reuse the result.
class Runs {
 public:
  const ExperimentResult& get(const std::string& name, const std::function<ExperimentConfig(const std::string&)>& make) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    const auto t0 = Clock::now();
    const ExperimentConfig cfg = make((out_root() / name).string());
    auto result = run_experiment(cfg);
    std::fprintf(stderr, "  [run %s: %.0f s]\n", name.c_str(), seconds_since(t0));
    return cache_.emplace(name, std::move(result)).first->second;
  }

 private:
  std::map<std::string, ExperimentResult> cache_;
};

ExperimentConfig desk(std::uint64_t seed, DefenseKind kind, double eta, const std::string& out) {
  auto c = fedtrig::testkit::desk_config(seed, kind, out);
  c.eta = eta;
  return c;
}

const ExperimentResult& no_attack(Runs& runs, std::uint64_t seed) {
  return runs.get("noattack_s" + std::to_string(seed),
                  [&](const std::string& out) { return desk(seed, DefenseKind::none, 0.0, out); });
}

const ExperimentResult& defended(Runs& runs, std::uint64_t seed, double eta = 0.3, double rho = 0.5) {
  const std::string name = "trigger_gen_s" + std::to_string(seed) + "_eta" + fmt("%.1f", eta) + "_rho" + fmt("%.1f", rho);
  return runs.get(name, [&](const std::string& out) {
    auto c = desk(seed, DefenseKind::trigger_gen, eta, out);
    c.defense.gen.rho = rho;
    return c;
  });
}

double final_ma(const ExperimentResult& r) { return harness::tail_mean(r.records, false).value(); }
double final_asr(const ExperimentResult& r) { return harness::tail_mean(r.records, true).value(); }

void criterion_1(Tally& t) {
  const auto t0 = Clock::now();
  const auto suite = fedtrig::testkit::gradcheck_suite(50, 20240611, 1e-5);
  const double secs = seconds_since(t0);
  std::size_t covered = 0;
  for (const auto& op : fedtrig::testkit::primitive_ops()) covered += suite.ops.count(op);
  const bool ok = suite.graphs == 50 && suite.max_rel_error < 1e-4 &&
                  covered == fedtrig::testkit::primitive_ops().size() && secs < 60.0;
  t.report(1, ok,
           "50 graphs, max rel err " + fmt("%.2e", suite.max_rel_error) + " (" + suite.worst + "), ops " +
               std::to_string(covered) + "/" + std::to_string(fedtrig::testkit::primitive_ops().size()) + ", " +
               fmt("%.1f", secs) + " s");
}

void criterion_2(Tally& t) {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string detail;
  for (const auto& c : harness::run_oracle_checks(200)) {
    ok = ok && c.passed() && c.instances == 200;
    detail += c.name + " " + std::to_string(c.mismatches) + "/" + std::to_string(c.instances) + " mismatches, ";
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 60.0;
  t.report(2, ok, detail + fmt("%.1f", secs) + " s");
}

void criterion_3(Tally& t) {
  // Per coordinate: 7 positive / 3 negative deltas, then 6 / 4, with theta 4.
  const nn::ParamVector g{{0.5, -1.0, 0.25, 2.0}, {}};
  std::vector<ClientUpdate> u;
  for (std::size_t i = 0; i < 10; ++i) {
    const double s = 0.01 * static_cast<double>(i + 1);
    const std::vector<double> d{i < 7 ? s : -s, i < 7 ? -s : s, i < 6 ? s : -2 * s, i < 6 ? -s : 3 * s};
    nn::ParamVector p = g;
    for (std::size_t c = 0; c < 4; ++c) p[c] += d[c];
    u.push_back({i, p, 1});
  }
  const double eta = 0.8;
  const auto out = defenses::rlr_aggregate(g, u, 4.0, eta);
  const std::vector<double> expect_sign{+1, +1, -1, -1};
  double worst = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = 0.0;
    for (const auto& x : u) mean += (x.params[c] - g[c]) / 10.0;
    worst = std::max(worst, std::abs(out[c] - (g[c] + expect_sign[c] * eta * mean)));
  }
  t.report(3, worst <= 1e-15, "7/3 -> +eta, 6/4 -> -eta (theta 4), max |diff| " + fmt("%.1e", worst));
}

void criterion_4(Tally& t) {
  const auto ds = data::synth_dataset(10, 100, {8, 8, 1}, 1);
  bool ok = true;
  std::size_t pairs = 0;
  for (double alpha : {0.05, 0.3, 1.0, 10.0, 1e6}) {
    for (std::uint64_t seed : {11u, 12u, 13u, 14u}) {
      ++pairs;
      const auto shards = data::dirichlet_partition(ds, 30, alpha, seed);
      const auto again = data::dirichlet_partition(ds, 30, alpha, seed);
      std::vector<int> seen(ds.size(), 0);
      for (std::size_t k = 0; k < shards.size(); ++k) {
        for (auto i : shards[k].indices) ++seen[i];
        ok = ok && shards[k].indices == again[k].indices;
      }
      ok = ok && std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; });
    }
  }
  const auto big = data::synth_dataset(10, 500, {4, 4, 1}, 2);
  double worst = 0.0;
  for (const auto& s : data::dirichlet_partition(big, 10, 1e6, 7)) {
    std::vector<double> h(10, 0.0);
    for (auto i : s.indices) h[big.label(i)] += 1.0;
    const double expected = static_cast<double>(s.indices.size()) / 10.0;
    for (double v : h) worst = std::max(worst, std::abs(v - expected) / expected);
  }
  ok = ok && worst <= 0.2;
  t.report(4, ok,
           std::to_string(pairs) + " (alpha, seed) pairs disjoint/covering/deterministic; alpha=1e6 worst class deviation " +
               fmt("%.1f%%", 100.0 * worst));
}

void criterion_5(Tally& t, Runs& runs) {
  const auto& clean = no_attack(runs, 1);
  const auto& attacked = runs.get("none_s1", [](const std::string& out) { return desk(1, DefenseKind::none, 0.3, out); });
  const double asr = final_asr(attacked);
  const double gap = std::abs(final_ma(attacked) - final_ma(clean));
  t.report(5, asr >= 0.7 && gap <= 0.05,
           "defense=none ASR " + fmt("%.3f", asr) + " (>= 0.70), MA " + fmt("%.3f", final_ma(attacked)) +
               " vs no-attack " + fmt("%.3f", final_ma(clean)));
}

void criterion_6(Tally& t, Runs& runs) {
  std::vector<double> asr, gap;
  std::string per_seed;
  for (std::uint64_t s = 1; s <= 3; ++s) {
    const auto& r = defended(runs, s);
    asr.push_back(final_asr(r));
    gap.push_back(std::abs(final_ma(r) - final_ma(no_attack(runs, s))));
    per_seed += " s" + std::to_string(s) + ":" + fmt("%.3f", asr.back()) + "/" + fmt("%.3f", final_ma(r));
  }
  t.report(6, median(asr) <= 0.15 && median(gap) <= 0.05,
           "median ASR " + fmt("%.3f", median(asr)) + " (<= 0.15), median MA gap " + fmt("%.3f", median(gap)) +
               " (<= 0.05); ASR/MA" + per_seed);
}

void criterion_7(Tally& t, Runs& runs) {
  const auto snap = fedtrig::testkit::attacked_snapshot(1);
  const auto g_agg = nn::unflatten_params(snap.g_old.spec, fedavg_aggregate(snap.updates));
  const auto& gen = snap.config.defense.gen;
  const auto i1 = defenses::knowledge_extraction(snap.g_old, g_agg, gen, 1);
  const auto tr = defenses::trigger_filtering(snap.g_old, g_agg, i1, gen, 1);
  bool monotone = true;
  std::size_t prev = snap.updates.size() + 1;
  std::string sizes;
  for (int step = 1; step <= 19; ++step) {
    const double rho = 0.05 * step;
    const auto n = defenses::model_filtering(snap.updates, tr, rho, snap.g_old.spec).report.removed_ids().size();
    monotone = monotone && n <= prev;
    prev = n;
    if (step % 2 == 1) sizes += std::to_string(n) + " ";
  }
  std::vector<double> sweep;
  for (double rho : {0.3, 0.5, 0.7}) sweep.push_back(final_asr(defended(runs, 1, 0.3, rho)));
  t.report(7, monotone && sweep[2] >= sweep[1],
           std::string("removed sizes over rho 0.05..0.95 ") + (monotone ? "non-increasing" : "NOT monotone") + " [" +
               sizes + "]; sweep ASR rho 0.3/0.5/0.7 = " + fmt("%.3f", sweep[0]) + "/" + fmt("%.3f", sweep[1]) +
               "/" + fmt("%.3f", sweep[2]));
}

void criterion_8(Tally& t, Runs& runs) {
  std::vector<double> adv_rate, benign_rate;
  for (std::uint64_t s = 1; s <= 3; ++s) {
    const auto& r = defended(runs, s);
    std::size_t adv = 0, adv_removed = 0, ben = 0, ben_removed = 0;
    for (std::size_t i = r.records.size() - 10; i < r.records.size(); ++i) {
      const auto& rec = r.records[i];
      for (auto id : rec.selected) {
        const bool is_adv = std::find(r.adversaries.begin(), r.adversaries.end(), id) != r.adversaries.end();
        const bool removed = std::find(rec.removed.begin(), rec.removed.end(), id) != rec.removed.end();
        (is_adv ? adv : ben) += 1;
        (is_adv ? adv_removed : ben_removed) += removed;
      }
    }
    adv_rate.push_back(adv == 0 ? 1.0 : static_cast<double>(adv_removed) / static_cast<double>(adv));
    benign_rate.push_back(ben == 0 ? 0.0 : static_cast<double>(ben_removed) / static_cast<double>(ben));
  }
  t.report(8, median(adv_rate) >= 0.8 && median(benign_rate) <= 0.2,
           "last 10 rounds, median adversarial removed " + fmt("%.1f%%", 100 * median(adv_rate)) +
               " (>= 80%), benign removed " + fmt("%.1f%%", 100 * median(benign_rate)) + " (<= 20%)");
}

void criterion_9(Tally& t) {
  const auto t0 = Clock::now();
  std::vector<double> poisoned, benign;
  double rho = 0.5;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    auto c = fedtrig::testkit::desk_config(s, DefenseKind::trigger_gen, (out_root() / "observe").string());
    const auto r = harness::observe(c);
    rho = r.rho;
    poisoned.push_back(r.stamped_poisoned[r.target]);
    benign.push_back(r.stamped_benign[r.target]);
  }
  const double secs = seconds_since(t0);
  t.report(9, median(poisoned) > rho && median(benign) < rho && secs < 300.0,
           "median target confidence poisoned " + fmt("%.3f", median(poisoned)) + " / benign " +
               fmt("%.3f", median(benign)) + " vs rho " + fmt("%.2f", rho) + ", " + fmt("%.0f", secs) + " s");
}

void criterion_10(Tally& t, Runs& runs) {
  const auto& ours = defended(runs, 1, 0.8);
  const auto& mkrum = runs.get("mkrum_s1_eta0.8", [](const std::string& out) { return desk(1, DefenseKind::mkrum, 0.8, out); });
  const double a = final_asr(ours);
  const double b = final_asr(mkrum);
  t.report(10, a <= 0.2 && b >= 0.6,
           "eta=0.8 trigger_gen ASR " + fmt("%.3f", a) + " (<= 0.20), mkrum ASR " + fmt("%.3f", b) + " (>= 0.60)");
}

void criterion_11(Tally& t, Runs& runs) {
  const auto& first = defended(runs, 1);
  const auto& again = runs.get("trigger_gen_s1_rerun", [](const std::string& out) {
    return desk(1, DefenseKind::trigger_gen, 0.3, out);
  });
  const auto a = slurp(first.csv_path);
  const auto b = slurp(again.csv_path);
  t.report(11, !a.empty() && a == b,
           std::string("seed-1 trigger_gen CSV rerun ") + (a == b ? "byte-identical" : "differs") + " (" +
               std::to_string(a.size()) + " bytes)");
}

}  // namespace

int main() {
  Tally tally;
  Runs runs;
  const auto t0 = Clock::now();
  try {
    criterion_1(tally);
    criterion_2(tally);
    criterion_3(tally);
    criterion_4(tally);
    criterion_5(tally, runs);
    criterion_6(tally, runs);
    criterion_7(tally, runs);
    criterion_8(tally, runs);
    criterion_9(tally);
    criterion_10(tally, runs);
    criterion_11(tally, runs);
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d of 11 criteria failed, %.0f s total\n", tally.failed, seconds_since(t0));
  return tally.failed == 0 ? 0 : 1;
}
