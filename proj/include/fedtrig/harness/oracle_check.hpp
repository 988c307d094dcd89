#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "fedtrig/defenses/robust.hpp"

// Brute-force reference versions of the robust aggregators, written directly
// from their definitions on plain nested vectors. They share no code with
// fedtrig::defenses.
namespace fedtrig::oracle {

using Matrix = std::vector<std::vector<double>>;  // one row per update

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

inline std::vector<double> krum_scores(const Matrix& x, std::size_t f) {
  const std::size_t n = x.size();
  std::vector<double> scores;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) d.push_back(sq_dist(x[i], x[j]));
    }
    // repeatedly take the smallest remaining distance
    double s = 0.0;
    for (std::size_t k = 0; k + f + 2 < n; ++k) {
      auto it = std::min_element(d.begin(), d.end());
      s += *it;
      d.erase(it);
    }
    scores.push_back(s);
  }
  return scores;
}

// Position in `x` of the Krum choice; ties by smallest id.
inline std::size_t krum_pick(const Matrix& x, const std::vector<std::size_t>& ids, std::size_t f) {
  const auto scores = krum_scores(x, f);
  std::size_t best = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::make_pair(scores[i], ids[i]) < std::make_pair(scores[best], ids[best])) best = i;
  }
  return best;
}

inline std::vector<double> multi_krum(Matrix x, std::vector<std::size_t> ids, std::size_t f, std::size_t m) {
  std::vector<double> sum(x[0].size(), 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    const std::size_t k = krum_pick(x, ids, f);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += x[k][i];
    x.erase(x.begin() + static_cast<std::ptrdiff_t>(k));
    ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(k));
  }
  for (auto& v : sum) v /= static_cast<double>(m);
  return sum;
}

inline std::vector<double> column(const Matrix& x, std::size_t i) {
  std::vector<double> c;
  for (const auto& row : x) c.push_back(row[i]);
  return c;
}

inline std::vector<double> median(const Matrix& x) {
  std::vector<double> out;
  for (std::size_t i = 0; i < x[0].size(); ++i) {
    auto c = column(x, i);
    const std::size_t n = c.size();
    std::nth_element(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(n / 2), c.end());
    const double hi = c[n / 2];
    if (n % 2 == 1) {
      out.push_back(hi);
    } else {
      const double lo = *std::max_element(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(n / 2));
      out.push_back(0.5 * (lo + hi));
    }
  }
  return out;
}

inline std::vector<double> trimmed_mean(const Matrix& x, std::size_t k) {
  std::vector<double> out;
  for (std::size_t i = 0; i < x[0].size(); ++i) {
    auto c = column(x, i);
    for (std::size_t r = 0; r < k; ++r) {
      c.erase(std::max_element(c.begin(), c.end()));
      c.erase(std::min_element(c.begin(), c.end()));
    }
    std::sort(c.begin(), c.end());  // summation order: ascending
    double s = 0.0;
    for (double v : c) s += v;
    out.push_back(s / static_cast<double>(c.size()));
  }
  return out;
}

}  // namespace fedtrig::oracle

namespace fedtrig::harness {

struct OracleCheck {
  std::string name;
  std::size_t instances = 0;
  std::size_t mismatches = 0;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return mismatches == 0; }
};

struct OracleInstance {
  std::vector<ClientUpdate> updates;
  oracle::Matrix rows;
  std::vector<std::size_t> ids;
};

// n updates of dimension dim with distinct shuffled client ids. Half of the
// instances use a coarse integer grid so that ties actually occur.
inline OracleInstance random_instance(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
  OracleInstance inst;
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  for (auto& id : ids) id = id * 3 + 1;
  std::shuffle(ids.begin(), ids.end(), rng);
  const bool grid = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
  std::uniform_int_distribution<int> coarse(-2, 2);
  std::normal_distribution<double> fine(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(dim);
    for (auto& v : row) v = grid ? static_cast<double>(coarse(rng)) : fine(rng);
    inst.rows.push_back(row);
    inst.updates.push_back({ids[i], nn::ParamVector{row, {}}, 1});
  }
  inst.ids = ids;
  return inst;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Compares each aggregator with its brute-force reference on `instances`
// random problems (n <= 8, dim <= 5). Krum scores and the Multi-Krum mean
// use a 1e-12 tolerance; the Krum choice, median and trimmed mean must match
// exactly.
inline std::vector<OracleCheck> run_oracle_checks(std::size_t instances = 200, std::uint64_t seed = 20240601) {
  std::mt19937_64 rng(seed);
  OracleCheck krum{"krum_select", 0, 0, 0.0, 1e-12};
  OracleCheck mkrum{"multi_krum", 0, 0, 0.0, 1e-12};
  OracleCheck med{"coordinate_median", 0, 0, 0.0, 0.0};
  OracleCheck trim{"trimmed_mean", 0, 0, 0.0, 0.0};
  std::uniform_int_distribution<std::size_t> dim_pick(1, 5);

  for (std::size_t t = 0; t < instances; ++t) {
    {
      const std::size_t n = std::uniform_int_distribution<std::size_t>(3, 8)(rng);
      const std::size_t f = std::uniform_int_distribution<std::size_t>(0, n - 3)(rng);
      auto inst = random_instance(rng, n, dim_pick(rng));
      const auto got_scores = defenses::krum_scores(inst.updates, f);
      const auto want_scores = oracle::krum_scores(inst.rows, f);
      const double err = max_abs_diff(got_scores, want_scores);
      const bool same_pick = defenses::krum_select(inst.updates, f).values ==
                             inst.rows[oracle::krum_pick(inst.rows, inst.ids, f)];
      krum.max_error = std::max(krum.max_error, err);
      if (err > krum.tolerance || !same_pick) ++krum.mismatches;
      ++krum.instances;
    }
    {
      const std::size_t n = std::uniform_int_distribution<std::size_t>(4, 8)(rng);
      const std::size_t f = std::uniform_int_distribution<std::size_t>(0, n - 3)(rng);
      const std::size_t m = std::uniform_int_distribution<std::size_t>(1, n - 2 - f)(rng);
      auto inst = random_instance(rng, n, dim_pick(rng));
      const double err = max_abs_diff(defenses::multi_krum(inst.updates, f, m).values,
                                      oracle::multi_krum(inst.rows, inst.ids, f, m));
      mkrum.max_error = std::max(mkrum.max_error, err);
      if (err > mkrum.tolerance) ++mkrum.mismatches;
      ++mkrum.instances;
    }
    {
      const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
      auto inst = random_instance(rng, n, dim_pick(rng));
      const double err = max_abs_diff(defenses::coordinate_median(inst.updates).values, oracle::median(inst.rows));
      med.max_error = std::max(med.max_error, err);
      if (err != 0.0) ++med.mismatches;
      ++med.instances;
    }
    {
      const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
      const std::size_t k = std::uniform_int_distribution<std::size_t>(0, (n - 1) / 2)(rng);
      auto inst = random_instance(rng, n, dim_pick(rng));
      const double err = max_abs_diff(defenses::trimmed_mean(inst.updates, k).values, oracle::trimmed_mean(inst.rows, k));
      trim.max_error = std::max(trim.max_error, err);
      if (err != 0.0) ++trim.mismatches;
      ++trim.instances;
    }
  }
  return {krum, mkrum, med, trim};
}

}  // namespace fedtrig::harness
