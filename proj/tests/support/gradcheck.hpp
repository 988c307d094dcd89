#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fedtrig/autodiff/ops.hpp"

namespace fedtrig::testkit {

// Builds a scalar loss from leaves that mirror `inputs` one to one.
using LossFn = std::function<ad::Var(ad::Graph&, std::span<const ad::Var>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::set<std::string> ops;  // op names recorded on the tape
};

// |analytic - numeric| / max(1, |analytic|, |numeric|)
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

inline double evaluate(const LossFn& fn, const std::vector<ad::Tensor>& inputs) {
  ad::Graph g;
  std::vector<ad::Var> leaves;
  for (const auto& t : inputs) leaves.push_back(g.parameter(t));
  return fn(g, leaves).value().item();
}

// Central differences with step h on every coordinate of every input.
inline GradCheckResult gradcheck(const LossFn& fn, std::vector<ad::Tensor> inputs, double h = 1e-5) {
  GradCheckResult result;
  ad::Graph g;
  std::vector<ad::Var> leaves;
  for (const auto& t : inputs) leaves.push_back(g.parameter(t));
  const ad::Var loss = fn(g, leaves);
  for (std::size_t id = 0; id < g.size(); ++id) {
    if (!g.node(id).is_leaf) result.ops.insert(g.node(id).op);
  }
  const auto grads = g.backward(loss);

  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const ad::Tensor& analytic = grads.of(leaves[k]);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double saved = inputs[k][i];
      inputs[k][i] = saved + h;
      const double up = evaluate(fn, inputs);
      inputs[k][i] = saved - h;
      const double down = evaluate(fn, inputs);
      inputs[k][i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[i], numeric));
      ++result.coordinates;
    }
  }
  return result;
}

// sum(out * w) for a fixed random w, turning any output into a scalar whose
// gradient exercises every element.
inline ad::Var weighted_sum(ad::Graph& g, ad::Var out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(out.value().size());
  for (auto& v : w) v = u(rng);
  return ad::sum(ad::mul(out, g.constant(ad::Tensor(out.shape(), std::move(w)))));
}

inline ad::Tensor uniform(std::mt19937_64& rng, ad::Shape shape, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(ad::element_count(shape));
  for (auto& x : v) x = u(rng);
  return ad::Tensor(std::move(shape), std::move(v));
}

// Values with |x - kink| in [0.05, 1], so finite differences never straddle
// a kink.
inline ad::Tensor away_from(std::mt19937_64& rng, ad::Shape shape, double kink) {
  std::uniform_real_distribution<double> mag(0.05, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(ad::element_count(shape));
  for (auto& x : v) x = kink + (sign(rng) ? mag(rng) : -mag(rng));
  return ad::Tensor(std::move(shape), std::move(v));
}

struct RandomGraph {
  std::string name;
  LossFn fn;
  std::vector<ad::Tensor> inputs;
};

// The index picks one of eleven graph templates; sizes and values come
// from rng. Cycling through indices 0..10 touches every primitive.
inline RandomGraph random_graph(std::size_t index, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dim(2, 4);
  const std::size_t m = dim(rng), n = dim(rng), k = dim(rng);
  const std::uint64_t wseed = rng();
  switch (index % 11) {
    case 0:
      return {"matmul",
              [=](ad::Graph& g, std::span<const ad::Var> x) { return weighted_sum(g, ad::matmul(x[0], x[1]), wseed); },
              {uniform(rng, {m, k}, -1, 1), uniform(rng, {k, n}, -1, 1)}};
    case 1:
      return {"add_sub_mul",
              [=](ad::Graph& g, std::span<const ad::Var> x) {
                return weighted_sum(g, ad::sub(ad::mul(ad::add(x[0], x[1]), x[2]), x[0]), wseed);
              },
              {uniform(rng, {m, n}, -1, 1), uniform(rng, {m, n}, -1, 1), uniform(rng, {m, n}, -1, 1)}};
    case 2:
      return {"add_rowwise_relu",
              [=](ad::Graph& g, std::span<const ad::Var> x) {
                return weighted_sum(g, ad::add_rowwise(ad::relu(x[0]), x[1]), wseed);
              },
              {away_from(rng, {m, n}, 0.0), uniform(rng, {n}, -1, 1)}};
    case 3: {
      std::uniform_real_distribution<double> s(-2.0, 2.0);
      const double a = s(rng), b = s(rng);
      return {"scale_shift_sigmoid",
              [=](ad::Graph& g, std::span<const ad::Var> x) {
                return weighted_sum(g, ad::sigmoid(ad::add_scalar(ad::scale(x[0], a), b)), wseed);
              },
              {uniform(rng, {m, n}, -2, 2)}};
    }
    case 4: {
      // Values straddle both bounds but stay clear of them.
      std::vector<double> v(m * n);
      std::uniform_real_distribution<double> pick(0.0, 1.0);
      for (auto& x : v) {
        const double r = pick(rng);
        x = r < 0.33 ? -0.5 + 0.4 * pick(rng) : r < 0.66 ? 0.1 + 0.8 * pick(rng) : 1.1 + 0.4 * pick(rng);
      }
      return {"clamp",
              [=](ad::Graph& g, std::span<const ad::Var> x) { return weighted_sum(g, ad::clamp(x[0], 0.0, 1.0), wseed); },
              {ad::Tensor({m, n}, std::move(v))}};
    }
    case 5:
      return {"softmax",
              [=](ad::Graph& g, std::span<const ad::Var> x) {
                return ad::add(weighted_sum(g, ad::softmax(x[0]), wseed), weighted_sum(g, ad::softmax(x[1]), wseed + 1));
              },
              {uniform(rng, {n}, -3, 3), uniform(rng, {m, n}, -3, 3)}};
    case 6:
      return {"sum_mean",
              [=](ad::Graph&, std::span<const ad::Var> x) {
                return ad::add(ad::scale(ad::sum(ad::mul(x[0], x[0])), 0.5), ad::mean(x[1]));
              },
              {uniform(rng, {m, n}, -1, 1), uniform(rng, {k}, -1, 1)}};
    case 7:
      return {"population_std",
              [=](ad::Graph& g, std::span<const ad::Var> x) {
                return ad::add(ad::population_std(x[0]), weighted_sum(g, ad::population_std(x[1]), wseed));
              },
              {uniform(rng, {n}, -1, 1), uniform(rng, {m, n}, -1, 1)}};
    case 8: {
      std::vector<std::size_t> labels(m);
      for (auto& l : labels) l = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      const std::size_t single = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      return {"cross_entropy",
              [=](ad::Graph&, std::span<const ad::Var> x) {
                return ad::add(ad::cross_entropy(ad::softmax(x[0]), labels), ad::cross_entropy(x[1], single));
              },
              {uniform(rng, {m, n}, -2, 2), uniform(rng, {n}, 0.2, 1.0)}};
    }
    case 9:
      return {"reshape_concat_slice",
              [=](ad::Graph& g, std::span<const ad::Var> x) {
                auto rows = ad::concat({x[0], x[1]}, 0);                      // (2m, n)
                auto cols = ad::concat({rows, ad::reshape(x[2], {2 * m, 1})}, 1);  // (2m, n+1)
                auto flat = ad::concat({ad::reshape(cols, {2 * m * (n + 1)}), x[3]}, 0);
                return ad::add(weighted_sum(g, flat, wseed), weighted_sum(g, ad::slice_rows(cols, 1, m), wseed + 1));
              },
              {uniform(rng, {m, n}, -1, 1), uniform(rng, {m, n}, -1, 1), uniform(rng, {2 * m}, -1, 1),
               uniform(rng, {k}, -1, 1)}};
    default: {
      std::vector<std::size_t> labels(m);
      for (auto& l : labels) l = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      return {"mlp",
              [=](ad::Graph&, std::span<const ad::Var> x) {
                auto h = ad::relu(ad::add_rowwise(ad::matmul(x[0], x[1]), x[2]));
                auto p = ad::softmax(ad::add_rowwise(ad::matmul(h, x[3]), x[4]));
                return ad::add(ad::cross_entropy(p, labels), ad::sum(ad::population_std(p)));
              },
              {uniform(rng, {m, k}, -1, 1), uniform(rng, {k, 5}, -1, 1), uniform(rng, {5}, 0.1, 0.5),
               uniform(rng, {5, n}, -1, 1), uniform(rng, {n}, -0.5, 0.5)}};
    }
  }
}

// Every primitive op name the tape can record.
inline const std::set<std::string>& primitive_ops() {
  static const std::set<std::string> ops{"matmul",  "add",          "sub",     "mul",     "add_rowwise", "scale",
                                         "add_scalar", "relu",      "sigmoid", "clamp",   "softmax",     "sum",
                                         "population_std", "cross_entropy", "reshape", "concat", "slice_rows"};
  return ops;
}

struct SuiteResult {
  std::size_t graphs = 0;
  double max_rel_error = 0.0;
  std::string worst;
  std::set<std::string> ops;
};

inline SuiteResult gradcheck_suite(std::size_t graphs, std::uint64_t seed, double h = 1e-5) {
  std::mt19937_64 rng(seed);
  SuiteResult suite;
  for (std::size_t i = 0; i < graphs; ++i) {
    auto rg = random_graph(i, rng);
    const auto r = gradcheck(rg.fn, rg.inputs, h);
    if (r.max_rel_error >= suite.max_rel_error) {
      suite.max_rel_error = r.max_rel_error;
      suite.worst = rg.name;
    }
    suite.ops.insert(r.ops.begin(), r.ops.end());
    ++suite.graphs;
  }
  return suite;
}

}  // namespace fedtrig::testkit
