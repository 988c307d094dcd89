#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "fedtrig/autodiff/ops.hpp"
#include "support/gradcheck.hpp"

using namespace fedtrig;
using ad::Tensor;

namespace {

Tensor softmax_of(std::vector<double> v) { return ad::softmax_value(Tensor::vector(std::move(v))); }

double std_of(std::vector<double> v) {
  ad::Graph g;
  return ad::population_std(g.constant(Tensor::vector(std::move(v)))).value().item();
}

double ce_of(std::vector<double> probs, std::size_t label) {
  ad::Graph g;
  return ad::cross_entropy(g.constant(Tensor::vector(std::move(probs))), label).value().item();
}

}  // namespace

TEST(Tensor, RejectsNonFiniteValues) {
  EXPECT_THROW(Tensor::vector({1.0, std::numeric_limits<double>::quiet_NaN()}), NumericError);
  EXPECT_THROW(Tensor::vector({std::numeric_limits<double>::infinity()}), NumericError);
}

TEST(Tensor, RejectsShapeDataMismatch) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5, 0.0)), ShapeError);
  EXPECT_THROW(Tensor::vector({1, 2, 3}).reshaped({2, 2}), ShapeError);
}

TEST(Softmax, ClosedFormExamples) {
  const auto a = softmax_of({0.0, 0.0});
  EXPECT_DOUBLE_EQ(a[0], 0.5);
  EXPECT_DOUBLE_EQ(a[1], 0.5);

  const auto b = softmax_of({1000.0, 1000.0, 1000.0});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(b[i], 1.0 / 3.0, 1e-15);

  const auto c = softmax_of({std::log(1.0), std::log(2.0), std::log(3.0)});
  EXPECT_NEAR(c[0], 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(c[1], 2.0 / 6.0, 1e-15);
  EXPECT_NEAR(c[2], 3.0 / 6.0, 1e-15);
}

TEST(Softmax, RowsSumToOne) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 200; ++t) {
    const auto logits = testkit::uniform(rng, {5, 7}, -50.0, 50.0);
    const auto p = ad::softmax_value(logits);
    for (std::size_t r = 0; r < 5; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        EXPECT_GT(p.at(r, c), 0.0 - 1e-300);
        EXPECT_LE(p.at(r, c), 1.0);
        s += p.at(r, c);
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(Softmax, RejectsSingleClass) {
  EXPECT_THROW(ad::softmax_value(Tensor::vector({1.0})), ShapeError);
}

TEST(PopulationStd, Examples) {
  EXPECT_DOUBLE_EQ(std_of({0.25, 0.25, 0.25, 0.25}), 0.0);
  EXPECT_DOUBLE_EQ(std_of({1.0, 0.0}), 0.5);
  // mean 0.25, deviations 0.45 and three times -0.15
  const double expected = std::sqrt((0.45 * 0.45 + 3.0 * 0.15 * 0.15) / 4.0);
  EXPECT_NEAR(std_of({0.7, 0.1, 0.1, 0.1}), expected, 1e-15);
}

TEST(PopulationStd, NonNegativeAndZeroOnlyForConstants) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 200; ++t) {
    const auto v = testkit::uniform(rng, {6}, -1.0, 1.0);
    EXPECT_GT(std_of(v.values()), 0.0);
  }
  EXPECT_EQ(std_of({0.3, 0.3, 0.3}), 0.0);
}

TEST(PopulationStd, RowWiseOnMatrices) {
  ad::Graph g;
  auto s = ad::population_std(g.constant(Tensor::matrix(2, 2, {1.0, 0.0, 0.5, 0.5})));
  ASSERT_EQ(s.shape(), (ad::Shape{2}));
  EXPECT_DOUBLE_EQ(s.value()[0], 0.5);
  EXPECT_DOUBLE_EQ(s.value()[1], 0.0);
}

TEST(PopulationStd, RejectsShortInput) {
  ad::Graph g;
  EXPECT_THROW(ad::population_std(g.constant(Tensor::vector({1.0}))), ArgumentError);
}

TEST(CrossEntropy, Examples) {
  EXPECT_DOUBLE_EQ(ce_of({0.0, 1.0, 0.0}, 1), 0.0);
  EXPECT_NEAR(ce_of(std::vector<double>(10, 0.1), 4), 2.302585092994046, 1e-12);
  const double clamped = ce_of({1.0, 0.0}, 1);
  EXPECT_TRUE(std::isfinite(clamped));
  EXPECT_NEAR(clamped, -std::log(1e-12), 1e-9);
}

TEST(CrossEntropy, RejectsLabelOutOfRange) {
  ad::Graph g;
  EXPECT_THROW(ad::cross_entropy(g.constant(Tensor::vector({0.5, 0.5})), 2), ArgumentError);
}

TEST(CrossEntropy, ZeroProbabilityHasZeroGradient) {
  ad::Graph g;
  auto p = g.parameter(Tensor::vector({1.0, 0.0}));
  auto grads = g.backward(ad::cross_entropy(p, 1));
  EXPECT_EQ(grads.of(p)[1], 0.0);
}

TEST(Backward, SumGivesOnes) {
  ad::Graph g;
  auto x = g.parameter(Tensor({2, 3, 2}, 0.7));
  auto grads = g.backward(ad::sum(x));
  for (double v : grads.of(x).data()) EXPECT_EQ(v, 1.0);
}

TEST(Backward, ProductOfScalars) {
  ad::Graph g;
  auto x = g.parameter(Tensor::scalar(2.0));
  auto y = g.parameter(Tensor::scalar(3.0));
  auto grads = g.backward(x * y);
  EXPECT_EQ(grads.of(x).item(), 3.0);
  EXPECT_EQ(grads.of(y).item(), 2.0);
}

TEST(Backward, UnusedLeafGetsZeros) {
  ad::Graph g;
  auto x = g.parameter(Tensor::vector({1.0, 2.0}));
  auto unused = g.parameter(Tensor::vector({5.0, 6.0, 7.0}));
  auto grads = g.backward(ad::sum(x));
  ASSERT_EQ(grads.of(unused).size(), 3u);
  for (double v : grads.of(unused).data()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, ConstantsAreNotLeavesWithGradients) {
  ad::Graph g;
  auto c = g.constant(Tensor::vector({1.0, 2.0}));
  auto x = g.parameter(Tensor::vector({1.0, 2.0}));
  auto grads = g.backward(ad::sum(ad::mul(c, x)));
  EXPECT_THROW(grads.of(c), ArgumentError);
  EXPECT_EQ(grads.of(x)[1], 2.0);
}

TEST(Backward, RejectsNonScalarRoot) {
  ad::Graph g;
  auto x = g.parameter(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(g.backward(ad::relu(x)), ShapeError);
}

TEST(Backward, ClampPassesGradientOnlyInside) {
  ad::Graph g;
  auto x = g.parameter(Tensor::vector({-0.5, 0.0, 0.5, 1.0, 1.5}));
  auto grads = g.backward(ad::sum(ad::clamp(x, 0.0, 1.0)));
  const std::vector<double> expected{0.0, 0.0, 1.0, 0.0, 0.0};
  EXPECT_EQ(grads.of(x).values(), expected);
}

TEST(Ops, ShapeErrors) {
  ad::Graph g;
  auto a = g.constant(Tensor({2, 3}, 1.0));
  auto b = g.constant(Tensor({2, 3}, 1.0));
  EXPECT_THROW(ad::matmul(a, b), ShapeError);
  EXPECT_THROW(ad::add(a, g.constant(Tensor({3, 2}, 1.0))), ShapeError);
  EXPECT_THROW(ad::add_rowwise(a, g.constant(Tensor::vector({1.0, 2.0}))), ShapeError);
  EXPECT_THROW(ad::slice_rows(a, 1, 2), ShapeError);
  EXPECT_THROW(ad::concat({a, g.constant(Tensor({2, 2}, 1.0))}, 0), ShapeError);
}

TEST(Ops, RejectsOperandsFromDifferentGraphs) {
  ad::Graph g1, g2;
  auto a = g1.constant(Tensor::vector({1.0}));
  auto b = g2.constant(Tensor::vector({1.0}));
  EXPECT_THROW(ad::add(a, b), ArgumentError);
}

TEST(Ops, ConcatColumns) {
  ad::Graph g;
  auto a = g.constant(Tensor::matrix(2, 1, {1, 2}));
  auto b = g.constant(Tensor::matrix(2, 2, {3, 4, 5, 6}));
  const std::vector<double> expected{1, 3, 4, 2, 5, 6};
  EXPECT_EQ(ad::concat({a, b}, 1).value().values(), expected);
}

TEST(GradCheck, EveryTemplateIndividually) {
  std::mt19937_64 rng(3);
  for (std::size_t i = 0; i < 11; ++i) {
    auto rg = testkit::random_graph(i, rng);
    const auto r = testkit::gradcheck(rg.fn, rg.inputs);
    EXPECT_LT(r.max_rel_error, 1e-4) << rg.name;
    EXPECT_GT(r.coordinates, 0u);
  }
}

TEST(GradCheck, RandomSuiteCoversEveryPrimitive) {
  const auto suite = testkit::gradcheck_suite(50, 20240611);
  EXPECT_LT(suite.max_rel_error, 1e-4) << suite.worst;
  for (const auto& op : testkit::primitive_ops()) EXPECT_TRUE(suite.ops.count(op)) << op;
}

TEST(GradCheck, TwoLayerPerceptron) {
  std::mt19937_64 rng(99);
  const std::vector<std::size_t> labels{0, 2, 1, 2};
  auto fn = [&](ad::Graph&, std::span<const ad::Var> x) {
    auto h = ad::sigmoid(ad::add_rowwise(ad::matmul(x[0], x[1]), x[2]));
    return ad::cross_entropy(ad::softmax(ad::add_rowwise(ad::matmul(h, x[3]), x[4])), labels);
  };
  const auto r = testkit::gradcheck(fn, {testkit::uniform(rng, {4, 6}, 0, 1), testkit::uniform(rng, {6, 5}, -1, 1),
                                         testkit::uniform(rng, {5}, -1, 1), testkit::uniform(rng, {5, 3}, -1, 1),
                                         testkit::uniform(rng, {3}, -1, 1)});
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Determinism, SameGraphSameBits) {
  std::mt19937_64 rng(5);
  auto rg = testkit::random_graph(10, rng);
  auto run = [&] {
    ad::Graph g;
    std::vector<ad::Var> leaves;
    for (const auto& t : rg.inputs) leaves.push_back(g.parameter(t));
    auto loss = rg.fn(g, leaves);
    auto grads = g.backward(loss);
    std::vector<double> out{loss.value().item()};
    for (auto v : leaves) out.insert(out.end(), grads.of(v).data().begin(), grads.of(v).data().end());
    return out;
  };
  const auto a = run();
  const auto b = run();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(std::bit_cast<std::uint64_t>(a[i]), std::bit_cast<std::uint64_t>(b[i]));
}
