#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "fedtrig/nn/checkpoint.hpp"
#include "fedtrig/nn/train.hpp"
#include "support/gradcheck.hpp"

using namespace fedtrig;

namespace {

nn::ClassifierSpec small_spec() { return nn::ClassifierSpec{{16, 16, 1}, {64, 32}, 10}; }

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "fedtrig_test_nn";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// Two Gaussian blobs in 4x4 images, separable by the mean brightness of the
// left half.
data::Dataset separable_set(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 0.3);
  std::vector<double> px;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 100; ++i) {
    const std::size_t c = i % 2;
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t q = 0; q < 4; ++q) px.push_back((q < 2) == (c == 0) ? 0.7 + u(rng) : u(rng));
    }
    labels.push_back(c);
  }
  return data::Dataset({4, 4, 1}, 2, px, labels);
}

}  // namespace

TEST(InitModel, Deterministic) {
  const auto a = nn::init_model(small_spec(), 5);
  const auto b = nn::init_model(small_spec(), 5);
  const auto c = nn::init_model(small_spec(), 6);
  EXPECT_EQ(nn::flatten_params(a), nn::flatten_params(b));
  EXPECT_NE(nn::flatten_params(a).values, nn::flatten_params(c).values);
}

TEST(InitModel, ZeroBiasesAndGlorotRange) {
  const auto m = nn::init_model(small_spec(), 1);
  for (const auto& e : m.net.layout().entries) {
    const auto begin = m.net.params().begin() + static_cast<std::ptrdiff_t>(e.offset);
    if (e.name == "bias") {
      EXPECT_TRUE(std::all_of(begin, begin + static_cast<std::ptrdiff_t>(e.size()), [](double v) { return v == 0.0; }));
    } else {
      const double a = std::sqrt(6.0 / static_cast<double>(e.shape[0] + e.shape[1]));
      EXPECT_TRUE(std::all_of(begin, begin + static_cast<std::ptrdiff_t>(e.size()),
                              [a](double v) { return v >= -a && v <= a; }));
    }
  }
}

TEST(ClassifierSpec, RejectsInvalid) {
  EXPECT_THROW(nn::init_model({{16, 16, 1}, {64}, 1}, 1), ArgumentError);
  EXPECT_THROW(nn::init_model({{16, 16, 1}, {0}, 10}, 1), ArgumentError);
  EXPECT_THROW(nn::init_model({{0, 16, 1}, {8}, 10}, 1), ArgumentError);
}

TEST(ClassifierForward, FreshModelIsNearUniform) {
  // Per seed, the batch-averaged top probability stays below 0.5; single rows
  // may exceed it only rarely.
  std::mt19937_64 rng(17);
  std::size_t rows = 0, confident = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto m = nn::init_model(small_spec(), seed);
    const auto probs = nn::classifier_forward(m, testkit::uniform(rng, {8, 16, 16, 1}, 0.0, 1.0));
    double mean_top = 0.0;
    for (std::size_t r = 0; r < 8; ++r) {
      double top = 0.0;
      for (std::size_t c = 0; c < 10; ++c) top = std::max(top, probs.at(r, c));
      mean_top += top / 8.0;
      ++rows;
      confident += top >= 0.5;
    }
    EXPECT_LT(mean_top, 0.5) << "seed " << seed;
  }
  EXPECT_LE(confident * 100, rows);
}

TEST(ClassifierForward, ShapeContract) {
  const auto m = nn::init_model(small_spec(), 2);
  std::mt19937_64 rng(2);
  auto batch = testkit::uniform(rng, {3, 16, 16, 1}, 0.0, 1.0);
  const auto probs = nn::classifier_forward(m, batch);
  ASSERT_EQ(probs.shape(), (ad::Shape{3, 10}));
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 10; ++c) s += probs.at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
  EXPECT_THROW(nn::classifier_forward(m, ad::Tensor({2, 8, 8, 1}, 0.0)), ShapeError);
}

TEST(ClassifierForward, DuplicatedRowsGiveDuplicatedOutputs) {
  const auto m = nn::init_model(small_spec(), 3);
  std::mt19937_64 rng(3);
  const auto one = testkit::uniform(rng, {1, 256}, 0.0, 1.0);
  std::vector<double> two = one.values();
  two.insert(two.end(), one.values().begin(), one.values().end());
  const auto probs = nn::classifier_forward(m, ad::Tensor({2, 256}, two));
  for (std::size_t c = 0; c < 10; ++c) EXPECT_EQ(probs.at(0, c), probs.at(1, c));
}

TEST(GeneratorForward, ShapeRangeAndDeterminism) {
  const nn::GeneratorSpec spec{64, 10, {16, 16, 1}, {256, 512}};
  const auto gen = nn::init_generator(spec, 4);
  std::mt19937_64 rng(4);
  const auto z = testkit::uniform(rng, {10, 64}, -1.0, 1.0);
  std::vector<std::size_t> labels(10);
  for (std::size_t i = 0; i < 10; ++i) labels[i] = i;
  const auto a = nn::generator_forward(gen, z, labels);
  ASSERT_EQ(a.shape(), (ad::Shape{10, 16, 16, 1}));
  for (double v : a.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(a, nn::generator_forward(gen, z, labels));
  labels.pop_back();
  EXPECT_THROW(nn::generator_forward(gen, z, labels), ArgumentError);
}

TEST(Sgd, Examples) {
  nn::SgdConfig cfg{1.0, 0.0, 0.0, 1, 1};
  nn::MomentumState state;
  std::vector<double> w{1.0};
  std::vector<double> g{0.5};
  nn::sgd_step(w, g, cfg, state);
  EXPECT_DOUBLE_EQ(w[0], 0.5);

  std::vector<double> still{0.3, -0.2};
  nn::MomentumState s2;
  nn::sgd_step(still, std::vector<double>{0.0, 0.0}, cfg, s2);
  EXPECT_EQ(still, (std::vector<double>{0.3, -0.2}));
}

TEST(Sgd, MomentumSecondStep) {
  const nn::SgdConfig cfg{0.1, 0.9, 0.0, 1, 1};
  nn::MomentumState state;
  std::vector<double> w{2.0};
  const std::vector<double> g{0.4};
  nn::sgd_step(w, g, cfg, state);
  const double after_first = w[0];
  nn::sgd_step(w, g, cfg, state);
  EXPECT_NEAR(after_first - w[0], 0.1 * 1.9 * 0.4, 1e-15);
}

TEST(Sgd, RejectsBadInput) {
  nn::MomentumState state;
  std::vector<double> w{1.0};
  EXPECT_THROW(nn::sgd_step(w, std::vector<double>{std::nan("")}, nn::SgdConfig{}, state), NumericError);
  EXPECT_THROW(nn::sgd_step(w, std::vector<double>{1.0, 2.0}, nn::SgdConfig{}, state), ShapeError);
  EXPECT_THROW((nn::SgdConfig{0.0}).validate(), ArgumentError);
  EXPECT_THROW((nn::SgdConfig{0.1, 1.0}).validate(), ArgumentError);
  EXPECT_THROW((nn::SgdConfig{0.1, 0.5, -1.0}).validate(), ArgumentError);
}

TEST(Params, RoundTripIsBitwise) {
  const auto m = nn::init_model(small_spec(), 8);
  EXPECT_EQ(nn::unflatten_params(small_spec(), nn::flatten_params(m)), m);
  EXPECT_EQ(nn::flatten_params(m).size(), nn::flatten_params(nn::init_model(small_spec(), 9)).size());
  EXPECT_EQ(nn::flatten_params(m).layout, nn::flatten_params(nn::init_model(small_spec(), 9)).layout);
}

TEST(Params, PerturbingOneCoordinateChangesOneWeight) {
  const auto m = nn::init_model(small_spec(), 8);
  auto p = nn::flatten_params(m);
  for (std::size_t k : {std::size_t{0}, p.size() / 2, p.size() - 1}) {
    auto q = p;
    q[k] += 1.0;
    const auto changed = nn::unflatten_params(small_spec(), q);
    std::size_t diffs = 0;
    for (std::size_t i = 0; i < p.size(); ++i) diffs += changed.net.params()[i] != m.net.params()[i];
    EXPECT_EQ(diffs, 1u);
  }
}

TEST(Params, LengthMismatchThrows) {
  auto p = nn::flatten_params(nn::init_model(small_spec(), 8));
  p.values.pop_back();
  EXPECT_THROW(nn::unflatten_params(small_spec(), p), ShapeError);
}

TEST(Training, SeparableTwoClassReachesNinetyNinePercent) {
  const auto ds = separable_set(1);
  auto m = nn::init_model({{4, 4, 1}, {8}, 2}, 1);
  // 100 samples, batch 10: 200 steps over 20 epochs
  nn::train_classifier(m, ds, nn::SgdConfig{0.1, 0.9, 0.0, 20, 10}, 1);
  const auto pred = nn::predict(m, ds);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) hits += pred[i] == ds.label(i);
  EXPECT_GE(static_cast<double>(hits) / static_cast<double>(ds.size()), 0.99);
}

TEST(Training, EpochLossNonIncreasingMedianOverSeeds) {
  const auto ds = data::synth_dataset(10, 200, {16, 16, 1}, 3);
  std::vector<int> monotone;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto m = nn::init_model(small_spec(), seed);
    const auto losses = nn::train_classifier(m, ds, nn::SgdConfig{0.1, 0.9, 0.001, 3, 32}, seed);
    // The clean synthetic task is solved within one epoch; after that weight
    // decay moves the cross-entropy by ~1e-4, below the allowed slack.
    monotone.push_back(losses[1] <= losses[0] + 1e-3 && losses[2] <= losses[1] + 1e-3);
  }
  std::sort(monotone.begin(), monotone.end());
  EXPECT_EQ(monotone[2], 1);
}

TEST(Checkpoint, RoundTrip) {
  const auto m = nn::init_model(small_spec(), 12);
  const auto path = temp_file("roundtrip.ftck");
  nn::save_checkpoint(m, path);
  EXPECT_EQ(nn::load_checkpoint(path), m);
}

TEST(Checkpoint, Errors) {
  EXPECT_THROW(nn::load_checkpoint(temp_file("missing.ftck")), IoError);

  const auto bad = temp_file("bad.ftck");
  std::ofstream(bad, std::ios::binary) << "NOPE....";
  EXPECT_THROW(nn::load_checkpoint(bad), BadMagicError);

  const auto good = temp_file("truncate.ftck");
  nn::save_checkpoint(nn::init_model(small_spec(), 1), good);
  std::filesystem::resize_file(good, std::filesystem::file_size(good) - 8);
  EXPECT_THROW(nn::load_checkpoint(good), FormatError);
}
