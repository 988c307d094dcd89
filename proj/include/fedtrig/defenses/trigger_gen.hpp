#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "fedtrig/flcore/aggregate.hpp"
#include "fedtrig/nn/model.hpp"
#include "fedtrig/seed.hpp"

// Data-free backdoor filtering by trigger generation. A conditional generator
// is trained against two frozen classifiers, the previous global model (D1)
// and the plain aggregate of this round (D2):
//
//   stage 1  one image per class that D1 finds ambiguous and D2 assigns
//            confidently to that class;
//   stage 2  an additive pattern per class that, overlaid on the stage-1
//            images of the other classes, pushes D2 towards the class while
//            D1 stays ambiguous, and that lowers D2's score for the class
//            when subtracted from its own stage-1 image;
//   stage 3  every client model that puts a stage-2 pattern into its own
//            class with confidence above rho is dropped before aggregating.
namespace fedtrig::defenses {

struct GenTrainConfig {
  std::size_t epochs = 10;
  std::size_t steps_per_epoch = 20;
  // The std of a C-class probability vector is at most sqrt(C - 1) / C (0.3
  // for ten classes), so the std terms carry most of the weight.
  double gamma_extract = 0.85;  // stage 1 weight of the D1 std term
  double gamma_filter = 0.85;   // stage 2 weight of the D1 std term
  double lambda_filter = 0.1;   // stage 2 weight of the overlay term
  double lr = 0.2;
  double momentum = 0.9;
  double rho = 0.5;
  // Initial bias of the generator's output layer. Negative values start the
  // images near black so that overlays do not saturate the clamp.
  double output_bias = -2.0;
  std::size_t latent = 64;
  std::vector<std::size_t> hidden{256, 512};

  void validate() const {
    if (epochs == 0 || steps_per_epoch == 0) throw ArgumentError("GenTrainConfig: epochs and steps must be >= 1");
    if (!(gamma_extract > 0.0 && gamma_extract < 1.0)) throw ArgumentError("GenTrainConfig: stage-1 gamma must be in (0, 1)");
    if (!(gamma_filter > 0.0 && gamma_filter < 1.0)) throw ArgumentError("GenTrainConfig: stage-2 gamma must be in (0, 1)");
    if (!(lambda_filter > 0.0 && gamma_filter + lambda_filter < 1.0)) {
      throw ArgumentError("GenTrainConfig: need lambda > 0 and gamma + lambda < 1");
    }
    if (!(rho > 0.0 && rho < 1.0)) throw ArgumentError("GenTrainConfig: rho must be in (0, 1)");
    if (!(lr > 0.0)) throw ArgumentError("GenTrainConfig: lr must be > 0");
  }
};

// One generated image per category plus the noise that produced them.
struct GeneratedImageSet {
  ad::Tensor images;  // (C, H, W, Ch), values in [0, 1]
  ad::Tensor noise;   // (C, latent)
  // Loss before each epoch, then once more after the last one (E + 1 values).
  std::vector<double> loss_history;

  std::size_t categories() const { return images.extent(0); }

  ad::Tensor image(std::size_t c) const {
    const auto& s = images.shape();
    const std::size_t p = s[1] * s[2] * s[3];
    auto px = images.data().subspan(c * p, p);
    return ad::Tensor({s[1], s[2], s[3]}, std::vector<double>(px.begin(), px.end()));
  }

  // (C, pixels) view of the images.
  ad::Tensor rows() const { return images.reshaped({categories(), images.size() / categories()}); }
};

struct Verdict {
  std::size_t client_id = 0;
  bool removed = false;
  std::size_t category = 0;    // first category that fired (removed only)
  double confidence = 0.0;     // its probability (removed only)
};

struct FilterReport {
  std::vector<Verdict> verdicts;
  bool fallback = false;  // every update was removed; the old global was kept

  std::vector<std::size_t> removed_ids() const {
    std::vector<std::size_t> ids;
    for (const auto& v : verdicts) {
      if (v.removed) ids.push_back(v.client_id);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
  }
};

namespace detail {

inline ad::Tensor sample_noise(std::size_t classes, std::size_t latent, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(classes * latent);
  for (auto& v : z) v = normal(rng);
  return ad::Tensor({classes, latent}, std::move(z));
}

inline std::vector<std::size_t> all_labels(std::size_t classes) {
  std::vector<std::size_t> labels(classes);
  std::iota(labels.begin(), labels.end(), std::size_t{0});
  return labels;
}

inline nn::GeneratorSpec generator_spec(const nn::ClassifierSpec& target, const GenTrainConfig& cfg) {
  return nn::GeneratorSpec{cfg.latent, target.classes, target.input, cfg.hidden};
}

// Builds the loss on a fresh graph for the current generator weights.
using LossBuilder = std::function<ad::Var(ad::Graph&, ad::Var pixels)>;

// Trains a freshly initialized generator for epochs * steps_per_epoch full
// batch momentum-SGD steps on `build_loss`, with z fixed throughout.
inline GeneratedImageSet train_generator(const nn::ClassifierSpec& target, const GenTrainConfig& cfg,
                                         std::uint64_t seed, const LossBuilder& build_loss) {
  cfg.validate();
  const auto spec = generator_spec(target, cfg);
  nn::Generator gen = nn::init_generator(spec, derive_seed(seed, "generator-init"));
  const auto& out_bias = gen.net.layout().entries.back();
  std::fill_n(gen.net.params().begin() + static_cast<std::ptrdiff_t>(out_bias.offset), out_bias.size(),
              cfg.output_bias);
  const ad::Tensor z = sample_noise(spec.classes, spec.latent, derive_seed(seed, "generator-noise"));
  const auto labels = all_labels(spec.classes);
  const nn::SgdConfig sgd{cfg.lr, cfg.momentum, 0.0, 1, 1};
  nn::MomentumState state;
  std::vector<double> history;

  auto step = [&](bool update) {
    ad::Graph g;
    auto bound = nn::BoundStack::bind(g, gen.net, true);
    auto pixels = nn::generator_pixels(bound, spec, g.constant(z), labels);
    auto loss = build_loss(g, pixels);
    if (update) {
      auto grads = g.backward(loss);
      nn::sgd_step(gen.net.params(), bound.gather(grads, gen.net.layout()), sgd, state);
    }
    return loss.value().item();
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t s = 0; s < cfg.steps_per_epoch; ++s) {
      const double loss = step(true);
      if (s == 0) history.push_back(loss);
    }
  }
  history.push_back(step(false));
  return GeneratedImageSet{nn::generator_forward(gen, z, labels), z, std::move(history)};
}

inline ad::Tensor identity_mask(std::size_t classes) {
  std::vector<double> m(classes * classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) m[c * classes + c] = 1.0;
  return ad::Tensor({classes, classes}, std::move(m));
}

inline void require_same_spec(const nn::Classifier& a, const nn::Classifier& b) {
  if (!(a.spec == b.spec)) throw ShapeError("trigger generation: D1 and D2 specs differ");
}

}  // namespace detail

// Stage 1. Minimizes, summed over categories c,
//   gamma * std(D1(img_c)) + (1 - gamma) * (1 - D2(img_c)[c]).
inline GeneratedImageSet knowledge_extraction(const nn::Classifier& g_old, const nn::Classifier& g_agg,
                                              const GenTrainConfig& cfg, std::uint64_t seed) {
  detail::require_same_spec(g_old, g_agg);
  const std::size_t classes = g_old.spec.classes;
  const double gamma = cfg.gamma_extract;
  const ad::Tensor diag = detail::identity_mask(classes);
  return detail::train_generator(
      g_old.spec, cfg, derive_seed(seed, "knowledge-extraction"), [&](ad::Graph& g, ad::Var pixels) {
        auto d1 = nn::BoundStack::bind(g, g_old.net, false);
        auto d2 = nn::BoundStack::bind(g, g_agg.net, false);
        auto loss_std = ad::sum(ad::population_std(nn::classifier_probs(d1, pixels)));
        auto own = ad::sum(ad::mul(nn::classifier_probs(d2, pixels), g.constant(diag)));
        auto loss_max = ad::add_scalar(ad::scale(own, -1.0), static_cast<double>(classes));
        return ad::add(ad::scale(loss_std, gamma), ad::scale(loss_max, 1.0 - gamma));
      });
}

// Overlay plan shared by stage 2 and its tests: row (c * C + k) of the
// overlaid batch is I_k + img_c for k != c and I_c - img_c for k == c.
struct OverlayPlan {
  ad::Tensor repeated;   // (C*C, pixels): row (c, k) = I_k
  ad::Tensor signs;      // (C*C, C): +1 / -1 in column c
  ad::Tensor std_weight; // (C*C): 1 / C, averaging the std over k
  ad::Tensor max_mask;   // (C*C, C): 1 / (C - 1) at [(c, k), c] for k != c
  ad::Tensor min_mask;   // (C*C, C): 1 at [(c, c), c]

  static OverlayPlan build(const ad::Tensor& base_rows) {
    const std::size_t classes = base_rows.extent(0);
    const std::size_t p = base_rows.extent(1);
    const std::size_t rows = classes * classes;
    std::vector<double> rep(rows * p), signs(rows * classes, 0.0), maxm(rows * classes, 0.0),
        minm(rows * classes, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
      for (std::size_t k = 0; k < classes; ++k) {
        const std::size_t r = c * classes + k;
        std::copy_n(base_rows.data().data() + k * p, p, rep.data() + r * p);
        signs[r * classes + c] = k == c ? -1.0 : 1.0;
        if (k == c) {
          minm[r * classes + c] = 1.0;
        } else {
          maxm[r * classes + c] = 1.0 / static_cast<double>(classes - 1);
        }
      }
    }
    return OverlayPlan{ad::Tensor({rows, p}, std::move(rep)), ad::Tensor({rows, classes}, std::move(signs)),
                       ad::Tensor({rows}, std::vector<double>(rows, 1.0 / static_cast<double>(classes))),
                       ad::Tensor({rows, classes}, std::move(maxm)), ad::Tensor({rows, classes}, std::move(minm))};
  }
};

// I' = clamp(I +/- img) on a graph, shape (C*C, pixels).
inline ad::Var overlay(ad::Graph& g, const OverlayPlan& plan, ad::Var pixels) {
  return ad::clamp(ad::add(g.constant(plan.repeated), ad::matmul(g.constant(plan.signs), pixels)), 0.0, 1.0);
}

// Stage 2. For each category c, with I' built by adding img_c to the other
// categories' stage-1 images and subtracting it from I_c (clamped to [0, 1]):
//   gamma * mean_k std(D1(I'_k)) + lambda * mean_{k != c} (1 - D2(I'_k)[c])
//     + (1 - gamma - lambda) * D2(I'_c)[c]
inline GeneratedImageSet trigger_filtering(const nn::Classifier& g_old, const nn::Classifier& g_agg,
                                           const GeneratedImageSet& extracted, const GenTrainConfig& cfg,
                                           std::uint64_t seed) {
  detail::require_same_spec(g_old, g_agg);
  const std::size_t classes = g_old.spec.classes;
  if (extracted.categories() != classes) {
    throw ArgumentError("trigger_filtering: need one stage-1 image per category");
  }
  const OverlayPlan plan = OverlayPlan::build(extracted.rows());
  const double gamma = cfg.gamma_filter;
  const double lambda = cfg.lambda_filter;
  return detail::train_generator(
      g_old.spec, cfg, derive_seed(seed, "trigger-filtering"), [&](ad::Graph& g, ad::Var pixels) {
        auto d1 = nn::BoundStack::bind(g, g_old.net, false);
        auto d2 = nn::BoundStack::bind(g, g_agg.net, false);
        auto mixed = overlay(g, plan, pixels);
        auto loss_std =
            ad::sum(ad::mul(ad::population_std(nn::classifier_probs(d1, mixed)), g.constant(plan.std_weight)));
        auto p2 = nn::classifier_probs(d2, mixed);
        auto loss_max = ad::add_scalar(ad::scale(ad::sum(ad::mul(p2, g.constant(plan.max_mask))), -1.0),
                                       static_cast<double>(classes));
        auto loss_min = ad::sum(ad::mul(p2, g.constant(plan.min_mask)));
        return ad::add(ad::add(ad::scale(loss_std, gamma), ad::scale(loss_max, lambda)),
                       ad::scale(loss_min, 1.0 - gamma - lambda));
      });
}

// Stage 3. A model is removed when, for some category c, it classifies
// trigger image T_c as c with probability above rho.
struct FilterResult {
  std::vector<ClientUpdate> kept;
  FilterReport report;
};

inline FilterResult model_filtering(std::span<const ClientUpdate> updates, const GeneratedImageSet& triggers,
                                    double rho, const nn::ClassifierSpec& spec) {
  if (triggers.categories() != spec.classes) throw ArgumentError("model_filtering: need one trigger per category");
  FilterResult result;
  const ad::Tensor batch = triggers.rows();
  for (const auto& u : updates) {
    const nn::Classifier model = nn::unflatten_params(spec, u.params);
    const ad::Tensor probs = nn::classifier_forward(model, batch);
    Verdict v{u.client_id};
    for (std::size_t c = 0; c < spec.classes && !v.removed; ++c) {
      auto row = probs.data().subspan(c * spec.classes, spec.classes);
      const auto arg = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      if (arg == c && row[c] > rho) {
        v.removed = true;
        v.category = c;
        v.confidence = row[c];
      }
    }
    if (!v.removed) result.kept.push_back(u);
    result.report.verdicts.push_back(v);
  }
  result.report.fallback = result.kept.empty();
  return result;
}

struct DefenseOutcome {
  nn::ParamVector global;
  FilterReport report;
  std::optional<GeneratedImageSet> extracted;
  std::optional<GeneratedImageSet> triggers;
};

// All three stages; falls back to G_old when every update is removed.
inline DefenseOutcome defend_trigger_generation(const nn::Classifier& g_old, std::span<const ClientUpdate> updates,
                                                const GenTrainConfig& cfg, std::uint64_t seed) {
  if (updates.empty()) throw ArgumentError("defend_trigger_generation: no updates");
  const nn::Classifier g_agg = nn::unflatten_params(g_old.spec, fedavg_aggregate(updates));
  auto extracted = knowledge_extraction(g_old, g_agg, cfg, seed);
  auto triggers = trigger_filtering(g_old, g_agg, extracted, cfg, seed);
  auto filtered = model_filtering(updates, triggers, cfg.rho, g_old.spec);
  DefenseOutcome out;
  out.global = filtered.kept.empty() ? nn::flatten_params(g_old) : fedavg_aggregate(filtered.kept);
  out.report = std::move(filtered.report);
  out.extracted = std::move(extracted);
  out.triggers = std::move(triggers);
  return out;
}

}  // namespace fedtrig::defenses
