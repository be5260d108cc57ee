#pragma once

// Adam and the L1 training loop on sampled patch pairs.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "equisr/checkpoint.hpp"
#include "equisr/config.hpp"
#include "equisr/data_io.hpp"
#include "equisr/inr.hpp"
#include "equisr/version.hpp"

namespace equisr {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::size_t step = 0;
  ParamSet<double> m, v;  // shaped like the parameters

  static AdamState zeros_like(const ParamSet<double>& params) {
    AdamState s;
    for (const auto& [name, t] : params) {
      s.m.add(name, Tensor<double>(t.shape));
      s.v.add(name, Tensor<double>(t.shape));
    }
    return s;
  }
};

// One bias-corrected Adam update in place.
inline void adam_step(ParamSet<double>& params, AdamState& state, const ParamSet<double>& grads, double lr,
                      const AdamOptions& opt = {}) {
  if (state.m.size() == 0) state = AdamState::zeros_like(params);
  ++state.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (auto& [name, w] : params) {
    const auto& g = grads.at(name);
    if (g.shape != w.shape) throw ShapeError("gradient for '" + name + "' is shaped " + ad::to_string(g.shape));
    auto& m = state.m.at(name);
    auto& v = state.v.at(name);
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt.eps);
    }
  }
}

// Halves every decay_steps; `step` counts from 0.
inline double learning_rate(const TrainConfig& cfg, std::size_t step) {
  return cfg.lr * std::pow(0.5, static_cast<double>(step / cfg.decay_steps));
}

struct TrainResult {
  ParamSet<double> params;
  std::vector<double> losses;
  std::vector<double> lrs;
};

// Trailing mean over `window` entries ending at index i.
inline double smoothed(const std::vector<double>& xs, std::size_t i, std::size_t window) {
  const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
  double s = 0.0;
  for (std::size_t k = lo; k <= i; ++k) s += xs[k];
  return s / static_cast<double>(i + 1 - lo);
}

// Mean L1 loss of one batch, with parameter gradients when `grads` is set.
inline double batch_loss(const INRModel& model, const ParamSet<double>& params, const PatchBatch& b,
                         ParamSet<double>* grads = nullptr) {
  ad::Tape<double> tape;
  BoundParams<double> P(tape, params, grads != nullptr);
  auto lat = model.latent(P, ad::constant(tape, b.lr));
  const auto& inr = model.config().inr;
  auto pred = model.global(P, lat, b.queries, inr.mode, inr.eps);
  auto loss = ad::mean_abs(pred - ad::constant(tape, b.targets));
  if (grads) *grads = P.gradients(tape.backward(loss.id()));
  return loss.value()[0];
}

// The data sample of each step is seeded by (train seed, step) alone.
inline TrainResult train(const ModelConfig& model_cfg, const DatasetSpec& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.channels != model_cfg.channels())
    throw ConfigError("data.channels (" + std::to_string(data.channels) + ") differs from model.channels (" +
                      std::to_string(model_cfg.channels()) + ")");
  const INRModel model(model_cfg);
  const auto corpus = load_corpus(data);
  const PatchSpec ps{cfg.patch, data.scale_min, data.scale_max, cfg.batch};
  TrainResult r;
  r.params = model.init(cfg.seed);
  AdamState state = AdamState::zeros_like(r.params);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(step), 0x7a11u};
    std::uint64_t sample_seed;
    seq.generate(reinterpret_cast<std::uint32_t*>(&sample_seed), reinterpret_cast<std::uint32_t*>(&sample_seed) + 2);
    const auto batch = sample_patch_pairs(corpus, ps, sample_seed);
    ParamSet<double> grads;
    const double loss = batch_loss(model, r.params, batch, &grads);
    if (!std::isfinite(loss)) throw NumericError("non-finite training loss", step);
    const double lr = learning_rate(cfg, step);
    adam_step(r.params, state, grads, lr);
    r.losses.push_back(loss);
    r.lrs.push_back(lr);
  }
  return r;
}

inline std::string loss_log_csv(const TrainResult& r) {
  std::string out = version_comment() + "step,loss,lr\n";
  char buf[96];
  for (std::size_t i = 0; i < r.losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", i, r.losses[i], r.lrs[i]);
    out += buf;
  }
  return out;
}

}  // namespace equisr
