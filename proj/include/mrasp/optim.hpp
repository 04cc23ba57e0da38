#pragma once

// Learning-rate schedule (linear warm-up, linear decay) and Adam.

#include <cmath>
#include <cstdint>
#include <optional>

#include "mrasp/common.hpp"
#include "mrasp/model.hpp"
#include "mrasp/ras.hpp"

namespace mrasp {

struct TrainConfig {
  double peak_lr = 3e-3;
  size_t warmup_steps = 200;   // full-scale runs use 4000
  size_t total_steps = 2000;   // full-scale runs use 150000
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-8;
  size_t batch_tokens = 1024;
  double dropout = 0.1;
  uint64_t seed = 0;
  std::optional<RasConfig> ras;
  size_t checkpoint_every = 0;  // 0 = final only
  size_t log_every = 50;

  void validate() const {
    if (warmup_steps > total_steps)
      throw UsageError("InvalidTrainConfig: warmup_steps > total_steps");
    if (!(peak_lr > 0)) throw UsageError("InvalidTrainConfig: peak_lr must be positive");
    if (batch_tokens == 0) throw UsageError("InvalidTrainConfig: batch_tokens must be > 0");
  }
};

// Piecewise-linear: 0 -> peak over warmup_steps, then peak -> 0 at total_steps.
inline double lr_schedule(size_t step, const TrainConfig& cfg) {
  if (step > cfg.total_steps) throw UsageError("InvalidStep: step > total_steps");
  if (step <= cfg.warmup_steps)
    return cfg.warmup_steps == 0 ? cfg.peak_lr
                                 : cfg.peak_lr * double(step) / double(cfg.warmup_steps);
  const size_t decay = cfg.total_steps - cfg.warmup_steps;
  if (decay == 0) return cfg.peak_lr;
  return cfg.peak_lr * double(cfg.total_steps - step) / double(decay);
}

struct AdamState {
  ModelParameters m, v;
  uint64_t step = 0;  // completed updates

  static AdamState fresh(const ModelParameters& params) {
    return {zeros_like(params), zeros_like(params), 0};
  }
};

// Standard Adam with bias correction. Throws NaNUpdate without touching the
// parameters if any update would be non-finite.
inline void adam_step(ModelParameters& params, const ModelParameters& grads,
                      AdamState& state, double lr, const TrainConfig& cfg) {
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const uint64_t t = state.step + 1;
  const double bc1 = 1.0 - std::pow(b1, double(t));
  const double bc2 = 1.0 - std::pow(b2, double(t));

  auto pl = tensor_list(params);
  auto gl = tensor_list(grads);  // const view
  auto ml = tensor_list(state.m);
  auto vl = tensor_list(state.v);

  // Validate first so a failure leaves parameters and state untouched.
  for (size_t i = 0; i < pl.size(); ++i)
    if (!gl[i].mat->finite())
      throw NumericError("NaNUpdate: non-finite gradient in " + gl[i].name);

  for (size_t i = 0; i < pl.size(); ++i) {
    auto& pm = pl[i].mat->a;
    const auto& gm = gl[i].mat->a;
    auto& mm = ml[i].mat->a;
    auto& vm = vl[i].mat->a;
    for (size_t j = 0; j < pm.size(); ++j) {
      mm[j] = b1 * mm[j] + (1.0 - b1) * gm[j];
      vm[j] = b2 * vm[j] + (1.0 - b2) * gm[j] * gm[j];
      const double mhat = mm[j] / bc1;
      const double vhat = vm[j] / bc2;
      const double update = lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
      if (!std::isfinite(update)) throw NumericError("NaNUpdate: " + pl[i].name);
      pm[j] -= update;
    }
  }
  state.step = t;
}

}  // namespace mrasp
