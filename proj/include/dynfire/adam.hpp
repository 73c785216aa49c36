#pragma once

#include <cstdint>

#include "dynfire/param_set.hpp"

namespace dynfire {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers for one parameter group.
struct AdamState {
  ParamSet m;
  ParamSet v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const ParamSet& params) { return {params.zeros_like(), params.zeros_like(), 0}; }
};

/// One bias-corrected Adam update of every tensor in `params`. `grads` must
/// carry the same names and shapes. A non-finite gradient raises
/// TrainingError naming the parameter; nothing is modified in that case.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, double lr, const AdamConfig& config = {});

/// Global L2 norm over every tensor of the set.
double global_norm(const ParamSet& grads);

/// Rescales `grads` in place so its global norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(ParamSet& grads, double max_norm);

}  // namespace dynfire
