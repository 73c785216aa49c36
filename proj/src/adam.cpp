#include "dynfire/adam.hpp"

#include <cmath>

namespace dynfire {

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, double lr, const AdamConfig& config) {
  for (const auto& [name, tensor] : params) {
    const Tensor<float>& g = grads.at(name);
    if (g.shape() != tensor.shape() || state.m.at(name).shape() != tensor.shape() ||
        state.v.at(name).shape() != tensor.shape()) {
      throw DimensionError("adam_step: gradient or moment shape mismatch for '" + name + "': param " +
                           shape_str(tensor.shape()) + ", grad " + shape_str(g.shape()));
    }
    if (!g.all_finite()) throw TrainingError("non-finite gradient for parameter '" + name + "'");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (auto& [name, tensor] : params) {
    const auto& g = grads.at(name).vec();
    auto& m = state.m.at(name).vec();
    auto& v = state.v.at(name).vec();
    auto& p = tensor.vec();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
      const double vi = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double m_hat = mi / correction1;
      const double v_hat = vi / correction2;
      p[i] = static_cast<float>(p[i] - lr * m_hat / (std::sqrt(v_hat) + config.eps));
    }
  }
}

double global_norm(const ParamSet& grads) {
  double acc = 0.0;
  for (const auto& e : grads)
    for (float v : e.tensor.vec()) acc += static_cast<double>(v) * v;
  return std::sqrt(acc);
}

double clip_global_norm(ParamSet& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& e : grads)
      for (float& v : e.tensor.vec()) v = static_cast<float>(v * scale);
  }
  return norm;
}

}  // namespace dynfire
