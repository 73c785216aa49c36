#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "dynfire/param_set.hpp"
#include "dynfire/tape.hpp"

namespace dynfire {

/// Relative error between an analytic and a numeric derivative, with the
/// denominator floored at `floor`.
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

template <typename T>
using VarMap = std::map<std::string, Var<T>>;

// Both checkers take a generic callable so the same function can be recorded
// at the working precision T (reverse-mode side) and evaluated at 64 bits
// (central-difference side). The numeric side therefore measures the
// function, not float rounding of its output.

/// Checks d f / d x for scalar-valued `f(const Var<U>&)`. Returns the maximum
/// relative error over coordinates.
template <typename T, typename F>
double grad_check(F&& f, const Tensor<T>& x, double h = 1e-3) {
  Tape<T> tape;
  const Var<T> xv = tape.parameter(x);
  tape.backward(f(xv));
  const Tensor<T> analytic = tape.grad(xv);

  Tensor<double> probe = x.template cast<double>();
  auto eval = [&] {
    Tape<double> t;
    return f(t.constant(probe)).value().item();
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = eval();
    probe[i] = orig - h;
    const double down = eval();
    probe[i] = orig;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * h)));
  }
  return worst;
}

/// Checks every coordinate of every tensor in `params` for scalar-valued
/// `f(Tape<U>&, const VarMap<U>&)`. Raise `floor` when the loss is O(1) and
/// some derivatives sit near the differencing round-off (about 1e-16/h).
template <typename T, typename F>
GradCheckResult grad_check_params(F&& f, const BasicParamSet<T>& params, double h = 1e-3, double floor = 1e-8) {
  Tape<T> tape;
  VarMap<T> vars;
  for (const auto& e : params) vars.emplace(e.name, tape.parameter(e.tensor));
  tape.backward(f(tape, vars));

  BasicParamSet<double> probe = params.template cast<double>();
  auto eval = [&] {
    Tape<double> t;
    VarMap<double> consts;
    for (const auto& e : probe) consts.emplace(e.name, t.constant(e.tensor));
    return f(t, consts).value().item();
  };
  GradCheckResult result;
  for (const auto& e : params) {
    const Tensor<T> analytic = tape.grad(vars.at(e.name));
    Tensor<double>& slot = probe.at(e.name);
    for (std::size_t i = 0; i < slot.size(); ++i) {
      const double orig = slot[i];
      slot[i] = orig + h;
      const double up = eval();
      slot[i] = orig - h;
      const double down = eval();
      slot[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double err = relative_error(analytic[i], numeric, floor);
      if (result.worst_param.empty() || err > result.max_rel_error) {
        result = {err, e.name, i, static_cast<double>(analytic[i]), numeric};
      }
    }
  }
  return result;
}

/// Casts a tensor to the scalar type of a tape; convenient inside generic
/// callables handed to the checkers.
template <typename U, typename T>
Tensor<U> as(const Tensor<T>& t) {
  return t.template cast<U>();
}

}  // namespace dynfire
