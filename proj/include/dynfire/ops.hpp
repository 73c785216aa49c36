#pragma once

#include "dynfire/tape.hpp"
#include "dynfire/tensor.hpp"

namespace dynfire {

enum class Activation { sigmoid, tanh, relu };

/// Lower bound applied to BCE predictions (and 1 - bound as upper bound).
inline constexpr double kBceClamp = 1e-7;

// Dense algebra. Shapes are checked eagerly; mismatches raise DimensionError
// naming both shapes.

/// x[N,I] * W[I,O].
template <typename T>
Var<T> matmul(const Var<T>& x, const Var<T>& w);

/// out[n,o] = sum_i x[n,i] W[i,o] + b[o].
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

/// scale * x + shift, elementwise.
template <typename T>
Var<T> affine(const Var<T>& x, T scale, T shift);

template <typename T>
Var<T> pointwise(const Var<T>& x, Activation fn);

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return pointwise(x, Activation::sigmoid);
}
template <typename T>
Var<T> tanh(const Var<T>& x) {
  return pointwise(x, Activation::tanh);
}
template <typename T>
Var<T> relu(const Var<T>& x) {
  return pointwise(x, Activation::relu);
}

/// Same data, new shape.
template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

/// Copies the value and cuts the gradient path.
template <typename T>
Var<T> stop_gradient(const Var<T>& x);

template <typename T>
Var<T> sum(const Var<T>& x);
template <typename T>
Var<T> mean(const Var<T>& x);

// Spatial ops on [N,C,H,W] (or unbatched [C,H,W]) tensors.

/// Direct cross-correlation with kernel [C_out,C_in,Kh,Kw] and optional
/// per-output-channel bias. Kernel sides must be odd and the output extent
/// (H + 2*pad - Kh) / stride + 1 integral; otherwise ConfigError.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, int stride, int pad);
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, int stride, int pad);

/// 2x2 average pooling. Odd extents round up; edge windows average the
/// cells they actually cover.
template <typename T>
Var<T> avg_pool2(const Var<T>& x);

/// Nearest-neighbour 2x upsampling cropped to (out_h, out_w), which must not
/// exceed twice the input extent.
template <typename T>
Var<T> upsample2x(const Var<T>& x, std::size_t out_h, std::size_t out_w);

/// Mean binary cross-entropy. Predictions are clamped to
/// [kBceClamp, 1 - kBceClamp]; targets outside [0,1] raise DomainError.
template <typename T>
Var<T> bce(const Var<T>& pred, const Tensor<T>& target);

/// Gate parameters of a gated recurrent unit. W_* map the input [I,S],
/// U_* map the state [S,S], b_* are [S].
template <typename T>
struct GruWeights {
  Var<T> w_z, u_z, b_z;
  Var<T> w_r, u_r, b_r;
  Var<T> w_h, u_h, b_h;
};

/// z = sig(xW_z + hU_z + b_z), r = sig(xW_r + hU_r + b_r),
/// c = tanh(xW_h + (r*h)U_h + b_h), h' = (1-z)*h + z*c.
template <typename T>
Var<T> gru_cell(const Var<T>& x, const Var<T>& h, const GruWeights<T>& p);

}  // namespace dynfire
