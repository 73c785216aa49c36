#include "dynfire/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <optional>
#include <string>

namespace dynfire {
namespace {

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) throw DimensionError(std::string(op) + ": shape " + shape_str(a) + " vs " + shape_str(b));
}

template <typename T>
void accumulate(std::vector<T>& dst, const std::vector<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

struct Spatial {
  std::size_t n, c, h, w;
  bool batched;
};

Spatial spatial_dims(const char* op, const Shape& s) {
  if (s.size() == 4) return {s[0], s[1], s[2], s[3], true};
  if (s.size() == 3) return {1, s[0], s[1], s[2], false};
  throw DimensionError(std::string(op) + ": expected [N,C,H,W] or [C,H,W], got " + shape_str(s));
}

Shape spatial_shape(const Spatial& d, std::size_t c, std::size_t h, std::size_t w) {
  return d.batched ? Shape{d.n, c, h, w} : Shape{c, h, w};
}

template <typename T>
void axpy(T a, const T* __restrict x, T* __restrict y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// Eight fixed lanes so the reduction order does not depend on the compiler.
template <typename T>
T dot(const T* __restrict a, const T* __restrict b, std::size_t n) {
  T lane[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t j = 0; j < 8; ++j) lane[j] += a[i + j] * b[i + j];
  for (std::size_t j = 0; i < n; ++i, ++j) lane[j] += a[i] * b[i];
  return ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
}

template <typename T>
using Vec [[gnu::vector_size(16)]] = T;

template <typename T>
Vec<T> load(const T* p) {
  Vec<T> v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <typename T, typename V>
void store(T* p, const V& v) {
  std::memcpy(p, &v, sizeof v);
}

// c[m,n] += a[m,k] * b[k,n], row-major. A 4-row by 2-vector tile of c stays in
// registers; each element still sums over k in order.
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  constexpr std::size_t L = sizeof(Vec<T>) / sizeof(T), MR = 4, NR = 2 * L;
  const std::size_t n_main = n - n % NR;
  std::size_t i = 0;
  for (; i + MR <= m; i += MR) {
    for (std::size_t j = 0; j < n_main; j += NR) {
      Vec<T> acc[MR][2];
      for (std::size_t r = 0; r < MR; ++r) {
        acc[r][0] = load(c + (i + r) * n + j);
        acc[r][1] = load(c + (i + r) * n + j + L);
      }
      for (std::size_t p = 0; p < k; ++p) {
        const Vec<T> b0 = load(b + p * n + j), b1 = load(b + p * n + j + L);
        for (std::size_t r = 0; r < MR; ++r) {
          const Vec<T> av = Vec<T>{} + a[(i + r) * k + p];
          acc[r][0] += av * b0;
          acc[r][1] += av * b1;
        }
      }
      for (std::size_t r = 0; r < MR; ++r) {
        store(c + (i + r) * n + j, acc[r][0]);
        store(c + (i + r) * n + j + L, acc[r][1]);
      }
    }
    for (std::size_t r = i; r < i + MR; ++r)
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t q = n_main; q < n; ++q) c[r * n + q] += a[r * k + p] * b[p * n + q];
  }
  for (; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) axpy(a[i * k + p], b + p * n, c + i * n, n);
}

// c[m,n] += a[m,k] * b[n,k]^T: row dot products with vector lanes reduced in
// a fixed order.
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  constexpr std::size_t L = sizeof(Vec<T>) / sizeof(T);
  const std::size_t k_main = k - k % L;
  auto hsum = [](const Vec<T>& v) {
    T s = 0;
    for (std::size_t l = 0; l < L; ++l) s += v[l];
    return s;
  };
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    for (std::size_t j = 0; j < n; ++j) {
      const T* bj = b + j * k;
      Vec<T> acc[4] = {};
      for (std::size_t p = 0; p < k_main; p += L) {
        const Vec<T> bv = load(bj + p);
        for (std::size_t r = 0; r < 4; ++r) acc[r] += load(a + (i + r) * k + p) * bv;
      }
      for (std::size_t r = 0; r < 4; ++r) {
        T s = hsum(acc[r]);
        for (std::size_t p = k_main; p < k; ++p) s += a[(i + r) * k + p] * bj[p];
        c[(i + r) * n + j] += s;
      }
    }
  }
  for (; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const T* bj = b + j * k;
      Vec<T> acc = {};
      for (std::size_t p = 0; p < k_main; p += L) acc += load(a + i * k + p) * load(bj + p);
      T s = hsum(acc);
      for (std::size_t p = k_main; p < k; ++p) s += a[i * k + p] * bj[p];
      c[i * n + j] += s;
    }
}

// Valid output columns for kernel offset k: ix = ox*stride - pad + k in [0, extent).
std::pair<std::size_t, std::size_t> valid_range(std::size_t out_extent, std::size_t in_extent, int stride, int pad,
                                                int k) {
  long lo = pad - k;
  lo = lo > 0 ? (lo + stride - 1) / stride : 0;
  long hi = static_cast<long>(in_extent) - 1 + pad - k;
  hi = hi >= 0 ? hi / stride + 1 : 0;
  hi = std::min<long>(hi, static_cast<long>(out_extent));
  if (hi < lo) hi = lo;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

template <typename T>
void im2col(const T* x, std::vector<T>& col, std::size_t nb, std::size_t ci_n, std::size_t h, std::size_t w,
            std::size_t kh, std::size_t kw, std::size_t oh, std::size_t ow, int stride, int pad) {
  const std::size_t pix = oh * ow, cols = nb * pix;
  for (std::size_t ci = 0; ci < ci_n; ++ci)
    for (std::size_t ky = 0; ky < kh; ++ky) {
      const auto [oy_lo, oy_hi] = valid_range(oh, h, stride, pad, static_cast<int>(ky));
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const auto [ox_lo, ox_hi] = valid_range(ow, w, stride, pad, static_cast<int>(kx));
        T* row = col.data() + ((ci * kh + ky) * kw + kx) * cols;
        for (std::size_t n = 0; n < nb; ++n) {
          const T* in = x + (n * ci_n + ci) * h * w;
          for (std::size_t oy = oy_lo; oy < oy_hi; ++oy) {
            const T* in_row = in + (oy * stride + ky - pad) * w + kx - pad;
            T* dst = row + n * pix + oy * ow;
            for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) dst[ox] = in_row[ox * stride];
          }
        }
      }
    }
}

template <typename T>
void col2im(const std::vector<T>& col, T* dx, std::size_t nb, std::size_t ci_n, std::size_t h, std::size_t w,
            std::size_t kh, std::size_t kw, std::size_t oh, std::size_t ow, int stride, int pad) {
  const std::size_t pix = oh * ow, cols = nb * pix;
  for (std::size_t ci = 0; ci < ci_n; ++ci)
    for (std::size_t ky = 0; ky < kh; ++ky) {
      const auto [oy_lo, oy_hi] = valid_range(oh, h, stride, pad, static_cast<int>(ky));
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const auto [ox_lo, ox_hi] = valid_range(ow, w, stride, pad, static_cast<int>(kx));
        const T* row = col.data() + ((ci * kh + ky) * kw + kx) * cols;
        for (std::size_t n = 0; n < nb; ++n) {
          T* out = dx + (n * ci_n + ci) * h * w;
          for (std::size_t oy = oy_lo; oy < oy_hi; ++oy) {
            T* out_row = out + (oy * stride + ky - pad) * w + kx - pad;
            const T* src = row + n * pix + oy * ow;
            for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) out_row[ox * stride] += src[ox];
          }
        }
      }
    }
}

}  // namespace

template <typename T>
Var<T> matmul(const Var<T>& x, const Var<T>& w) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[0]) {
    throw DimensionError("matmul: x " + shape_str(xs) + " does not conform with W " + shape_str(ws));
  }
  const std::size_t n = xs[0], in = xs[1], out = ws[1];
  Tensor<T> y({n, out});
  const auto& xv = x.value().vec();
  const auto& wv = w.value().vec();
  auto& yv = y.vec();
  for (std::size_t r = 0; r < n; ++r) {
    T* yr = &yv[r * out];
    for (std::size_t i = 0; i < in; ++i) {
      const T xi = xv[r * in + i];
      const T* wr = &wv[i * out];
      for (std::size_t o = 0; o < out; ++o) yr[o] += xi * wr[o];
    }
  }
  const std::size_t xid = x.id(), wid = w.id();
  return x.tape().record("matmul", std::move(y), {x, w}, [=](Tape<T>& t, std::size_t self) {
    const std::vector<T> g = t.grad(self).vec();
    const auto& xv = t.value(xid).vec();
    const auto& wv = t.value(wid).vec();
    if (t.requires_grad(xid)) {
      auto& dx = t.grad_buffer(xid);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < in; ++i) {
          dx[r * in + i] += dot(&g[r * out], &wv[i * out], out);
        }
    }
    if (t.requires_grad(wid)) {
      auto& dw = t.grad_buffer(wid);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < in; ++i) {
          const T xi = xv[r * in + i];
          for (std::size_t o = 0; o < out; ++o) dw[i * out + o] += xi * g[r * out + o];
        }
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  const Shape& bs = b.shape();
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[0]) {
    throw DimensionError("linear: x " + shape_str(xs) + " does not conform with W " + shape_str(ws));
  }
  if (bs.size() != 1 || bs[0] != ws[1]) {
    throw DimensionError("linear: bias " + shape_str(bs) + " does not conform with W " + shape_str(ws));
  }
  const std::size_t n = xs[0], in = xs[1], out = ws[1];
  Tensor<T> y({n, out});
  const auto& xv = x.value().vec();
  const auto& wv = w.value().vec();
  const auto& bv = b.value().vec();
  auto& yv = y.vec();
  for (std::size_t r = 0; r < n; ++r) {
    T* yr = &yv[r * out];
    for (std::size_t i = 0; i < in; ++i) {
      const T xi = xv[r * in + i];
      const T* wr = &wv[i * out];
      for (std::size_t o = 0; o < out; ++o) yr[o] += xi * wr[o];
    }
    for (std::size_t o = 0; o < out; ++o) yr[o] += bv[o];
  }
  const std::size_t xid = x.id(), wid = w.id(), bid = b.id();
  return x.tape().record("linear", std::move(y), {x, w, b}, [=](Tape<T>& t, std::size_t self) {
    const std::vector<T> g = t.grad(self).vec();
    const auto& xv = t.value(xid).vec();
    const auto& wv = t.value(wid).vec();
    if (t.requires_grad(xid)) {
      auto& dx = t.grad_buffer(xid);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < in; ++i) {
          dx[r * in + i] += dot(&g[r * out], &wv[i * out], out);
        }
    }
    if (t.requires_grad(wid)) {
      auto& dw = t.grad_buffer(wid);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < in; ++i) {
          const T xi = xv[r * in + i];
          for (std::size_t o = 0; o < out; ++o) dw[i * out + o] += xi * g[r * out + o];
        }
    }
    if (t.requires_grad(bid)) {
      auto& db = t.grad_buffer(bid);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < out; ++o) db[o] += g[r * out + o];
    }
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape("add", a.shape(), b.shape());
  Tensor<T> y = a.value();
  const auto& bv = b.value().vec();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  const std::size_t aid = a.id(), bid = b.id();
  return a.tape().record("add", std::move(y), {a, b}, [=](Tape<T>& t, std::size_t self) {
    const std::vector<T> g = t.grad(self).vec();
    if (t.requires_grad(aid)) accumulate(t.grad_buffer(aid), g);
    if (t.requires_grad(bid)) accumulate(t.grad_buffer(bid), g);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape("sub", a.shape(), b.shape());
  Tensor<T> y = a.value();
  const auto& bv = b.value().vec();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  const std::size_t aid = a.id(), bid = b.id();
  return a.tape().record("sub", std::move(y), {a, b}, [=](Tape<T>& t, std::size_t self) {
    const std::vector<T> g = t.grad(self).vec();
    if (t.requires_grad(aid)) accumulate(t.grad_buffer(aid), g);
    if (t.requires_grad(bid)) {
      auto& db = t.grad_buffer(bid);
      for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape("mul", a.shape(), b.shape());
  Tensor<T> y = a.value();
  const auto& bv = b.value().vec();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  const std::size_t aid = a.id(), bid = b.id();
  return a.tape().record("mul", std::move(y), {a, b}, [=](Tape<T>& t, std::size_t self) {
    const std::vector<T> g = t.grad(self).vec();
    const auto& av = t.value(aid).vec();
    const auto& bv = t.value(bid).vec();
    if (t.requires_grad(aid)) {
      auto& da = t.grad_buffer(aid);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
    }
    if (t.requires_grad(bid)) {
      auto& db = t.grad_buffer(bid);
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> affine(const Var<T>& x, T scale, T shift) {
  Tensor<T> y = x.value();
  for (auto& v : y.vec()) v = scale * v + shift;
  const std::size_t xid = x.id();
  return x.tape().record("affine", std::move(y), {x}, [=](Tape<T>& t, std::size_t self) {
    const std::vector<T> g = t.grad(self).vec();
    auto& dx = t.grad_buffer(xid);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += scale * g[i];
  });
}

template <typename T>
Var<T> pointwise(const Var<T>& x, Activation fn) {
  Tensor<T> y = x.value();
  switch (fn) {
    case Activation::sigmoid:
      for (auto& v : y.vec()) v = T{1} / (T{1} + std::exp(-v));
      break;
    case Activation::tanh:
      for (auto& v : y.vec()) v = std::tanh(v);
      break;
    case Activation::relu:
      for (auto& v : y.vec()) v = v > T{0} ? v : T{0};
      break;
  }
  const std::size_t xid = x.id();
  const char* name = fn == Activation::sigmoid ? "sigmoid" : fn == Activation::tanh ? "tanh" : "relu";
  return x.tape().record(name, std::move(y), {x}, [=](Tape<T>& t, std::size_t self) {
    const std::vector<T> g = t.grad(self).vec();
    const auto& yv = t.value(self).vec();
    auto& dx = t.grad_buffer(xid);
    switch (fn) {
      case Activation::sigmoid:
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * yv[i] * (T{1} - yv[i]);
        break;
      case Activation::tanh:
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (T{1} - yv[i] * yv[i]);
        break;
      case Activation::relu:
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += yv[i] > T{0} ? g[i] : T{0};
        break;
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> y = x.value();
  y.reshape(std::move(shape));
  const std::size_t xid = x.id();
  return x.tape().record("reshape", std::move(y), {x}, [=](Tape<T>& t, std::size_t self) {
    accumulate(t.grad_buffer(xid), t.grad(self).vec());
  });
}

template <typename T>
Var<T> stop_gradient(const Var<T>& x) {
  return x.tape().constant(x.value());
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  double acc = 0.0;
  for (T v : x.value().vec()) acc += v;
  const std::size_t xid = x.id();
  return x.tape().record("sum", Tensor<T>::scalar(static_cast<T>(acc)), {x}, [=](Tape<T>& t, std::size_t self) {
    const T g = t.grad(self).item();
    for (auto& d : t.grad_buffer(xid)) d += g;
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  double acc = 0.0;
  for (T v : x.value().vec()) acc += v;
  const std::size_t count = x.value().size();
  const std::size_t xid = x.id();
  return x.tape().record("mean", Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(count))), {x},
                         [=](Tape<T>& t, std::size_t self) {
                           const T g = t.grad(self).item() / static_cast<T>(count);
                           for (auto& d : t.grad_buffer(xid)) d += g;
                         });
}

template <typename T>
Var<T> conv2d_impl(const Var<T>& x, const Var<T>& kernel, const std::optional<Var<T>>& bias, int stride, int pad) {
  const Spatial d = spatial_dims("conv2d", x.shape());
  const Shape& ks = kernel.shape();
  if (ks.size() != 4 || ks[1] != d.c) {
    throw DimensionError("conv2d: input " + shape_str(x.shape()) + " does not conform with kernel " + shape_str(ks));
  }
  if (stride < 1 || pad < 0) throw ConfigError("conv2d: stride must be >= 1 and pad >= 0");
  const std::size_t co_n = ks[0], kh = ks[2], kw = ks[3];
  if (kh % 2 == 0 || kw % 2 == 0) throw ConfigError("conv2d: kernel sides must be odd, got " + shape_str(ks));
  const long span_h = static_cast<long>(d.h) + 2 * pad - static_cast<long>(kh);
  const long span_w = static_cast<long>(d.w) + 2 * pad - static_cast<long>(kw);
  if (span_h < 0 || span_w < 0 || span_h % stride != 0 || span_w % stride != 0) {
    throw ConfigError("conv2d: output extent is not integral for input " + shape_str(x.shape()) + ", kernel " +
                      shape_str(ks) + ", stride " + std::to_string(stride) + ", pad " + std::to_string(pad));
  }
  if (bias && (bias->shape().size() != 1 || bias->shape()[0] != co_n)) {
    throw DimensionError("conv2d: bias " + shape_str(bias->shape()) + " does not conform with kernel " +
                         shape_str(ks));
  }
  const std::size_t oh = static_cast<std::size_t>(span_h / stride + 1);
  const std::size_t ow = static_cast<std::size_t>(span_w / stride + 1);
  const std::size_t ci_n = d.c, h = d.h, w = d.w;

  // Lowered to matrix products over a column buffer [ci*kh*kw, n*oh*ow].
  const std::size_t rows = ci_n * kh * kw, pix = oh * ow, cols = d.n * pix;
  auto col = std::make_shared<std::vector<T>>(rows * cols, T{0});
  im2col(x.value().vec().data(), *col, d.n, ci_n, h, w, kh, kw, oh, ow, stride, pad);
  const auto& kv = kernel.value().vec();
  std::vector<T> ymat(co_n * cols, T{0});
  for (std::size_t co = 0; co < co_n; ++co) {
    T* out = ymat.data() + co * cols;
    if (bias) std::fill(out, out + cols, bias->value()[co]);
  }
  gemm_nn(kv.data(), col->data(), ymat.data(), co_n, rows, cols);
  Tensor<T> y(spatial_shape(d, co_n, oh, ow));
  auto& yv = y.vec();
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t co = 0; co < co_n; ++co)
      std::copy_n(ymat.data() + co * cols + n * pix, pix, yv.data() + (n * co_n + co) * pix);

  const std::size_t xid = x.id(), kid = kernel.id();
  const std::optional<std::size_t> bid = bias ? std::optional<std::size_t>(bias->id()) : std::nullopt;
  auto backward = [=](Tape<T>& t, std::size_t self) {
    const Tensor<T> gt = t.grad(self);
    const auto& g = gt.vec();
    std::vector<T> gmat(co_n * cols);
    for (std::size_t n = 0; n < d.n; ++n)
      for (std::size_t co = 0; co < co_n; ++co)
        std::copy_n(g.data() + (n * co_n + co) * pix, pix, gmat.data() + co * cols + n * pix);
    if (bid && t.requires_grad(*bid)) {
      auto& db = t.grad_buffer(*bid);
      for (std::size_t co = 0; co < co_n; ++co) {
        const T* go = gmat.data() + co * cols;
        for (std::size_t n = 0; n < d.n; ++n) {
          T acc = 0;
          for (std::size_t i = 0; i < pix; ++i) acc += go[n * pix + i];
          db[co] += acc;
        }
      }
    }
    if (t.requires_grad(kid)) {
      auto& dk = t.grad_buffer(kid);
      gemm_nt(gmat.data(), col->data(), dk.data(), co_n, cols, rows);
    }
    if (t.requires_grad(xid)) {
      const auto& kv = t.value(kid).vec();
      std::vector<T> kt(rows * co_n), dcol(rows * cols, T{0});
      for (std::size_t co = 0; co < co_n; ++co)
        for (std::size_t r = 0; r < rows; ++r) kt[r * co_n + co] = kv[co * rows + r];
      gemm_nn(kt.data(), gmat.data(), dcol.data(), rows, co_n, cols);
      col2im(dcol, t.grad_buffer(xid).data(), d.n, ci_n, h, w, kh, kw, oh, ow, stride, pad);
    }
  };
  if (bias) return x.tape().record("conv2d", std::move(y), {x, kernel, *bias}, std::move(backward));
  return x.tape().record("conv2d", std::move(y), {x, kernel}, std::move(backward));
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, int stride, int pad) {
  return conv2d_impl<T>(x, kernel, std::nullopt, stride, pad);
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, int stride, int pad) {
  return conv2d_impl<T>(x, kernel, bias, stride, pad);
}

template <typename T>
Var<T> avg_pool2(const Var<T>& x) {
  const Spatial d = spatial_dims("avg_pool2", x.shape());
  const std::size_t oh = (d.h + 1) / 2, ow = (d.w + 1) / 2;
  const std::size_t planes = d.n * d.c, h = d.h, w = d.w;
  Tensor<T> y(spatial_shape(d, d.c, oh, ow));
  const auto& xv = x.value().vec();
  auto& yv = y.vec();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* in = &xv[p * h * w];
    T* out = &yv[p * oh * ow];
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T acc = 0;
        std::size_t count = 0;
        for (std::size_t iy = 2 * oy; iy < std::min(2 * oy + 2, h); ++iy)
          for (std::size_t ix = 2 * ox; ix < std::min(2 * ox + 2, w); ++ix) {
            acc += in[iy * w + ix];
            ++count;
          }
        out[oy * ow + ox] = acc / static_cast<T>(count);
      }
  }
  const std::size_t xid = x.id();
  return x.tape().record("avg_pool2", std::move(y), {x}, [=](Tape<T>& t, std::size_t self) {
    const std::vector<T> g = t.grad(self).vec();
    auto& dx = t.grad_buffer(xid);
    for (std::size_t p = 0; p < planes; ++p) {
      T* din = &dx[p * h * w];
      const T* go = &g[p * oh * ow];
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const std::size_t y_end = std::min(2 * oy + 2, h), x_end = std::min(2 * ox + 2, w);
          const T share = go[oy * ow + ox] / static_cast<T>((y_end - 2 * oy) * (x_end - 2 * ox));
          for (std::size_t iy = 2 * oy; iy < y_end; ++iy)
            for (std::size_t ix = 2 * ox; ix < x_end; ++ix) din[iy * w + ix] += share;
        }
    }
  });
}

template <typename T>
Var<T> upsample2x(const Var<T>& x, std::size_t out_h, std::size_t out_w) {
  const Spatial d = spatial_dims("upsample2x", x.shape());
  if (out_h == 0 || out_w == 0 || out_h > 2 * d.h || out_w > 2 * d.w) {
    throw DimensionError("upsample2x: cannot produce " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                         " from input " + shape_str(x.shape()));
  }
  const std::size_t planes = d.n * d.c, h = d.h, w = d.w;
  Tensor<T> y(spatial_shape(d, d.c, out_h, out_w));
  const auto& xv = x.value().vec();
  auto& yv = y.vec();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t oy = 0; oy < out_h; ++oy)
      for (std::size_t ox = 0; ox < out_w; ++ox)
        yv[(p * out_h + oy) * out_w + ox] = xv[(p * h + oy / 2) * w + ox / 2];
  const std::size_t xid = x.id();
  return x.tape().record("upsample2x", std::move(y), {x}, [=](Tape<T>& t, std::size_t self) {
    const std::vector<T> g = t.grad(self).vec();
    auto& dx = t.grad_buffer(xid);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t oy = 0; oy < out_h; ++oy)
        for (std::size_t ox = 0; ox < out_w; ++ox)
          dx[(p * h + oy / 2) * w + ox / 2] += g[(p * out_h + oy) * out_w + ox];
  });
}

template <typename T>
Var<T> bce(const Var<T>& pred, const Tensor<T>& target) {
  require_same_shape("bce", pred.shape(), target.shape());
  for (std::size_t i = 0; i < target.size(); ++i) {
    const T v = target[i];
    if (!(v >= T{0} && v <= T{1})) {
      throw DomainError("bce: target element " + std::to_string(i) + " = " + std::to_string(v) +
                        " lies outside [0,1]");
    }
  }
  const T lo = static_cast<T>(kBceClamp);
  const T hi = T{1} - lo;
  const auto& pv = pred.value().vec();
  const std::size_t count = pv.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double p = std::clamp(pv[i], lo, hi);
    const double t = target[i];
    acc -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  const std::size_t pid = pred.id();
  auto tgt = target.vec();
  return pred.tape().record("bce", Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(count))), {pred},
                            [=, tgt = std::move(tgt)](Tape<T>& t, std::size_t self) {
                              const T g = t.grad(self).item() / static_cast<T>(count);
                              const auto& pv = t.value(pid).vec();
                              auto& dp = t.grad_buffer(pid);
                              // Derivative taken at the clamped point.
                              for (std::size_t i = 0; i < count; ++i) {
                                const T p = std::clamp(pv[i], lo, hi);
                                dp[i] += g * (p - tgt[i]) / (p * (T{1} - p));
                              }
                            });
}

template <typename T>
Var<T> gru_cell(const Var<T>& x, const Var<T>& h, const GruWeights<T>& p) {
  const Shape& xs = x.shape();
  const Shape& hs = h.shape();
  if (xs.size() != 2 || hs.size() != 2 || xs[0] != hs[0]) {
    throw DimensionError("gru_cell: input " + shape_str(xs) + " does not conform with state " + shape_str(hs));
  }
  if (p.u_z.shape() != Shape{hs[1], hs[1]}) {
    throw DimensionError("gru_cell: state " + shape_str(hs) + " does not conform with U_z " +
                         shape_str(p.u_z.shape()));
  }
  const Var<T> z = sigmoid(add(linear(x, p.w_z, p.b_z), matmul(h, p.u_z)));
  const Var<T> r = sigmoid(add(linear(x, p.w_r, p.b_r), matmul(h, p.u_r)));
  const Var<T> cand = tanh(add(linear(x, p.w_h, p.b_h), matmul(mul(r, h), p.u_h)));
  return add(mul(affine(z, T{-1}, T{1}), h), mul(z, cand));
}

#define DYNFIRE_INSTANTIATE_OPS(T)                                                                          \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                                     \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                                      \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                        \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                        \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                        \
  template Var<T> affine(const Var<T>&, T, T);                                                              \
  template Var<T> pointwise(const Var<T>&, Activation);                                                     \
  template Var<T> reshape(const Var<T>&, Shape);                                                            \
  template Var<T> stop_gradient(const Var<T>&);                                                             \
  template Var<T> sum(const Var<T>&);                                                                       \
  template Var<T> mean(const Var<T>&);                                                                      \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, int, int);                                          \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                            \
  template Var<T> avg_pool2(const Var<T>&);                                                                 \
  template Var<T> upsample2x(const Var<T>&, std::size_t, std::size_t);                                      \
  template Var<T> bce(const Var<T>&, const Tensor<T>&);                                                     \
  template Var<T> gru_cell(const Var<T>&, const Var<T>&, const GruWeights<T>&);

DYNFIRE_INSTANTIATE_OPS(float)
DYNFIRE_INSTANTIATE_OPS(double)

}  // namespace dynfire
