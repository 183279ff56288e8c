#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "astn/tape.hpp"
#include "astn/tensor.hpp"

// Differentiable primitives. Forward computes out.value from input values;
// when the tape is recording and any input needs a gradient, a closure is
// recorded that accumulates d(loss)/d(input) += f'(out.grad). Inputs whose
// needs_grad flag is off (constants, frozen parameters) are never written to.
// No op mutates its inputs' value buffers.

namespace astn::ag {

namespace detail {

template <typename T>
inline bool track(const Tape<T>& tp, std::initializer_list<const Tensor<T>*> ins) {
  if (!tp.recording()) return false;
  for (const Tensor<T>* p : ins)
    if (p->needs_grad()) return true;
  return false;
}

template <typename T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary_elementwise(Tape<T>& tp, const Tensor<T>& a, Fwd f, Bwd dfdx) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const auto& av = a.value();
  auto& ov = out.value();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = f(av[i]);
  if (detail::track(tp, {&a})) {
    out.mark_needs_grad();
    tp.record(out, [a = a, out, dfdx]() mutable {
      auto& ga = a.grad();
      const auto& go = out.grad();
      const auto& av = a.value();
      for (std::size_t i = 0; i < av.size(); ++i) ga[i] += go[i] * dfdx(av[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(Tape<T>& tp, const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.value()[i] = a.value()[i] + b.value()[i];
  if (detail::track(tp, {&a, &b})) {
    out.mark_needs_grad();
    tp.record(out, [a = a, b = b, out]() mutable {
      const auto& go = out.grad();
      if (a.needs_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (b.needs_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(Tape<T>& tp, const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.value()[i] = a.value()[i] - b.value()[i];
  if (detail::track(tp, {&a, &b})) {
    out.mark_needs_grad();
    tp.record(out, [a = a, b = b, out]() mutable {
      const auto& go = out.grad();
      if (a.needs_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (b.needs_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>& tp, const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.value()[i] = a.value()[i] * b.value()[i];
  if (detail::track(tp, {&a, &b})) {
    out.mark_needs_grad();
    tp.record(out, [a = a, b = b, out]() mutable {
      const auto& go = out.grad();
      if (a.needs_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * b.value()[i];
      }
      if (b.needs_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * a.value()[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> square(Tape<T>& tp, const Tensor<T>& a) {
  return unary_elementwise(
      tp, a, [](T x) { return x * x; }, [](T x) { return T(2) * x; });
}

template <typename T>
Tensor<T> abs_op(Tape<T>& tp, const Tensor<T>& a) {
  return unary_elementwise(
      tp, a, [](T x) { return std::abs(x); },
      [](T x) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

// alpha * a + beta, elementwise
template <typename T>
Tensor<T> affine(Tape<T>& tp, const Tensor<T>& a, T alpha, T beta) {
  return unary_elementwise(
      tp, a, [alpha, beta](T x) { return alpha * x + beta; }, [alpha](T) { return alpha; });
}

template <typename T>
Tensor<T> scale(Tape<T>& tp, const Tensor<T>& a, T c) {
  return affine(tp, a, c, T(0));
}

template <typename T>
Tensor<T> sigmoid(Tape<T>& tp, const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i)
    out.value()[i] = T(1) / (T(1) + std::exp(-a.value()[i]));
  if (detail::track(tp, {&a})) {
    out.mark_needs_grad();
    tp.record(out, [a = a, out]() mutable {
      auto& ga = a.grad();
      const auto& go = out.grad();
      const auto& ov = out.value();
      for (std::size_t i = 0; i < ov.size(); ++i) ga[i] += go[i] * ov[i] * (T(1) - ov[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> tanh_op(Tape<T>& tp, const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.value()[i] = std::tanh(a.value()[i]);
  if (detail::track(tp, {&a})) {
    out.mark_needs_grad();
    tp.record(out, [a = a, out]() mutable {
      auto& ga = a.grad();
      const auto& go = out.grad();
      const auto& ov = out.value();
      for (std::size_t i = 0; i < ov.size(); ++i) ga[i] += go[i] * (T(1) - ov[i] * ov[i]);
    });
  }
  return out;
}

// out = x for x >= 0, slope*x otherwise; gradient 1 at exactly 0.
template <typename T>
Tensor<T> leaky_relu(Tape<T>& tp, const Tensor<T>& a, T slope) {
  if (!(slope > T(0) && slope < T(1)))
    throw std::invalid_argument("leaky_relu: slope must be in (0,1)");
  return unary_elementwise(
      tp, a, [slope](T x) { return x >= T(0) ? x : slope * x; },
      [slope](T x) { return x >= T(0) ? T(1) : slope; });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(Tape<T>& tp, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " * " +
                                shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out = Tensor<T>::zeros({m, n});
  const auto& av = a.value();
  const auto& bv = b.value();
  auto& ov = out.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) ov[i * n + j] += aip * bv[p * n + j];
    }
  if (detail::track(tp, {&a, &b})) {
    out.mark_needs_grad();
    tp.record(out, [a = a, b = b, out, m, k, n]() mutable {
      const auto& go = out.grad();
      if (a.needs_grad()) {
        auto& ga = a.grad();
        const auto& bv = b.value();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            T acc = 0;
            for (std::size_t j = 0; j < n; ++j) acc += go[i * n + j] * bv[p * n + j];
            ga[i * k + p] += acc;
          }
      }
      if (b.needs_grad()) {
        auto& gb = b.grad();
        const auto& av = a.value();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const T aip = av[i * k + p];
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * go[i * n + j];
          }
      }
    });
  }
  return out;
}

// y[n] = x[k] . W[k,n]
template <typename T>
Tensor<T> vecmat(Tape<T>& tp, const Tensor<T>& x, const Tensor<T>& w) {
  if (x.rank() != 1 || w.rank() != 2 || x.dim(0) != w.dim(0))
    throw std::invalid_argument("vecmat: incompatible shapes " + shape_str(x.shape()) + " . " +
                                shape_str(w.shape()));
  const std::size_t k = w.dim(0), n = w.dim(1);
  Tensor<T> out = Tensor<T>::zeros({n});
  const auto& xv = x.value();
  const auto& wv = w.value();
  auto& ov = out.value();
  for (std::size_t p = 0; p < k; ++p) {
    const T xp = xv[p];
    for (std::size_t j = 0; j < n; ++j) ov[j] += xp * wv[p * n + j];
  }
  if (detail::track(tp, {&x, &w})) {
    out.mark_needs_grad();
    tp.record(out, [x = x, w = w, out, k, n]() mutable {
      const auto& go = out.grad();
      if (x.needs_grad()) {
        auto& gx = x.grad();
        const auto& wv = w.value();
        for (std::size_t p = 0; p < k; ++p) {
          T acc = 0;
          for (std::size_t j = 0; j < n; ++j) acc += go[j] * wv[p * n + j];
          gx[p] += acc;
        }
      }
      if (w.needs_grad()) {
        auto& gw = w.grad();
        const auto& xv = x.value();
        for (std::size_t p = 0; p < k; ++p) {
          const T xp = xv[p];
          for (std::size_t j = 0; j < n; ++j) gw[p * n + j] += xp * go[j];
        }
      }
    });
  }
  return out;
}

// M[m,n] + b[n] broadcast over rows
template <typename T>
Tensor<T> add_rowvec(Tape<T>& tp, const Tensor<T>& m, const Tensor<T>& b) {
  if (m.rank() != 2 || b.rank() != 1 || m.dim(1) != b.dim(0))
    throw std::invalid_argument("add_rowvec: incompatible shapes " + shape_str(m.shape()) +
                                " + " + shape_str(b.shape()));
  const std::size_t rows = m.dim(0), n = m.dim(1);
  Tensor<T> out = Tensor<T>::zeros(m.shape());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < n; ++j) out.value()[i * n + j] = m.value()[i * n + j] + b.value()[j];
  if (detail::track(tp, {&m, &b})) {
    out.mark_needs_grad();
    tp.record(out, [m = m, b = b, out, rows, n]() mutable {
      const auto& go = out.grad();
      if (m.needs_grad()) {
        auto& gm = m.grad();
        for (std::size_t i = 0; i < go.size(); ++i) gm[i] += go[i];
      }
      if (b.needs_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += go[i * n + j];
      }
    });
  }
  return out;
}

// x[C, ...] + b[C] broadcast over all trailing dims
template <typename T>
Tensor<T> add_channel_bias(Tape<T>& tp, const Tensor<T>& x, const Tensor<T>& b) {
  if (x.rank() < 1 || b.rank() != 1 || x.dim(0) != b.dim(0))
    throw std::invalid_argument("add_channel_bias: incompatible shapes " + shape_str(x.shape()) +
                                " + " + shape_str(b.shape()));
  const std::size_t c = x.dim(0), plane = x.numel() / c;
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < plane; ++i)
      out.value()[ch * plane + i] = x.value()[ch * plane + i] + b.value()[ch];
  if (detail::track(tp, {&x, &b})) {
    out.mark_needs_grad();
    tp.record(out, [x = x, b = b, out, c, plane]() mutable {
      const auto& go = out.grad();
      if (x.needs_grad()) {
        auto& gx = x.grad();
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
      }
      if (b.needs_grad()) {
        auto& gb = b.grad();
        for (std::size_t ch = 0; ch < c; ++ch) {
          T acc = 0;
          for (std::size_t i = 0; i < plane; ++i) acc += go[ch * plane + i];
          gb[ch] += acc;
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// convolution / pooling (cross-correlation convention, no kernel flip)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(Tape<T>& tp, const Tensor<T>& input, const Tensor<T>& kernels,
                 std::size_t stride = 1, std::size_t pad = 0) {
  if (input.rank() != 3 || kernels.rank() != 4)
    throw std::invalid_argument("conv2d: expected input [C,W,H] and kernels [F,C,k,k]");
  const std::size_t cin = input.dim(0), w = input.dim(1), h = input.dim(2);
  const std::size_t f = kernels.dim(0), kc = kernels.dim(1), kw = kernels.dim(2),
                    kh = kernels.dim(3);
  if (kc != cin)
    throw std::invalid_argument("conv2d: kernel channels " + std::to_string(kc) +
                                " != input channels " + std::to_string(cin));
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (kw > w + 2 * pad || kh > h + 2 * pad)
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  const std::size_t ow = (w + 2 * pad - kw) / stride + 1;
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
  Tensor<T> out = Tensor<T>::zeros({f, ow, oh});
  const auto& in = input.value();
  const auto& kv = kernels.value();
  auto& ov = out.value();
  const std::ptrdiff_t ipad = static_cast<std::ptrdiff_t>(pad);
  for (std::size_t fi = 0; fi < f; ++fi)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t oy = 0; oy < oh; ++oy) {
        T acc = 0;
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t i = 0; i < kw; ++i) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * stride + i) - ipad;
            if (x < 0 || x >= static_cast<std::ptrdiff_t>(w)) continue;
            for (std::size_t j = 0; j < kh; ++j) {
              const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * stride + j) - ipad;
              if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) continue;
              acc += in[(c * w + x) * h + y] * kv[((fi * cin + c) * kw + i) * kh + j];
            }
          }
        ov[(fi * ow + ox) * oh + oy] = acc;
      }
  if (detail::track(tp, {&input, &kernels})) {
    out.mark_needs_grad();
    tp.record(out, [input = input, kernels = kernels, out, cin, w, h, f, kw, kh, ow, oh, stride, ipad]() mutable {
      const auto& go = out.grad();
      const bool gi = input.needs_grad();
      const bool gk = kernels.needs_grad();
      auto* gin = gi ? &input.grad() : nullptr;
      auto* gker = gk ? &kernels.grad() : nullptr;
      const auto& in = input.value();
      const auto& kv = kernels.value();
      for (std::size_t fi = 0; fi < f; ++fi)
        for (std::size_t ox = 0; ox < ow; ++ox)
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const T g = go[(fi * ow + ox) * oh + oy];
            if (g == T(0)) continue;
            for (std::size_t c = 0; c < cin; ++c)
              for (std::size_t i = 0; i < kw; ++i) {
                const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * stride + i) - ipad;
                if (x < 0 || x >= static_cast<std::ptrdiff_t>(w)) continue;
                for (std::size_t j = 0; j < kh; ++j) {
                  const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * stride + j) - ipad;
                  if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) continue;
                  const std::size_t iidx = (c * w + x) * h + y;
                  const std::size_t kidx = ((fi * cin + c) * kw + i) * kh + j;
                  if (gi) (*gin)[iidx] += g * kv[kidx];
                  if (gk) (*gker)[kidx] += g * in[iidx];
                }
              }
          }
    });
  }
  return out;
}

template <typename T>
Tensor<T> conv1d(Tape<T>& tp, const Tensor<T>& input, const Tensor<T>& kernels,
                 std::size_t stride = 1, std::size_t pad = 0) {
  if (input.rank() != 2 || kernels.rank() != 3)
    throw std::invalid_argument("conv1d: expected input [C,L] and kernels [F,C,k]");
  const std::size_t cin = input.dim(0), len = input.dim(1);
  const std::size_t f = kernels.dim(0), kc = kernels.dim(1), k = kernels.dim(2);
  if (kc != cin)
    throw std::invalid_argument("conv1d: kernel channels " + std::to_string(kc) +
                                " != input channels " + std::to_string(cin));
  if (stride < 1) throw std::invalid_argument("conv1d: stride must be >= 1");
  if (k > len + 2 * pad) throw std::invalid_argument("conv1d: kernel larger than padded input");
  const std::size_t ol = (len + 2 * pad - k) / stride + 1;
  Tensor<T> out = Tensor<T>::zeros({f, ol});
  const auto& in = input.value();
  const auto& kv = kernels.value();
  auto& ov = out.value();
  const std::ptrdiff_t ipad = static_cast<std::ptrdiff_t>(pad);
  for (std::size_t fi = 0; fi < f; ++fi)
    for (std::size_t o = 0; o < ol; ++o) {
      T acc = 0;
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t i = 0; i < k; ++i) {
          const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(o * stride + i) - ipad;
          if (x < 0 || x >= static_cast<std::ptrdiff_t>(len)) continue;
          acc += in[c * len + x] * kv[(fi * cin + c) * k + i];
        }
      ov[fi * ol + o] = acc;
    }
  if (detail::track(tp, {&input, &kernels})) {
    out.mark_needs_grad();
    tp.record(out, [input = input, kernels = kernels, out, cin, len, f, k, ol, stride, ipad]() mutable {
      const auto& go = out.grad();
      const bool gi = input.needs_grad();
      const bool gk = kernels.needs_grad();
      auto* gin = gi ? &input.grad() : nullptr;
      auto* gker = gk ? &kernels.grad() : nullptr;
      const auto& in = input.value();
      const auto& kv = kernels.value();
      for (std::size_t fi = 0; fi < f; ++fi)
        for (std::size_t o = 0; o < ol; ++o) {
          const T g = go[fi * ol + o];
          if (g == T(0)) continue;
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t i = 0; i < k; ++i) {
              const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(o * stride + i) - ipad;
              if (x < 0 || x >= static_cast<std::ptrdiff_t>(len)) continue;
              if (gi) (*gin)[c * len + x] += g * kv[(fi * cin + c) * k + i];
              if (gk) (*gker)[(fi * cin + c) * k + i] += g * in[c * len + x];
            }
        }
    });
  }
  return out;
}

// Ties route the gradient to the first maximal index in row-major order.
template <typename T>
Tensor<T> maxpool2d(Tape<T>& tp, const Tensor<T>& input, std::size_t k, std::size_t stride) {
  if (input.rank() != 3) throw std::invalid_argument("maxpool2d: expected input [C,W,H]");
  const std::size_t c = input.dim(0), w = input.dim(1), h = input.dim(2);
  if (k > w || k > h) throw std::invalid_argument("maxpool2d: window larger than input");
  const std::size_t ow = (w - k) / stride + 1, oh = (h - k) / stride + 1;
  Tensor<T> out = Tensor<T>::zeros({c, ow, oh});
  std::vector<std::size_t> argmax(out.numel());
  const auto& in = input.value();
  auto& ov = out.value();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t oy = 0; oy < oh; ++oy) {
        std::size_t best = (ch * w + ox * stride) * h + oy * stride;
        T bv = in[best];
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const std::size_t idx = (ch * w + ox * stride + i) * h + oy * stride + j;
            if (in[idx] > bv) {
              bv = in[idx];
              best = idx;
            }
          }
        const std::size_t oidx = (ch * ow + ox) * oh + oy;
        ov[oidx] = bv;
        argmax[oidx] = best;
      }
  if (detail::track(tp, {&input})) {
    out.mark_needs_grad();
    tp.record(out, [input = input, out, argmax = std::move(argmax)]() mutable {
      auto& gin = input.grad();
      const auto& go = out.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gin[argmax[i]] += go[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> maxpool1d(Tape<T>& tp, const Tensor<T>& input, std::size_t k, std::size_t stride) {
  if (input.rank() != 2) throw std::invalid_argument("maxpool1d: expected input [C,L]");
  const std::size_t c = input.dim(0), len = input.dim(1);
  if (k > len) throw std::invalid_argument("maxpool1d: window larger than input");
  const std::size_t ol = (len - k) / stride + 1;
  Tensor<T> out = Tensor<T>::zeros({c, ol});
  std::vector<std::size_t> argmax(out.numel());
  const auto& in = input.value();
  auto& ov = out.value();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t o = 0; o < ol; ++o) {
      std::size_t best = ch * len + o * stride;
      T bv = in[best];
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t idx = ch * len + o * stride + i;
        if (in[idx] > bv) {
          bv = in[idx];
          best = idx;
        }
      }
      ov[ch * ol + o] = bv;
      argmax[ch * ol + o] = best;
    }
  if (detail::track(tp, {&input})) {
    out.mark_needs_grad();
    tp.record(out, [input = input, out, argmax = std::move(argmax)]() mutable {
      auto& gin = input.grad();
      const auto& go = out.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gin[argmax[i]] += go[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(Tape<T>& tp, const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw std::invalid_argument("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                                " changes element count");
  Tensor<T> out = Tensor<T>::from(std::move(shape), a.value());
  if (detail::track(tp, {&a})) {
    out.mark_needs_grad();
    tp.record(out, [a = a, out]() mutable {
      auto& ga = a.grad();
      const auto& go = out.grad();
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> flatten(Tape<T>& tp, const Tensor<T>& a) {
  return reshape(tp, a, {a.numel()});
}

template <typename T>
Tensor<T> transpose(Tape<T>& tp, const Tensor<T>& a) {
  if (a.rank() != 2) throw std::invalid_argument("transpose: expected rank-2 tensor");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor<T> out = Tensor<T>::zeros({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.value()[j * m + i] = a.value()[i * n + j];
  if (detail::track(tp, {&a})) {
    out.mark_needs_grad();
    tp.record(out, [a = a, out, m, n]() mutable {
      auto& ga = a.grad();
      const auto& go = out.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += go[j * m + i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat(Tape<T>& tp, const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: empty input");
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 1) throw std::invalid_argument("concat: expected rank-1 tensors");
    total += p.numel();
  }
  Tensor<T> out = Tensor<T>::zeros({total});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().begin(), p.value().end(), out.value().begin() + off);
    off += p.numel();
  }
  bool any = false;
  for (const auto& p : parts) any = any || (tp.recording() && p.needs_grad());
  if (any) {
    out.mark_needs_grad();
    tp.record(out, [parts = parts, out]() mutable {
      const auto& go = out.grad();
      std::size_t off = 0;
      for (auto& p : parts) {
        if (p.needs_grad()) {
          auto& gp = p.grad();
          for (std::size_t i = 0; i < p.numel(); ++i) gp[i] += go[off + i];
        }
        off += p.numel();
      }
    });
  }
  return out;
}

// rows of equal length -> [m, n]
template <typename T>
Tensor<T> stack_rows(Tape<T>& tp, const std::vector<Tensor<T>>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: empty input");
  const std::size_t n = rows[0].numel();
  for (const auto& r : rows) {
    if (r.rank() != 1 || r.numel() != n)
      throw std::invalid_argument("stack_rows: rows must be rank-1 and equally sized");
  }
  Tensor<T> out = Tensor<T>::zeros({rows.size(), n});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].value().begin(), rows[i].value().end(), out.value().begin() + i * n);
  bool any = false;
  for (const auto& r : rows) any = any || (tp.recording() && r.needs_grad());
  if (any) {
    out.mark_needs_grad();
    tp.record(out, [rows = rows, out, n]() mutable {
      const auto& go = out.grad();
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i].needs_grad()) continue;
        auto& gr = rows[i].grad();
        for (std::size_t j = 0; j < n; ++j) gr[j] += go[i * n + j];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_rows(Tape<T>& tp, const Tensor<T>& a, std::size_t r0, std::size_t r1) {
  if (a.rank() != 2 || r0 >= r1 || r1 > a.dim(0))
    throw std::invalid_argument("slice_rows: bad range on " + shape_str(a.shape()));
  const std::size_t n = a.dim(1);
  Tensor<T> out = Tensor<T>::zeros({r1 - r0, n});
  std::copy(a.value().begin() + r0 * n, a.value().begin() + r1 * n, out.value().begin());
  if (detail::track(tp, {&a})) {
    out.mark_needs_grad();
    tp.record(out, [a = a, out, r0, n]() mutable {
      auto& ga = a.grad();
      const auto& go = out.grad();
      for (std::size_t i = 0; i < go.size(); ++i) ga[r0 * n + i] += go[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions and losses
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(Tape<T>& tp, const Tensor<T>& a) {
  T acc = 0;
  for (T v : a.value()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (detail::track(tp, {&a})) {
    out.mark_needs_grad();
    tp.record(out, [a = a, out]() mutable {
      auto& ga = a.grad();
      const T g = out.grad()[0];
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean_all(Tape<T>& tp, const Tensor<T>& a) {
  T acc = 0;
  for (T v : a.value()) acc += v;
  const T inv = T(1) / static_cast<T>(a.numel());
  Tensor<T> out = Tensor<T>::scalar(acc * inv);
  if (detail::track(tp, {&a})) {
    out.mark_needs_grad();
    tp.record(out, [a = a, out, inv]() mutable {
      auto& ga = a.grad();
      const T g = out.grad()[0] * inv;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
  }
  return out;
}

// column means of [m,n] -> [n]
template <typename T>
Tensor<T> mean_rows(Tape<T>& tp, const Tensor<T>& a) {
  if (a.rank() != 2) throw std::invalid_argument("mean_rows: expected rank-2 tensor");
  const std::size_t m = a.dim(0), n = a.dim(1);
  const T inv = T(1) / static_cast<T>(m);
  Tensor<T> out = Tensor<T>::zeros({n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.value()[j] += a.value()[i * n + j] * inv;
  if (detail::track(tp, {&a})) {
    out.mark_needs_grad();
    tp.record(out, [a = a, out, m, n, inv]() mutable {
      auto& ga = a.grad();
      const auto& go = out.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += go[j] * inv;
    });
  }
  return out;
}

// Elementwise binary cross entropy against constant 0/1 targets. Predictions
// are clamped to [clamp, 1-clamp] before the logs. The gradient is evaluated
// at the clamped prediction, so saturated outputs keep a restoring gradient
// instead of dying at the clamp boundary.
template <typename T>
Tensor<T> bce(Tape<T>& tp, const Tensor<T>& pred, const std::vector<T>& targets,
              T clamp = T(1e-7)) {
  if (pred.numel() != targets.size())
    throw std::invalid_argument("bce: " + std::to_string(targets.size()) + " targets for " +
                                shape_str(pred.shape()) + " predictions");
  const T lo = clamp, hi = T(1) - clamp;
  Tensor<T> out = Tensor<T>::zeros(pred.shape());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const T p = std::min(hi, std::max(lo, pred.value()[i]));
    const T y = targets[i];
    out.value()[i] = -(y * std::log(p) + (T(1) - y) * std::log(T(1) - p));
  }
  if (detail::track(tp, {&pred})) {
    out.mark_needs_grad();
    tp.record(out, [pred = pred, out, targets, lo, hi]() mutable {
      auto& gp = pred.grad();
      const auto& go = out.grad();
      for (std::size_t i = 0; i < targets.size(); ++i) {
        const T p = std::min(hi, std::max(lo, pred.value()[i]));
        gp[i] += go[i] * (p - targets[i]) / (p * (T(1) - p));
      }
    });
  }
  return out;
}

}  // namespace astn::ag
