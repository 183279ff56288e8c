#pragma once

// Independent reference implementations used as test oracles. These are kept
// deliberately naive and separate from the library code paths they check.

#include <cstddef>
#include <cstdint>
#include <vector>

namespace oracle {

// Direct nested-loop 2-D cross-correlation, same output convention as the
// library (floor((W + 2p - k) / stride) + 1).
inline std::vector<double> conv2d(const std::vector<double>& in, std::size_t c, std::size_t w,
                                  std::size_t h, const std::vector<double>& ker, std::size_t f,
                                  std::size_t kw, std::size_t kh, std::size_t stride,
                                  std::size_t pad, std::size_t& ow, std::size_t& oh) {
  ow = (w + 2 * pad - kw) / stride + 1;
  oh = (h + 2 * pad - kh) / stride + 1;
  std::vector<double> out(f * ow * oh, 0.0);
  for (std::size_t fi = 0; fi < f; ++fi)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ci = 0; ci < c; ++ci)
          for (std::size_t i = 0; i < kw; ++i)
            for (std::size_t j = 0; j < kh; ++j) {
              const long x = static_cast<long>(ox * stride + i) - static_cast<long>(pad);
              const long y = static_cast<long>(oy * stride + j) - static_cast<long>(pad);
              if (x < 0 || y < 0 || x >= static_cast<long>(w) || y >= static_cast<long>(h))
                continue;
              out[(fi * ow + ox) * oh + oy] +=
                  in[(ci * w + x) * h + y] * ker[((fi * c + ci) * kw + i) * kh + j];
            }
  return out;
}

inline std::vector<double> conv1d(const std::vector<double>& in, std::size_t c, std::size_t len,
                                  const std::vector<double>& ker, std::size_t f, std::size_t k,
                                  std::size_t stride, std::size_t pad, std::size_t& ol) {
  ol = (len + 2 * pad - k) / stride + 1;
  std::vector<double> out(f * ol, 0.0);
  for (std::size_t fi = 0; fi < f; ++fi)
    for (std::size_t o = 0; o < ol; ++o)
      for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t i = 0; i < k; ++i) {
          const long x = static_cast<long>(o * stride + i) - static_cast<long>(pad);
          if (x < 0 || x >= static_cast<long>(len)) continue;
          out[fi * ol + o] += in[ci * len + x] * ker[(fi * c + ci) * k + i];
        }
  return out;
}

// Scalar-loop evaluation of the gated recurrent step: update/reset gates,
// candidate state, convex mix with the previous state.
inline std::vector<double> gru_step(const std::vector<double>& x, const std::vector<double>& h,
                                    std::size_t h1, std::size_t h2,
                                    const std::vector<double>& w_xz,
                                    const std::vector<double>& w_hz,
                                    const std::vector<double>& b_z,
                                    const std::vector<double>& w_xr,
                                    const std::vector<double>& w_hr,
                                    const std::vector<double>& b_r,
                                    const std::vector<double>& w_xh,
                                    const std::vector<double>& w_hh,
                                    const std::vector<double>& b_h) {
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  auto matvec = [](const std::vector<double>& v, const std::vector<double>& w, std::size_t in,
                   std::size_t out, std::size_t j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < in; ++i) acc += v[i] * w[i * out + j];
    return acc;
  };
  std::vector<double> out(h2);
  for (std::size_t j = 0; j < h2; ++j) {
    const double z = sig(matvec(x, w_xz, h1, h2, j) + matvec(h, w_hz, h2, h2, j) + b_z[j]);
    const double r = sig(matvec(x, w_xr, h1, h2, j) + matvec(h, w_hr, h2, h2, j) + b_r[j]);
    const double cand =
        std::tanh(matvec(x, w_xh, h1, h2, j) + r * matvec(h, w_hh, h2, h2, j) + b_h[j]);
    out[j] = (1.0 - z) * cand + z * h[j];
  }
  return out;
}

// Exhaustive pairwise concordance: P(score+ > score-) + 0.5 P(tie).
inline double pairwise_auc(const std::vector<double>& scores,
                           const std::vector<std::uint8_t>& labels) {
  double concordant = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      ++pairs;
      if (scores[i] > scores[j])
        concordant += 1.0;
      else if (scores[i] == scores[j])
        concordant += 0.5;
    }
  }
  return concordant / static_cast<double>(pairs);
}

}  // namespace oracle
