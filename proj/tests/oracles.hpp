#pragma once

// Independent scalar reference implementations used as test oracles. These
// deliberately avoid the library's GEMM/im2col path.

#include <cmath>
#include <vector>

#include "bnn/tensor.hpp"

namespace oracles {

// Naive 7-loop cross-correlation, NCHW / [C_out, C_in, Kh, Kw].
inline bnn::Tensor conv2d_naive(const bnn::Tensor& x, const bnn::Tensor& w, int stride,
                                int pad, float pad_value) {
  int64_t batch = x.dim(0), in_ch = x.dim(1), in_h = x.dim(2), in_w = x.dim(3);
  int64_t out_ch = w.dim(0), k_h = w.dim(2), k_w = w.dim(3);
  int64_t out_h = (in_h + 2 * pad - k_h) / stride + 1;
  int64_t out_w = (in_w + 2 * pad - k_w) / stride + 1;
  bnn::Tensor y({batch, out_ch, out_h, out_w});
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t co = 0; co < out_ch; ++co)
      for (int64_t oy = 0; oy < out_h; ++oy)
        for (int64_t ox = 0; ox < out_w; ++ox) {
          double acc = 0.0;
          for (int64_t ci = 0; ci < in_ch; ++ci)
            for (int64_t ky = 0; ky < k_h; ++ky)
              for (int64_t kx = 0; kx < k_w; ++kx) {
                int64_t iy = oy * stride - pad + ky;
                int64_t ix = ox * stride - pad + kx;
                float v = (iy >= 0 && iy < in_h && ix >= 0 && ix < in_w)
                              ? x.at4(b, ci, iy, ix)
                              : pad_value;
                acc += static_cast<double>(v) * w.at4(co, ci, ky, kx);
              }
          y.at4(b, co, oy, ox) = static_cast<float>(acc);
        }
  return y;
}

// The surrogate antiderivative F with F(-1) = -1:
//   F(a) = -1 for a < -1; 2a + a^2 for a in [-1,0); 2a - a^2 for [0,1); 1 beyond.
inline double poly_surrogate(double a) {
  if (a < -1.0) return -1.0;
  if (a < 0.0) return 2.0 * a + a * a;
  if (a < 1.0) return 2.0 * a - a * a;
  return 1.0;
}

inline std::vector<float> filter_norms_naive(const bnn::Tensor& w) {
  int64_t filters = w.dim(0);
  int64_t per_filter = w.numel() / filters;
  std::vector<float> out(static_cast<size_t>(filters));
  for (int64_t k = 0; k < filters; ++k) {
    double acc = 0.0;
    for (int64_t i = 0; i < per_filter; ++i) {
      double v = w.data()[k * per_filter + i];
      acc += v * v;
    }
    out[static_cast<size_t>(k)] = static_cast<float>(std::sqrt(acc));
  }
  return out;
}

}  // namespace oracles
