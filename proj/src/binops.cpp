#include "bnn/binops.hpp"

#include <cmath>
#include <stdexcept>

namespace bnn {

Tensor sign(const Tensor& x) {
  Tensor out = x;
  for (int64_t i = 0; i < out.numel(); ++i) {
    float v = out[i];
    if (std::isnan(v)) {
      throw std::runtime_error("sign: NaN at flat index " + std::to_string(i));
    }
    out[i] = v >= 0.0f ? 1.0f : -1.0f;
  }
  return out;
}

Tensor ste_backward(const Tensor& upstream) { return upstream; }

Tensor poly_backward(const Tensor& a, const Tensor& upstream) {
  if (!a.same_shape(upstream)) {
    throw std::invalid_argument("poly_backward: shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(upstream.shape()));
  }
  Tensor out = upstream;
  for (int64_t i = 0; i < out.numel(); ++i) {
    float v = a[i];
    float d;
    if (v >= -1.0f && v < 0.0f) {
      d = 2.0f + 2.0f * v;
    } else if (v >= 0.0f && v < 1.0f) {
      d = 2.0f - 2.0f * v;
    } else {
      d = 0.0f;
    }
    out[i] *= d;
  }
  return out;
}

Tensor binary_conv_forward(const Tensor& a_bin, const Tensor& w_bin,
                           const Tensor& alpha, int stride, int pad) {
  if (alpha.ndim() != 1 || alpha.dim(0) != w_bin.dim(0)) {
    throw std::invalid_argument("binary_conv_forward: alpha " + shape_str(alpha.shape()) +
                                " vs weight " + shape_str(w_bin.shape()));
  }
  Tensor y = conv2d_forward(a_bin, w_bin, stride, pad, /*pad_value=*/1.0f);
  scale_channels_inplace(y, alpha);
  return y;
}

}  // namespace bnn
