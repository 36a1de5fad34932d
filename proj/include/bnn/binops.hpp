#pragma once

#include "bnn/tensor.hpp"

namespace bnn {

// Backward rule paired with sign(): weights always take the straight-through
// identity, activations always take the piecewise polynomial estimator.
enum class BinGradKind { SteIdentity, PolyApprox };

// Elementwise sign with sign(0) = +1. Throws on NaN input.
Tensor sign(const Tensor& x);

// Straight-through estimator: gradient passes unchanged.
Tensor ste_backward(const Tensor& upstream);

// Derivative of the piecewise-quadratic surrogate F:
//   F'(a) = 2+2a on [-1,0), 2-2a on [0,1), 0 elsewhere.
// `a` is the pre-binarization activation saved from the forward pass.
Tensor poly_backward(const Tensor& a, const Tensor& upstream);

// Cross-correlation of +/-1 tensors with a learnable per-output-channel scale.
// Out-of-bounds taps are padded with +1 (a zero activation binarizes to +1).
// Float simulation for training; the bitpacked engine is inference-only.
Tensor binary_conv_forward(const Tensor& a_bin, const Tensor& w_bin,
                           const Tensor& alpha, int stride, int pad);

}  // namespace bnn
