#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace bnn {

// Dense row-major float32 tensor. All training math runs on these; reductions
// accumulate in double to keep tests stable across optimization levels.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);
  static Tensor full(std::vector<int64_t> shape, float value);
  static Tensor from_data(std::vector<int64_t> shape, std::vector<float> data);

  const std::vector<int64_t>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& vec() { return data_; }
  const std::vector<float>& vec() const { return data_; }

  float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // 4-d accessor for NCHW loops.
  float& at4(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  float at4(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  std::vector<int64_t> shape_;
  std::vector<float> data_;
};

std::string shape_str(const std::vector<int64_t>& shape);
int64_t shape_numel(const std::vector<int64_t>& shape);

// Seeded deterministic generator. Stream identity (part of the checkpoint
// reproducibility contract):
//   engine     mt19937_64(seed)
//   uniform01  (engine() >> 11) * 2^-53            in [0, 1)
//   normal     Box-Muller sqrt(-2 ln u1) * cos(2 pi u2), u1 in (0, 1],
//              consuming exactly two engine draws per sample (no caching)
struct Rng {
  explicit Rng(uint64_t seed) : engine(seed), seed_(seed) {}

  uint64_t next_u64() { return engine(); }
  double uniform01() { return static_cast<double>(engine() >> 11) * 0x1.0p-53; }
  double normal();

  // Derives an independent child stream from the base seed; the parent's
  // engine position is not consumed.
  Rng split(uint64_t stream) const;

  std::mt19937_64 engine;
  uint64_t seed_;
};

// Kaiming initializers. fan_in = product of all dims except the first;
// scale_gamma multiplies the spread (std or bound) linearly.
Tensor kaiming_normal_init(const std::vector<int64_t>& shape, double gain,
                           double scale_gamma, Rng& rng);
Tensor kaiming_uniform_init(const std::vector<int64_t>& shape, double gain,
                            double scale_gamma, Rng& rng);

// Frobenius norm of each leading-dim slice of w (w must have >= 2 dims).
std::vector<float> filter_norms(const Tensor& w);

// Elementwise / reduction suite. Shape mismatches throw with both shapes named.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float c);
Tensor hadamard(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& a, const Tensor& b);
void scale_inplace(Tensor& a, float c);
double sum(const Tensor& a);
double mean(const Tensor& a);
double var(const Tensor& a);  // population variance
void assert_finite(const Tensor& a, const std::string& what);

// Limited broadcasting: a per-channel vector against the channel dim of an
// NCHW tensor (axis 1). This is the only broadcast the toolkit supports.
void scale_channels_inplace(Tensor& x, const Tensor& per_channel);
void add_channels_inplace(Tensor& x, const Tensor& per_channel);

// mat[M,K] x mat[K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);

// Row-major GEMM wrapper (BLAS-backed): C = A(op) * B(op), C is MxN.
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          const float* a, int64_t lda, const float* b, int64_t ldb, float* c,
          int64_t ldc);

// 2-d convolution primitives, NCHW activations, [C_out, C_in, Kh, Kw] weights.
// pad_value fills out-of-bounds taps (binarized paths pad with +1).
Tensor conv2d_forward(const Tensor& x, const Tensor& w, int stride, int pad,
                      float pad_value = 0.0f);
Tensor conv2d_backward_input(const Tensor& grad_y, const Tensor& w,
                             int64_t in_h, int64_t in_w, int stride, int pad);
Tensor conv2d_backward_weights(const Tensor& grad_y, const Tensor& x,
                               int64_t k_h, int64_t k_w, int stride, int pad,
                               float pad_value = 0.0f);

}  // namespace bnn
