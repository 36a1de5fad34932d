#include "bnn/tensor.hpp"

#include <cblas.h>

#include <cmath>
#include <cstdlib>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace bnn {

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0f);
}

Tensor Tensor::full(std::vector<int64_t> shape, float value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::from_data(std::vector<int64_t> shape, std::vector<float> data) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument("from_data: shape " + shape_str(shape) + " wants " +
                                std::to_string(shape_numel(shape)) + " values, got " +
                                std::to_string(data.size()));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("negative extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

double Rng::normal() {
  // u1 in (0, 1] so the log is finite.
  double u1 = static_cast<double>((engine() >> 11) + 1) * 0x1.0p-53;
  double u2 = static_cast<double>(engine() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::split(uint64_t stream) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream)));
}

namespace {

int64_t fan_in_of(const std::vector<int64_t>& shape, const char* who) {
  if (shape.size() < 2) {
    throw std::invalid_argument(std::string(who) + ": shape " + shape_str(shape) +
                                " needs >= 2 dims");
  }
  int64_t fan_in = 1;
  for (size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  if (fan_in == 0) {
    throw std::invalid_argument(std::string(who) + ": zero fan_in for shape " +
                                shape_str(shape));
  }
  return fan_in;
}

}  // namespace

Tensor kaiming_normal_init(const std::vector<int64_t>& shape, double gain,
                           double scale_gamma, Rng& rng) {
  if (gain <= 0 || scale_gamma <= 0) {
    throw std::invalid_argument("kaiming_normal_init: gain and scale_gamma must be > 0");
  }
  int64_t fan_in = fan_in_of(shape, "kaiming_normal_init");
  // Association fixed as (gain/sqrt(fan_in)) * scale_gamma so power-of-two
  // gamma ratios scale the stream bit-exactly.
  double std_dev = (gain / std::sqrt(static_cast<double>(fan_in))) * scale_gamma;
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) {
    t[i] = static_cast<float>(rng.normal() * std_dev);
  }
  return t;
}

Tensor kaiming_uniform_init(const std::vector<int64_t>& shape, double gain,
                            double scale_gamma, Rng& rng) {
  if (gain <= 0 || scale_gamma <= 0) {
    throw std::invalid_argument("kaiming_uniform_init: gain and scale_gamma must be > 0");
  }
  int64_t fan_in = fan_in_of(shape, "kaiming_uniform_init");
  double bound = (gain * std::sqrt(3.0 / static_cast<double>(fan_in))) * scale_gamma;
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) {
    t[i] = static_cast<float>((2.0 * rng.uniform01() - 1.0) * bound);
  }
  return t;
}

std::vector<float> filter_norms(const Tensor& w) {
  if (w.ndim() < 2) {
    throw std::invalid_argument("filter_norms: tensor " + shape_str(w.shape()) +
                                " needs >= 2 dims");
  }
  int64_t filters = w.dim(0);
  int64_t per_filter = w.numel() / std::max<int64_t>(filters, 1);
  std::vector<float> norms(static_cast<size_t>(filters));
  const float* p = w.data();
  for (int64_t k = 0; k < filters; ++k) {
    double acc = 0.0;
    for (int64_t i = 0; i < per_filter; ++i) {
      double v = p[k * per_filter + i];
      acc += v * v;
    }
    norms[static_cast<size_t>(k)] = static_cast<float>(std::sqrt(acc));
  }
  return norms;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = a;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
  return out;
}

Tensor scale(const Tensor& a, float c) {
  Tensor out = a;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= c;
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "hadamard");
  Tensor out = a;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b[i];
  return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add_inplace");
  for (int64_t i = 0; i < a.numel(); ++i) a[i] += b[i];
}

void scale_inplace(Tensor& a, float c) {
  for (int64_t i = 0; i < a.numel(); ++i) a[i] *= c;
}

double sum(const Tensor& a) {
  double acc = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += a[i];
  return acc;
}

double mean(const Tensor& a) {
  if (a.numel() == 0) throw std::invalid_argument("mean of empty tensor");
  return sum(a) / static_cast<double>(a.numel());
}

double var(const Tensor& a) {
  double m = mean(a);
  double acc = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double d = a[i] - m;
    acc += d * d;
  }
  return acc / static_cast<double>(a.numel());
}

void assert_finite(const Tensor& a, const std::string& what) {
  for (int64_t i = 0; i < a.numel(); ++i) {
    if (!std::isfinite(a[i])) {
      throw std::runtime_error("non-finite value in " + what + " at flat index " +
                               std::to_string(i));
    }
  }
}

void scale_channels_inplace(Tensor& x, const Tensor& per_channel) {
  if (x.ndim() != 4 || per_channel.ndim() != 1 || per_channel.dim(0) != x.dim(1)) {
    throw std::invalid_argument("scale_channels: " + shape_str(x.shape()) + " vs " +
                                shape_str(per_channel.shape()));
  }
  int64_t spatial = x.dim(2) * x.dim(3);
  float* p = x.data();
  for (int64_t n = 0; n < x.dim(0); ++n) {
    for (int64_t c = 0; c < x.dim(1); ++c) {
      float s = per_channel[c];
      for (int64_t i = 0; i < spatial; ++i) p[(n * x.dim(1) + c) * spatial + i] *= s;
    }
  }
}

void add_channels_inplace(Tensor& x, const Tensor& per_channel) {
  if (x.ndim() != 4 || per_channel.ndim() != 1 || per_channel.dim(0) != x.dim(1)) {
    throw std::invalid_argument("add_channels: " + shape_str(x.shape()) + " vs " +
                                shape_str(per_channel.shape()));
  }
  int64_t spatial = x.dim(2) * x.dim(3);
  float* p = x.data();
  for (int64_t n = 0; n < x.dim(0); ++n) {
    for (int64_t c = 0; c < x.dim(1); ++c) {
      float b = per_channel[c];
      for (int64_t i = 0; i < spatial; ++i) p[(n * x.dim(1) + c) * spatial + i] += b;
    }
  }
}

namespace {

// OpenBLAS 0.3.x falls back to a generic kernel when the hypervisor masks
// CPUID model info; hint the kernel family from our own feature probe unless
// the user already chose one.
void blas_core_hint() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (std::getenv("OPENBLAS_CORETYPE") != nullptr) return;
    if (__builtin_cpu_supports("avx512f")) {
      setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
    } else if (__builtin_cpu_supports("avx2")) {
      setenv("OPENBLAS_CORETYPE", "HASWELL", 0);
    }
  });
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          const float* a, int64_t lda, const float* b, int64_t ldb, float* c,
          int64_t ldc) {
  blas_core_hint();
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), 1.0f, a, static_cast<int>(lda),
              b, static_cast<int>(ldb), 0.0f, c, static_cast<int>(ldc));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  Tensor out({a.dim(0), b.dim(1)});
  if (out.numel() == 0 || a.dim(1) == 0) return out;
  gemm(false, false, a.dim(0), b.dim(1), a.dim(1), a.data(), a.dim(1), b.data(),
       b.dim(1), out.data(), b.dim(1));
  return out;
}

namespace {

struct ConvGeom {
  int64_t batch, in_ch, in_h, in_w;
  int64_t out_ch, k_h, k_w;
  int64_t out_h, out_w;
  int64_t patch;  // in_ch * k_h * k_w
  int stride, pad;
};

ConvGeom conv_geom(const std::vector<int64_t>& x_shape, const std::vector<int64_t>& w_shape,
                   int stride, int pad) {
  if (x_shape.size() != 4 || w_shape.size() != 4) {
    throw std::invalid_argument("conv2d: need 4-d input " + shape_str(x_shape) +
                                " and weight " + shape_str(w_shape));
  }
  if (x_shape[1] != w_shape[1]) {
    throw std::invalid_argument("conv2d: channel mismatch, input " + shape_str(x_shape) +
                                " vs weight " + shape_str(w_shape));
  }
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  ConvGeom g;
  g.batch = x_shape[0];
  g.in_ch = x_shape[1];
  g.in_h = x_shape[2];
  g.in_w = x_shape[3];
  g.out_ch = w_shape[0];
  g.k_h = w_shape[2];
  g.k_w = w_shape[3];
  g.stride = stride;
  g.pad = pad;
  g.out_h = (g.in_h + 2 * pad - g.k_h) / stride + 1;
  g.out_w = (g.in_w + 2 * pad - g.k_w) / stride + 1;
  if (g.out_h < 1 || g.out_w < 1) {
    throw std::invalid_argument("conv2d: kernel " + shape_str(w_shape) +
                                " does not fit input " + shape_str(x_shape));
  }
  g.patch = g.in_ch * g.k_h * g.k_w;
  return g;
}

// Patch rows ordered (b, oy, ox); columns ordered (c, ky, kx).
void im2col(const Tensor& x, const ConvGeom& g, float pad_value, std::vector<float>& col) {
  col.assign(static_cast<size_t>(g.batch * g.out_h * g.out_w * g.patch), pad_value);
  const float* src = x.data();
  for (int64_t b = 0; b < g.batch; ++b) {
    for (int64_t oy = 0; oy < g.out_h; ++oy) {
      for (int64_t ox = 0; ox < g.out_w; ++ox) {
        float* row = col.data() +
                     static_cast<size_t>(((b * g.out_h + oy) * g.out_w + ox) * g.patch);
        int64_t iy0 = oy * g.stride - g.pad;
        int64_t ix0 = ox * g.stride - g.pad;
        for (int64_t c = 0; c < g.in_ch; ++c) {
          const float* plane = src + (b * g.in_ch + c) * g.in_h * g.in_w;
          for (int64_t ky = 0; ky < g.k_h; ++ky) {
            int64_t iy = iy0 + ky;
            if (iy < 0 || iy >= g.in_h) continue;  // stays pad_value
            for (int64_t kx = 0; kx < g.k_w; ++kx) {
              int64_t ix = ix0 + kx;
              if (ix < 0 || ix >= g.in_w) continue;
              row[(c * g.k_h + ky) * g.k_w + kx] = plane[iy * g.in_w + ix];
            }
          }
        }
      }
    }
  }
}

// Gathers NCHW grad into [C_out, B*OH*OW] so both backward GEMMs stay plain.
void gather_out_major(const Tensor& y, const ConvGeom& g, std::vector<float>& yt) {
  int64_t positions = g.batch * g.out_h * g.out_w;
  int64_t spatial = g.out_h * g.out_w;
  yt.resize(static_cast<size_t>(g.out_ch * positions));
  const float* src = y.data();
  for (int64_t b = 0; b < g.batch; ++b) {
    for (int64_t c = 0; c < g.out_ch; ++c) {
      const float* row = src + (b * g.out_ch + c) * spatial;
      std::copy(row, row + spatial, yt.data() + c * positions + b * spatial);
    }
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& w, int stride, int pad,
                      float pad_value) {
  ConvGeom g = conv_geom(x.shape(), w.shape(), stride, pad);
  std::vector<float> col;
  im2col(x, g, pad_value, col);
  int64_t positions = g.batch * g.out_h * g.out_w;
  // yt[C_out, positions] = W[C_out, patch] x col^T
  std::vector<float> yt(static_cast<size_t>(g.out_ch * positions));
  gemm(false, true, g.out_ch, positions, g.patch, w.data(), g.patch, col.data(),
       g.patch, yt.data(), positions);
  Tensor y({g.batch, g.out_ch, g.out_h, g.out_w});
  int64_t spatial = g.out_h * g.out_w;
  for (int64_t b = 0; b < g.batch; ++b) {
    for (int64_t c = 0; c < g.out_ch; ++c) {
      std::copy(yt.data() + c * positions + b * spatial,
                yt.data() + c * positions + (b + 1) * spatial,
                y.data() + (b * g.out_ch + c) * spatial);
    }
  }
  return y;
}

Tensor conv2d_backward_input(const Tensor& grad_y, const Tensor& w, int64_t in_h,
                             int64_t in_w, int stride, int pad) {
  ConvGeom g = conv_geom({grad_y.dim(0), w.dim(1), in_h, in_w}, w.shape(), stride, pad);
  if (grad_y.dim(1) != g.out_ch || grad_y.dim(2) != g.out_h || grad_y.dim(3) != g.out_w) {
    throw std::invalid_argument("conv2d_backward_input: grad shape " +
                                shape_str(grad_y.shape()) + " inconsistent with weight " +
                                shape_str(w.shape()));
  }
  int64_t positions = g.batch * g.out_h * g.out_w;
  std::vector<float> yt;
  gather_out_major(grad_y, g, yt);
  // dcol[positions, patch] = yt^T x W
  std::vector<float> dcol(static_cast<size_t>(positions * g.patch));
  gemm(true, false, positions, g.patch, g.out_ch, yt.data(), positions, w.data(),
       g.patch, dcol.data(), g.patch);
  // col2im scatter-add; out-of-bounds taps carried constant padding, so they
  // contribute no input gradient.
  Tensor dx({g.batch, g.in_ch, in_h, in_w});
  float* dst = dx.data();
  for (int64_t b = 0; b < g.batch; ++b) {
    for (int64_t oy = 0; oy < g.out_h; ++oy) {
      for (int64_t ox = 0; ox < g.out_w; ++ox) {
        const float* row =
            dcol.data() + static_cast<size_t>(((b * g.out_h + oy) * g.out_w + ox) * g.patch);
        int64_t iy0 = oy * g.stride - g.pad;
        int64_t ix0 = ox * g.stride - g.pad;
        for (int64_t c = 0; c < g.in_ch; ++c) {
          float* plane = dst + (b * g.in_ch + c) * in_h * in_w;
          for (int64_t ky = 0; ky < g.k_h; ++ky) {
            int64_t iy = iy0 + ky;
            if (iy < 0 || iy >= in_h) continue;
            for (int64_t kx = 0; kx < g.k_w; ++kx) {
              int64_t ix = ix0 + kx;
              if (ix < 0 || ix >= in_w) continue;
              plane[iy * in_w + ix] += row[(c * g.k_h + ky) * g.k_w + kx];
            }
          }
        }
      }
    }
  }
  return dx;
}

Tensor conv2d_backward_weights(const Tensor& grad_y, const Tensor& x, int64_t k_h,
                               int64_t k_w, int stride, int pad, float pad_value) {
  ConvGeom g = conv_geom(x.shape(), {grad_y.dim(1), x.dim(1), k_h, k_w}, stride, pad);
  if (grad_y.dim(2) != g.out_h || grad_y.dim(3) != g.out_w) {
    throw std::invalid_argument("conv2d_backward_weights: grad shape " +
                                shape_str(grad_y.shape()) + " inconsistent with input " +
                                shape_str(x.shape()));
  }
  int64_t positions = g.batch * g.out_h * g.out_w;
  std::vector<float> col;
  im2col(x, g, pad_value, col);  // padded taps do feed the weight gradient
  std::vector<float> yt;
  gather_out_major(grad_y, g, yt);
  Tensor dw({g.out_ch, g.in_ch, k_h, k_w});
  gemm(false, false, g.out_ch, g.patch, positions, yt.data(), positions, col.data(),
       g.patch, dw.data(), g.patch);
  return dw;
}

}  // namespace bnn
