#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bnn/network.hpp"
#include "bnn/tensor.hpp"

namespace bnn {

// Signs packed into 64-bit words, bit 1 = +1, bit 0 = -1, LSB-first. Rows are
// leading-dim slices (filters or patches); the flattened trailing dims form
// the packed axis. Bits past n_valid in the last word of a row are zero.
struct PackedTensor {
  std::vector<int64_t> logical_shape;
  int64_t rows = 0;
  int64_t n_valid = 0;        // bits per row
  int64_t words_per_row = 0;
  std::vector<uint64_t> words;

  const uint64_t* row(int64_t r) const { return words.data() + r * words_per_row; }
};

PackedTensor pack(const Tensor& x);
Tensor unpack(const PackedTensor& p);

// +/-1 dot product of two packed rows: 2 * popcount(~(a ^ b)) - n over the
// valid bits.
int64_t xnor_popcount_dot(const uint64_t* a, const uint64_t* b, int64_t n_valid);
int64_t xnor_popcount_dot(const PackedTensor& a, int64_t a_row, const PackedTensor& b,
                          int64_t b_row);

// Bit-twiddling fallback; must agree with the native popcount everywhere.
int popcount64_portable(uint64_t v);

// Per-channel affine folding of alpha and eval-mode BatchNorm:
//   scale = gamma * alpha / sqrt(var + eps), bias = beta - gamma * mean / sqrt(var + eps)
struct FoldedAffine {
  std::vector<float> scale, bias;
};

FoldedAffine fold_bn(const Tensor& alpha, const Tensor& bn_gamma, const Tensor& bn_beta,
                     const Tensor& running_mean, const Tensor& running_var, float eps);

struct PackedBlock {
  PackedTensor w;
  FoldedAffine affine;
  int64_t in_ch = 0, out_ch = 0;
  int stride = 1;
  bool shortcut = false;
};

// Inference-only artifact: bitpacked binarized blocks plus the full-precision
// stem and head.
struct PackedModel {
  int format_version = 1;
  ModelSpec spec;
  Tensor first_w;
  FoldedAffine first_affine;
  std::vector<PackedBlock> blocks;
  Tensor fc_w, fc_b;
};

PackedModel pack_model(const Model& model);

// XNOR-popcount forward; matches the float eval path within 1e-3 per logit.
Tensor packed_infer(const PackedModel& model, const Tensor& images);

std::vector<uint8_t> export_packed(const PackedModel& model);
PackedModel import_packed(const std::vector<uint8_t>& bytes);
void save_packed(const PackedModel& model, const std::string& path);
PackedModel load_packed(const std::string& path);

struct SizeReport {
  uint64_t bytes_fp32 = 0;
  uint64_t bytes_packed = 0;
  double ratio = 0.0;
};

// Serialized float checkpoint size vs packed container size.
SizeReport report_sizes(Model& float_model, const PackedModel& packed);

}  // namespace bnn
