#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bnn/tensor.hpp"

namespace bnn {

enum class Mode { Train, Eval };

// How the optimizer treats a parameter.
enum class ParamKind { BinarizedWeight, FullPrecision, ScaleAlpha, BnAffine };

// One binarized conv block: latent weights, learnable output scale, BatchNorm.
struct LayerState {
  Tensor W;       // [C_out, C_in, Kh, Kw]
  Tensor alpha;   // [C_out]
  Tensor bn_gamma, bn_beta;              // learnable affine, [C_out]
  Tensor bn_running_mean, bn_running_var;
  float bn_momentum = 0.1f;
  float bn_eps = 1e-5f;
  int stride = 1;
  bool shortcut = false;
};

struct BnTape {
  std::vector<float> inv_std;  // 1/sqrt(var + eps) actually used
  Tensor x_hat;
  bool batch_stats = true;
};

// Cached forward state for one block; consumed by block_backward.
struct BlockTape {
  Tensor input;     // pre-binarization activation a
  Tensor a_bin;
  Tensor w_bin;
  Tensor conv_raw;  // conv output before the alpha scale
  BnTape bn;
  Mode mode = Mode::Train;
  bool valid = false;
};

struct BlockGrads {
  Tensor w;
  Tensor alpha;
  Tensor bn_gamma, bn_beta;
  Tensor input;
};

// Identity shortcut resampling: 2x2 average pool on stride-2 blocks, zero
// padding for new channels. Shared by the training path and the bitpacked
// inference engine so the two agree exactly.
Tensor shortcut_project(const Tensor& a, int stride, int64_t out_ch);

// sign -> binary conv -> *alpha -> BN -> (+ identity shortcut).
// Train mode uses batch statistics and updates running stats; eval mode uses
// running stats. Shortcut shape mismatches resolve via 2x2 average pool and
// zero channel padding.
std::pair<Tensor, BlockTape> block_forward(LayerState& state, const Tensor& a, Mode mode);
BlockGrads block_backward(const LayerState& state, const BlockTape& tape,
                          const Tensor& upstream);

// Full-precision stem conv (3x3, stride 1, zero padding) with its own BN.
struct FirstConv {
  Tensor W;
  Tensor bn_gamma, bn_beta, bn_running_mean, bn_running_var;
  float bn_momentum = 0.1f;
  float bn_eps = 1e-5f;
};

struct FirstTape {
  Tensor input;
  Tensor conv_out;
  BnTape bn;
  bool valid = false;
};

// Global average pool + full-precision classifier.
struct Linear {
  Tensor W;  // [classes, features]
  Tensor b;  // [classes]
};

struct HeadTape {
  Tensor features;  // pooled [B, F]
  int64_t pool_h = 0, pool_w = 0;
};

struct BlockSpec {
  int64_t out_ch;
  int stride;
  bool shortcut;
};

struct ModelSpec {
  std::string name;
  int64_t in_ch = 1;
  int64_t image_hw = 28;
  int64_t classes = 10;
  int64_t first_out = 16;
  std::vector<BlockSpec> blocks;
  double scale_gamma = 1.0;  // multiplies the binarized blocks' init spread
};

ModelSpec toyconvnet_spec();
ModelSpec minires_spec();
ModelSpec spec_by_name(const std::string& name);

struct Model {
  ModelSpec spec;
  FirstConv first;
  std::vector<LayerState> blocks;
  Linear fc;
};

// Kaiming-normal weights (gain sqrt(2), blocks multiplied by spec.scale_gamma),
// alpha = 1, BN gamma = 1 / beta = 0, running stats 0/1.
Model build_model(const ModelSpec& spec, Rng& rng);

int64_t parameter_count(const Model& model);

struct ForwardTape {
  FirstTape first;
  std::vector<BlockTape> blocks;
  HeadTape head;
  Mode mode = Mode::Train;
};

Tensor model_forward(Model& model, const Tensor& images, Mode mode, ForwardTape* tape);

// Mean softmax cross-entropy, log-sum-exp stabilized. Labels must be in range.
double softmax_xent_loss(const Tensor& logits, const std::vector<int>& labels);
Tensor softmax_xent_backward(const Tensor& logits, const std::vector<int>& labels);

std::pair<double, Tensor> forward_loss(Model& model, const Tensor& images,
                                       const std::vector<int>& labels, Mode mode,
                                       ForwardTape* tape);

struct ModelGrads {
  Tensor first_w, first_bn_gamma, first_bn_beta;
  std::vector<BlockGrads> blocks;
  Tensor fc_w, fc_b;
};

ModelGrads model_backward(Model& model, const ForwardTape& tape, const Tensor& dlogits);

// Stable enumeration of trainable parameters; grads from flatten_grads align
// with it index-for-index. Names: first.W, blockN.{W,alpha,bn_gamma,bn_beta},
// fc.{W,b}.
struct ParamRef {
  std::string name;
  Tensor* tensor;
  ParamKind kind;
};

std::vector<ParamRef> collect_params(Model& model);
// Trainable params plus BN running statistics (for serialization).
std::vector<ParamRef> collect_state(Model& model);
std::vector<Tensor*> flatten_grads(ModelGrads& grads);

}  // namespace bnn
