#include "bnn/network.hpp"

#include <cmath>
#include <stdexcept>

#include "bnn/binops.hpp"

namespace bnn {

namespace {

// BatchNorm over (B, H, W) per channel.
Tensor batchnorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         Tensor& running_mean, Tensor& running_var, float momentum,
                         float eps, Mode mode, BnTape& tape) {
  int64_t batch = x.dim(0), ch = x.dim(1), spatial = x.dim(2) * x.dim(3);
  int64_t per_ch = batch * spatial;
  tape.inv_std.assign(static_cast<size_t>(ch), 0.0f);
  tape.batch_stats = (mode == Mode::Train);
  tape.x_hat = Tensor(x.shape());
  Tensor y(x.shape());
  for (int64_t c = 0; c < ch; ++c) {
    double m, v;
    if (mode == Mode::Train) {
      double acc = 0.0;
      for (int64_t b = 0; b < batch; ++b) {
        const float* p = x.data() + (b * ch + c) * spatial;
        for (int64_t i = 0; i < spatial; ++i) acc += p[i];
      }
      m = acc / static_cast<double>(per_ch);
      double acc2 = 0.0;
      for (int64_t b = 0; b < batch; ++b) {
        const float* p = x.data() + (b * ch + c) * spatial;
        for (int64_t i = 0; i < spatial; ++i) {
          double d = p[i] - m;
          acc2 += d * d;
        }
      }
      v = acc2 / static_cast<double>(per_ch);  // population variance
      running_mean[c] = static_cast<float>((1.0 - momentum) * running_mean[c] + momentum * m);
      running_var[c] = static_cast<float>((1.0 - momentum) * running_var[c] + momentum * v);
    } else {
      m = running_mean[c];
      v = running_var[c];
    }
    float inv_std = static_cast<float>(1.0 / std::sqrt(v + eps));
    tape.inv_std[static_cast<size_t>(c)] = inv_std;
    float g = gamma[c], bt = beta[c], mf = static_cast<float>(m);
    for (int64_t b = 0; b < batch; ++b) {
      const float* p = x.data() + (b * ch + c) * spatial;
      float* xh = tape.x_hat.data() + (b * ch + c) * spatial;
      float* out = y.data() + (b * ch + c) * spatial;
      for (int64_t i = 0; i < spatial; ++i) {
        float h = (p[i] - mf) * inv_std;
        xh[i] = h;
        out[i] = g * h + bt;
      }
    }
  }
  return y;
}

Tensor batchnorm_backward(const Tensor& grad_y, const BnTape& tape, const Tensor& gamma,
                          Tensor& grad_gamma, Tensor& grad_beta) {
  int64_t batch = grad_y.dim(0), ch = grad_y.dim(1),
          spatial = grad_y.dim(2) * grad_y.dim(3);
  int64_t per_ch = batch * spatial;
  grad_gamma = Tensor({ch});
  grad_beta = Tensor({ch});
  Tensor dx(grad_y.shape());
  for (int64_t c = 0; c < ch; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int64_t b = 0; b < batch; ++b) {
      const float* dy = grad_y.data() + (b * ch + c) * spatial;
      const float* xh = tape.x_hat.data() + (b * ch + c) * spatial;
      for (int64_t i = 0; i < spatial; ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += static_cast<double>(dy[i]) * xh[i];
      }
    }
    grad_gamma[c] = static_cast<float>(sum_dy_xhat);
    grad_beta[c] = static_cast<float>(sum_dy);
    float g_inv = gamma[c] * tape.inv_std[static_cast<size_t>(c)];
    if (tape.batch_stats) {
      float mean_dy = static_cast<float>(sum_dy / per_ch);
      float mean_dy_xhat = static_cast<float>(sum_dy_xhat / per_ch);
      for (int64_t b = 0; b < batch; ++b) {
        const float* dy = grad_y.data() + (b * ch + c) * spatial;
        const float* xh = tape.x_hat.data() + (b * ch + c) * spatial;
        float* out = dx.data() + (b * ch + c) * spatial;
        for (int64_t i = 0; i < spatial; ++i) {
          out[i] = g_inv * (dy[i] - mean_dy - xh[i] * mean_dy_xhat);
        }
      }
    } else {
      // Frozen statistics: BN is a per-channel affine map.
      for (int64_t b = 0; b < batch; ++b) {
        const float* dy = grad_y.data() + (b * ch + c) * spatial;
        float* out = dx.data() + (b * ch + c) * spatial;
        for (int64_t i = 0; i < spatial; ++i) out[i] = g_inv * dy[i];
      }
    }
  }
  return dx;
}

Tensor avg_pool2x2(const Tensor& x) {
  if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
    throw std::invalid_argument("avg_pool2x2: odd spatial extent in " +
                                shape_str(x.shape()));
  }
  Tensor y({x.dim(0), x.dim(1), x.dim(2) / 2, x.dim(3) / 2});
  for (int64_t b = 0; b < x.dim(0); ++b)
    for (int64_t c = 0; c < x.dim(1); ++c)
      for (int64_t oy = 0; oy < y.dim(2); ++oy)
        for (int64_t ox = 0; ox < y.dim(3); ++ox) {
          float s = x.at4(b, c, 2 * oy, 2 * ox) + x.at4(b, c, 2 * oy, 2 * ox + 1) +
                    x.at4(b, c, 2 * oy + 1, 2 * ox) + x.at4(b, c, 2 * oy + 1, 2 * ox + 1);
          y.at4(b, c, oy, ox) = 0.25f * s;
        }
  return y;
}

Tensor avg_pool2x2_backward(const Tensor& gy, int64_t in_h, int64_t in_w) {
  Tensor dx({gy.dim(0), gy.dim(1), in_h, in_w});
  for (int64_t b = 0; b < gy.dim(0); ++b)
    for (int64_t c = 0; c < gy.dim(1); ++c)
      for (int64_t oy = 0; oy < gy.dim(2); ++oy)
        for (int64_t ox = 0; ox < gy.dim(3); ++ox) {
          float g = 0.25f * gy.at4(b, c, oy, ox);
          dx.at4(b, c, 2 * oy, 2 * ox) = g;
          dx.at4(b, c, 2 * oy, 2 * ox + 1) = g;
          dx.at4(b, c, 2 * oy + 1, 2 * ox) = g;
          dx.at4(b, c, 2 * oy + 1, 2 * ox + 1) = g;
        }
  return dx;
}

}  // namespace

// Bi-Real style identity: average-pool on spatial downsample, zero-pad new
// channels.
Tensor shortcut_project(const Tensor& a, int stride, int64_t out_ch) {
  Tensor s = a;
  if (stride == 2) s = avg_pool2x2(s);
  if (stride > 2) throw std::invalid_argument("shortcut: stride > 2 unsupported");
  if (s.dim(1) == out_ch) return s;
  if (s.dim(1) > out_ch) {
    throw std::invalid_argument("shortcut: cannot drop channels " +
                                shape_str(s.shape()));
  }
  Tensor padded({s.dim(0), out_ch, s.dim(2), s.dim(3)});
  int64_t spatial = s.dim(2) * s.dim(3);
  for (int64_t b = 0; b < s.dim(0); ++b)
    for (int64_t c = 0; c < s.dim(1); ++c)
      std::copy(s.data() + (b * s.dim(1) + c) * spatial,
                s.data() + (b * s.dim(1) + c + 1) * spatial,
                padded.data() + (b * out_ch + c) * spatial);
  return padded;
}

namespace {

Tensor shortcut_backward(const Tensor& gy, int stride, int64_t in_ch, int64_t in_h,
                         int64_t in_w) {
  // Drop gradient for zero-padded channels.
  Tensor g({gy.dim(0), in_ch, gy.dim(2), gy.dim(3)});
  int64_t spatial = gy.dim(2) * gy.dim(3);
  for (int64_t b = 0; b < gy.dim(0); ++b)
    for (int64_t c = 0; c < in_ch; ++c)
      std::copy(gy.data() + (b * gy.dim(1) + c) * spatial,
                gy.data() + (b * gy.dim(1) + c + 1) * spatial,
                g.data() + (b * in_ch + c) * spatial);
  if (stride == 2) return avg_pool2x2_backward(g, in_h, in_w);
  return g;
}

int conv_pad(const Tensor& w) { return static_cast<int>((w.dim(2) - 1) / 2); }

}  // namespace

std::pair<Tensor, BlockTape> block_forward(LayerState& state, const Tensor& a, Mode mode) {
  if (a.ndim() != 4 || a.dim(1) != state.W.dim(1)) {
    throw std::invalid_argument("block_forward: input " + shape_str(a.shape()) +
                                " does not feed weight " + shape_str(state.W.shape()));
  }
  BlockTape tape;
  tape.mode = mode;
  tape.input = a;
  tape.a_bin = sign(a);
  tape.w_bin = sign(state.W);
  tape.conv_raw = conv2d_forward(tape.a_bin, tape.w_bin, state.stride, conv_pad(state.W),
                                 /*pad_value=*/1.0f);
  Tensor x = tape.conv_raw;
  scale_channels_inplace(x, state.alpha);
  Tensor y = batchnorm_forward(x, state.bn_gamma, state.bn_beta, state.bn_running_mean,
                               state.bn_running_var, state.bn_momentum, state.bn_eps,
                               mode, tape.bn);
  if (state.shortcut) {
    add_inplace(y, shortcut_project(a, state.stride, state.W.dim(0)));
  }
  tape.valid = true;
  return {std::move(y), std::move(tape)};
}

BlockGrads block_backward(const LayerState& state, const BlockTape& tape,
                          const Tensor& upstream) {
  if (!tape.valid) throw std::runtime_error("block_backward: stale or missing tape");
  BlockGrads g;
  Tensor dx = batchnorm_backward(upstream, tape.bn, state.bn_gamma, g.bn_gamma, g.bn_beta);

  // Through the per-channel scale: x = alpha * r.
  int64_t ch = state.W.dim(0);
  int64_t spatial = dx.dim(2) * dx.dim(3);
  g.alpha = Tensor({ch});
  Tensor dr = dx;
  for (int64_t c = 0; c < ch; ++c) {
    double acc = 0.0;
    float al = state.alpha[c];
    for (int64_t b = 0; b < dx.dim(0); ++b) {
      const float* pdx = dx.data() + (b * ch + c) * spatial;
      const float* pr = tape.conv_raw.data() + (b * ch + c) * spatial;
      float* pdr = dr.data() + (b * ch + c) * spatial;
      for (int64_t i = 0; i < spatial; ++i) {
        acc += static_cast<double>(pdx[i]) * pr[i];
        pdr[i] = pdx[i] * al;
      }
    }
    g.alpha[c] = static_cast<float>(acc);
  }

  int pad = conv_pad(state.W);
  Tensor d_wbin = conv2d_backward_weights(dr, tape.a_bin, state.W.dim(2), state.W.dim(3),
                                          state.stride, pad, /*pad_value=*/1.0f);
  Tensor d_abin = conv2d_backward_input(dr, tape.w_bin, tape.input.dim(2),
                                        tape.input.dim(3), state.stride, pad);
  g.w = ste_backward(d_wbin);
  g.input = poly_backward(tape.input, d_abin);
  if (state.shortcut) {
    add_inplace(g.input, shortcut_backward(upstream, state.stride, tape.input.dim(1),
                                           tape.input.dim(2), tape.input.dim(3)));
  }
  return g;
}

ModelSpec toyconvnet_spec() {
  ModelSpec s;
  s.name = "toyconvnet";
  s.in_ch = 1;
  s.image_hw = 28;
  s.classes = 10;
  s.first_out = 16;
  s.blocks = {{16, 1, false}, {32, 2, false}, {64, 2, false}, {64, 1, false}};
  return s;
}

ModelSpec minires_spec() {
  ModelSpec s;
  s.name = "minires";
  s.in_ch = 3;
  s.image_hw = 32;
  s.classes = 10;
  s.first_out = 16;
  s.blocks = {{16, 1, true}, {16, 1, true},  {32, 2, true},
              {32, 1, true}, {64, 2, true}, {64, 1, true}};
  return s;
}

ModelSpec spec_by_name(const std::string& name) {
  if (name == "toyconvnet") return toyconvnet_spec();
  if (name == "minires") return minires_spec();
  throw std::invalid_argument("unknown model spec: " + name);
}

namespace {

void init_bn(Tensor& gamma, Tensor& beta, Tensor& mean, Tensor& var, int64_t ch) {
  gamma = Tensor::full({ch}, 1.0f);
  beta = Tensor({ch});
  mean = Tensor({ch});
  var = Tensor::full({ch}, 1.0f);
}

}  // namespace

Model build_model(const ModelSpec& spec, Rng& rng) {
  const double gain = std::sqrt(2.0);
  Model m;
  m.spec = spec;
  m.first.W = kaiming_normal_init({spec.first_out, spec.in_ch, 3, 3}, gain, 1.0, rng);
  init_bn(m.first.bn_gamma, m.first.bn_beta, m.first.bn_running_mean,
          m.first.bn_running_var, spec.first_out);
  int64_t in_ch = spec.first_out;
  for (const BlockSpec& bs : spec.blocks) {
    LayerState ls;
    ls.W = kaiming_normal_init({bs.out_ch, in_ch, 3, 3}, gain, spec.scale_gamma, rng);
    ls.alpha = Tensor::full({bs.out_ch}, 1.0f);
    init_bn(ls.bn_gamma, ls.bn_beta, ls.bn_running_mean, ls.bn_running_var, bs.out_ch);
    ls.stride = bs.stride;
    ls.shortcut = bs.shortcut;
    m.blocks.push_back(std::move(ls));
    in_ch = bs.out_ch;
  }
  m.fc.W = kaiming_normal_init({spec.classes, in_ch}, 1.0, 1.0, rng);
  m.fc.b = Tensor({spec.classes});
  return m;
}

int64_t parameter_count(const Model& model) {
  int64_t n = 0;
  for (const ParamRef& p : collect_params(const_cast<Model&>(model))) n += p.tensor->numel();
  return n;
}

Tensor model_forward(Model& model, const Tensor& images, Mode mode, ForwardTape* tape) {
  ForwardTape local;
  ForwardTape& t = tape ? *tape : local;
  t.mode = mode;
  t.blocks.clear();

  t.first.input = images;
  t.first.conv_out = conv2d_forward(images, model.first.W, 1, conv_pad(model.first.W));
  Tensor a = batchnorm_forward(t.first.conv_out, model.first.bn_gamma, model.first.bn_beta,
                               model.first.bn_running_mean, model.first.bn_running_var,
                               model.first.bn_momentum, model.first.bn_eps, mode,
                               t.first.bn);
  t.first.valid = true;

  for (LayerState& block : model.blocks) {
    auto [y, bt] = block_forward(block, a, mode);
    t.blocks.push_back(std::move(bt));
    a = std::move(y);
  }

  // Global average pool.
  int64_t batch = a.dim(0), feat = a.dim(1), spatial = a.dim(2) * a.dim(3);
  t.head.pool_h = a.dim(2);
  t.head.pool_w = a.dim(3);
  t.head.features = Tensor({batch, feat});
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t c = 0; c < feat; ++c) {
      double acc = 0.0;
      const float* p = a.data() + (b * feat + c) * spatial;
      for (int64_t i = 0; i < spatial; ++i) acc += p[i];
      t.head.features[b * feat + c] = static_cast<float>(acc / spatial);
    }

  // logits = features x W^T + b
  Tensor logits({batch, model.spec.classes});
  gemm(false, true, batch, model.spec.classes, feat, t.head.features.data(), feat,
       model.fc.W.data(), feat, logits.data(), model.spec.classes);
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t c = 0; c < model.spec.classes; ++c) logits[b * model.spec.classes + c] += model.fc.b[c];
  return logits;
}

double softmax_xent_loss(const Tensor& logits, const std::vector<int>& labels) {
  int64_t batch = logits.dim(0), classes = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != batch) {
    throw std::invalid_argument("softmax_xent_loss: " + std::to_string(labels.size()) +
                                " labels for batch " + std::to_string(batch));
  }
  double total = 0.0;
  for (int64_t b = 0; b < batch; ++b) {
    int y = labels[static_cast<size_t>(b)];
    if (y < 0 || y >= classes) {
      throw std::invalid_argument("label " + std::to_string(y) + " out of range [0," +
                                  std::to_string(classes) + ")");
    }
    const float* row = logits.data() + b * classes;
    double mx = row[0];
    for (int64_t c = 1; c < classes; ++c) mx = std::max(mx, static_cast<double>(row[c]));
    double lse = 0.0;
    for (int64_t c = 0; c < classes; ++c) lse += std::exp(row[c] - mx);
    total += std::log(lse) + mx - row[y];
  }
  return total / static_cast<double>(batch);
}

Tensor softmax_xent_backward(const Tensor& logits, const std::vector<int>& labels) {
  int64_t batch = logits.dim(0), classes = logits.dim(1);
  Tensor d(logits.shape());
  for (int64_t b = 0; b < batch; ++b) {
    const float* row = logits.data() + b * classes;
    float* out = d.data() + b * classes;
    double mx = row[0];
    for (int64_t c = 1; c < classes; ++c) mx = std::max(mx, static_cast<double>(row[c]));
    double lse = 0.0;
    for (int64_t c = 0; c < classes; ++c) lse += std::exp(row[c] - mx);
    for (int64_t c = 0; c < classes; ++c) {
      double p = std::exp(row[c] - mx) / lse;
      out[c] = static_cast<float>(p / batch);
    }
    out[labels[static_cast<size_t>(b)]] -= 1.0f / static_cast<float>(batch);
  }
  return d;
}

std::pair<double, Tensor> forward_loss(Model& model, const Tensor& images,
                                       const std::vector<int>& labels, Mode mode,
                                       ForwardTape* tape) {
  Tensor logits = model_forward(model, images, mode, tape);
  double loss = softmax_xent_loss(logits, labels);
  return {loss, std::move(logits)};
}

ModelGrads model_backward(Model& model, const ForwardTape& tape, const Tensor& dlogits) {
  if (!tape.first.valid || tape.blocks.size() != model.blocks.size()) {
    throw std::runtime_error("model_backward: stale or missing tape");
  }
  ModelGrads g;
  int64_t batch = dlogits.dim(0), classes = dlogits.dim(1);
  int64_t feat = tape.head.features.dim(1);

  // Head.
  g.fc_w = Tensor({classes, feat});
  gemm(true, false, classes, feat, batch, dlogits.data(), classes,
       tape.head.features.data(), feat, g.fc_w.data(), feat);
  g.fc_b = Tensor({classes});
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t c = 0; c < classes; ++c) g.fc_b[c] += dlogits[b * classes + c];
  Tensor dfeat({batch, feat});
  gemm(false, false, batch, feat, classes, dlogits.data(), classes, model.fc.W.data(),
       feat, dfeat.data(), feat);

  // Un-pool: gradient spreads evenly over the pooled window.
  int64_t spatial = tape.head.pool_h * tape.head.pool_w;
  Tensor da({batch, feat, tape.head.pool_h, tape.head.pool_w});
  float inv = 1.0f / static_cast<float>(spatial);
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t c = 0; c < feat; ++c) {
      float v = dfeat[b * feat + c] * inv;
      float* p = da.data() + (b * feat + c) * spatial;
      for (int64_t i = 0; i < spatial; ++i) p[i] = v;
    }

  g.blocks.resize(model.blocks.size());
  Tensor upstream = std::move(da);
  for (int64_t i = static_cast<int64_t>(model.blocks.size()) - 1; i >= 0; --i) {
    g.blocks[static_cast<size_t>(i)] =
        block_backward(model.blocks[static_cast<size_t>(i)],
                       tape.blocks[static_cast<size_t>(i)], upstream);
    upstream = std::move(g.blocks[static_cast<size_t>(i)].input);
  }

  // First conv: BN backward then weight grad; no input grad needed at the stem.
  Tensor dg, db;
  Tensor dconv = batchnorm_backward(upstream, tape.first.bn, model.first.bn_gamma, dg, db);
  g.first_bn_gamma = std::move(dg);
  g.first_bn_beta = std::move(db);
  g.first_w = conv2d_backward_weights(dconv, tape.first.input, model.first.W.dim(2),
                                      model.first.W.dim(3), 1, conv_pad(model.first.W));
  return g;
}

std::vector<ParamRef> collect_params(Model& model) {
  std::vector<ParamRef> out;
  out.push_back({"first.W", &model.first.W, ParamKind::FullPrecision});
  out.push_back({"first.bn_gamma", &model.first.bn_gamma, ParamKind::BnAffine});
  out.push_back({"first.bn_beta", &model.first.bn_beta, ParamKind::BnAffine});
  for (size_t i = 0; i < model.blocks.size(); ++i) {
    std::string base = "block" + std::to_string(i);
    LayerState& b = model.blocks[i];
    out.push_back({base + ".W", &b.W, ParamKind::BinarizedWeight});
    out.push_back({base + ".alpha", &b.alpha, ParamKind::ScaleAlpha});
    out.push_back({base + ".bn_gamma", &b.bn_gamma, ParamKind::BnAffine});
    out.push_back({base + ".bn_beta", &b.bn_beta, ParamKind::BnAffine});
  }
  out.push_back({"fc.W", &model.fc.W, ParamKind::FullPrecision});
  out.push_back({"fc.b", &model.fc.b, ParamKind::FullPrecision});
  return out;
}

std::vector<ParamRef> collect_state(Model& model) {
  std::vector<ParamRef> out = collect_params(model);
  out.push_back({"first.bn_running_mean", &model.first.bn_running_mean, ParamKind::BnAffine});
  out.push_back({"first.bn_running_var", &model.first.bn_running_var, ParamKind::BnAffine});
  for (size_t i = 0; i < model.blocks.size(); ++i) {
    std::string base = "block" + std::to_string(i);
    LayerState& b = model.blocks[i];
    out.push_back({base + ".bn_running_mean", &b.bn_running_mean, ParamKind::BnAffine});
    out.push_back({base + ".bn_running_var", &b.bn_running_var, ParamKind::BnAffine});
  }
  return out;
}

std::vector<Tensor*> flatten_grads(ModelGrads& grads) {
  std::vector<Tensor*> out;
  out.push_back(&grads.first_w);
  out.push_back(&grads.first_bn_gamma);
  out.push_back(&grads.first_bn_beta);
  for (BlockGrads& b : grads.blocks) {
    out.push_back(&b.w);
    out.push_back(&b.alpha);
    out.push_back(&b.bn_gamma);
    out.push_back(&b.bn_beta);
  }
  out.push_back(&grads.fc_w);
  out.push_back(&grads.fc_b);
  return out;
}

}  // namespace bnn
