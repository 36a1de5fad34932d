#include "bnn/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "bnn/binops.hpp"

namespace bnn {

void OvswConfig::validate() const {
  if (base_lr <= 0) throw std::invalid_argument("base_lr must be > 0");
  if (total_steps < 1) throw std::invalid_argument("total_steps must be >= 1");
  if (momentum < 0 || momentum >= 1) throw std::invalid_argument("momentum must be in [0,1)");
  if (ema_momentum < 0 || ema_momentum >= 1)
    throw std::invalid_argument("ema_momentum must be in [0,1)");
  if (ags_lambda < 0) throw std::invalid_argument("ags_lambda must be >= 0");
  if (sad_sigma < 0) throw std::invalid_argument("sad_sigma must be >= 0");
  if (sad_penalty < 0) throw std::invalid_argument("sad_penalty must be >= 0");
}

OvswConfig cifar_recipe() {
  OvswConfig c;
  c.ags_lambda = 0.04;
  c.sad_sigma = 9e-4;
  c.weight_decay = 5e-4;
  return c;
}

OvswConfig imagenet_recipe() {
  OvswConfig c;
  c.ags_lambda = 0.02;
  c.sad_sigma = 2e-5;
  c.weight_decay = 1e-4;
  return c;
}

double cosine_lr(int64_t step, const OvswConfig& config) {
  if (step < 0 || step > config.total_steps) {
    throw std::invalid_argument("cosine_lr: step " + std::to_string(step) +
                                " outside [0," + std::to_string(config.total_steps) + "]");
  }
  double frac = static_cast<double>(step) / static_cast<double>(config.total_steps);
  return config.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

Tensor ags_scale(const Tensor& g, const Tensor& w, double lambda) {
  if (!g.same_shape(w)) {
    throw std::invalid_argument("ags_scale: shape mismatch " + shape_str(g.shape()) +
                                " vs " + shape_str(w.shape()));
  }
  Tensor out = g;
  if (lambda <= 0 || g.ndim() < 2) return out;
  int64_t filters = g.dim(0);
  int64_t per_filter = g.numel() / filters;
  for (int64_t k = 0; k < filters; ++k) {
    double gn = 0.0, wn = 0.0;
    const float* gp = g.data() + k * per_filter;
    const float* wp = w.data() + k * per_filter;
    for (int64_t i = 0; i < per_filter; ++i) {
      gn += static_cast<double>(gp[i]) * gp[i];
      wn += static_cast<double>(wp[i]) * wp[i];
    }
    gn = std::sqrt(gn);
    wn = std::sqrt(wn);
    if (gn == 0.0 || wn == 0.0) continue;  // nothing to scale / no reference norm
    if (gn / wn < lambda) {
      float c = static_cast<float>(lambda * wn / gn);
      float* op = out.data() + k * per_filter;
      for (int64_t i = 0; i < per_filter; ++i) op[i] = gp[i] * c;
    }
  }
  return out;
}

void update_flip_state(std::vector<double>& s, const Tensor& prev_sign,
                       const Tensor& cur_sign, double m) {
  if (static_cast<int64_t>(s.size()) != prev_sign.numel() ||
      !prev_sign.same_shape(cur_sign)) {
    throw std::invalid_argument("update_flip_state: state size " +
                                std::to_string(s.size()) + " vs signs " +
                                shape_str(prev_sign.shape()) + " / " +
                                shape_str(cur_sign.shape()));
  }
  for (size_t i = 0; i < s.size(); ++i) {
    double flip = prev_sign[static_cast<int64_t>(i)] != cur_sign[static_cast<int64_t>(i)]
                      ? 1.0
                      : 0.0;
    s[i] = m * s[i] + (1.0 - m) * flip;
  }
}

Tensor sad_decay(const Tensor& g_scaled, const Tensor& w,
                 const std::vector<double>& s, double sigma, double penalty) {
  if (!g_scaled.same_shape(w) || static_cast<int64_t>(s.size()) != g_scaled.numel()) {
    throw std::invalid_argument("sad_decay: shape mismatch " +
                                shape_str(g_scaled.shape()) + " vs " +
                                shape_str(w.shape()) + " vs state size " +
                                std::to_string(s.size()));
  }
  Tensor out = g_scaled;
  float pen = static_cast<float>(penalty);
  for (int64_t i = 0; i < out.numel(); ++i) {
    if (s[static_cast<size_t>(i)] < sigma) {
      out[i] += pen * w[i];  // strict inequality per the decay rule
    }
  }
  return out;
}

std::vector<ParamSlot> make_slots(const std::vector<ParamRef>& params) {
  std::vector<ParamSlot> slots;
  slots.reserve(params.size());
  for (const ParamRef& p : params) {
    ParamSlot slot;
    slot.name = p.name;
    slot.param = p.tensor;
    slot.kind = p.kind;
    slot.v = Tensor(p.tensor->shape());
    if (p.kind == ParamKind::BinarizedWeight) {
      slot.s.assign(static_cast<size_t>(p.tensor->numel()), 0.0);
      slot.prev_sign = sign(*p.tensor);
    }
    slots.push_back(std::move(slot));
  }
  return slots;
}

namespace {

void check_step_inputs(const std::vector<ParamSlot>& slots,
                       const std::vector<Tensor*>& grads) {
  if (slots.size() != grads.size()) {
    throw std::invalid_argument("optimizer step: " + std::to_string(grads.size()) +
                                " grads for " + std::to_string(slots.size()) + " slots");
  }
  for (size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i].param->same_shape(*grads[i])) {
      throw std::invalid_argument("optimizer step: grad shape " +
                                  shape_str(grads[i]->shape()) + " vs param " +
                                  shape_str(slots[i].param->shape()) + " (" +
                                  slots[i].name + ")");
    }
    assert_finite(*grads[i], "grad " + slots[i].name);
  }
}

// V <- momentum*V + (g + decay*W); W <- W - lr*V  (freshly updated buffer).
void momentum_update(ParamSlot& slot, const Tensor& g, double lr, double momentum,
                     double decay) {
  Tensor& w = *slot.param;
  float mf = static_cast<float>(momentum);
  float df = static_cast<float>(decay);
  float lf = static_cast<float>(lr);
  for (int64_t i = 0; i < w.numel(); ++i) {
    slot.v[i] = mf * slot.v[i] + (g[i] + df * w[i]);
    w[i] -= lf * slot.v[i];
  }
}

void refresh_flip_state(ParamSlot& slot, double ema_momentum) {
  if (slot.kind != ParamKind::BinarizedWeight) return;
  Tensor cur = sign(*slot.param);
  update_flip_state(slot.s, slot.prev_sign, cur, ema_momentum);
  slot.prev_sign = std::move(cur);
}

double decay_for(const ParamSlot& slot, const OvswConfig& config) {
  // alpha is excluded from weight decay.
  return slot.kind == ParamKind::ScaleAlpha ? 0.0 : config.weight_decay;
}

}  // namespace

void ovsw_step(std::vector<ParamSlot>& slots, const std::vector<Tensor*>& grads,
               int64_t t, const OvswConfig& config) {
  check_step_inputs(slots, grads);
  double lr = cosine_lr(t, config);
  for (size_t i = 0; i < slots.size(); ++i) {
    ParamSlot& slot = slots[i];
    if (slot.kind == ParamKind::BinarizedWeight) {
      Tensor g = *grads[i];
      if (config.ags_enabled && config.ags_lambda > 0) {
        g = ags_scale(g, *slot.param, config.ags_lambda);
      }
      if (config.sad_enabled && config.sad_sigma > 0) {
        g = sad_decay(g, *slot.param, slot.s, config.sad_sigma, config.sad_penalty);
      }
      momentum_update(slot, g, lr, config.momentum, config.weight_decay);
      refresh_flip_state(slot, config.ema_momentum);
    } else {
      momentum_update(slot, *grads[i], lr, config.momentum, decay_for(slot, config));
    }
  }
}

void lars_step(std::vector<ParamSlot>& slots, const std::vector<Tensor*>& grads,
               int64_t t, const OvswConfig& config) {
  check_step_inputs(slots, grads);
  double lr = cosine_lr(t, config);
  for (size_t i = 0; i < slots.size(); ++i) {
    ParamSlot& slot = slots[i];
    const Tensor& g = *grads[i];
    Tensor& w = *slot.param;
    double decay = decay_for(slot, config);
    double gn = 0.0, wn = 0.0;
    for (int64_t j = 0; j < w.numel(); ++j) {
      gn += static_cast<double>(g[j]) * g[j];
      wn += static_cast<double>(w[j]) * w[j];
    }
    gn = std::sqrt(gn);
    wn = std::sqrt(wn);
    double denom = gn + decay * wn;
    // The raw gradient accumulates into the momentum; the local rate scales
    // only the step.
    double local = denom > 0.0 ? config.lars_eta * wn / denom : 0.0;
    float mf = static_cast<float>(config.momentum);
    float df = static_cast<float>(decay);
    float step_f = static_cast<float>(lr * local);
    for (int64_t j = 0; j < w.numel(); ++j) {
      slot.v[j] = mf * slot.v[j] + (g[j] + df * w[j]);
      w[j] -= step_f * slot.v[j];
    }
    refresh_flip_state(slot, config.ema_momentum);
  }
}

void vanilla_step(std::vector<ParamSlot>& slots, const std::vector<Tensor*>& grads,
                  int64_t t, const OvswConfig& config) {
  check_step_inputs(slots, grads);
  double lr = cosine_lr(t, config);
  for (size_t i = 0; i < slots.size(); ++i) {
    ParamSlot& slot = slots[i];
    momentum_update(slot, *grads[i], lr, config.momentum, decay_for(slot, config));
    refresh_flip_state(slot, config.ema_momentum);
  }
}

OptimKind optim_kind_by_name(const std::string& name) {
  if (name == "ovsw") return OptimKind::Ovsw;
  if (name == "vanilla") return OptimKind::Vanilla;
  if (name == "lars") return OptimKind::Lars;
  throw std::invalid_argument("unknown optimizer: " + name);
}

std::string optim_kind_name(OptimKind kind) {
  switch (kind) {
    case OptimKind::Ovsw: return "ovsw";
    case OptimKind::Vanilla: return "vanilla";
    case OptimKind::Lars: return "lars";
  }
  return "?";
}

Optimizer::Optimizer(OptimKind kind, OvswConfig config, const std::vector<ParamRef>& params)
    : kind_(kind), config_(config), slots_(make_slots(params)) {
  config_.validate();
}

void Optimizer::step(const std::vector<Tensor*>& grads, int64_t t) {
  switch (kind_) {
    case OptimKind::Ovsw: ovsw_step(slots_, grads, t, config_); break;
    case OptimKind::Vanilla: vanilla_step(slots_, grads, t, config_); break;
    case OptimKind::Lars: lars_step(slots_, grads, t, config_); break;
  }
}

}  // namespace bnn
