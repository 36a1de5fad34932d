#pragma once

#include <string>
#include <vector>

#include "bnn/network.hpp"
#include "bnn/tensor.hpp"

namespace bnn {

// Hyperparameters for the OvSW optimizer and its baselines.
struct OvswConfig {
  double base_lr = 0.1;
  int64_t total_steps = 1;
  double momentum = 0.9;        // SGD momentum
  double weight_decay = 5e-4;
  double ags_lambda = 0.04;     // lower bound on ||G_k|| / ||W_k||
  double sad_sigma = 9e-4;      // flip-state threshold for "silent"
  double ema_momentum = 0.99;   // m in the flip-state EMA
  double sad_penalty = 1e-4;    // decay coefficient added to silent weights
  bool ags_enabled = true;
  bool sad_enabled = true;
  double lars_eta = 0.01;       // trust coefficient, LARS baseline only

  void validate() const;
};

// Recipe presets: lambda/sigma pairs for the two dataset scales.
OvswConfig cifar_recipe();
OvswConfig imagenet_recipe();

// Cosine annealing: base_lr * 0.5 * (1 + cos(pi * t / T)).
double cosine_lr(int64_t step, const OvswConfig& config);

// Per-filter gradient scaling: filters whose gradient-to-weight Frobenius
// ratio falls below lambda are scaled up to exactly lambda; others pass
// through untouched. Degenerate filters: ||G||=0 stays zero, ||W||=0 passes
// through.
Tensor ags_scale(const Tensor& g, const Tensor& w, double lambda);

// EMA of the per-weight sign-flip indicator:
//   S' = m*S + (1-m) * |cur - prev| / 2, signs in {-1,+1}.
// Kept in double so scripted sequences reproduce the closed form 1 - m^k to
// 1e-9; float storage cannot hold that tolerance over long runs.
void update_flip_state(std::vector<double>& s, const Tensor& prev_sign,
                       const Tensor& cur_sign, double m);

// Adds penalty * W to the gradient wherever the flip state is strictly below
// sigma.
Tensor sad_decay(const Tensor& g_scaled, const Tensor& w,
                 const std::vector<double>& s, double sigma, double penalty);

// Optimizer state for one parameter.
struct ParamSlot {
  std::string name;
  Tensor* param = nullptr;
  Tensor v;               // momentum buffer
  std::vector<double> s;  // flip-state EMA (BinarizedWeight only)
  Tensor prev_sign;       // sign snapshot  (BinarizedWeight only)
  ParamKind kind = ParamKind::FullPrecision;
};

std::vector<ParamSlot> make_slots(const std::vector<ParamRef>& params);

// One optimizer step over all slots; grads align index-for-index with slots.
// BinarizedWeight slots run AGS -> SAD -> momentum SGD and refresh their flip
// state from the post-step signs; alpha gets momentum SGD without weight
// decay; everything else plain momentum SGD with weight decay.
void ovsw_step(std::vector<ParamSlot>& slots, const std::vector<Tensor*>& grads,
               int64_t t, const OvswConfig& config);

// Layer-wise adaptive rate scaling baseline. The local rate scales the step
// only; the momentum buffer accumulates the raw gradient.
void lars_step(std::vector<ParamSlot>& slots, const std::vector<Tensor*>& grads,
               int64_t t, const OvswConfig& config);

// Plain SGD with momentum and weight decay; flip state still recorded.
void vanilla_step(std::vector<ParamSlot>& slots, const std::vector<Tensor*>& grads,
                  int64_t t, const OvswConfig& config);

enum class OptimKind { Ovsw, Vanilla, Lars };
OptimKind optim_kind_by_name(const std::string& name);
std::string optim_kind_name(OptimKind kind);

class Optimizer {
 public:
  Optimizer(OptimKind kind, OvswConfig config, const std::vector<ParamRef>& params);

  void step(const std::vector<Tensor*>& grads, int64_t t);

  OptimKind kind() const { return kind_; }
  const OvswConfig& config() const { return config_; }
  std::vector<ParamSlot>& slots() { return slots_; }
  const std::vector<ParamSlot>& slots() const { return slots_; }

 private:
  OptimKind kind_;
  OvswConfig config_;
  std::vector<ParamSlot> slots_;
};

}  // namespace bnn
