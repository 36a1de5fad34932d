#pragma once

#include <string>
#include <vector>

#include "bnn/tensor.hpp"

namespace bnn {

// Per-layer sign-flip bookkeeping. Signs are compared once per optimizer
// step; an epoch's flip rate is the fraction of weights that flipped at
// least once within that epoch.
struct LayerFlipStats {
  std::string layer;
  std::vector<int64_t> cumulative_flips;
  std::vector<uint8_t> flipped_this_epoch;
  Tensor init_weights;                      // snapshot for the histogram overlay
  std::vector<double> epoch_flip_rate;
  std::vector<double> epoch_never_flipped_ratio;
  int64_t steps = 0;
};

LayerFlipStats make_layer_stats(const std::string& layer, const Tensor& init_weights);
void record_step(LayerFlipStats& stats, const Tensor& prev_sign, const Tensor& cur_sign);
void end_epoch(LayerFlipStats& stats);
double never_flipped_ratio(const LayerFlipStats& stats);
std::vector<uint8_t> never_flipped_mask(const LayerFlipStats& stats);

struct HistogramRow {
  double bin_left, bin_right;
  int64_t count_all, count_never_flipped;
};

// 64 uniform bins spanning the init snapshot's min..max range.
std::vector<HistogramRow> weight_histogram(const LayerFlipStats& stats, int bins = 64);

// All tracked layers of one training run, insertion-ordered.
struct FlipStats {
  std::vector<LayerFlipStats> layers;

  void track(const std::string& layer, const Tensor& init_weights);
  bool tracks(const std::string& layer) const;
  LayerFlipStats& layer(const std::string& name);
  const LayerFlipStats& layer(const std::string& name) const;
  void record_step(const std::string& name, const Tensor& prev_sign,
                   const Tensor& cur_sign);
  void end_epoch();
};

// Writes <prefix>_hist.csv (layer,bin_left,bin_right,count_all,
// count_never_flipped) and <prefix>_epochs.csv (layer,epoch,flip_rate,
// never_flipped_ratio). Header-only files when nothing is tracked.
void export_csv(const FlipStats& stats, const std::string& prefix);

}  // namespace bnn
