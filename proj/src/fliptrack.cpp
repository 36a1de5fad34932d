#include "bnn/fliptrack.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace bnn {

LayerFlipStats make_layer_stats(const std::string& layer, const Tensor& init_weights) {
  LayerFlipStats s;
  s.layer = layer;
  s.cumulative_flips.assign(static_cast<size_t>(init_weights.numel()), 0);
  s.flipped_this_epoch.assign(static_cast<size_t>(init_weights.numel()), 0);
  s.init_weights = init_weights;
  return s;
}

void record_step(LayerFlipStats& stats, const Tensor& prev_sign, const Tensor& cur_sign) {
  int64_t n = static_cast<int64_t>(stats.cumulative_flips.size());
  if (prev_sign.numel() != n || cur_sign.numel() != n) {
    throw std::invalid_argument("record_step(" + stats.layer + "): sign shapes " +
                                shape_str(prev_sign.shape()) + " / " +
                                shape_str(cur_sign.shape()) + " vs tracked size " +
                                std::to_string(n));
  }
  for (int64_t i = 0; i < n; ++i) {
    if (prev_sign[i] != cur_sign[i]) {
      ++stats.cumulative_flips[static_cast<size_t>(i)];
      stats.flipped_this_epoch[static_cast<size_t>(i)] = 1;
    }
  }
  ++stats.steps;
}

void end_epoch(LayerFlipStats& stats) {
  int64_t n = static_cast<int64_t>(stats.cumulative_flips.size());
  int64_t flipped = 0;
  for (uint8_t f : stats.flipped_this_epoch) flipped += f;
  stats.epoch_flip_rate.push_back(n > 0 ? static_cast<double>(flipped) / n : 0.0);
  stats.epoch_never_flipped_ratio.push_back(never_flipped_ratio(stats));
  std::fill(stats.flipped_this_epoch.begin(), stats.flipped_this_epoch.end(), 0);
}

double never_flipped_ratio(const LayerFlipStats& stats) {
  int64_t n = static_cast<int64_t>(stats.cumulative_flips.size());
  if (n == 0) return 1.0;
  int64_t never = 0;
  for (int64_t c : stats.cumulative_flips) never += (c == 0);
  return static_cast<double>(never) / n;
}

std::vector<uint8_t> never_flipped_mask(const LayerFlipStats& stats) {
  std::vector<uint8_t> mask(stats.cumulative_flips.size());
  for (size_t i = 0; i < mask.size(); ++i) mask[i] = stats.cumulative_flips[i] == 0;
  return mask;
}

std::vector<HistogramRow> weight_histogram(const LayerFlipStats& stats, int bins) {
  std::vector<HistogramRow> rows(static_cast<size_t>(bins));
  const Tensor& w = stats.init_weights;
  double lo = 0.0, hi = 0.0;
  if (w.numel() > 0) {
    lo = hi = w[0];
    for (int64_t i = 1; i < w.numel(); ++i) {
      lo = std::min(lo, static_cast<double>(w[i]));
      hi = std::max(hi, static_cast<double>(w[i]));
    }
  }
  if (hi <= lo) hi = lo + 1.0;  // degenerate snapshot: one populated bin
  double width = (hi - lo) / bins;
  for (int b = 0; b < bins; ++b) {
    rows[static_cast<size_t>(b)].bin_left = lo + b * width;
    rows[static_cast<size_t>(b)].bin_right = b + 1 == bins ? hi : lo + (b + 1) * width;
    rows[static_cast<size_t>(b)].count_all = 0;
    rows[static_cast<size_t>(b)].count_never_flipped = 0;
  }
  auto never = never_flipped_mask(stats);
  for (int64_t i = 0; i < w.numel(); ++i) {
    int b = static_cast<int>((w[i] - lo) / width);
    b = std::clamp(b, 0, bins - 1);
    ++rows[static_cast<size_t>(b)].count_all;
    if (never[static_cast<size_t>(i)]) ++rows[static_cast<size_t>(b)].count_never_flipped;
  }
  return rows;
}

void FlipStats::track(const std::string& layer, const Tensor& init_weights) {
  if (tracks(layer)) throw std::invalid_argument("already tracking layer " + layer);
  layers.push_back(make_layer_stats(layer, init_weights));
}

bool FlipStats::tracks(const std::string& name) const {
  for (const LayerFlipStats& s : layers)
    if (s.layer == name) return true;
  return false;
}

LayerFlipStats& FlipStats::layer(const std::string& name) {
  for (LayerFlipStats& s : layers)
    if (s.layer == name) return s;
  throw std::invalid_argument("layer not tracked: " + name);
}

const LayerFlipStats& FlipStats::layer(const std::string& name) const {
  for (const LayerFlipStats& s : layers)
    if (s.layer == name) return s;
  throw std::invalid_argument("layer not tracked: " + name);
}

void FlipStats::record_step(const std::string& name, const Tensor& prev_sign,
                            const Tensor& cur_sign) {
  bnn::record_step(layer(name), prev_sign, cur_sign);
}

void FlipStats::end_epoch() {
  for (LayerFlipStats& s : layers) bnn::end_epoch(s);
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void export_csv(const FlipStats& stats, const std::string& prefix) {
  std::ofstream hist(prefix + "_hist.csv");
  if (!hist) throw std::runtime_error("cannot write " + prefix + "_hist.csv");
  hist << "layer,bin_left,bin_right,count_all,count_never_flipped\n";
  for (const LayerFlipStats& s : stats.layers) {
    for (const HistogramRow& r : weight_histogram(s)) {
      hist << s.layer << "," << fmt_double(r.bin_left) << "," << fmt_double(r.bin_right)
           << "," << r.count_all << "," << r.count_never_flipped << "\n";
    }
  }

  std::ofstream epochs(prefix + "_epochs.csv");
  if (!epochs) throw std::runtime_error("cannot write " + prefix + "_epochs.csv");
  epochs << "layer,epoch,flip_rate,never_flipped_ratio\n";
  for (const LayerFlipStats& s : stats.layers) {
    for (size_t e = 0; e < s.epoch_flip_rate.size(); ++e) {
      epochs << s.layer << "," << e << "," << fmt_double(s.epoch_flip_rate[e]) << ","
             << fmt_double(s.epoch_never_flipped_ratio[e]) << "\n";
    }
  }
}

}  // namespace bnn
