#pragma once

#include <map>
#include <string>
#include <vector>

#include "bnn/config.hpp"
#include "bnn/data.hpp"
#include "bnn/fliptrack.hpp"
#include "bnn/network.hpp"

namespace bnn {

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0, train_acc = 0.0, test_acc = 0.0;
  double lr = 0.0;            // learning rate at the first step of the epoch
  double wall_seconds = 0.0;  // excluded from determinism comparisons
};

struct RunMetrics {
  std::vector<EpochMetrics> epochs;
  std::map<std::string, double> final_never_flipped_ratio;
  std::map<std::string, double> mean_epoch_flip_rate;
  std::string final_checkpoint;
  int64_t total_steps = 0;
};

// Runs the full recipe: shuffled minibatch SGD with the configured optimizer,
// per-epoch metrics CSV, flip CSVs, and checkpoints under output_dir.
// Everything except wall_seconds is a pure function of (config, seed).
RunMetrics train(const TrainConfig& config);

// Top-1 accuracy of a model over the first `limit` samples (-1: all).
double evaluate(Model& model, const Dataset& data, int batch_size, int64_t limit = -1);

// Loads the checkpoint and scores it on the dataset named by the config,
// honoring eval_subset_fraction.
double evaluate_checkpoint(const std::string& checkpoint_path, const TrainConfig& config);

// Layer name tracked by default: the deepest binarized block.
std::string deepest_block_name(const ModelSpec& spec);

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& rows);

}  // namespace bnn
