#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "bnn/optim.hpp"

namespace bnn {

struct DatasetConfig {
  std::string name = "mnist";  // mnist | cifar10
  std::string path;            // falls back to $BNNKIT_DATA/<name>
  double subset_fraction = 1.0;
  double eval_subset_fraction = 1.0;
  bool augment = false;  // random crop (pad 4) + horizontal flip
};

struct TrainConfig {
  DatasetConfig dataset;
  std::string model = "toyconvnet";
  double scale_gamma = 1.0;
  int epochs = 20;
  int batch_size = 128;
  uint64_t seed = 1;
  std::string optimizer = "ovsw";  // ovsw | vanilla | lars
  OvswConfig optim;                // total_steps is filled in by train()
  std::string output_dir = "runs/out";
  std::vector<std::string> tracked_layers;  // empty: deepest binarized block
  int checkpoint_every = 0;                 // epochs between checkpoints; 0 = final only
  std::string resume_from;

  void validate() const;
  std::string resolved_data_path() const;
};

nlohmann::json load_json_file(const std::string& path);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& c);

// Applies one "dotted.path=value" override; the value parses as JSON when it
// can, else as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

}  // namespace bnn
