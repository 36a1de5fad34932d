#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bnn/network.hpp"
#include "bnn/optim.hpp"

namespace bnn {

nlohmann::json model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

// Checkpoint container: JSON header with the model spec and tensor manifest,
// followed by little-endian payloads in manifest order. Optimizer state
// (V, S, prev_sign per slot) rides along so training resumes bit-exactly.
std::vector<uint8_t> serialize_model(Model& model);
void save_checkpoint(const std::string& path, Model& model, const Optimizer* optim,
                     const nlohmann::json& meta);

struct LoadedCheckpoint {
  Model model;
  nlohmann::json meta;
  bool has_optim = false;
  std::string optim_kind;
  // Optimizer arrays keyed by slot (parameter) name.
  std::vector<std::pair<std::string, std::vector<float>>> optim_v;
  std::vector<std::pair<std::string, std::vector<double>>> optim_s;
  std::vector<std::pair<std::string, std::vector<float>>> optim_prev_sign;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Copies saved V/S/prev_sign into a freshly built optimizer.
void restore_optimizer(Optimizer& optim, const LoadedCheckpoint& ckpt);

}  // namespace bnn
