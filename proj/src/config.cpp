#include "bnn/config.hpp"

#include <cstdlib>
#include <fstream>
#include <stdexcept>

namespace bnn {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (dataset.subset_fraction <= 0.0 || dataset.subset_fraction > 1.0) {
    throw std::invalid_argument("subset_fraction must be in (0,1]");
  }
  if (dataset.eval_subset_fraction <= 0.0 || dataset.eval_subset_fraction > 1.0) {
    throw std::invalid_argument("eval_subset_fraction must be in (0,1]");
  }
  if (scale_gamma <= 0.0) throw std::invalid_argument("scale_gamma must be > 0");
  (void)optim_kind_by_name(optimizer);
  optim.validate();
}

std::string TrainConfig::resolved_data_path() const {
  if (!dataset.path.empty()) return dataset.path;
  const char* root = std::getenv("BNNKIT_DATA");
  if (root != nullptr && *root != '\0') {
    return std::string(root) + "/" + dataset.name;
  }
  throw std::runtime_error("no dataset path: set dataset.path or $BNNKIT_DATA");
}

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

namespace {

OvswConfig optim_from_json(const nlohmann::json& j) {
  OvswConfig c;
  if (j.contains("preset")) {
    std::string preset = j.at("preset").get<std::string>();
    if (preset == "cifar") {
      c = cifar_recipe();
    } else if (preset == "imagenet") {
      c = imagenet_recipe();
    } else {
      throw std::invalid_argument("unknown optimizer preset: " + preset);
    }
  }
  if (j.contains("base_lr")) c.base_lr = j.at("base_lr").get<double>();
  if (j.contains("momentum")) c.momentum = j.at("momentum").get<double>();
  if (j.contains("weight_decay")) c.weight_decay = j.at("weight_decay").get<double>();
  if (j.contains("ags_lambda")) c.ags_lambda = j.at("ags_lambda").get<double>();
  if (j.contains("sad_sigma")) c.sad_sigma = j.at("sad_sigma").get<double>();
  if (j.contains("ema_momentum")) c.ema_momentum = j.at("ema_momentum").get<double>();
  if (j.contains("sad_penalty")) c.sad_penalty = j.at("sad_penalty").get<double>();
  if (j.contains("ags_enabled")) c.ags_enabled = j.at("ags_enabled").get<bool>();
  if (j.contains("sad_enabled")) c.sad_enabled = j.at("sad_enabled").get<bool>();
  if (j.contains("lars_eta")) c.lars_eta = j.at("lars_eta").get<double>();
  return c;
}

nlohmann::json optim_to_json(const OvswConfig& c) {
  return {{"base_lr", c.base_lr},         {"momentum", c.momentum},
          {"weight_decay", c.weight_decay}, {"ags_lambda", c.ags_lambda},
          {"sad_sigma", c.sad_sigma},     {"ema_momentum", c.ema_momentum},
          {"sad_penalty", c.sad_penalty}, {"ags_enabled", c.ags_enabled},
          {"sad_enabled", c.sad_enabled}, {"lars_eta", c.lars_eta}};
}

}  // namespace

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    if (d.contains("name")) c.dataset.name = d.at("name").get<std::string>();
    if (d.contains("path")) c.dataset.path = d.at("path").get<std::string>();
    if (d.contains("subset_fraction"))
      c.dataset.subset_fraction = d.at("subset_fraction").get<double>();
    if (d.contains("eval_subset_fraction"))
      c.dataset.eval_subset_fraction = d.at("eval_subset_fraction").get<double>();
    c.dataset.augment = d.value("augment", c.dataset.name == "cifar10");
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    if (m.contains("spec")) c.model = m.at("spec").get<std::string>();
    if (m.contains("scale_gamma")) c.scale_gamma = m.at("scale_gamma").get<double>();
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    if (t.contains("epochs")) c.epochs = t.at("epochs").get<int>();
    if (t.contains("batch_size")) c.batch_size = t.at("batch_size").get<int>();
    if (t.contains("seed")) c.seed = t.at("seed").get<uint64_t>();
    if (t.contains("output_dir")) c.output_dir = t.at("output_dir").get<std::string>();
    if (t.contains("checkpoint_every")) c.checkpoint_every = t.at("checkpoint_every").get<int>();
    if (t.contains("tracked_layers"))
      c.tracked_layers = t.at("tracked_layers").get<std::vector<std::string>>();
    if (t.contains("resume_from")) c.resume_from = t.at("resume_from").get<std::string>();
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    if (o.contains("kind")) c.optimizer = o.at("kind").get<std::string>();
    c.optim = optim_from_json(o);
  }
  c.validate();
  return c;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["dataset"] = {{"name", c.dataset.name},
                  {"path", c.dataset.path},
                  {"subset_fraction", c.dataset.subset_fraction},
                  {"eval_subset_fraction", c.dataset.eval_subset_fraction},
                  {"augment", c.dataset.augment}};
  j["model"] = {{"spec", c.model}, {"scale_gamma", c.scale_gamma}};
  j["train"] = {{"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"seed", c.seed},
                {"output_dir", c.output_dir},
                {"checkpoint_every", c.checkpoint_every},
                {"tracked_layers", c.tracked_layers},
                {"resume_from", c.resume_from}};
  j["optimizer"] = optim_to_json(c.optim);
  j["optimizer"]["kind"] = c.optimizer;
  return j;
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("--set wants key.path=value, got: " + assignment);
  }
  std::string path = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);

  nlohmann::json* node = &j;
  size_t start = 0;
  while (true) {
    size_t dot = path.find('.', start);
    std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw std::invalid_argument("--set: empty key segment in " + path);
    if (dot == std::string::npos) {
      nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
      (*node)[key] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace bnn
