#include "bnn/checkpoint.hpp"

#include <stdexcept>

#include "bnn/container.hpp"

namespace bnn {

nlohmann::json model_spec_to_json(const ModelSpec& spec) {
  nlohmann::json j;
  j["name"] = spec.name;
  j["in_ch"] = spec.in_ch;
  j["image_hw"] = spec.image_hw;
  j["classes"] = spec.classes;
  j["first_out"] = spec.first_out;
  j["scale_gamma"] = spec.scale_gamma;
  j["blocks"] = nlohmann::json::array();
  for (const BlockSpec& b : spec.blocks) {
    j["blocks"].push_back({{"out_ch", b.out_ch}, {"stride", b.stride}, {"shortcut", b.shortcut}});
  }
  return j;
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec spec;
  spec.name = j.at("name").get<std::string>();
  spec.in_ch = j.at("in_ch").get<int64_t>();
  spec.image_hw = j.at("image_hw").get<int64_t>();
  spec.classes = j.at("classes").get<int64_t>();
  spec.first_out = j.at("first_out").get<int64_t>();
  spec.scale_gamma = j.value("scale_gamma", 1.0);
  for (const auto& b : j.at("blocks")) {
    spec.blocks.push_back({b.at("out_ch").get<int64_t>(), b.at("stride").get<int>(),
                           b.at("shortcut").get<bool>()});
  }
  return spec;
}

namespace {

void add_model_sections(ContainerWriter& w, Model& model) {
  for (const ParamRef& p : collect_state(model)) {
    w.add_f32(p.name, p.tensor->shape(), p.tensor->data(), p.tensor->numel());
  }
}

ContainerWriter make_writer(Model& model, const Optimizer* optim,
                            const nlohmann::json& meta) {
  ContainerWriter w("checkpoint");
  nlohmann::json m = meta;
  m["model_spec"] = model_spec_to_json(model.spec);
  if (optim != nullptr) {
    m["optim_kind"] = optim_kind_name(optim->kind());
  }
  w.set_meta(m);
  add_model_sections(w, model);
  if (optim != nullptr) {
    for (const ParamSlot& slot : optim->slots()) {
      w.add_f32("optim." + slot.name + ".v", slot.v.shape(), slot.v.data(),
                slot.v.numel());
      if (slot.kind == ParamKind::BinarizedWeight) {
        w.add_f64("optim." + slot.name + ".s", slot.prev_sign.shape(), slot.s.data(),
                  static_cast<int64_t>(slot.s.size()));
        w.add_f32("optim." + slot.name + ".prev_sign", slot.prev_sign.shape(),
                  slot.prev_sign.data(), slot.prev_sign.numel());
      }
    }
  }
  return w;
}

}  // namespace

std::vector<uint8_t> serialize_model(Model& model) {
  return make_writer(model, nullptr, nlohmann::json::object()).bytes();
}

void save_checkpoint(const std::string& path, Model& model, const Optimizer* optim,
                     const nlohmann::json& meta) {
  make_writer(model, optim, meta).write(path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  ContainerReader r = ContainerReader::from_file(path);
  if (r.kind() != "checkpoint") {
    throw std::runtime_error(path + ": container kind '" + r.kind() +
                             "' is not a checkpoint");
  }
  LoadedCheckpoint out;
  out.meta = r.meta();
  ModelSpec spec = model_spec_from_json(r.meta().at("model_spec"));
  Rng rng(0);  // shapes only; every tensor is overwritten below
  out.model = build_model(spec, rng);
  for (const ParamRef& p : collect_state(out.model)) {
    Tensor loaded = r.read_tensor(p.name);
    if (loaded.shape() != p.tensor->shape()) {
      throw std::runtime_error("checkpoint " + path + ": tensor " + p.name + " shape " +
                               shape_str(loaded.shape()) + " != model shape " +
                               shape_str(p.tensor->shape()));
    }
    *p.tensor = std::move(loaded);
  }
  if (r.meta().contains("optim_kind")) {
    out.has_optim = true;
    out.optim_kind = r.meta().at("optim_kind").get<std::string>();
    for (const std::string& name : r.section_names()) {
      if (name.rfind("optim.", 0) != 0) continue;
      std::string rest = name.substr(6);
      auto dot = rest.rfind('.');
      std::string slot = rest.substr(0, dot);
      std::string field = rest.substr(dot + 1);
      if (field == "v") {
        out.optim_v.emplace_back(slot, r.read_f32(name));
      } else if (field == "s") {
        out.optim_s.emplace_back(slot, r.read_f64(name));
      } else if (field == "prev_sign") {
        out.optim_prev_sign.emplace_back(slot, r.read_f32(name));
      }
    }
  }
  return out;
}

namespace {

template <typename T>
const std::vector<T>* find_named(const std::vector<std::pair<std::string, std::vector<T>>>& v,
                                 const std::string& name) {
  for (const auto& [n, data] : v)
    if (n == name) return &data;
  return nullptr;
}

}  // namespace

void restore_optimizer(Optimizer& optim, const LoadedCheckpoint& ckpt) {
  if (!ckpt.has_optim) throw std::runtime_error("checkpoint has no optimizer state");
  for (ParamSlot& slot : optim.slots()) {
    const auto* v = find_named(ckpt.optim_v, slot.name);
    if (v == nullptr || static_cast<int64_t>(v->size()) != slot.v.numel()) {
      throw std::runtime_error("optimizer state missing or mismatched for " + slot.name);
    }
    std::copy(v->begin(), v->end(), slot.v.data());
    if (slot.kind == ParamKind::BinarizedWeight) {
      const auto* s = find_named(ckpt.optim_s, slot.name);
      const auto* prev = find_named(ckpt.optim_prev_sign, slot.name);
      if (s == nullptr || prev == nullptr || s->size() != slot.s.size() ||
          static_cast<int64_t>(prev->size()) != slot.prev_sign.numel()) {
        throw std::runtime_error("flip state missing or mismatched for " + slot.name);
      }
      slot.s = *s;
      std::copy(prev->begin(), prev->end(), slot.prev_sign.data());
    }
  }
}

}  // namespace bnn
