#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "bnn/tensor.hpp"

namespace bnn {

// Binary container shared by checkpoints and packed models:
//   "BNNC" | u32 LE header length | JSON header | raw payload
// The header carries format_version, a kind tag, free-form meta, and a
// manifest of named sections (dtype f32/f64/u64, logical shape, byte offset
// into the payload). Payload scalars are little-endian.
class ContainerWriter {
 public:
  explicit ContainerWriter(std::string kind);

  void set_meta(const nlohmann::json& meta);
  void add_f32(const std::string& name, const std::vector<int64_t>& shape,
               const float* data, int64_t count,
               const nlohmann::json& extra = nlohmann::json());
  void add_f64(const std::string& name, const std::vector<int64_t>& shape,
               const double* data, int64_t count,
               const nlohmann::json& extra = nlohmann::json());
  void add_u64(const std::string& name, const std::vector<int64_t>& shape,
               const uint64_t* data, int64_t count,
               const nlohmann::json& extra = nlohmann::json());

  std::vector<uint8_t> bytes() const;
  void write(const std::string& path) const;

 private:
  void add_section(const std::string& name, const std::string& dtype,
                   const std::vector<int64_t>& shape, const void* data,
                   size_t byte_count, int64_t count, const nlohmann::json& extra);

  std::string kind_;
  nlohmann::json meta_;
  nlohmann::json manifest_ = nlohmann::json::array();
  std::vector<uint8_t> payload_;
};

struct ContainerSection {
  std::string dtype;
  std::vector<int64_t> shape;
  uint64_t offset = 0;
  int64_t count = 0;
  nlohmann::json extra;
};

class ContainerReader {
 public:
  static ContainerReader from_bytes(std::vector<uint8_t> bytes);
  static ContainerReader from_file(const std::string& path);

  const std::string& kind() const { return kind_; }
  int format_version() const { return format_version_; }
  const nlohmann::json& meta() const { return meta_; }

  bool has(const std::string& name) const;
  const ContainerSection& section(const std::string& name) const;
  std::vector<std::string> section_names() const;  // manifest order

  std::vector<float> read_f32(const std::string& name) const;
  std::vector<double> read_f64(const std::string& name) const;
  std::vector<uint64_t> read_u64(const std::string& name) const;
  Tensor read_tensor(const std::string& name) const;

 private:
  std::string kind_;
  int format_version_ = 0;
  nlohmann::json meta_;
  std::vector<std::pair<std::string, ContainerSection>> sections_;
  std::vector<uint8_t> payload_;
};

}  // namespace bnn
