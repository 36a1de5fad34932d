#include "bnn/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace bnn {

static_assert(std::endian::native == std::endian::little,
              "container payloads are little-endian; big-endian hosts need swaps");

namespace {
constexpr char kMagic[4] = {'B', 'N', 'N', 'C'};
constexpr int kFormatVersion = 1;
}  // namespace

ContainerWriter::ContainerWriter(std::string kind) : kind_(std::move(kind)) {}

void ContainerWriter::set_meta(const nlohmann::json& meta) { meta_ = meta; }

void ContainerWriter::add_section(const std::string& name, const std::string& dtype,
                                  const std::vector<int64_t>& shape, const void* data,
                                  size_t byte_count, int64_t count,
                                  const nlohmann::json& extra) {
  nlohmann::json entry;
  entry["name"] = name;
  entry["dtype"] = dtype;
  entry["shape"] = shape;
  entry["offset"] = payload_.size();
  entry["count"] = count;
  if (!extra.is_null()) entry["extra"] = extra;
  manifest_.push_back(std::move(entry));
  const auto* p = static_cast<const uint8_t*>(data);
  payload_.insert(payload_.end(), p, p + byte_count);
}

void ContainerWriter::add_f32(const std::string& name, const std::vector<int64_t>& shape,
                              const float* data, int64_t count,
                              const nlohmann::json& extra) {
  add_section(name, "f32", shape, data, static_cast<size_t>(count) * 4, count, extra);
}

void ContainerWriter::add_f64(const std::string& name, const std::vector<int64_t>& shape,
                              const double* data, int64_t count,
                              const nlohmann::json& extra) {
  add_section(name, "f64", shape, data, static_cast<size_t>(count) * 8, count, extra);
}

void ContainerWriter::add_u64(const std::string& name, const std::vector<int64_t>& shape,
                              const uint64_t* data, int64_t count,
                              const nlohmann::json& extra) {
  add_section(name, "u64", shape, data, static_cast<size_t>(count) * 8, count, extra);
}

std::vector<uint8_t> ContainerWriter::bytes() const {
  nlohmann::json header;
  header["format_version"] = kFormatVersion;
  header["kind"] = kind_;
  header["meta"] = meta_;
  header["manifest"] = manifest_;
  std::string head = header.dump();

  std::vector<uint8_t> out;
  out.reserve(4 + 4 + head.size() + payload_.size());
  out.insert(out.end(), kMagic, kMagic + 4);
  uint32_t len = static_cast<uint32_t>(head.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(len >> (8 * i)));
  out.insert(out.end(), head.begin(), head.end());
  out.insert(out.end(), payload_.begin(), payload_.end());
  return out;
}

void ContainerWriter::write(const std::string& path) const {
  std::vector<uint8_t> data = bytes();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("short write: " + path);
}

ContainerReader ContainerReader::from_bytes(std::vector<uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw std::runtime_error("container: bad magic (expected BNNC)");
  }
  uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<uint32_t>(bytes[4 + size_t(i)]) << (8 * i);
  if (bytes.size() < 8 + static_cast<size_t>(len)) {
    throw std::runtime_error("container: truncated header");
  }
  nlohmann::json header = nlohmann::json::parse(
      bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(len));

  ContainerReader r;
  r.format_version_ = header.at("format_version").get<int>();
  if (r.format_version_ != kFormatVersion) {
    throw std::runtime_error("container: unsupported format_version " +
                             std::to_string(r.format_version_));
  }
  r.kind_ = header.at("kind").get<std::string>();
  r.meta_ = header.value("meta", nlohmann::json());
  for (const auto& e : header.at("manifest")) {
    ContainerSection s;
    s.dtype = e.at("dtype").get<std::string>();
    s.shape = e.at("shape").get<std::vector<int64_t>>();
    s.offset = e.at("offset").get<uint64_t>();
    s.count = e.at("count").get<int64_t>();
    if (e.contains("extra")) s.extra = e.at("extra");
    r.sections_.emplace_back(e.at("name").get<std::string>(), std::move(s));
  }
  r.payload_.assign(bytes.begin() + 8 + static_cast<std::ptrdiff_t>(len), bytes.end());

  for (const auto& [name, s] : r.sections_) {
    size_t width = s.dtype == "f32" ? 4 : 8;
    if (s.offset + static_cast<uint64_t>(s.count) * width > r.payload_.size()) {
      throw std::runtime_error("container: section " + name + " exceeds payload");
    }
  }
  return r;
}

ContainerReader ContainerReader::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return from_bytes(std::move(bytes));
}

bool ContainerReader::has(const std::string& name) const {
  for (const auto& [n, s] : sections_)
    if (n == name) return true;
  return false;
}

const ContainerSection& ContainerReader::section(const std::string& name) const {
  for (const auto& [n, s] : sections_)
    if (n == name) return s;
  throw std::runtime_error("container: missing section " + name);
}

std::vector<std::string> ContainerReader::section_names() const {
  std::vector<std::string> names;
  names.reserve(sections_.size());
  for (const auto& [n, s] : sections_) names.push_back(n);
  return names;
}

std::vector<float> ContainerReader::read_f32(const std::string& name) const {
  const ContainerSection& s = section(name);
  if (s.dtype != "f32") throw std::runtime_error(name + ": dtype " + s.dtype + " != f32");
  std::vector<float> out(static_cast<size_t>(s.count));
  std::memcpy(out.data(), payload_.data() + s.offset, out.size() * 4);
  return out;
}

std::vector<double> ContainerReader::read_f64(const std::string& name) const {
  const ContainerSection& s = section(name);
  if (s.dtype != "f64") throw std::runtime_error(name + ": dtype " + s.dtype + " != f64");
  std::vector<double> out(static_cast<size_t>(s.count));
  std::memcpy(out.data(), payload_.data() + s.offset, out.size() * 8);
  return out;
}

std::vector<uint64_t> ContainerReader::read_u64(const std::string& name) const {
  const ContainerSection& s = section(name);
  if (s.dtype != "u64") throw std::runtime_error(name + ": dtype " + s.dtype + " != u64");
  std::vector<uint64_t> out(static_cast<size_t>(s.count));
  std::memcpy(out.data(), payload_.data() + s.offset, out.size() * 8);
  return out;
}

Tensor ContainerReader::read_tensor(const std::string& name) const {
  const ContainerSection& s = section(name);
  return Tensor::from_data(s.shape, read_f32(name));
}

}  // namespace bnn
