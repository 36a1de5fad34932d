#include "bnn/data.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace bnn {

namespace {

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
}

std::vector<uint8_t> read_gzip_bytes(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) throw std::runtime_error("cannot open: " + path);
  std::vector<uint8_t> out;
  uint8_t buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof(buf))) > 0) {
    out.insert(out.end(), buf, buf + n);
  }
  bool ok = n == 0;
  gzclose(f);
  if (!ok) throw std::runtime_error("gzip decode failed: " + path);
  return out;
}

// Accepts either the raw file or a .gz sibling.
std::vector<uint8_t> read_maybe_gz(const std::string& path) {
  namespace fs = std::filesystem;
  if (fs::exists(path)) {
    std::vector<uint8_t> bytes = read_file_bytes(path);
    if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) {
      return read_gzip_bytes(path);  // gzip content without the extension
    }
    return bytes;
  }
  if (fs::exists(path + ".gz")) return read_gzip_bytes(path + ".gz");
  throw std::runtime_error("dataset file not found: " + path + " (or .gz)");
}

uint32_t read_be32(const std::vector<uint8_t>& b, size_t off, const std::string& path) {
  if (off + 4 > b.size()) {
    throw std::runtime_error(path + ": truncated (wanted 4 bytes at offset " +
                             std::to_string(off) + ", file has " +
                             std::to_string(b.size()) + ")");
  }
  return (uint32_t(b[off]) << 24) | (uint32_t(b[off + 1]) << 16) |
         (uint32_t(b[off + 2]) << 8) | uint32_t(b[off + 3]);
}

char hexdig(uint32_t v) { return "0123456789abcdef"[v & 0xf]; }

std::string hex32(uint32_t v) {
  std::string s = "0x";
  for (int i = 7; i >= 0; --i) s += hexdig(v >> (4 * i));
  return s;
}

void check_magic(uint32_t got, uint32_t want, const std::string& path) {
  if (got != want) {
    throw std::runtime_error(path + ": magic-number mismatch, expected " + hex32(want) +
                             ", got " + hex32(got));
  }
}

std::vector<uint8_t> load_idx_images(const std::string& path, int64_t& count,
                                     int64_t& rows, int64_t& cols) {
  std::vector<uint8_t> b = read_maybe_gz(path);
  check_magic(read_be32(b, 0, path), 0x00000803, path);
  count = read_be32(b, 4, path);
  rows = read_be32(b, 8, path);
  cols = read_be32(b, 12, path);
  size_t want = 16 + static_cast<size_t>(count) * rows * cols;
  if (b.size() < want) {
    throw std::runtime_error(path + ": truncated, header promises " +
                             std::to_string(want) + " bytes, file has " +
                             std::to_string(b.size()));
  }
  return std::vector<uint8_t>(b.begin() + 16, b.begin() + static_cast<std::ptrdiff_t>(want));
}

std::vector<int> load_idx_labels(const std::string& path, int64_t expect_count) {
  std::vector<uint8_t> b = read_maybe_gz(path);
  check_magic(read_be32(b, 0, path), 0x00000801, path);
  int64_t count = read_be32(b, 4, path);
  if (count != expect_count) {
    throw std::runtime_error(path + ": " + std::to_string(count) + " labels for " +
                             std::to_string(expect_count) + " images");
  }
  if (b.size() < 8 + static_cast<size_t>(count)) {
    throw std::runtime_error(path + ": truncated label payload");
  }
  std::vector<int> labels(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) {
    labels[static_cast<size_t>(i)] = b[8 + static_cast<size_t>(i)];
  }
  return labels;
}

Dataset load_mnist_split(const std::string& dir, const std::string& images,
                         const std::string& labels) {
  Dataset d;
  int64_t rows = 0, cols = 0;
  d.pixels = load_idx_images(dir + "/" + images, d.count, rows, cols);
  d.labels = load_idx_labels(dir + "/" + labels, d.count);
  d.channels = 1;
  d.height = rows;
  d.width = cols;
  d.mean = {0.1307f};
  d.stdev = {0.3081f};
  return d;
}

constexpr int64_t kCifarRecord = 3073;  // label + 3*32*32

Dataset load_cifar_files(const std::vector<std::string>& paths) {
  Dataset d;
  d.channels = 3;
  d.height = 32;
  d.width = 32;
  d.mean = {0.4914f, 0.4822f, 0.4465f};
  d.stdev = {0.2470f, 0.2435f, 0.2616f};
  for (const std::string& path : paths) {
    std::vector<uint8_t> b = read_maybe_gz(path);
    if (b.empty() || b.size() % kCifarRecord != 0) {
      throw std::runtime_error(path + ": size " + std::to_string(b.size()) +
                               " is not a multiple of the 3073-byte record");
    }
    int64_t n = static_cast<int64_t>(b.size()) / kCifarRecord;
    for (int64_t i = 0; i < n; ++i) {
      const uint8_t* rec = b.data() + i * kCifarRecord;
      if (rec[0] > 9) {
        throw std::runtime_error(path + ": label " + std::to_string(rec[0]) +
                                 " out of range at record " + std::to_string(i));
      }
      d.labels.push_back(rec[0]);
      d.pixels.insert(d.pixels.end(), rec + 1, rec + kCifarRecord);
    }
    d.count += n;
  }
  return d;
}

}  // namespace

std::pair<Dataset, Dataset> load_mnist(const std::string& dir) {
  Dataset train = load_mnist_split(dir, "train-images-idx3-ubyte", "train-labels-idx1-ubyte");
  Dataset test = load_mnist_split(dir, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte");
  return {std::move(train), std::move(test)};
}

std::pair<Dataset, Dataset> load_cifar10(const std::string& dir) {
  std::vector<std::string> train_paths;
  for (int i = 1; i <= 5; ++i) {
    train_paths.push_back(dir + "/data_batch_" + std::to_string(i) + ".bin");
  }
  Dataset train = load_cifar_files(train_paths);
  Dataset test = load_cifar_files({dir + "/test_batch.bin"});
  return {std::move(train), std::move(test)};
}

std::pair<Dataset, Dataset> load_dataset(const std::string& name, const std::string& dir) {
  if (name == "mnist") return load_mnist(dir);
  if (name == "cifar10") return load_cifar10(dir);
  throw std::invalid_argument("unknown dataset: " + name);
}

Dataset subset(const Dataset& d, int64_t count) {
  if (count < 0 || count > d.count) {
    throw std::invalid_argument("subset of " + std::to_string(count) + " from " +
                                std::to_string(d.count));
  }
  Dataset out = d;
  out.count = count;
  out.pixels.resize(static_cast<size_t>(count * d.image_size()));
  out.labels.resize(static_cast<size_t>(count));
  return out;
}

Tensor make_batch(const Dataset& d, const std::vector<int64_t>& indices) {
  int64_t n = static_cast<int64_t>(indices.size());
  Tensor batch({n, d.channels, d.height, d.width});
  int64_t plane = d.height * d.width;
  for (int64_t b = 0; b < n; ++b) {
    int64_t idx = indices[static_cast<size_t>(b)];
    const uint8_t* src = d.pixels.data() + idx * d.image_size();
    for (int64_t c = 0; c < d.channels; ++c) {
      float mean = d.mean[static_cast<size_t>(c)];
      float inv_std = 1.0f / d.stdev[static_cast<size_t>(c)];
      float* dst = batch.data() + (b * d.channels + c) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        dst[i] = (static_cast<float>(src[c * plane + i]) / 255.0f - mean) * inv_std;
      }
    }
  }
  return batch;
}

std::vector<int> batch_labels(const Dataset& d, const std::vector<int64_t>& indices) {
  std::vector<int> out(indices.size());
  for (size_t i = 0; i < indices.size(); ++i) {
    out[i] = d.labels[static_cast<size_t>(indices[i])];
  }
  return out;
}

Tensor make_batch_augmented(const Dataset& d, const std::vector<int64_t>& indices,
                            Rng& rng) {
  const int pad = 4;
  int64_t n = static_cast<int64_t>(indices.size());
  Tensor batch({n, d.channels, d.height, d.width});
  int64_t plane = d.height * d.width;
  for (int64_t b = 0; b < n; ++b) {
    int64_t idx = indices[static_cast<size_t>(b)];
    const uint8_t* src = d.pixels.data() + idx * d.image_size();
    // crop offset in the zero-padded frame, then optional horizontal flip
    int off_y = static_cast<int>(rng.uniform01() * (2 * pad + 1));
    int off_x = static_cast<int>(rng.uniform01() * (2 * pad + 1));
    bool flip = rng.uniform01() < 0.5;
    for (int64_t c = 0; c < d.channels; ++c) {
      float mean = d.mean[static_cast<size_t>(c)];
      float inv_std = 1.0f / d.stdev[static_cast<size_t>(c)];
      float* dst = batch.data() + (b * d.channels + c) * plane;
      for (int64_t y = 0; y < d.height; ++y) {
        for (int64_t x = 0; x < d.width; ++x) {
          int64_t sy = y + off_y - pad;
          int64_t sx = (flip ? d.width - 1 - x : x) + off_x - pad;
          float v = 0.0f;
          if (sy >= 0 && sy < d.height && sx >= 0 && sx < d.width) {
            v = static_cast<float>(src[c * plane + sy * d.width + sx]) / 255.0f;
          }
          dst[y * d.width + x] = (v - mean) * inv_std;
        }
      }
    }
  }
  return batch;
}

}  // namespace bnn
