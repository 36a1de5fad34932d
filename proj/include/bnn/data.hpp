#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bnn/tensor.hpp"

namespace bnn {

// Images kept as raw bytes; batches are normalized to float on the fly with
// the fixed per-channel constants below.
struct Dataset {
  int64_t count = 0;
  int64_t channels = 0, height = 0, width = 0;
  std::vector<uint8_t> pixels;  // count * channels * height * width
  std::vector<int> labels;
  std::vector<float> mean, stdev;  // per channel, applied as (p/255 - mean)/stdev

  int64_t image_size() const { return channels * height * width; }
};

// MNIST IDX files (raw or .gz): train-images-idx3-ubyte, train-labels-idx1-ubyte,
// t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte.
// Normalization: mean 0.1307, std 0.3081.
std::pair<Dataset, Dataset> load_mnist(const std::string& dir);

// CIFAR-10 binary batches: data_batch_1..5.bin and test_batch.bin, records of
// 1 label byte + 3072 pixel bytes (RGB planes).
// Normalization: mean {0.4914, 0.4822, 0.4465}, std {0.2470, 0.2435, 0.2616}.
std::pair<Dataset, Dataset> load_cifar10(const std::string& dir);

std::pair<Dataset, Dataset> load_dataset(const std::string& name, const std::string& dir);

// First-count slice (canonical files are class-interleaved, so prefixes stay
// balanced).
Dataset subset(const Dataset& d, int64_t count);

// Normalized NCHW batch for the given sample indices.
Tensor make_batch(const Dataset& d, const std::vector<int64_t>& indices);
std::vector<int> batch_labels(const Dataset& d, const std::vector<int64_t>& indices);

// Random crop with 4-pixel zero padding plus horizontal flip, applied to the
// raw bytes before normalization.
Tensor make_batch_augmented(const Dataset& d, const std::vector<int64_t>& indices,
                            Rng& rng);

}  // namespace bnn
