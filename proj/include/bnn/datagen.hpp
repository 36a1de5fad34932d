#pragma once

#include <cstdint>
#include <string>

namespace bnn {

// Procedural 10-class datasets written in the canonical on-disk formats
// (MNIST IDX, CIFAR-10 binary batches) so the loaders and training recipes
// run unchanged where the real corpora are unavailable. Classes are built
// from class-indexed blob/bar/gradient/texture patterns with per-sample
// jitter and pixel noise; labels are round-robin so any prefix is balanced.
void write_synthetic_mnist(const std::string& dir, int64_t n_train, int64_t n_test,
                           uint64_t seed);
void write_synthetic_cifar10(const std::string& dir, int64_t n_train, int64_t n_test,
                             uint64_t seed);

}  // namespace bnn
