#include "bnn/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "bnn/tensor.hpp"

namespace bnn {

namespace {

void write_be32(std::ofstream& out, uint32_t v) {
  uint8_t b[4] = {static_cast<uint8_t>(v >> 24), static_cast<uint8_t>(v >> 16),
                  static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint8_t clamp_u8(double v) {
  return static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
}

// --- MNIST-like digits: two class-positioned blobs plus an oriented bar ---

void render_mnist_sample(uint8_t* dst, int cls, Rng& rng) {
  constexpr int H = 28, W = 28;
  const double pi = std::numbers::pi;
  double amp = 160.0 * (0.8 + 0.4 * rng.uniform01());
  double dx = std::floor(rng.uniform01() * 7.0) - 3.0;
  double dy = std::floor(rng.uniform01() * 7.0) - 3.0;

  double b1x = 7.0 + 3.0 * (cls % 3) + dx, b1y = 7.0 + 3.0 * (cls / 3) + dy;
  double b2x = 20.0 - 2.0 * (cls % 4) + dx, b2y = 19.0 - 2.0 * (cls % 5) + dy;
  double theta = pi * cls / 10.0;
  double cx = 14.0 + dx, cy = 14.0 + dy;
  double nx = -std::sin(theta), ny = std::cos(theta);  // bar normal

  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double v = 0.0;
      double d1 = ((x - b1x) * (x - b1x) + (y - b1y) * (y - b1y)) / (2.0 * 2.2 * 2.2);
      double d2 = ((x - b2x) * (x - b2x) + (y - b2y) * (y - b2y)) / (2.0 * 2.8 * 2.8);
      v += amp * std::exp(-d1);
      v += 0.8 * amp * std::exp(-d2);
      double dist = std::abs((x - cx) * nx + (y - cy) * ny);
      if (dist < 1.6) v += 0.7 * amp * (1.0 - dist / 1.6);
      v += rng.normal() * 20.0;
      dst[y * W + x] = clamp_u8(v);
    }
  }
}

// --- CIFAR-like scenes: color gradient + sinusoid texture + a shape ---

struct Rgb {
  double r, g, b;
};

Rgb palette(int i) {
  static const Rgb table[10] = {
      {200, 60, 60},  {60, 200, 60},  {60, 60, 200},  {200, 200, 60}, {200, 60, 200},
      {60, 200, 200}, {230, 140, 40}, {140, 40, 230}, {40, 230, 140}, {180, 180, 180},
  };
  return table[i % 10];
}

void render_cifar_sample(uint8_t* dst, int cls, Rng& rng) {
  constexpr int H = 32, W = 32;
  const double pi = std::numbers::pi;
  double jitter = 0.85 + 0.3 * rng.uniform01();
  double dx = std::floor(rng.uniform01() * 9.0) - 4.0;
  double dy = std::floor(rng.uniform01() * 9.0) - 4.0;
  bool flip = rng.uniform01() < 0.5;

  double phi = 2.0 * pi * cls / 10.0;
  Rgb ca = palette(cls), cb = palette((cls + 3) % 10), cs = palette((cls + 5) % 10);
  double freq = 2.0 + (cls % 4);
  double psi = pi * cls / 5.0;
  double sx0 = 10.0 + 4.0 * (cls % 3) + dx;
  double sy0 = 10.0 + 4.0 * (cls % 4) + dy;
  double radius = 5.0 + (cls % 3) + rng.uniform01() * 1.5;

  for (int y = 0; y < H; ++y) {
    for (int x0 = 0; x0 < W; ++x0) {
      int x = flip ? W - 1 - x0 : x0;
      // gradient coordinate in [0,1] along the class direction
      double t = ((x * std::cos(phi) + y * std::sin(phi)) / (W * 1.4142)) + 0.5;
      t = std::clamp(t, 0.0, 1.0);
      double r = ca.r + (cb.r - ca.r) * t;
      double g = ca.g + (cb.g - ca.g) * t;
      double b = ca.b + (cb.b - ca.b) * t;
      double tex = std::sin(2.0 * pi * freq *
                            (x * std::cos(psi) + y * std::sin(psi)) / W);
      double texv = 38.0 * tex;
      switch (cls % 3) {
        case 0: r += texv; break;
        case 1: g += texv; break;
        default: b += texv; break;
      }
      double ddx = x - sx0, ddy = y - sy0;
      bool inside;
      if (cls % 2 == 0) {
        inside = ddx * ddx + ddy * ddy < radius * radius;
      } else {
        inside = std::abs(ddx) < radius * 0.9 && std::abs(ddy) < radius * 0.9;
      }
      if (inside) {
        r = 0.35 * r + 0.65 * cs.r;
        g = 0.35 * g + 0.65 * cs.g;
        b = 0.35 * b + 0.65 * cs.b;
      }
      double noise_r = rng.normal() * 26.0;
      double noise_g = rng.normal() * 26.0;
      double noise_b = rng.normal() * 26.0;
      dst[0 * H * W + y * W + x0] = clamp_u8(r * jitter + noise_r);
      dst[1 * H * W + y * W + x0] = clamp_u8(g * jitter + noise_g);
      dst[2 * H * W + y * W + x0] = clamp_u8(b * jitter + noise_b);
    }
  }
}

void write_idx_pair(const std::string& dir, const std::string& images_name,
                    const std::string& labels_name, int64_t n, uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::ofstream img(dir + "/" + images_name, std::ios::binary);
  std::ofstream lbl(dir + "/" + labels_name, std::ios::binary);
  if (!img || !lbl) throw std::runtime_error("cannot write dataset files in " + dir);
  write_be32(img, 0x00000803);
  write_be32(img, static_cast<uint32_t>(n));
  write_be32(img, 28);
  write_be32(img, 28);
  write_be32(lbl, 0x00000801);
  write_be32(lbl, static_cast<uint32_t>(n));
  Rng rng(seed);
  std::vector<uint8_t> buf(28 * 28);
  for (int64_t i = 0; i < n; ++i) {
    int cls = static_cast<int>(i % 10);
    render_mnist_sample(buf.data(), cls, rng);
    img.write(reinterpret_cast<const char*>(buf.data()), 28 * 28);
    lbl.put(static_cast<char>(cls));
  }
}

void write_cifar_file(const std::string& path, int64_t n, int64_t label_offset,
                      Rng& rng) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  std::vector<uint8_t> buf(3 * 32 * 32);
  for (int64_t i = 0; i < n; ++i) {
    int cls = static_cast<int>((label_offset + i) % 10);
    render_cifar_sample(buf.data(), cls, rng);
    out.put(static_cast<char>(cls));
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  }
}

}  // namespace

void write_synthetic_mnist(const std::string& dir, int64_t n_train, int64_t n_test,
                           uint64_t seed) {
  write_idx_pair(dir, "train-images-idx3-ubyte", "train-labels-idx1-ubyte", n_train, seed);
  write_idx_pair(dir, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", n_test,
                 seed + 0x9E37);
}

void write_synthetic_cifar10(const std::string& dir, int64_t n_train, int64_t n_test,
                             uint64_t seed) {
  std::filesystem::create_directories(dir);
  Rng train_rng(seed);
  int64_t per = n_train / 5;
  int64_t done = 0;
  for (int i = 1; i <= 5; ++i) {
    int64_t n = i == 5 ? n_train - done : per;
    write_cifar_file(dir + "/data_batch_" + std::to_string(i) + ".bin", n, done, train_rng);
    done += n;
  }
  Rng test_rng(seed + 0x51F7);
  write_cifar_file(dir + "/test_batch.bin", n_test, 0, test_rng);
}

}  // namespace bnn
