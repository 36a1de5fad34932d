#include "bnn/bitpack.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "bnn/checkpoint.hpp"
#include "bnn/container.hpp"

namespace bnn {

PackedTensor pack(const Tensor& x) {
  PackedTensor p;
  p.logical_shape = x.shape();
  p.rows = x.ndim() <= 1 ? (x.numel() > 0 ? 1 : 0) : x.dim(0);
  p.n_valid = p.rows > 0 ? x.numel() / p.rows : 0;
  p.words_per_row = (p.n_valid + 63) / 64;
  p.words.assign(static_cast<size_t>(p.rows * p.words_per_row), 0);
  for (int64_t r = 0; r < p.rows; ++r) {
    uint64_t* row = p.words.data() + r * p.words_per_row;
    const float* src = x.data() + r * p.n_valid;
    for (int64_t i = 0; i < p.n_valid; ++i) {
      if (src[i] >= 0.0f) row[i >> 6] |= uint64_t{1} << (i & 63);
    }
  }
  return p;
}

Tensor unpack(const PackedTensor& p) {
  Tensor t(p.logical_shape);
  for (int64_t r = 0; r < p.rows; ++r) {
    const uint64_t* row = p.row(r);
    float* dst = t.data() + r * p.n_valid;
    for (int64_t i = 0; i < p.n_valid; ++i) {
      dst[i] = (row[i >> 6] >> (i & 63)) & 1 ? 1.0f : -1.0f;
    }
  }
  return t;
}

int popcount64_portable(uint64_t v) {
  v = v - ((v >> 1) & 0x5555555555555555ULL);
  v = (v & 0x3333333333333333ULL) + ((v >> 2) & 0x3333333333333333ULL);
  v = (v + (v >> 4)) & 0x0F0F0F0F0F0F0F0FULL;
  return static_cast<int>((v * 0x0101010101010101ULL) >> 56);
}

int64_t xnor_popcount_dot(const uint64_t* a, const uint64_t* b, int64_t n_valid) {
  int64_t words = (n_valid + 63) / 64;
  int64_t matches = 0;
  for (int64_t w = 0; w < words; ++w) {
    uint64_t agree = ~(a[w] ^ b[w]);
    if (w + 1 == words && (n_valid & 63) != 0) {
      agree &= (uint64_t{1} << (n_valid & 63)) - 1;
    }
    matches += std::popcount(agree);
  }
  return 2 * matches - n_valid;
}

int64_t xnor_popcount_dot(const PackedTensor& a, int64_t a_row, const PackedTensor& b,
                          int64_t b_row) {
  if (a.n_valid != b.n_valid) {
    throw std::invalid_argument("xnor_popcount_dot: n_valid " +
                                std::to_string(a.n_valid) + " vs " +
                                std::to_string(b.n_valid));
  }
  return xnor_popcount_dot(a.row(a_row), b.row(b_row), a.n_valid);
}

FoldedAffine fold_bn(const Tensor& alpha, const Tensor& bn_gamma, const Tensor& bn_beta,
                     const Tensor& running_mean, const Tensor& running_var, float eps) {
  int64_t ch = alpha.numel();
  FoldedAffine f;
  f.scale.resize(static_cast<size_t>(ch));
  f.bias.resize(static_cast<size_t>(ch));
  for (int64_t c = 0; c < ch; ++c) {
    double inv_std = 1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps);
    f.scale[static_cast<size_t>(c)] =
        static_cast<float>(bn_gamma[c] * alpha[c] * inv_std);
    f.bias[static_cast<size_t>(c)] =
        static_cast<float>(bn_beta[c] - bn_gamma[c] * running_mean[c] * inv_std);
  }
  return f;
}

PackedModel pack_model(const Model& model) {
  PackedModel pm;
  pm.spec = model.spec;
  pm.first_w = model.first.W;
  Tensor ones = Tensor::full({model.spec.first_out}, 1.0f);
  pm.first_affine = fold_bn(ones, model.first.bn_gamma, model.first.bn_beta,
                            model.first.bn_running_mean, model.first.bn_running_var,
                            model.first.bn_eps);
  for (const LayerState& b : model.blocks) {
    PackedBlock pb;
    pb.w = pack(b.W);
    pb.affine = fold_bn(b.alpha, b.bn_gamma, b.bn_beta, b.bn_running_mean,
                        b.bn_running_var, b.bn_eps);
    pb.in_ch = b.W.dim(1);
    pb.out_ch = b.W.dim(0);
    pb.stride = b.stride;
    pb.shortcut = b.shortcut;
    pm.blocks.push_back(std::move(pb));
  }
  pm.fc_w = model.fc.W;
  pm.fc_b = model.fc.b;
  return pm;
}

namespace {

void apply_affine(Tensor& x, const FoldedAffine& f) {
  int64_t ch = x.dim(1), spatial = x.dim(2) * x.dim(3);
  for (int64_t b = 0; b < x.dim(0); ++b)
    for (int64_t c = 0; c < ch; ++c) {
      float s = f.scale[static_cast<size_t>(c)];
      float t = f.bias[static_cast<size_t>(c)];
      float* p = x.data() + (b * ch + c) * spatial;
      for (int64_t i = 0; i < spatial; ++i) p[i] = s * p[i] + t;
    }
}

// Packs sign(a) patches for a 3x3-style conv, out-of-bounds taps set (+1).
// Row bit order matches pack(): (c, ky, kx) flattened.
PackedTensor pack_patches(const Tensor& a, int64_t k_h, int64_t k_w, int stride,
                          int pad) {
  int64_t batch = a.dim(0), ch = a.dim(1), in_h = a.dim(2), in_w = a.dim(3);
  int64_t out_h = (in_h + 2 * pad - k_h) / stride + 1;
  int64_t out_w = (in_w + 2 * pad - k_w) / stride + 1;
  PackedTensor p;
  p.logical_shape = {batch * out_h * out_w, ch * k_h * k_w};
  p.rows = batch * out_h * out_w;
  p.n_valid = ch * k_h * k_w;
  p.words_per_row = (p.n_valid + 63) / 64;
  p.words.assign(static_cast<size_t>(p.rows * p.words_per_row), 0);
  int64_t r = 0;
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t oy = 0; oy < out_h; ++oy) {
      for (int64_t ox = 0; ox < out_w; ++ox, ++r) {
        uint64_t* row = p.words.data() + r * p.words_per_row;
        int64_t iy0 = oy * stride - pad;
        int64_t ix0 = ox * stride - pad;
        int64_t bit = 0;
        for (int64_t c = 0; c < ch; ++c) {
          for (int64_t ky = 0; ky < k_h; ++ky) {
            int64_t iy = iy0 + ky;
            for (int64_t kx = 0; kx < k_w; ++kx, ++bit) {
              int64_t ix = ix0 + kx;
              bool plus;
              if (iy < 0 || iy >= in_h || ix < 0 || ix >= in_w) {
                plus = true;  // padding binarizes to +1
              } else {
                plus = a.at4(b, c, iy, ix) >= 0.0f;
              }
              if (plus) row[bit >> 6] |= uint64_t{1} << (bit & 63);
            }
          }
        }
      }
    }
  }
  return p;
}

}  // namespace

Tensor packed_infer(const PackedModel& pm, const Tensor& images) {
  if (images.ndim() != 4 || images.dim(1) != pm.spec.in_ch ||
      images.dim(2) != pm.spec.image_hw || images.dim(3) != pm.spec.image_hw) {
    throw std::invalid_argument("packed_infer: input " + shape_str(images.shape()) +
                                " does not match model spec " + pm.spec.name);
  }
  Tensor a = conv2d_forward(images, pm.first_w, 1,
                            static_cast<int>((pm.first_w.dim(2) - 1) / 2));
  apply_affine(a, pm.first_affine);

  for (const PackedBlock& blk : pm.blocks) {
    int64_t k_h = blk.w.logical_shape[2], k_w = blk.w.logical_shape[3];
    int pad = static_cast<int>((k_h - 1) / 2);
    int64_t batch = a.dim(0), in_h = a.dim(2), in_w = a.dim(3);
    int64_t out_h = (in_h + 2 * pad - k_h) / blk.stride + 1;
    int64_t out_w = (in_w + 2 * pad - k_w) / blk.stride + 1;
    PackedTensor patches = pack_patches(a, k_h, k_w, blk.stride, pad);
    Tensor y({batch, blk.out_ch, out_h, out_w});
    int64_t positions = out_h * out_w;
    for (int64_t b = 0; b < batch; ++b) {
      for (int64_t c = 0; c < blk.out_ch; ++c) {
        float s = blk.affine.scale[static_cast<size_t>(c)];
        float t = blk.affine.bias[static_cast<size_t>(c)];
        float* out = y.data() + (b * blk.out_ch + c) * positions;
        for (int64_t pos = 0; pos < positions; ++pos) {
          int64_t dot = xnor_popcount_dot(patches, b * positions + pos, blk.w, c);
          out[pos] = s * static_cast<float>(dot) + t;
        }
      }
    }
    if (blk.shortcut) add_inplace(y, shortcut_project(a, blk.stride, blk.out_ch));
    a = std::move(y);
  }

  // Global average pool + classifier.
  int64_t batch = a.dim(0), feat = a.dim(1), spatial = a.dim(2) * a.dim(3);
  Tensor pooled({batch, feat});
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t c = 0; c < feat; ++c) {
      double acc = 0.0;
      const float* p = a.data() + (b * feat + c) * spatial;
      for (int64_t i = 0; i < spatial; ++i) acc += p[i];
      pooled[b * feat + c] = static_cast<float>(acc / spatial);
    }
  Tensor logits({batch, pm.spec.classes});
  gemm(false, true, batch, pm.spec.classes, feat, pooled.data(), feat, pm.fc_w.data(),
       feat, logits.data(), pm.spec.classes);
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t c = 0; c < pm.spec.classes; ++c)
      logits[b * pm.spec.classes + c] += pm.fc_b[c];
  return logits;
}

namespace {

nlohmann::json packed_extra(const PackedTensor& p) {
  return {{"rows", p.rows}, {"n_valid", p.n_valid}, {"words_per_row", p.words_per_row}};
}

void add_affine(ContainerWriter& w, const std::string& base, const FoldedAffine& f) {
  int64_t n = static_cast<int64_t>(f.scale.size());
  w.add_f32(base + ".scale", {n}, f.scale.data(), n);
  w.add_f32(base + ".bias", {n}, f.bias.data(), n);
}

FoldedAffine read_affine(const ContainerReader& r, const std::string& base) {
  FoldedAffine f;
  f.scale = r.read_f32(base + ".scale");
  f.bias = r.read_f32(base + ".bias");
  return f;
}

}  // namespace

std::vector<uint8_t> export_packed(const PackedModel& pm) {
  ContainerWriter w("packed_model");
  nlohmann::json meta;
  meta["model_spec"] = model_spec_to_json(pm.spec);
  meta["packed_format_version"] = pm.format_version;
  nlohmann::json blocks = nlohmann::json::array();
  for (const PackedBlock& b : pm.blocks) {
    blocks.push_back({{"in_ch", b.in_ch},
                      {"out_ch", b.out_ch},
                      {"stride", b.stride},
                      {"shortcut", b.shortcut}});
  }
  meta["blocks"] = blocks;
  w.set_meta(meta);

  w.add_f32("first.W", pm.first_w.shape(), pm.first_w.data(), pm.first_w.numel());
  add_affine(w, "first.affine", pm.first_affine);
  for (size_t i = 0; i < pm.blocks.size(); ++i) {
    const PackedBlock& b = pm.blocks[i];
    std::string base = "block" + std::to_string(i);
    w.add_u64(base + ".W.words", b.w.logical_shape, b.w.words.data(),
              static_cast<int64_t>(b.w.words.size()), packed_extra(b.w));
    add_affine(w, base + ".affine", b.affine);
  }
  w.add_f32("fc.W", pm.fc_w.shape(), pm.fc_w.data(), pm.fc_w.numel());
  w.add_f32("fc.b", pm.fc_b.shape(), pm.fc_b.data(), pm.fc_b.numel());
  return w.bytes();
}

PackedModel import_packed(const std::vector<uint8_t>& bytes) {
  ContainerReader r = ContainerReader::from_bytes(bytes);
  if (r.kind() != "packed_model") {
    throw std::runtime_error("container kind '" + r.kind() + "' is not a packed model");
  }
  PackedModel pm;
  pm.format_version = r.meta().at("packed_format_version").get<int>();
  pm.spec = model_spec_from_json(r.meta().at("model_spec"));
  pm.first_w = r.read_tensor("first.W");
  pm.first_affine = read_affine(r, "first.affine");
  const auto& blocks_meta = r.meta().at("blocks");
  for (size_t i = 0; i < blocks_meta.size(); ++i) {
    std::string base = "block" + std::to_string(i);
    PackedBlock b;
    const ContainerSection& sec = r.section(base + ".W.words");
    b.w.logical_shape = sec.shape;
    b.w.rows = sec.extra.at("rows").get<int64_t>();
    b.w.n_valid = sec.extra.at("n_valid").get<int64_t>();
    b.w.words_per_row = sec.extra.at("words_per_row").get<int64_t>();
    b.w.words = r.read_u64(base + ".W.words");
    b.affine = read_affine(r, base + ".affine");
    b.in_ch = blocks_meta[i].at("in_ch").get<int64_t>();
    b.out_ch = blocks_meta[i].at("out_ch").get<int64_t>();
    b.stride = blocks_meta[i].at("stride").get<int>();
    b.shortcut = blocks_meta[i].at("shortcut").get<bool>();
    pm.blocks.push_back(std::move(b));
  }
  pm.fc_w = r.read_tensor("fc.W");
  pm.fc_b = r.read_tensor("fc.b");
  return pm;
}

void save_packed(const PackedModel& pm, const std::string& path) {
  std::vector<uint8_t> data = export_packed(pm);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("short write: " + path);
}

PackedModel load_packed(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return import_packed(bytes);
}

SizeReport report_sizes(Model& float_model, const PackedModel& packed) {
  SizeReport r;
  r.bytes_fp32 = serialize_model(float_model).size();
  r.bytes_packed = export_packed(packed).size();
  r.ratio = static_cast<double>(r.bytes_fp32) / static_cast<double>(r.bytes_packed);
  return r;
}

}  // namespace bnn
