#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cmath>

#include "bnn/binops.hpp"
#include "bnn/bitpack.hpp"
#include "bnn/checkpoint.hpp"

using namespace bnn;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double spread = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<float>(rng.normal() * spread);
  return t;
}

}  // namespace

TEST_CASE("pack: word layout and padding bits") {
  SUBCASE("64 non-negative values make one all-ones word") {
    Tensor x = Tensor::full({64}, 0.25f);
    PackedTensor p = pack(x);
    CHECK(p.rows == 1);
    CHECK(p.n_valid == 64);
    CHECK(p.words_per_row == 1);
    CHECK(p.words[0] == ~uint64_t{0});
  }
  SUBCASE("65 negative values: two words, second zero") {
    Tensor x = Tensor::full({65}, -0.5f);
    PackedTensor p = pack(x);
    CHECK(p.n_valid == 65);
    CHECK(p.words_per_row == 2);
    CHECK(p.words[0] == 0);
    CHECK(p.words[1] == 0);
  }
  SUBCASE("zero packs as +1") {
    Tensor x({3});
    PackedTensor p = pack(x);
    CHECK((p.words[0] & 0b111) == 0b111);
  }
}

TEST_CASE("unpack(pack(x)) == sign(x), padding bits stay zero") {
  Rng rng(1);
  for (auto shape : std::vector<std::vector<int64_t>>{{100}, {8, 4, 3, 3}, {5, 77}}) {
    Tensor x = random_tensor(shape, rng);
    PackedTensor p = pack(x);
    Tensor u = unpack(p);
    Tensor s = sign(x);
    REQUIRE(u.shape() == x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(u[i] == s[i]);
    if (p.n_valid % 64 != 0) {
      for (int64_t r = 0; r < p.rows; ++r) {
        uint64_t last = p.row(r)[p.words_per_row - 1];
        CHECK((last >> (p.n_valid % 64)) == 0);
      }
    }
  }
}

TEST_CASE("xnor_popcount_dot basics") {
  Tensor ones = Tensor::full({9}, 1.0f);
  PackedTensor a = pack(ones);
  CHECK(xnor_popcount_dot(a, 0, a, 0) == 9);
  Tensor neg = Tensor::full({9}, -1.0f);
  PackedTensor b = pack(neg);
  CHECK(xnor_popcount_dot(a, 0, b, 0) == -9);
  Tensor longer = Tensor::full({10}, 1.0f);
  PackedTensor c = pack(longer);
  CHECK_THROWS_AS(xnor_popcount_dot(a, 0, c, 0), std::invalid_argument);
}

TEST_CASE("xnor dot equals the float +/-1 dot exactly on 500 random pairs") {
  Rng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    int64_t n = 1 + static_cast<int64_t>(rng.uniform01() * 200);
    Tensor x({n}), y({n});
    for (int64_t i = 0; i < n; ++i) {
      x[i] = rng.uniform01() < 0.5 ? -1.0f : 1.0f;
      y[i] = rng.uniform01() < 0.5 ? -1.0f : 1.0f;
    }
    double want = 0.0;
    for (int64_t i = 0; i < n; ++i) want += double(x[i]) * y[i];
    PackedTensor px = pack(x), py = pack(y);
    CHECK(double(xnor_popcount_dot(px, 0, py, 0)) == want);
  }
}

TEST_CASE("dot results are independent of word-boundary padding") {
  Rng rng(3);
  for (int64_t n : {1, 63, 64, 65, 100}) {
    for (int trial = 0; trial < 20; ++trial) {
      Tensor x({n}), y({n});
      for (int64_t i = 0; i < n; ++i) {
        x[i] = rng.uniform01() < 0.5 ? -1.0f : 1.0f;
        y[i] = rng.uniform01() < 0.5 ? -1.0f : 1.0f;
      }
      double want = 0.0;
      for (int64_t i = 0; i < n; ++i) want += double(x[i]) * y[i];
      CHECK(double(xnor_popcount_dot(pack(x), 0, pack(y), 0)) == want);
    }
  }
}

TEST_CASE("portable popcount agrees with the native instruction") {
  Rng rng(4);
  for (uint64_t v : {uint64_t{0}, ~uint64_t{0}, uint64_t{1}, uint64_t{0x8000000000000000ULL}}) {
    CHECK(popcount64_portable(v) == std::popcount(v));
  }
  for (int i = 0; i < 10000; ++i) {
    uint64_t v = rng.next_u64();
    CHECK(popcount64_portable(v) == std::popcount(v));
  }
}

TEST_CASE("fold_bn") {
  SUBCASE("identity BN folds to scale 1, bias 0") {
    Tensor one = Tensor::full({2}, 1.0f), zero({2});
    FoldedAffine f = fold_bn(one, one, zero, zero, one, 0.0f);
    CHECK(f.scale[0] == doctest::Approx(1.0));
    CHECK(f.bias[0] == doctest::Approx(0.0));
  }
  SUBCASE("running mean cancels a constant raw output") {
    Tensor one = Tensor::full({1}, 1.0f), zero({1});
    Tensor mean = Tensor::full({1}, 7.0f);
    FoldedAffine f = fold_bn(one, one, zero, mean, one, 0.0f);
    // folded output at raw == mean is exactly zero
    CHECK(f.scale[0] * 7.0f + f.bias[0] == doctest::Approx(0.0).epsilon(1e-6));
  }
  SUBCASE("random params: folded path equals eval BN of alpha*conv within 1e-4") {
    Rng rng(5);
    int64_t ch = 6;
    Tensor alpha({ch}), gamma({ch}), beta({ch}), mean({ch}), var({ch});
    for (int64_t c = 0; c < ch; ++c) {
      alpha[c] = 0.5f + static_cast<float>(rng.uniform01());
      gamma[c] = 0.5f + static_cast<float>(rng.uniform01());
      beta[c] = static_cast<float>(rng.normal() * 0.3);
      mean[c] = static_cast<float>(rng.normal() * 2.0);
      var[c] = 0.5f + static_cast<float>(rng.uniform01() * 3.0);
    }
    FoldedAffine f = fold_bn(alpha, gamma, beta, mean, var, 1e-5f);
    for (int trial = 0; trial < 200; ++trial) {
      int64_t c = static_cast<int64_t>(rng.uniform01() * ch);
      float raw = static_cast<float>(std::round(rng.normal() * 20.0));
      float folded = f.scale[size_t(c)] * raw + f.bias[size_t(c)];
      float x = alpha[c] * raw;
      float bn = gamma[c] * (x - mean[c]) / std::sqrt(var[c] + 1e-5f) + beta[c];
      CHECK(std::abs(folded - bn) < 1e-4f);
    }
  }
}

namespace {

// Single-block toy model over a 1x1x4x4 input with hand-chosen parameters.
Model hand_model() {
  Model m;
  m.spec.name = "hand";
  m.spec.in_ch = 1;
  m.spec.image_hw = 4;
  m.spec.classes = 2;
  m.spec.first_out = 1;
  m.spec.blocks = {{1, 1, false}};
  m.first.W = Tensor({1, 1, 3, 3});
  m.first.W[4] = 1.0f;  // center tap: stem conv is the identity
  m.first.bn_gamma = Tensor::full({1}, 1.0f);
  m.first.bn_beta = Tensor({1});
  m.first.bn_running_mean = Tensor({1});
  m.first.bn_running_var = Tensor::full({1}, 1.0f);
  LayerState b;
  b.W = Tensor::full({1, 1, 3, 3}, 0.5f);  // all +1 signs
  b.alpha = Tensor::full({1}, 0.5f);
  b.bn_gamma = Tensor::full({1}, 1.0f);
  b.bn_beta = Tensor::full({1}, 0.25f);
  b.bn_running_mean = Tensor::full({1}, 1.0f);
  b.bn_running_var = Tensor::full({1}, 4.0f);
  b.stride = 1;
  b.shortcut = false;
  m.blocks.push_back(std::move(b));
  m.fc.W = Tensor::from_data({2, 1}, {1.0f, -1.0f});
  m.fc.b = Tensor::from_data({2}, {0.1f, -0.1f});
  return m;
}

Tensor hand_image() {
  return Tensor::from_data({1, 1, 4, 4},
                           {0.5f, -0.2f, 0.3f, -0.7f, -0.1f, 0.4f, -0.6f, 0.2f,
                            0.8f, -0.3f, 0.1f, -0.5f, -0.4f, 0.6f, -0.8f, 0.9f});
}

}  // namespace

TEST_CASE("packed_infer reproduces hand-computed logits on the toy block") {
  // Signs form a checkerboard; the +1-padded 3x3 all-ones conv gives
  // raw = [[5,3,3,5],[3,1,-1,3],[3,-1,1,3],[5,3,3,5]], mean 2.75. With
  // scale 0.25 and bias -0.25 the pooled feature is 0.4375, so the logits
  // land at +/-(0.4375 + 0.1) up to the BN epsilon.
  Model m = hand_model();
  PackedModel pm = pack_model(m);
  Tensor logits = packed_infer(pm, hand_image());
  CHECK(logits[0] == doctest::Approx(0.5375).epsilon(1e-3));
  CHECK(logits[1] == doctest::Approx(-0.5375).epsilon(1e-3));
}

TEST_CASE("packed_infer matches float eval on the all-zero image") {
  Model m = hand_model();
  PackedModel pm = pack_model(m);
  Tensor zero({1, 1, 4, 4});
  Tensor got = packed_infer(pm, zero);
  Tensor want = model_forward(m, zero, Mode::Eval, nullptr);
  for (int64_t i = 0; i < got.numel(); ++i)
    CHECK(std::abs(got[i] - want[i]) <= 1e-3f);
}

TEST_CASE("packed_infer is batch-size independent per sample") {
  Rng rng(6);
  Model m = build_model(toyconvnet_spec(), rng);
  PackedModel pm = pack_model(m);
  Rng drng(7);
  Tensor batch = random_tensor({4, 1, 28, 28}, drng, 0.5);
  Tensor full = packed_infer(pm, batch);
  for (int64_t b = 0; b < 4; ++b) {
    Tensor one({1, 1, 28, 28});
    std::copy(batch.data() + b * 784, batch.data() + (b + 1) * 784, one.data());
    Tensor lone = packed_infer(pm, one);
    // the float stem conv runs through BLAS whose kernels vary with the
    // batch extent; the binary stages are integer-exact
    for (int64_t c = 0; c < 10; ++c)
      CHECK(std::abs(lone[c] - full[b * 10 + c]) <=
            1e-5f * std::max(1.0f, std::abs(full[b * 10 + c])));
  }
}

TEST_CASE("packed equivalence: 200 random toy models match float eval") {
  Rng rng(8);
  int argmax_agree = 0, total = 0;
  for (int trial = 0; trial < 200; ++trial) {
    ModelSpec spec;
    spec.name = "t";
    spec.in_ch = 1 + static_cast<int64_t>(rng.uniform01() * 2);
    spec.image_hw = 8;
    spec.classes = 4;
    spec.first_out = 4;
    bool shortcut = rng.uniform01() < 0.5;
    spec.blocks = {{4, 1, shortcut}, {8, 2, shortcut}};
    Model m = build_model(spec, rng);
    // randomize BN/alpha state as if trained
    for (LayerState& b : m.blocks) {
      for (int64_t c = 0; c < b.alpha.numel(); ++c) {
        b.alpha[c] = 0.3f + static_cast<float>(rng.uniform01());
        b.bn_gamma[c] = 0.5f + static_cast<float>(rng.uniform01());
        b.bn_beta[c] = static_cast<float>(rng.normal() * 0.2);
        b.bn_running_mean[c] = static_cast<float>(rng.normal() * 3.0);
        b.bn_running_var[c] = 1.0f + static_cast<float>(rng.uniform01() * 20.0);
      }
    }
    PackedModel pm = pack_model(m);
    Tensor img = random_tensor({1, spec.in_ch, 8, 8}, rng, 0.7);
    Tensor got = packed_infer(pm, img);
    Tensor want = model_forward(m, img, Mode::Eval, nullptr);
    int64_t ga = 0, wa = 0;
    for (int64_t c = 0; c < 4; ++c) {
      CHECK(std::abs(got[c] - want[c]) <= 1e-3f);
      if (got[c] > got[ga]) ga = c;
      if (want[c] > want[wa]) wa = c;
    }
    argmax_agree += (ga == wa);
    ++total;
  }
  CHECK(argmax_agree == total);
}

TEST_CASE("export/import round-trips bit-exactly") {
  Rng rng(9);
  Model m = build_model(toyconvnet_spec(), rng);
  PackedModel pm = pack_model(m);
  std::vector<uint8_t> bytes = export_packed(pm);
  PackedModel back = import_packed(bytes);
  std::vector<uint8_t> again = export_packed(back);
  CHECK(bytes == again);

  Rng drng(10);
  Tensor img = random_tensor({2, 1, 28, 28}, drng, 0.5);
  Tensor a = packed_infer(pm, img);
  Tensor b = packed_infer(back, img);
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("per-tensor packing ratio is exactly 32x without padding") {
  // 64x64x3x3: rows of 576 bits fill 9 words exactly.
  Rng rng(11);
  Tensor w = random_tensor({64, 64, 3, 3}, rng, 0.1);
  PackedTensor p = pack(w);
  CHECK(w.numel() == 36864);
  uint64_t packed_bytes = p.words.size() * 8;
  uint64_t fp32_bytes = static_cast<uint64_t>(w.numel()) * 4;
  CHECK(packed_bytes == 4608);
  CHECK(fp32_bytes == 147456);
  CHECK(fp32_bytes / packed_bytes == 32);
  // A 5-word row (288 bits -> 4.5 words) carries padding, so the ratio dips
  // below 32 but never exceeds it.
  Tensor w2 = random_tensor({32, 32, 3, 3}, rng, 0.1);
  PackedTensor p2 = pack(w2);
  double ratio2 = double(w2.numel()) * 4 / double(p2.words.size() * 8);
  CHECK(ratio2 < 32.0);
  CHECK(ratio2 > 25.0);
}

TEST_CASE("whole-model size report lands between 10x and 32x") {
  Rng rng(12);
  Model m = build_model(minires_spec(), rng);
  PackedModel pm = pack_model(m);
  SizeReport r = report_sizes(m, pm);
  CHECK(r.bytes_fp32 > 0);
  CHECK(r.bytes_packed > 0);
  CHECK(r.ratio >= 10.0);
  CHECK(r.ratio < 32.0);
  CHECK(r.ratio == doctest::Approx(double(r.bytes_fp32) / double(r.bytes_packed)));
}

TEST_CASE("packed_infer rejects mismatched input shapes") {
  Model m = hand_model();
  PackedModel pm = pack_model(m);
  Tensor bad({1, 1, 5, 5});
  CHECK_THROWS_AS(packed_infer(pm, bad), std::invalid_argument);
}
