#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bnn/binops.hpp"
#include "bnn/optim.hpp"

using namespace bnn;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double spread = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<float>(rng.normal() * spread);
  return t;
}

double filter_norm(const Tensor& t, int64_t k) {
  int64_t per = t.numel() / t.dim(0);
  double acc = 0.0;
  for (int64_t i = 0; i < per; ++i) {
    double v = t[k * per + i];
    acc += v * v;
  }
  return std::sqrt(acc);
}

}  // namespace

TEST_CASE("cosine schedule endpoints and midpoint") {
  OvswConfig c;
  c.base_lr = 0.1;
  c.total_steps = 1000;
  CHECK(cosine_lr(0, c) == doctest::Approx(0.1));
  CHECK(cosine_lr(1000, c) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cosine_lr(500, c) == doctest::Approx(0.05));
  CHECK_THROWS_AS(cosine_lr(1001, c), std::invalid_argument);
}

TEST_CASE("ags_scale lifts small-deviation filters to exactly lambda") {
  // Filter 0: ||W||=1, ||g||=0.01 -> scaled to norm 0.04, direction kept.
  Tensor w = Tensor::from_data({2, 4}, {0.5f, 0.5f, 0.5f, 0.5f, 1, 1, 1, 1});
  Tensor g = Tensor::from_data({2, 4}, {0.005f, 0.005f, 0.005f, 0.005f, 0.2f, 0.2f, 0.2f, 0.2f});
  Tensor out = ags_scale(g, w, 0.04);
  CHECK(filter_norm(out, 0) == doctest::Approx(0.04).epsilon(1e-6));
  // direction unchanged: all components equal
  for (int i = 1; i < 4; ++i) CHECK(out[i] == doctest::Approx(out[0]));
  // Filter 1: ratio 0.4/2 = 0.2 >= lambda, untouched bit for bit.
  for (int i = 4; i < 8; ++i) CHECK(out[i] == g[i]);
}

TEST_CASE("ags_scale degenerate filters") {
  Tensor w = Tensor::from_data({2, 2}, {1, 1, 0, 0});
  Tensor g = Tensor::from_data({2, 2}, {0, 0, 0.001f, 0.001f});
  Tensor out = ags_scale(g, w, 0.04);
  CHECK(out[0] == 0.0f);  // ||G||=0: stays zero
  CHECK(out[1] == 0.0f);
  CHECK(out[2] == 0.001f);  // ||W||=0: untouched
  CHECK(out[3] == 0.001f);
}

TEST_CASE("ags properties on random filter pairs") {
  Rng rng(33);
  const double lambda = 0.04;
  int lifted = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Tensor w = random_tensor({1, 8}, rng);
    Tensor g = random_tensor({1, 8}, rng, rng.uniform01() < 0.5 ? 0.001 : 1.0);
    Tensor out = ags_scale(g, w, lambda);
    double wn = filter_norm(w, 0), gn = filter_norm(g, 0), on = filter_norm(out, 0);
    if (wn == 0 || gn == 0) continue;
    CHECK(on / wn >= lambda * (1.0 - 1e-5));
    // direction preserved: out = c*g with c >= 1
    double dot = 0.0;
    for (int i = 0; i < 8; ++i) dot += double(out[i]) * g[i];
    CHECK(dot / (on * gn) >= 1.0 - 1e-6);
    CHECK(on >= gn * (1.0 - 1e-6));
    if (gn / wn >= lambda) {
      for (int i = 0; i < 8; ++i) CHECK(out[i] == g[i]);
    } else {
      ++lifted;
    }
  }
  CHECK(lifted > 100);  // the scripted distribution must exercise the branch
}

TEST_CASE("flip state EMA") {
  SUBCASE("single flip from zero state") {
    std::vector<double> s(1, 0.0);
    Tensor prev = Tensor::from_data({1}, {1.0f}), cur = Tensor::from_data({1}, {-1.0f});
    update_flip_state(s, prev, cur, 0.99);
    CHECK(s[0] == doctest::Approx(0.01).epsilon(1e-9));
  }
  SUBCASE("k consecutive flips approach 1 - m^k") {
    std::vector<double> s(1, 0.0);
    float side = 1.0f;
    for (int k = 1; k <= 50; ++k) {
      Tensor prev = Tensor::from_data({1}, {side});
      side = -side;
      Tensor cur = Tensor::from_data({1}, {side});
      update_flip_state(s, prev, cur, 0.99);
      CHECK(std::abs(s[0] - (1.0 - std::pow(0.99, k))) < 1e-9);
    }
  }
  SUBCASE("no flips keeps the state at exactly zero") {
    std::vector<double> s(3, 0.0);
    Tensor stay = Tensor::from_data({3}, {1, -1, 1});
    for (int k = 0; k < 100; ++k) update_flip_state(s, stay, stay, 0.99);
    for (int i = 0; i < 3; ++i) CHECK(s[size_t(i)] == 0.0);
  }
  SUBCASE("state stays inside [0,1] under random flip sequences") {
    Rng rng(44);
    std::vector<double> s(16, 0.0);
    Tensor prev = Tensor::full({16}, 1.0f);
    for (int k = 0; k < 500; ++k) {
      Tensor cur({16});
      for (int i = 0; i < 16; ++i) cur[i] = rng.uniform01() < 0.3 ? -prev[i] : prev[i];
      update_flip_state(s, prev, cur, 0.9);
      for (int i = 0; i < 16; ++i) {
        CHECK(s[size_t(i)] >= 0.0);
        CHECK(s[size_t(i)] <= 1.0);
      }
      prev = cur;
    }
  }
  SUBCASE("scripted sequence matches direct recurrence within 1e-9") {
    Rng rng(45);
    const double m = 0.97;
    std::vector<double> s(1, 0.0);
    double ref = 0.0;
    float side = 1.0f;
    for (int k = 0; k < 200; ++k) {
      bool flip = rng.uniform01() < 0.4;
      Tensor prev = Tensor::from_data({1}, {side});
      if (flip) side = -side;
      Tensor cur = Tensor::from_data({1}, {side});
      update_flip_state(s, prev, cur, m);
      ref = m * ref + (1.0 - m) * (flip ? 1.0 : 0.0);
      CHECK(std::abs(s[0] - ref) < 1e-9);
    }
  }
}

TEST_CASE("sad_decay") {
  SUBCASE("penalty branch") {
    Tensor g({1}), w = Tensor::from_data({1}, {2.0f});
    std::vector<double> s(1, 0.0);
    Tensor out = sad_decay(g, w, s, 1e-3, 0.1);
    CHECK(out[0] == doctest::Approx(0.2));
  }
  SUBCASE("boundary S == sigma is untouched (strict <)") {
    Tensor g = Tensor::from_data({1}, {0.5f});
    Tensor w = Tensor::from_data({1}, {2.0f});
    std::vector<double> s{9e-4};
    Tensor out = sad_decay(g, w, s, 9e-4, 0.1);
    CHECK(out[0] == 0.5f);
  }
  SUBCASE("sigma zero is the identity") {
    Rng rng(46);
    Tensor g = random_tensor({8}, rng), w = random_tensor({8}, rng);
    std::vector<double> s(8, 0.0);
    Tensor out = sad_decay(g, w, s, 0.0, 0.1);
    for (int i = 0; i < 8; ++i) CHECK(out[i] == g[i]);
  }
}

namespace {

std::vector<ParamRef> single_param(Tensor& w, ParamKind kind) {
  return {{"w", &w, kind}};
}

}  // namespace

TEST_CASE("ovsw_step scalar example: AGS lifts the step to lambda*|w|") {
  Tensor w = Tensor::from_data({1, 1}, {1.0f});
  OvswConfig c;
  c.base_lr = 1.0;
  c.total_steps = 2;  // beta(0) = 1
  c.momentum = 0.0;
  c.weight_decay = 0.0;
  c.ags_lambda = 0.04;
  c.sad_enabled = false;
  auto slots = make_slots(single_param(w, ParamKind::BinarizedWeight));
  Tensor g = Tensor::from_data({1, 1}, {0.001f});
  std::vector<Tensor*> grads{&g};
  ovsw_step(slots, grads, 0, c);
  CHECK(w[0] == doctest::Approx(0.96).epsilon(1e-6));
}

TEST_CASE("ovsw with zeroed hyperparameters is bit-identical to vanilla") {
  Rng rng(55);
  Tensor w1 = random_tensor({4, 3, 3, 3}, rng);
  Tensor w2 = w1;
  OvswConfig c;
  c.base_lr = 0.1;
  c.total_steps = 100;
  c.ags_lambda = 0.0;
  c.sad_sigma = 0.0;
  c.sad_penalty = 0.0;
  auto s1 = make_slots(single_param(w1, ParamKind::BinarizedWeight));
  auto s2 = make_slots(single_param(w2, ParamKind::BinarizedWeight));
  Rng grng(56);
  for (int64_t t = 0; t < 50; ++t) {
    Tensor g = random_tensor({4, 3, 3, 3}, grng, 0.1);
    Tensor g2 = g;
    std::vector<Tensor*> ga{&g}, gb{&g2};
    ovsw_step(s1, ga, t, c);
    vanilla_step(s2, gb, t, c);
    for (int64_t i = 0; i < w1.numel(); ++i) {
      CHECK(w1[i] == w2[i]);
      CHECK(s1[0].v[i] == s2[0].v[i]);
      CHECK(s1[0].s[size_t(i)] == s2[0].s[size_t(i)]);
    }
  }
}

TEST_CASE("ovsw two-step flip-state script") {
  // flip at step 1, none at step 2, m = 0.99 -> S = [0.01, 0.0099]
  Tensor w = Tensor::from_data({1, 1}, {0.05f});
  OvswConfig c;
  c.base_lr = 1.0;
  c.total_steps = 4;
  c.momentum = 0.0;
  c.weight_decay = 0.0;
  c.ags_enabled = false;
  c.sad_enabled = false;
  c.ema_momentum = 0.99;
  auto slots = make_slots(single_param(w, ParamKind::BinarizedWeight));
  Tensor g1 = Tensor::from_data({1, 1}, {0.1f});  // drives w to -0.05: flip
  std::vector<Tensor*> grads{&g1};
  ovsw_step(slots, grads, 0, c);
  CHECK(w[0] == doctest::Approx(-0.05));
  CHECK(slots[0].s[0] == doctest::Approx(0.01).epsilon(1e-9));
  Tensor g2 = Tensor::from_data({1, 1}, {0.01f});  // stays negative: no flip
  grads[0] = &g2;
  ovsw_step(slots, grads, 1, c);
  CHECK(slots[0].s[0] == doctest::Approx(0.0099).epsilon(1e-9));
}

TEST_CASE("vanilla_step: zero grads leave params unchanged without decay") {
  Tensor w = Tensor::from_data({3}, {1.0f, -2.0f, 3.0f});
  OvswConfig c;
  c.base_lr = 0.5;
  c.total_steps = 2;
  c.momentum = 0.0;
  c.weight_decay = 0.0;
  auto slots = make_slots(single_param(w, ParamKind::FullPrecision));
  Tensor g({3});
  std::vector<Tensor*> grads{&g};
  vanilla_step(slots, grads, 0, c);
  CHECK(w[0] == 1.0f);
  CHECK(w[1] == -2.0f);
  CHECK(w[2] == 3.0f);
}

TEST_CASE("vanilla_step: pure decay shrinks toward zero") {
  Tensor w = Tensor::from_data({2}, {1.0f, -4.0f});
  OvswConfig c;
  c.base_lr = 0.5;
  c.total_steps = 2;  // beta(0) = 0.5
  c.momentum = 0.0;
  c.weight_decay = 0.01;
  auto slots = make_slots(single_param(w, ParamKind::FullPrecision));
  Tensor g({2});
  std::vector<Tensor*> grads{&g};
  vanilla_step(slots, grads, 0, c);
  CHECK(w[0] == doctest::Approx(1.0 * (1.0 - 0.5 * 0.01)));
  CHECK(w[1] == doctest::Approx(-4.0 * (1.0 - 0.5 * 0.01)));
}

TEST_CASE("vanilla_step matches a scalar-loop oracle over random steps") {
  Rng rng(66);
  Tensor w = random_tensor({5}, rng);
  std::vector<double> rw(5), rv(5, 0.0);
  for (int i = 0; i < 5; ++i) rw[size_t(i)] = w[i];
  OvswConfig c;
  c.base_lr = 0.1;
  c.total_steps = 30;
  c.momentum = 0.9;
  c.weight_decay = 1e-3;
  auto slots = make_slots(single_param(w, ParamKind::FullPrecision));
  Rng grng(67);
  for (int64_t t = 0; t < 30; ++t) {
    Tensor g = random_tensor({5}, grng, 0.2);
    std::vector<Tensor*> grads{&g};
    vanilla_step(slots, grads, t, c);
    double lr = 0.1 * 0.5 * (1.0 + std::cos(std::numbers::pi * double(t) / 30.0));
    for (int i = 0; i < 5; ++i) {
      rv[size_t(i)] = 0.9 * rv[size_t(i)] + (double(g[i]) + 1e-3 * rw[size_t(i)]);
      rw[size_t(i)] -= lr * rv[size_t(i)];
      CHECK(w[i] == doctest::Approx(rw[size_t(i)]).epsilon(1e-4));
      rw[size_t(i)] = w[i];  // resync to float path to avoid drift
      rv[size_t(i)] = slots[0].v[i];
    }
  }
}

TEST_CASE("lars_step reduces to vanilla when the local rate is 1") {
  Rng rng(68);
  Tensor w1 = random_tensor({6}, rng);
  Tensor w2 = w1;
  Tensor g = random_tensor({6}, rng, 0.1);
  Tensor g2 = g;
  OvswConfig c;
  c.base_lr = 0.05;
  c.total_steps = 2;
  c.momentum = 0.0;
  c.weight_decay = 0.0;
  double wn = 0, gn = 0;
  for (int i = 0; i < 6; ++i) {
    wn += double(w1[i]) * w1[i];
    gn += double(g[i]) * g[i];
  }
  c.lars_eta = std::sqrt(gn) / std::sqrt(wn);  // makes local rate exactly 1
  auto s1 = make_slots(single_param(w1, ParamKind::FullPrecision));
  auto s2 = make_slots(single_param(w2, ParamKind::FullPrecision));
  std::vector<Tensor*> ga{&g}, gb{&g2};
  lars_step(s1, ga, 0, c);
  vanilla_step(s2, gb, 0, c);
  for (int i = 0; i < 6; ++i) CHECK(w1[i] == doctest::Approx(w2[i]).epsilon(1e-6));
}

TEST_CASE("lars single step without momentum is the scaled vanilla update") {
  Rng rng(69);
  Tensor w1 = random_tensor({8}, rng);
  Tensor w0 = w1;
  Tensor g = random_tensor({8}, rng, 0.3);
  OvswConfig c;
  c.base_lr = 0.2;
  c.total_steps = 2;
  c.momentum = 0.0;
  c.weight_decay = 0.0;
  c.lars_eta = 0.02;
  double wn = 0, gn = 0;
  for (int i = 0; i < 8; ++i) {
    wn += double(w1[i]) * w1[i];
    gn += double(g[i]) * g[i];
  }
  double local = 0.02 * std::sqrt(wn) / std::sqrt(gn);
  auto s1 = make_slots(single_param(w1, ParamKind::FullPrecision));
  Tensor gcopy = g;
  std::vector<Tensor*> ga{&gcopy};
  lars_step(s1, ga, 0, c);
  for (int i = 0; i < 8; ++i) {
    double vanilla_update = 0.2 * double(g[i]);
    CHECK(w1[i] == doctest::Approx(w0[i] - local * vanilla_update).epsilon(1e-5));
  }
}

TEST_CASE("lars and ovsw momentum buffers diverge when AGS activates") {
  // Appendix-style script: LARS accumulates the raw gradient; OvSW accumulates
  // the AGS-scaled gradient, so the buffers differ from step one.
  Tensor wl = Tensor::from_data({1, 2}, {0.6f, 0.8f});  // ||w|| = 1
  Tensor wo = wl;
  OvswConfig c;
  c.base_lr = 0.1;
  c.total_steps = 4;
  c.momentum = 0.9;
  c.weight_decay = 0.0;
  c.ags_lambda = 0.04;
  c.sad_enabled = false;
  c.lars_eta = 0.04;
  auto sl = make_slots(single_param(wl, ParamKind::BinarizedWeight));
  auto so = make_slots(single_param(wo, ParamKind::BinarizedWeight));
  Tensor gl = Tensor::from_data({1, 2}, {0.006f, 0.008f});  // ||g|| = 0.01 < lambda
  Tensor go = gl;
  std::vector<Tensor*> ga{&gl}, gb{&go};
  lars_step(sl, ga, 0, c);
  ovsw_step(so, gb, 0, c);
  // LARS buffer holds the raw gradient.
  CHECK(sl[0].v[0] == doctest::Approx(0.006).epsilon(1e-6));
  CHECK(sl[0].v[1] == doctest::Approx(0.008).epsilon(1e-6));
  // OvSW buffer holds the gradient lifted to norm lambda*||w|| = 0.04.
  CHECK(so[0].v[0] == doctest::Approx(0.024).epsilon(1e-6));
  CHECK(so[0].v[1] == doctest::Approx(0.032).epsilon(1e-6));
  // Identical first weight updates can be arranged, but the buffers already
  // disagree; a second zero-gradient step then moves the weights differently.
  Tensor z1({1, 2}), z2({1, 2});
  std::vector<Tensor*> za{&z1}, zb{&z2};
  lars_step(sl, za, 1, c);
  ovsw_step(so, zb, 1, c);
  CHECK(std::abs(sl[0].v[0] - so[0].v[0]) > 1e-4);
  CHECK(std::abs(wl[0] - wo[0]) > 1e-6);
}

TEST_CASE("lars skips the weight step for degenerate norms") {
  Tensor w({3});  // all zeros, so ||G|| + decay*||W|| = 0 with zero grads
  OvswConfig c;
  c.base_lr = 0.1;
  c.total_steps = 2;
  c.weight_decay = 0.0;
  auto slots = make_slots(single_param(w, ParamKind::FullPrecision));
  Tensor g({3});
  std::vector<Tensor*> grads{&g};
  lars_step(slots, grads, 0, c);
  for (int i = 0; i < 3; ++i) CHECK(w[i] == 0.0f);
}

TEST_CASE("optimizer step rejects shape mismatch and non-finite grads") {
  Tensor w({4});
  OvswConfig c;
  c.total_steps = 2;
  auto slots = make_slots(single_param(w, ParamKind::FullPrecision));
  Tensor bad({5});
  std::vector<Tensor*> grads{&bad};
  CHECK_THROWS_AS(vanilla_step(slots, grads, 0, c), std::invalid_argument);
  Tensor nang({4});
  nang[2] = std::nanf("");
  grads[0] = &nang;
  CHECK_THROWS_AS(vanilla_step(slots, grads, 0, c), std::runtime_error);
}

TEST_CASE("config validation") {
  OvswConfig c;
  c.momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  OvswConfig c2;
  c2.ags_lambda = -0.1;
  CHECK_THROWS_AS(c2.validate(), std::invalid_argument);
  CHECK(cifar_recipe().ags_lambda == doctest::Approx(0.04));
  CHECK(cifar_recipe().sad_sigma == doctest::Approx(9e-4));
  CHECK(imagenet_recipe().ags_lambda == doctest::Approx(0.02));
  CHECK(imagenet_recipe().sad_sigma == doctest::Approx(2e-5));
}
