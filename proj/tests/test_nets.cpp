#include <doctest.h>

#include <cmath>

#include "faceswap/nets.hpp"
#include "faceswap/rng.hpp"

using namespace faceswap;
using namespace faceswap::nets;
using ag::Var;

namespace {

GeneratorConfig toy_cfg(int64_t resolution = 32) {
  GeneratorConfig cfg;
  cfg.resolution = resolution;
  cfg.latent_width = 12;
  cfg.channel_scale = 1.0 / 64.0;  // width 8 at every level
  return cfg;
}

Var rand_image(int64_t resolution, uint64_t seed) {
  Rng rng(seed);
  return ag::constant(ag::random_uniform({1, 3, resolution, resolution}, rng, -1, 1));
}

}  // namespace

TEST_CASE("num_latent_vectors formula") {
  CHECK(num_latent_vectors(1024) == 18);
  CHECK(num_latent_vectors(4) == 2);
  CHECK(num_latent_vectors(64) == 10);
  CHECK_THROWS_AS(num_latent_vectors(48), Error);
  CHECK_THROWS_AS(num_latent_vectors(2048), Error);
}

TEST_CASE("channel_width reproduces the full-scale schedule") {
  GeneratorConfig full;
  // supplement list: 8x512 ... 1024x32
  CHECK(channel_width(8, full) == 512);
  CHECK(channel_width(16, full) == 512);
  CHECK(channel_width(32, full) == 512);
  CHECK(channel_width(64, full) == 512);
  CHECK(channel_width(128, full) == 256);
  CHECK(channel_width(256, full) == 128);
  CHECK(channel_width(512, full) == 64);
  CHECK(channel_width(1024, full) == 32);
  GeneratorConfig scaled = full;
  scaled.channel_scale = 0.125;
  CHECK(channel_width(64, scaled) == 64);
  scaled.channel_scale = 1.0 / 256.0;
  CHECK(channel_width(8, scaled) == 4);  // floor at 4
}

TEST_CASE("heatmap rasterization") {
  LandmarkSet l;
  l.points.push_back({0.5, 0.5});
  HeatmapStack s = rasterize_heatmaps(l, 65, 2.0);
  CHECK(s.maps.shape() == ag::Shape{1, 65, 65});
  CHECK(s.maps[32 * 65 + 32] == 1.0);
  CHECK(s.clamped == 0);

  LandmarkSet l2;
  l2.points.push_back({0.25, 0.5});
  HeatmapStack s2 = rasterize_heatmaps(l2, 65, 2.0);
  CHECK(s2.maps[32 * 65 + 15] == doctest::Approx(std::exp(-0.125)).epsilon(1e-12));

  // every channel peaks in [exp(-0.5/sigma^2), 1]
  LandmarkSet many;
  Rng rng(1);
  for (int i = 0; i < 7; ++i) many.points.push_back({rng.uniform(), rng.uniform()});
  HeatmapStack sm = rasterize_heatmaps(many, 16, 1.5);
  for (int64_t n = 0; n < 7; ++n) {
    double mx = 0;
    for (int64_t i = 0; i < 256; ++i) mx = std::max(mx, sm.maps[n * 256 + i]);
    CHECK(mx <= 1.0);
    CHECK(mx >= std::exp(-0.5 / (1.5 * 1.5)));
  }

  // out-of-range landmarks clamp and count
  LandmarkSet off;
  off.points.push_back({-0.2, 1.4});
  HeatmapStack so = rasterize_heatmaps(off, 16, 2.0);
  CHECK(so.clamped == 1);
  CHECK(so.maps[15 * 16 + 0] == 1.0);  // clamped to corner (0,1)

  CHECK_THROWS_AS(rasterize_heatmaps(l, 4, 2.0), Error);
  CHECK_THROWS_AS(rasterize_heatmaps(l, 16, 0.0), Error);
}

TEST_CASE("generator synthesize shape contract and determinism") {
  GeneratorConfig cfg = toy_cfg(32);
  Generator gen(cfg, Rng(5));
  int64_t L = num_latent_vectors(32);
  Rng rng(6);
  Var w = ag::constant(ag::random_normal({1, L, cfg.latent_width}, rng, 0.5));
  auto out = gen.synthesize(w);
  CHECK(out.image->value.shape() == ag::Shape{1, 3, 32, 32});
  REQUIRE(out.pyramid.size() == 3);  // 8, 16, 32
  for (size_t i = 0; i < 3; ++i) {
    int64_t res = 8 << i;
    CHECK(out.pyramid[i]->value.shape() ==
          ag::Shape{1, channel_width(res, cfg), res, res});
  }
  // image range
  for (int64_t i = 0; i < out.image->value.size(); ++i) {
    CHECK(out.image->value[i] <= 1.0);
    CHECK(out.image->value[i] >= -1.0);
  }
  // deterministic re-execution
  auto out2 = gen.synthesize(w);
  CHECK(out.image->value.bit_equal(out2.image->value));
  for (size_t i = 0; i < 3; ++i)
    CHECK(out.pyramid[i]->value.bit_equal(out2.pyramid[i]->value));
  // sensitivity: perturbing w changes the output
  ag::Tensor w2 = w->value.clone();
  w2[0] += 0.31;
  auto out3 = gen.synthesize(ag::constant(w2));
  CHECK_FALSE(out.image->value.bit_equal(out3.image->value));
  // shape errors
  Var bad = ag::constant(ag::Tensor::zeros({1, L + 1, cfg.latent_width}));
  CHECK_THROWS_AS((void)gen.synthesize(bad), Error);
}

TEST_CASE("generator is differentiable w.r.t. the latent stack") {
  GeneratorConfig cfg = toy_cfg(32);
  Generator gen(cfg, Rng(7));
  int64_t L = num_latent_vectors(32);
  Rng rng(8);
  Var w = ag::make_param(ag::random_normal({1, L, cfg.latent_width}, rng, 0.5));
  auto build = [&] { return ag::mean_all(ag::square(gen.synthesize(w).image)); };
  Var loss = build();
  ag::zero_grad({w});
  ag::backward(loss);
  REQUIRE(w->grad.defined());
  // spot-check a few coordinates by central differences
  Rng pick(9);
  for (int t = 0; t < 10; ++t) {
    int64_t i = static_cast<int64_t>(pick.uniform_int(static_cast<uint64_t>(w->value.size())));
    double x0 = w->value[i];
    double h = 1e-5;
    w->value[i] = x0 + h;
    double f1 = build()->value[0];
    w->value[i] = x0 - h;
    double f0 = build()->value[0];
    w->value[i] = x0;
    double num = (f1 - f0) / (2 * h);
    CHECK(std::abs(num - w->grad[i]) / std::max({1.0, std::abs(num)}) < 1e-3);
  }
}

TEST_CASE("inverter shape contract, determinism, finiteness") {
  GeneratorConfig cfg = toy_cfg(64);
  Inverter inv(cfg, Rng(10));
  Var x = rand_image(64, 11);
  Var w = inv.invert(x);
  CHECK(w->value.shape() == ag::Shape{1, 10, cfg.latent_width});
  CHECK(w->value.bit_equal(inv.invert(x)->value));
  Var zero = ag::constant(ag::Tensor::zeros({1, 3, 64, 64}));
  CHECK(inv.invert(zero)->value.all_finite());
  CHECK_THROWS_AS((void)inv.invert(ag::constant(ag::Tensor::zeros({1, 3, 32, 32}))), Error);
}

TEST_CASE("landmark encoder zero-init and shape") {
  GeneratorConfig cfg = toy_cfg(32);
  int64_t k = 3;
  LandmarkEncoder lenc(cfg, 5, 32, k, Rng(12));
  LandmarkSet l;
  for (int i = 0; i < 5; ++i) l.points.push_back({0.1 + 0.2 * i, 0.5});
  HeatmapStack hs = rasterize_heatmaps(l, 32, 2.0);
  Var hv = ag::constant(hs.maps.reshaped({1, 5, 32, 32}));
  Var n = lenc.encode(hv, hv);
  CHECK(n->value.shape() == ag::Shape{1, k, cfg.latent_width});
  // fresh init emits exactly zero
  for (int64_t i = 0; i < n->value.size(); ++i) CHECK(n->value[i] == 0.0);
  // deterministic
  CHECK(n->value.bit_equal(lenc.encode(hv, hv)->value));
  // grid mismatch is a shape error
  Var small = ag::constant(ag::Tensor::zeros({1, 5, 16, 16}));
  CHECK_THROWS_AS((void)lenc.encode(hv, small), Error);
}

TEST_CASE("target encoder matches generator pyramid shapes level by level") {
  GeneratorConfig cfg = toy_cfg(64);
  Generator gen(cfg, Rng(13));
  TargetEncoder tenc(cfg, Rng(14));
  Rng rng(15);
  Var w = ag::constant(
      ag::random_normal({1, num_latent_vectors(64), cfg.latent_width}, rng, 0.5));
  auto synth = gen.synthesize(w);
  Var x = rand_image(64, 16);
  std::vector<Var> ft = tenc.encode(x);
  REQUIRE(ft.size() == synth.pyramid.size());
  CHECK(ft.size() == 4);  // 8,16,32,64 at resolution 64
  for (size_t i = 0; i < ft.size(); ++i)
    CHECK(ft[i]->value.shape() == synth.pyramid[i]->value.shape());
  // deterministic
  std::vector<Var> ft2 = tenc.encode(x);
  for (size_t i = 0; i < ft.size(); ++i)
    CHECK(ft[i]->value.bit_equal(ft2[i]->value));
}

TEST_CASE("decoder consumes the pyramid and gradchecks against levels") {
  GeneratorConfig cfg = toy_cfg(32);
  TargetEncoder tenc(cfg, Rng(17));
  Decoder dec(cfg, Rng(18));
  Var x = rand_image(32, 19);
  std::vector<Var> levels_const = tenc.encode(x);
  // promote pyramid levels to parameters so gradients can be checked
  std::vector<Var> levels;
  for (const Var& v : levels_const) levels.push_back(ag::make_param(v->value.clone()));
  Var y = dec.decode(levels);
  CHECK(y->value.shape() == ag::Shape{1, 3, 32, 32});
  CHECK(y->value.bit_equal(dec.decode(levels)->value));
  auto build = [&] { return ag::mean_all(ag::square(dec.decode(levels))); };
  Var loss = build();
  ag::zero_grad(levels);
  ag::backward(loss);
  Rng pick(20);
  for (const Var& lv : levels) {
    REQUIRE(lv->grad.defined());
    double norm = 0;
    for (int64_t i = 0; i < lv->grad.size(); ++i) norm += std::abs(lv->grad[i]);
    CHECK(norm > 0.0);  // gradient reaches every level
    for (int t = 0; t < 3; ++t) {
      int64_t i = static_cast<int64_t>(pick.uniform_int(static_cast<uint64_t>(lv->value.size())));
      double x0 = lv->value[i];
      double h = 1e-5;
      lv->value[i] = x0 + h;
      double f1 = build()->value[0];
      lv->value[i] = x0 - h;
      double f0 = build()->value[0];
      lv->value[i] = x0;
      double num = (f1 - f0) / (2 * h);
      CHECK(std::abs(num - lv->grad[i]) / std::max({1.0, std::abs(num)}) < 1e-3);
    }
  }
  // level count mismatch
  std::vector<Var> short_pyramid(levels.begin(), levels.end() - 1);
  CHECK_THROWS_AS((void)dec.decode(short_pyramid), Error);
}

TEST_CASE("discriminator outputs probabilities strictly inside (0,1)") {
  GeneratorConfig cfg = toy_cfg(32);
  Discriminator disc(cfg, Rng(21));
  Rng rng(22);
  for (int t = 0; t < 4; ++t) {
    Var x = ag::constant(ag::random_uniform({2, 3, 32, 32}, rng, -1, 1));
    Var p = disc.discriminate(x);
    CHECK(p->value.shape() == ag::Shape{2, 1});
    for (int64_t i = 0; i < p->value.size(); ++i) {
      CHECK(p->value[i] > 0.0);
      CHECK(p->value[i] < 1.0);
    }
    CHECK(p->value.bit_equal(disc.discriminate(x)->value));
  }
}

TEST_CASE("noise injection stays deterministic under a fixed seed") {
  GeneratorConfig cfg = toy_cfg(32);
  cfg.noise_injection = true;
  Generator gen(cfg, Rng(23));
  Rng rng(24);
  Var w = ag::constant(
      ag::random_normal({1, num_latent_vectors(32), cfg.latent_width}, rng, 0.5));
  auto a = gen.synthesize(w);
  auto b = gen.synthesize(w);
  CHECK(a.image->value.bit_equal(b.image->value));
  // same seed reproduces the same network
  Generator gen2(cfg, Rng(23));
  auto c = gen2.synthesize(w);
  CHECK(a.image->value.bit_equal(c.image->value));
}

TEST_CASE("landmark json round trip") {
  LandmarkSet l;
  l.points.push_back({0.25, 0.75});
  l.points.push_back({0.5, 0.125});
  std::string path = "/tmp/fsw_test_landmarks.json";
  save_landmarks_json(l, path);
  LandmarkSet back = load_landmarks_json(path);
  REQUIRE(back.points.size() == 2);
  CHECK(back.points[0][0] == 0.25);
  CHECK(back.points[1][1] == 0.125);
  CHECK_THROWS_AS(load_landmarks_json("/tmp/fsw_missing_landmarks.json"), Error);
}
