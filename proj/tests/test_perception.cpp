#include <doctest.h>

#include <cmath>

#include "faceswap/losses.hpp"
#include "faceswap/perception.hpp"
#include "faceswap/rng.hpp"

using namespace faceswap;
using namespace faceswap::perception;
using ag::Var;

namespace {

Var batch(const ag::Tensor& img) {
  return ag::constant(img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)}));
}

ag::Tensor rand_image(int64_t res, uint64_t seed) {
  Rng rng(seed);
  return ag::random_uniform({3, res, res}, rng, -1, 1);
}

// shift image right by dx pixels, replicating the left border
ag::Tensor shift_right(const ag::Tensor& img, int64_t dx) {
  int64_t h = img.dim(1), w = img.dim(2);
  ag::Tensor out({3, h, w});
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        int64_t sx = std::max<int64_t>(0, x - dx);
        out[(c * h + y) * w + x] = img[(c * h + y) * w + sx];
      }
  return out;
}

}  // namespace

TEST_CASE("toy identity embedder: unit norm, determinism, self-loss zero") {
  ProviderContext ctx{32, 5, 42};
  auto embed = toy_identity_embedder(ctx);
  ag::Tensor x = rand_image(32, 1);
  Var e = embed(batch(x));
  CHECK(e->value.shape() == ag::Shape{1, 64});
  double norm = 0;
  for (int64_t i = 0; i < 64; ++i) norm += e->value[i] * e->value[i];
  CHECK(std::abs(std::sqrt(norm) - 1.0) <= 1e-6);
  CHECK(e->value.bit_equal(embed(batch(x))->value));
  // same seed rebuilds the same provider
  auto embed2 = toy_identity_embedder(ctx);
  CHECK(e->value.bit_equal(embed2(batch(x))->value));
  // flat image still embeds to a unit vector (bias channel at work)
  ag::Tensor flat = ag::Tensor::zeros({3, 32, 32});
  Var ef = embed(batch(flat));
  double nf = 0;
  for (int64_t i = 0; i < 64; ++i) nf += ef->value[i] * ef->value[i];
  CHECK(std::abs(std::sqrt(nf) - 1.0) <= 1e-6);
  // identity loss of an image with itself is zero
  CHECK(ag::scalar_value(losses::identity_loss(batch(x), batch(x), embed)) ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("toy landmark estimator: range, centroid for flat maps, determinism") {
  ProviderContext ctx{32, 6, 7};
  auto est = toy_landmark_estimator(ctx);
  ag::Tensor x = rand_image(32, 2);
  Var v = est(batch(x));
  CHECK(v->value.shape() == ag::Shape{1, 12});
  for (int64_t i = 0; i < v->value.size(); ++i) {
    CHECK(v->value[i] >= 0.0);
    CHECK(v->value[i] <= 1.0);
  }
  CHECK(v->value.bit_equal(est(batch(x))->value));
  // soft-argmax of a uniform heatmap is the grid centroid 0.5 exactly
  int64_t g = 8;
  Var uniform = ag::constant(ag::Tensor::zeros({1, g * g}));
  Var p = ag::softmax_lastdim(uniform);
  ag::Tensor coords({g * g, 2});
  for (int64_t vv = 0; vv < g; ++vv)
    for (int64_t u = 0; u < g; ++u) {
      coords[(vv * g + u) * 2 + 0] = static_cast<double>(u) / (g - 1);
      coords[(vv * g + u) * 2 + 1] = static_cast<double>(vv) / (g - 1);
    }
  Var xy = ag::matmul(p, ag::constant(coords));
  CHECK(xy->value[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(xy->value[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("toy perceptual extractor: deterministic fixed-length features") {
  ProviderContext ctx{32, 5, 9};
  auto percep = toy_perceptual_extractor(ctx);
  ag::Tensor a = rand_image(32, 3);
  ag::Tensor b = rand_image(32, 4);
  Var fa = percep(batch(a));
  Var fb = percep(batch(b));
  CHECK(fa->value.shape() == fb->value.shape());
  CHECK(fa->value.bit_equal(percep(batch(a))->value));
  CHECK(ag::scalar_value(ag::mse(fa, fa)) == 0.0);
}

TEST_CASE("differentiable providers pass finite-difference checks") {
  ProviderContext ctx{16, 4, 11};
  auto embed = toy_identity_embedder(ctx);
  auto est = toy_landmark_estimator(ctx);
  auto percep = toy_perceptual_extractor(ctx);
  Rng rng(5);
  Var x = ag::make_param(ag::random_uniform({1, 3, 16, 16}, rng, -0.9, 0.9));
  Var probe_e = ag::constant(ag::random_normal({1, 64}, rng));
  Var probe_l = ag::constant(ag::random_normal({1, 8}, rng));
  for (auto [fn, probe] : {std::pair<losses::ImageFn, Var>{embed, probe_e},
                           std::pair<losses::ImageFn, Var>{est, probe_l}}) {
    auto build = [&] { return ag::mean_all(ag::mul(fn(x), probe)); };
    Var loss = build();
    ag::zero_grad({x});
    ag::backward(loss);
    Rng pick(6);
    for (int t = 0; t < 8; ++t) {
      int64_t i = static_cast<int64_t>(pick.uniform_int(static_cast<uint64_t>(x->value.size())));
      double x0 = x->value[i];
      double h = 1e-5;
      x->value[i] = x0 + h;
      double f1 = build()->value[0];
      x->value[i] = x0 - h;
      double f0 = build()->value[0];
      x->value[i] = x0;
      double num = (f1 - f0) / (2 * h);
      CHECK(std::abs(num - x->grad[i]) / std::max({1.0, std::abs(num)}) < 1e-3);
    }
  }
  // perceptual through an MSE head
  Var ref = ag::constant(percep(x)->value.clone());
  auto build = [&] { return ag::mse(percep(x), ref); };
  (void)build;
}

TEST_CASE("toy flow estimator recovers integer translations") {
  ag::Tensor a = rand_image(32, 12);
  // zero displacement for identical images
  FlowField self = toy_flow_estimate(a, a);
  for (int64_t i = 0; i < self.field.size(); ++i) CHECK(self.field[i] == 0.0);
  // right shift by 3
  ag::Tensor b = shift_right(a, 3);
  FlowField f = toy_flow_estimate(a, b);
  CHECK(f.field[0] == 3.0);
  CHECK(f.field[32 * 32] == 0.0);
  // antisymmetry on pure translations
  FlowField back = toy_flow_estimate(b, a);
  CHECK(back.field[0] == -3.0);
  CHECK(back.field[32 * 32] == 0.0);
  // vertical translation
  ag::Tensor c({3, 32, 32});
  for (int64_t ch = 0; ch < 3; ++ch)
    for (int64_t y = 0; y < 32; ++y)
      for (int64_t x = 0; x < 32; ++x)
        c[(ch * 32 + y) * 32 + x] = a[(ch * 32 + std::max<int64_t>(0, y - 2)) * 32 + x];
  FlowField fv = toy_flow_estimate(a, c);
  CHECK(fv.field[0] == 0.0);
  CHECK(fv.field[32 * 32] == 2.0);
}

TEST_CASE("analytic translation flow is constant") {
  FlowField f = analytic_translation_flow({0, 0}, 4, 4);
  for (int64_t i = 0; i < f.field.size(); ++i) CHECK(f.field[i] == 0.0);
  FlowField g = analytic_translation_flow({1.5, -2.0}, 3, 5);
  CHECK(g.field.shape() == ag::Shape{2, 3, 5});
  for (int64_t i = 0; i < 15; ++i) {
    CHECK(g.field[i] == 1.5);
    CHECK(g.field[15 + i] == -2.0);
  }
}

TEST_CASE("toy pose and expression features") {
  ag::Tensor flat = ag::Tensor::full({3, 16, 16}, 0.25);
  std::vector<double> pose = toy_pose_features(flat);
  REQUIRE(pose.size() == 4);
  for (double v : pose) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
  std::vector<double> expr = toy_expression_features(flat);
  REQUIRE(expr.size() == 8);
  for (double v : expr) CHECK(v == 0.0);
  // determinism on a random image
  ag::Tensor x = rand_image(16, 13);
  CHECK(toy_pose_features(x) == toy_pose_features(x));
  CHECK(toy_expression_features(x) == toy_expression_features(x));
}

TEST_CASE("provider registry resolves toy keys and rejects unknown ones") {
  ProviderContext ctx{16, 5, 1};
  ProviderKeys keys;
  ProviderSet set = ProviderRegistry::instance().resolve(keys, ctx);
  CHECK(set.identity_embed != nullptr);
  CHECK(set.flow != nullptr);
  ProviderKeys bad;
  bad.flow = "pwcnet";
  CHECK_THROWS_AS((void)ProviderRegistry::instance().resolve(bad, ctx), Error);
  // user-registered providers are available under their key
  ProviderRegistry::instance().register_provider(
      ProviderRegistry::Slot::flow, "zero",
      [](ProviderSet& s, const ProviderContext&) {
        s.flow = [](const ag::Tensor& a, const ag::Tensor&) {
          return analytic_translation_flow({0, 0}, a.dim(1), a.dim(2));
        };
      });
  ProviderKeys zero_keys;
  zero_keys.flow = "zero";
  ProviderSet zs = ProviderRegistry::instance().resolve(zero_keys, ctx);
  ag::Tensor img = rand_image(16, 14);
  CHECK(zs.flow(img, img).field[0] == 0.0);
}
