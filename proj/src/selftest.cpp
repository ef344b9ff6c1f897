#include "faceswap/selftest.hpp"

#include <cmath>
#include <sstream>

#include "faceswap/blending.hpp"
#include "faceswap/image.hpp"
#include "faceswap/latent.hpp"
#include "faceswap/losses.hpp"
#include "faceswap/metrics.hpp"
#include "faceswap/nets.hpp"
#include "faceswap/perception.hpp"
#include "faceswap/pipeline.hpp"
#include "faceswap/video.hpp"

namespace faceswap::pipeline {

namespace {

struct Harness {
  const std::function<void(const std::string&)>& log;
  int failures = 0;

  void check(const std::string& name, bool ok) {
    log(std::string(ok ? "[PASS] " : "[FAIL] ") + name);
    if (!ok) ++failures;
  }
  void close(const std::string& name, double got, double want, double tol) {
    bool ok = std::abs(got - want) <= tol;
    if (!ok) {
      std::ostringstream os;
      os << name << " (got " << got << ", want " << want << ")";
      check(os.str(), false);
    } else {
      check(name, true);
    }
  }
};

ag::Tensor arange_code(int64_t l, int64_t d) {
  ag::Tensor t({l, d});
  for (int64_t i = 0; i < t.size(); ++i) t[i] = 0.01 * static_cast<double>(i) - 0.5;
  return t;
}

}  // namespace

int run_self_test(const std::function<void(const std::string&)>& log) {
  Harness h{log};

  // latent algebra
  {
    latent::LatentCode w{arange_code(18, 8), latent::structure_split_index(18)};
    auto [g, a] = latent::split_code(w);
    h.check("latent: split index 18 -> 7", w.split_index == 7);
    h.check("latent: split shapes 7xD / 11xD",
            g.vectors.dim(0) == 7 && a.vectors.dim(0) == 11);
    h.check("latent: merge(split(w)) == w bitwise",
            latent::merge_code(g, a).vectors.bit_equal(w.vectors));
    latent::TransferDirection zero{ag::Tensor::zeros(g.vectors.shape())};
    h.check("latent: g + 0 == g bitwise",
            latent::apply_transfer_direction(g, zero).vectors.bit_equal(g.vectors));
    latent::LatentCode swap = latent::compose_swap_code(g, a);
    auto [g2, a2] = latent::split_code(swap);
    h.check("latent: compose keeps appearance bitwise", a2.vectors.bit_equal(a.vectors));
    (void)g2;
  }

  // generator arithmetic
  {
    nets::GeneratorConfig full;
    h.check("nets: num_latent_vectors(1024) == 18", nets::num_latent_vectors(1024) == 18);
    h.check("nets: channel_width(1024) == 32", nets::channel_width(1024, full) == 32);
    h.check("nets: channel_width(64) == 512", nets::channel_width(64, full) == 512);
  }

  // heatmaps
  {
    nets::LandmarkSet l;
    l.points.push_back({0.5, 0.5});
    nets::HeatmapStack s = nets::rasterize_heatmaps(l, 65, 2.0);
    h.close("nets: on-grid heatmap peak == 1", s.maps[32 * 65 + 32], 1.0, 0.0);
    nets::LandmarkSet l2;
    l2.points.push_back({0.25, 0.5});
    nets::HeatmapStack s2 = nets::rasterize_heatmaps(l2, 65, 2.0);
    h.close("nets: heatmap value at 1px == exp(-1/8)", s2.maps[32 * 65 + 15],
            std::exp(-0.125), 1e-12);
  }

  // blending
  {
    ag::Tensor mask({1, 2, 2}, {1, 0, 0, 1});
    ag::Var fs = ag::constant(ag::Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
    ag::Var ft = ag::constant(ag::Tensor({1, 1, 2, 2}, {5, 6, 7, 8}));
    ag::Tensor out = blend::aggregate_level(fs, ft, mask)->value;
    h.check("blend: binary mask is bitwise selection",
            out[0] == 1 && out[1] == 6 && out[2] == 7 && out[3] == 4);
    ag::Tensor soft = blend::downsample_mask(mask, 1);
    h.close("blend: checkerboard downsample is 0.5", soft[0], 0.5, 0.0);
  }

  // loss oracles
  {
    ag::Var half = ag::constant(ag::Tensor({1}, {0.5}));
    h.close("losses: -log(0.5) == ln 2",
            ag::scalar_value(losses::adversarial_generator_loss(half)),
            std::log(2.0), 1e-12);
    ag::Var zero = ag::constant(ag::Tensor({1}, {0.0}));
    h.close("losses: clamped -log(0) == -log(1e-8)",
            ag::scalar_value(losses::adversarial_generator_loss(zero)),
            -std::log(1e-8), 1e-9);
    ag::Var one = ag::constant(ag::Tensor({1}, {1.0}));
    h.close("losses: -log(1) == 0",
            ag::scalar_value(losses::adversarial_generator_loss(one)), 0.0, 0.0);
    ag::Var c1 = ag::constant(ag::Tensor::scalar(1.0));
    h.close("losses: Eq.14 with unit components == 5.3",
            ag::scalar_value(losses::total_loss(c1, c1, c1, c1, c1,
                                                losses::LossWeights{})),
            5.3, 1e-12);
  }

  // histogram mapping
  {
    ag::Tensor y({3, 2, 2}), ref({3, 2, 2});
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t i = 0; i < 4; ++i) {
        y[c * 4 + i] = static_cast<double>(i);
        ref[c * 4 + i] = static_cast<double>(10 + i);
      }
    ag::Tensor m = ag::Tensor::full({1, 2, 2}, 1.0);
    ag::Tensor mapped = losses::histogram_map(y, ref, m).image;
    bool ok = true;
    for (int64_t i = 0; i < 12; ++i) ok = ok && mapped[i] == ref[i];
    h.check("losses: equal-count histogram mapping is exact", ok);
    h.check("losses: histogram mapping idempotent on itself",
            losses::histogram_map(y, y, m).image.bit_equal(y));
  }

  // Frechet / FID
  {
    metrics::GaussianStats a{Eigen::Vector2d(0, 0), Eigen::Matrix2d::Identity()};
    metrics::GaussianStats b{Eigen::Vector2d(3, 4), Eigen::Matrix2d::Identity()};
    h.close("metrics: frechet mean-shift case == 25", metrics::frechet_distance(a, b),
            25.0, 1e-9);
    metrics::GaussianStats c{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 4.0)};
    metrics::GaussianStats d{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 1.0)};
    h.close("metrics: frechet variance case == 1", metrics::frechet_distance(c, d),
            1.0, 1e-9);
    h.close("metrics: self distance == 0", metrics::frechet_distance(a, a), 0.0, 1e-6);
  }

  // trajectory losses
  {
    std::vector<ag::Var> swap_codes, tgt_codes;
    for (int k = 0; k < 3; ++k) {
      ag::Tensor t({2, 2});
      for (int64_t i = 0; i < 4; ++i) t[i] = k * 0.3 + 0.1 * static_cast<double>(i);
      tgt_codes.push_back(ag::constant(t));
      ag::Tensor s = t.clone();
      for (int64_t i = 0; i < 4; ++i) s[i] += 7.5;
      swap_codes.push_back(ag::constant(s));
    }
    h.close("video: L_ct invariant to constant code offset",
            ag::scalar_value(video::code_trajectory_loss(swap_codes, tgt_codes)),
            0.0, 1e-12);
    video::FrameSequence seq;
    auto v01 = perception::analytic_translation_flow({1, 0}, 4, 4);
    auto v02 = perception::analytic_translation_flow({2, 0}, 4, 4);
    auto v20 = perception::analytic_translation_flow({-2, 0}, 4, 4);
    std::vector<video::FlowTriple> triples{{ag::constant(v01.field),
                                            ag::constant(v02.field),
                                            ag::constant(v20.field)}};
    h.close("video: L_ft literal on linear motion == sqrt(0.5)",
            ag::scalar_value(video::flow_trajectory_penalty(
                triples, video::FlowMode::literal, video::FtAggregation::group)),
            std::sqrt(0.5), 1e-12);
    h.close("video: L_ft midpoint on linear motion == 0",
            ag::scalar_value(video::flow_trajectory_penalty(
                triples, video::FlowMode::midpoint, video::FtAggregation::group)),
            0.0, 1e-12);
  }

  // end-to-end determinism on a tiny model
  {
    Config cfg;
    cfg.model.gen.resolution = 32;
    cfg.model.gen.latent_width = 16;
    cfg.model.gen.channel_scale = 1.0 / 64.0;
    cfg.model.num_landmarks = 5;
    cfg.model.heatmap_grid = 16;
    cfg.train.seed = 7;
    Session s(cfg);
    Rng rng(11);
    ag::Tensor xs = ag::random_uniform({3, 32, 32}, rng, -0.5, 0.5);
    ag::Tensor xt = ag::random_uniform({3, 32, 32}, rng, -0.5, 0.5);
    ag::Tensor mask = img::box_mask(32, 32, 0.5, 0.5, 0.25, 0.3);
    nets::LandmarkSet l;
    for (int i = 0; i < 5; ++i)
      l.points.push_back({0.2 + 0.15 * i, 0.4 + 0.05 * i});
    SwapResult a = swap_image(s.models, xs, xt, mask, l, l);
    SwapResult b = swap_image(s.models, xs, xt, mask, l, l);
    h.check("pipeline: swap_image is bitwise deterministic",
            a.final_image.bit_equal(b.final_image) &&
                a.side_output.bit_equal(b.side_output));
    ag::Tensor zero_dir = ag::Tensor::zeros(a.direction.vectors.shape());
    h.check("pipeline: fresh landmark encoder gives zero direction",
            a.direction.vectors.bit_equal(zero_dir));
    auto [g, app] = latent::split_code(a.swap_code);
    (void)g;
    ag::Var xt_var = ag::constant(xt.reshaped({1, 3, 32, 32}));
    ag::Var wt = s.models.inv.invert(xt_var);
    ag::Var ht = ag::slice(wt, 1, a.swap_code.split_index,
                           s.cfg.model.num_vectors() - a.swap_code.split_index);
    h.check("pipeline: swap code appearance block equals target bitwise",
            app.vectors.bit_equal(ht->value.reshaped(app.vectors.shape())));
  }

  // metric sanity
  {
    std::vector<std::vector<double>> src = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    h.close("metrics: retrieval on orthogonal embeddings == 1",
            metrics::id_retrieval_rate(src, src, {0, 1, 2}), 1.0, 0.0);
    std::vector<std::vector<double>> swapped = {{1, 0, 0}, {0, 1, 0}, {0, 1, 0}};
    h.close("metrics: one-error retrieval == 2/3",
            metrics::id_retrieval_rate(swapped, src, {0, 1, 2}), 2.0 / 3.0, 1e-12);
  }

  return h.failures;
}

}  // namespace faceswap::pipeline
