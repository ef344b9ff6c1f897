// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failed criteria. Criteria 8-9 run real training and dominate the runtime.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "faceswap/blending.hpp"
#include "faceswap/image.hpp"
#include "faceswap/latent.hpp"
#include "faceswap/losses.hpp"
#include "faceswap/metrics.hpp"
#include "faceswap/nets.hpp"
#include "faceswap/perception.hpp"
#include "faceswap/pipeline.hpp"
#include "faceswap/video.hpp"

using namespace faceswap;
using ag::Var;
namespace fs = std::filesystem;

namespace {

struct Checker {
  bool ok = true;
  std::string detail;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
  void close(double got, double want, double tol, const std::string& what) {
    if (!(std::abs(got - want) <= tol)) {
      char buf[256];
      std::snprintf(buf, sizeof(buf), "%s (got %.12g, want %.12g, tol %.1g)",
                    what.c_str(), got, want, tol);
      expect(false, buf);
    }
  }
  void rel_close(double got, double want, double rtol, const std::string& what) {
    double denom = std::max(std::abs(want), 1e-300);
    if (want == 0.0) {
      close(got, want, rtol, what);
    } else if (!(std::abs(got - want) / denom <= rtol)) {
      char buf[256];
      std::snprintf(buf, sizeof(buf), "%s (got %.12g, want %.12g, rtol %.1g)",
                    what.c_str(), got, want, rtol);
      expect(false, buf);
    }
  }
};

Var image_var(const ag::Tensor& img) {
  return ag::constant(img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)}));
}

// generic central-difference comparison against the analytic gradient
void grad_against_fd(Checker& c, const std::vector<Var>& params,
                     const std::function<Var()>& build, const std::string& what,
                     int64_t stride = 1) {
  Var loss = build();
  ag::zero_grad(params);
  ag::backward(loss);
  for (const Var& p : params) {
    if (!p->grad.defined()) {
      c.expect(false, what + ": missing gradient");
      return;
    }
    for (int64_t i = 0; i < p->value.size(); i += stride) {
      double x0 = p->value[i];
      double h = 1e-5;
      p->value[i] = x0 + h;
      double f1 = build()->value[0];
      p->value[i] = x0 - h;
      double f0 = build()->value[0];
      p->value[i] = x0;
      double numeric = (f1 - f0) / (2.0 * h);
      double analytic = p->grad[i];
      double rel = std::abs(numeric - analytic) /
                   std::max({1.0, std::abs(numeric), std::abs(analytic)});
      if (rel > 1e-3) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s: fd %.8g vs analytic %.8g at %lld",
                      what.c_str(), numeric, analytic, static_cast<long long>(i));
        c.expect(false, buf);
        return;
      }
    }
  }
}

ag::Tensor synth_face(int64_t res, double phase) {
  ag::Tensor t({3, res, res});
  for (int64_t y = 0; y < res; ++y)
    for (int64_t x = 0; x < res; ++x) {
      double u = static_cast<double>(x) / (res - 1);
      double v = static_cast<double>(y) / (res - 1);
      double face = std::exp(-((u - 0.5) * (u - 0.5) / 0.06 +
                               (v - 0.48) * (v - 0.48) / 0.09));
      double eye_l = std::exp(-((u - 0.38) * (u - 0.38) + (v - 0.4) * (v - 0.4)) / 0.002);
      double eye_r = std::exp(-((u - 0.62) * (u - 0.62) + (v - 0.4) * (v - 0.4)) / 0.002);
      double mouth = std::exp(-((u - 0.5) * (u - 0.5) / 0.008 +
                                (v - 0.62) * (v - 0.62) / 0.001));
      double bg = 0.25 * std::sin(7.0 * u + phase) * std::cos(5.0 * v - phase);
      t[(0 * res + y) * res + x] = 0.65 * face - 0.5 * eye_l - 0.5 * eye_r + 0.3 * mouth + 0.25 * bg - 0.15;
      t[(1 * res + y) * res + x] = 0.5 * face - 0.45 * eye_l - 0.45 * eye_r - 0.2 * mouth + 0.25 * bg - 0.2;
      t[(2 * res + y) * res + x] = 0.4 * face - 0.4 * eye_l - 0.4 * eye_r - 0.1 * mouth + 0.3 * bg - 0.1;
    }
  for (int64_t i = 0; i < t.size(); ++i) t[i] = std::max(-1.0, std::min(1.0, t[i]));
  return t;
}

nets::LandmarkSet face_landmarks(double shift) {
  nets::LandmarkSet l;
  l.points.push_back({0.38, 0.40 + shift});
  l.points.push_back({0.62, 0.40 + shift});
  l.points.push_back({0.50, 0.52 + shift});
  l.points.push_back({0.42, 0.62 + shift});
  l.points.push_back({0.58, 0.62 + shift});
  return l;
}

pipeline::Config smoke_config(uint64_t seed) {
  pipeline::Config cfg;
  cfg.model.gen.resolution = 64;
  cfg.model.gen.latent_width = 24;
  cfg.model.gen.channel_scale = 1.0 / 32.0;  // width 16 at every level
  cfg.model.num_landmarks = 5;
  cfg.model.heatmap_grid = 32;
  cfg.model.heatmap_sigma = 1.5;
  cfg.train.seed = seed;
  cfg.train.batch_size = 4;
  cfg.train.learning_rate = 2e-3;
  cfg.train.p_same = 1.0;
  return cfg;
}

struct SmokeRunResult {
  bool reached = false;
  int64_t steps = 0;
  double psnr = 0.0;
  std::string checkpoint;
  std::string image;
};

// criterion 8(a): pretrain, then overfit a single image in self-reconstruction
// mode until PSNR(y_f, x_t) >= 25 dB, capped at 2000 steps
SmokeRunResult run_smoke_overfit(uint64_t seed, const std::string& out_dir,
                                 bool quiet) {
  fs::create_directories(out_dir);
  pipeline::Config cfg = smoke_config(seed);
  pipeline::Session session(cfg);
  ag::Tensor face = synth_face(64, 0.3);
  pipeline::Sample sample;
  sample.name = "face";
  sample.image = face;
  sample.landmarks = face_landmarks(0.0);
  sample.mask = img::box_mask(64, 64, 0.5, 0.5, 0.26, 0.3);
  pipeline::Dataset data = pipeline::Dataset::from_samples({sample});

  pipeline::pretrain_generator(session, data, 150, nullptr);

  SmokeRunResult result;
  auto psnr_now = [&] {
    pipeline::SwapResult r = pipeline::swap_image(
        session.models, face, face, sample.mask, sample.landmarks, sample.landmarks);
    return std::make_pair(img::psnr(r.final_image, face), r.final_image);
  };
  ag::Tensor final_image;
  while (result.steps < 2000) {
    pipeline::train(session, data, 25, nullptr);
    result.steps += 25;
    auto [p, im] = psnr_now();
    result.psnr = p;
    final_image = im;
    if (!quiet)
      std::fprintf(stderr, "  [smoke] step %lld psnr %.2f dB\n",
                   static_cast<long long>(result.steps), p);
    if (p >= 25.0) {
      result.reached = true;
      break;
    }
  }
  result.checkpoint = out_dir + "/checkpoint.fsck";
  result.image = out_dir + "/overfit.png";
  pipeline::save_checkpoint(session, result.checkpoint);
  img::save_png_rgb(final_image, result.image);
  return result;
}

bool files_identical(const std::string& a, const std::string& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  return !ca.empty() && ca == cb;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

SmokeRunResult g_smoke_a;  // shared between criteria 8 and 9

// ----- criteria -----

void criterion_1(Checker& c) {
  c.expect(latent::structure_split_index(18) == 7, "structure_split_index(18) != 7");
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    int64_t L = 2 + static_cast<int64_t>(rng.uniform_int(17));
    int64_t D = 1 + static_cast<int64_t>(rng.uniform_int(12));
    latent::LatentCode w{ag::random_normal({L, D}, rng),
                         latent::structure_split_index(L)};
    auto [g, h] = latent::split_code(w);
    c.expect(latent::merge_code(g, h).vectors.bit_equal(w.vectors),
             "split/merge round trip not bitwise");
    latent::TransferDirection n{ag::random_normal(g.vectors.shape(), rng)};
    latent::StructureCode ghat = latent::apply_transfer_direction(g, n);
    for (int64_t i = 0; i < ghat.vectors.size(); ++i)
      c.expect(ghat.vectors[i] == g.vectors[i] + n.vectors[i], "g_hat != g_s + n");
    latent::LatentCode swap = latent::compose_swap_code(ghat, h);
    auto back = latent::split_code(swap);
    c.expect(back.second.vectors.bit_equal(h.vectors),
             "compose_swap_code appearance block not bitwise h_t");
    c.expect(back.first.vectors.bit_equal(ghat.vectors),
             "compose_swap_code structure block not bitwise g_hat");
  }
}

void criterion_2(Checker& c) {
  auto scores = [](std::vector<double> v) {
    int64_t n = static_cast<int64_t>(v.size());
    return ag::constant(ag::Tensor({n}, std::move(v)));
  };
  c.rel_close(ag::scalar_value(losses::adversarial_generator_loss(scores({0.5}))),
              std::log(2.0), 1e-9, "-log(0.5)");
  c.close(ag::scalar_value(losses::adversarial_generator_loss(scores({1.0}))), 0.0,
          1e-9, "-log(1)");
  c.rel_close(ag::scalar_value(losses::adversarial_generator_loss(scores({0.0}))),
              -std::log(1e-8), 1e-9, "clamped -log(0)");
  c.close(ag::scalar_value(losses::discriminator_loss(scores({0.0}), scores({1.0}))),
          0.0, 1e-9, "perfect discriminator");
  c.rel_close(
      ag::scalar_value(losses::discriminator_loss(scores({0.5}), scores({0.5}))),
      2.0 * std::log(2.0), 1e-9, "uninformed discriminator");
  c.rel_close(
      ag::scalar_value(losses::discriminator_loss(scores({1.0}), scores({1.0}))),
      -std::log(1e-8), 1e-9, "clamped fake=1 term");

  // constant-field MSE values
  Rng rng(2);
  ag::Tensor xt = ag::random_uniform({3, 8, 8}, rng, -1, 1);
  ag::Tensor ys = xt.clone();
  for (int64_t i = 0; i < ys.size(); ++i) ys[i] += 0.1;
  losses::ImageFn flat = [](const Var& x) {
    return ag::reshape(x, {1, x->value.size()});
  };
  c.rel_close(ag::scalar_value(losses::landmark_alignment_loss(
                  image_var(ys), image_var(xt), image_var(xt), flat)),
              0.01, 1e-9, "landmark constant-field MSE");
  c.rel_close(ag::scalar_value(losses::reconstruction_loss(
                  image_var(xt), image_var(ys), image_var(xt), true, 0.8, flat)),
              0.018, 1e-9, "reconstruction 0.01 + 0.8*0.01");
  c.close(ag::scalar_value(losses::reconstruction_loss(
              image_var(ys), image_var(ys), image_var(xt), false, 0.8, flat)),
          0.0, 0.0, "reconstruction 0 when identities differ");

  auto unit = ag::constant(ag::Tensor::scalar(1.0));
  c.rel_close(ag::scalar_value(losses::total_loss(unit, unit, unit, unit, unit,
                                                  losses::LossWeights{})),
              5.3, 1e-9, "Eq.14 total with unit components");
}

void criterion_3(Checker& c) {
  perception::ProviderContext ctx{16, 4, 7};
  losses::ImageFn embed = perception::toy_identity_embedder(ctx);
  losses::ImageFn estimate = perception::toy_landmark_estimator(ctx);
  losses::ImageFn percep = perception::toy_perceptual_extractor(ctx);
  Rng rng(3);

  Var y_f = ag::make_param(ag::random_uniform({1, 3, 16, 16}, rng, -0.9, 0.9));
  Var y_s = ag::make_param(ag::random_uniform({1, 3, 16, 16}, rng, -0.9, 0.9));
  Var x_s = image_var(ag::random_uniform({3, 16, 16}, rng, -0.9, 0.9));
  Var x_t = image_var(ag::random_uniform({3, 16, 16}, rng, -0.9, 0.9));

  grad_against_fd(c, {y_f}, [&] { return losses::identity_loss(y_f, x_s, embed); },
                  "identity gradient", 13);
  grad_against_fd(c, {y_s, y_f},
                  [&] { return losses::landmark_alignment_loss(y_s, y_f, x_t, estimate); },
                  "landmark gradient", 17);
  grad_against_fd(c, {y_s, y_f},
                  [&] {
                    return losses::reconstruction_loss(y_s, y_f, x_t, true, 0.8, percep);
                  },
                  "reconstruction gradient", 17);

  // style transfer: the guidance image is detached, so differentiate the MSE
  // against the mapping frozen at the base point
  ag::Tensor xt_img = ag::random_uniform({3, 8, 8}, rng, -1, 1);
  ag::Tensor mask = img::box_mask(8, 8, 0.5, 0.5, 0.4, 0.4);
  Var y8 = ag::make_param(ag::random_uniform({1, 3, 8, 8}, rng, -1, 1));
  ag::Tensor frozen = losses::histogram_map(
      y8->value.reshaped({3, 8, 8}), xt_img, mask).image.reshaped({1, 3, 8, 8});
  Var frozen_c = ag::constant(frozen);
  grad_against_fd(c, {y8}, [&] { return ag::mse(y8, frozen_c); },
                  "style-transfer gradient (detached mapping)", 7);
  // and the live loss reports exactly that analytic gradient
  Var live = losses::style_transfer_loss(y8, xt_img, mask);
  ag::zero_grad({y8});
  ag::backward(live);
  for (int64_t i = 0; i < y8->value.size(); ++i) {
    double want = 2.0 * (y8->value[i] - frozen[i]) / static_cast<double>(frozen.size());
    c.close(y8->grad[i], want, 1e-9, "style-transfer detached gradient");
  }

  Var sc = ag::make_param(ag::random_uniform({6}, rng, 0.05, 0.95));
  grad_against_fd(c, {sc}, [&] { return losses::adversarial_generator_loss(sc); },
                  "adversarial gradient");

  std::vector<Var> codes, tgts;
  for (int k = 0; k < 3; ++k) {
    codes.push_back(ag::make_param(ag::random_normal({3, 4}, rng)));
    tgts.push_back(ag::constant(ag::random_normal({3, 4}, rng)));
  }
  grad_against_fd(c, codes, [&] { return video::code_trajectory_loss(codes, tgts); },
                  "code trajectory gradient");

  Var f01 = ag::make_param(ag::random_normal({2, 8, 8}, rng));
  Var f02 = ag::make_param(ag::random_normal({2, 8, 8}, rng));
  Var f20 = ag::make_param(ag::random_normal({2, 8, 8}, rng));
  grad_against_fd(c, {f01, f02, f20},
                  [&] {
                    std::vector<video::FlowTriple> t = {{f01, f02, f20}};
                    return video::flow_trajectory_penalty(
                        t, video::FlowMode::literal, video::FtAggregation::group);
                  },
                  "flow trajectory gradient", 11);
}

void criterion_4(Checker& c) {
  // equal-count monotone mapping, exact
  ag::Tensor y({3, 2, 2}), ref({3, 2, 2});
  for (int64_t ch = 0; ch < 3; ++ch)
    for (int64_t i = 0; i < 4; ++i) {
      y[ch * 4 + i] = static_cast<double>(3 - i);
      ref[ch * 4 + i] = 10.0 + static_cast<double>(i);
    }
  ag::Tensor full = ag::Tensor::full({1, 2, 2}, 1.0);
  ag::Tensor mapped = losses::histogram_map(y, ref, full).image;
  for (int64_t ch = 0; ch < 3; ++ch)
    for (int64_t i = 0; i < 4; ++i)
      c.close(mapped[ch * 4 + i], 13.0 - i, 0.0, "equal-count mapping");

  // quantile-interpolated case
  std::vector<double> endpoints = losses::quantile_map_values({0, 100}, {50, 60, 70});
  c.close(endpoints[0], 50.0, 0.0, "quantile endpoint 0 -> 50");
  c.close(endpoints[1], 70.0, 0.0, "quantile endpoint 1 -> 70");

  // idempotence, exact
  Rng rng(4);
  ag::Tensor x = ag::random_uniform({3, 8, 8}, rng, -1, 1);
  ag::Tensor m = img::box_mask(8, 8, 0.5, 0.5, 0.35, 0.35);
  c.expect(losses::histogram_map(x, x, m).image.bit_equal(x),
           "HM(x,x,m) != x bitwise");

  // monotonicity on 100 random instances
  for (int trial = 0; trial < 100; ++trial) {
    ag::Tensor a = ag::random_uniform({3, 6, 6}, rng, -1, 1);
    ag::Tensor b = ag::random_uniform({3, 6, 6}, rng, -1, 1);
    ag::Tensor mm({1, 6, 6});
    for (int64_t i = 0; i < 36; ++i) mm[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    mm[7] = 1.0;
    ag::Tensor out = losses::histogram_map(a, b, mm).image;
    for (int64_t ch = 0; ch < 3; ++ch)
      for (int64_t p = 0; p < 36; ++p)
        for (int64_t q = 0; q < 36; ++q)
          if (mm[p] != 0.0 && mm[q] != 0.0 && a[ch * 36 + p] <= a[ch * 36 + q])
            c.expect(out[ch * 36 + p] <= out[ch * 36 + q] + 1e-12,
                     "histogram mapping not monotone");
  }
}

void criterion_5(Checker& c) {
  // self-FID via a synthetic extractor
  auto extract = [](const ag::Tensor& t) {
    return std::vector<double>{t[0], t[1], t[2]};
  };
  Rng rng(5);
  std::vector<ag::Tensor> imgs;
  for (int i = 0; i < 8; ++i) imgs.push_back(ag::random_normal({3, 2, 2}, rng));
  c.close(metrics::fid(imgs, imgs, extract), 0.0, 1e-6, "self-FID");

  metrics::GaussianStats a{Eigen::Vector2d(0, 0), Eigen::Matrix2d::Identity()};
  metrics::GaussianStats b{Eigen::Vector2d(3, 4), Eigen::Matrix2d::Identity()};
  c.close(metrics::frechet_distance(a, b), 25.0, 1e-6, "frechet analytic 25");
  metrics::GaussianStats s1{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 4.0)};
  metrics::GaussianStats s2{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 1.0)};
  c.close(metrics::frechet_distance(s1, s2), 1.0, 1e-6, "frechet analytic 1");

  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::vector<double>> fa, fb;
    for (int i = 0; i < 6; ++i) {
      fa.push_back({rng.normal(), rng.normal()});
      fb.push_back({rng.normal() + 1.0, rng.normal() * 1.5});
    }
    metrics::GaussianStats ga = metrics::gaussian_stats(fa);
    metrics::GaussianStats gb = metrics::gaussian_stats(fb);
    double ab = metrics::frechet_distance(ga, gb);
    double ba = metrics::frechet_distance(gb, ga);
    c.expect(std::abs(ab - ba) <= 1e-8 * std::max(1.0, std::abs(ab)),
             "frechet distance not symmetric within 1e-8 relative");
  }
}

void criterion_6(Checker& c) {
  Rng rng(6);
  std::vector<Var> tgt, swp;
  for (int k = 0; k < 4; ++k) {
    ag::Tensor t = ag::random_normal({3, 4}, rng);
    tgt.push_back(ag::constant(t));
    ag::Tensor s = t.clone();
    for (int64_t i = 0; i < s.size(); ++i) s[i] += 2.5;
    swp.push_back(ag::constant(s));
  }
  c.close(ag::scalar_value(video::code_trajectory_loss(swp, tgt)), 0.0, 1e-12,
          "L_ct under constant code offset");

  auto field = [](double dx, double dy) {
    return ag::constant(perception::analytic_translation_flow({dx, dy}, 6, 6).field);
  };
  std::vector<video::FlowTriple> lin = {{field(1, 0), field(2, 0), field(-2, 0)}};
  c.close(ag::scalar_value(video::flow_trajectory_penalty(
              lin, video::FlowMode::literal, video::FtAggregation::group)),
          std::sqrt(0.5), 1e-9, "L_ft literal linear-motion triple");
  c.close(ag::scalar_value(video::flow_trajectory_penalty(
              lin, video::FlowMode::midpoint, video::FtAggregation::group)),
          0.0, 1e-9, "L_ft midpoint linear-motion triple");

  std::vector<video::FlowTriple> still = {{field(0, 0), field(0, 0), field(0, 0)}};
  c.close(ag::scalar_value(video::flow_trajectory_penalty(
              still, video::FlowMode::literal, video::FtAggregation::group)),
          0.0, 0.0, "L_ft literal static");
  c.close(ag::scalar_value(video::flow_trajectory_penalty(
              still, video::FlowMode::midpoint, video::FtAggregation::group)),
          0.0, 0.0, "L_ft midpoint static");
}

void criterion_7(Checker& c) {
  Rng rng(7);
  // binary-mask exact replacement
  ag::Tensor mask({1, 8, 8});
  for (int64_t i = 0; i < 64; ++i) mask[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
  Var fsv = ag::constant(ag::random_normal({1, 3, 8, 8}, rng));
  Var ftv = ag::constant(ag::random_normal({1, 3, 8, 8}, rng));
  ag::Tensor out = blend::aggregate_level(fsv, ftv, mask)->value;
  for (int64_t ch = 0; ch < 3; ++ch)
    for (int64_t i = 0; i < 64; ++i) {
      double want = mask[i] == 1.0 ? fsv->value[ch * 64 + i] : ftv->value[ch * 64 + i];
      c.expect(out[ch * 64 + i] == want, "binary mask not a bitwise selection");
    }

  // convexity over >= 1000 random elements
  int64_t checked = 0;
  while (checked < 1000) {
    ag::Tensor soft({1, 8, 8});
    for (int64_t i = 0; i < 64; ++i) soft[i] = rng.uniform();
    Var fa = ag::constant(ag::random_normal({1, 3, 8, 8}, rng));
    Var fb = ag::constant(ag::random_normal({1, 3, 8, 8}, rng));
    ag::Tensor mix = blend::aggregate_level(fa, fb, soft)->value;
    for (int64_t ch = 0; ch < 3; ++ch)
      for (int64_t i = 0; i < 64; ++i) {
        double lo = std::min(fa->value[ch * 64 + i], fb->value[ch * 64 + i]);
        double hi = std::max(fa->value[ch * 64 + i], fb->value[ch * 64 + i]);
        c.expect(mix[ch * 64 + i] >= lo - 1e-15 && mix[ch * 64 + i] <= hi + 1e-15,
                 "blend output outside the operand interval");
        ++checked;
      }
  }

  // area downsampling equals brute-force block means exactly
  ag::Tensor m({1, 16, 16});
  for (int64_t i = 0; i < 256; ++i) m[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
  for (int64_t res : {8, 4, 2}) {
    ag::Tensor d = blend::downsample_mask(m, res);
    int64_t f = 16 / res;
    for (int64_t oy = 0; oy < res; ++oy)
      for (int64_t ox = 0; ox < res; ++ox) {
        double s = 0;
        for (int64_t ky = 0; ky < f; ++ky)
          for (int64_t kx = 0; kx < f; ++kx) s += m[(oy * f + ky) * 16 + ox * f + kx];
        c.expect(d[oy * res + ox] == s / static_cast<double>(f * f),
                 "area downsample != block mean");
      }
  }
}

void criterion_8(Checker& c) {
  g_smoke_a = run_smoke_overfit(424242, "acceptance_out/smoke_a1", false);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "overfit PSNR %.2f dB after %lld steps (need >= 25 within 2000)",
                g_smoke_a.psnr, static_cast<long long>(g_smoke_a.steps));
  std::fprintf(stderr, "  [smoke] %s\n", buf);
  c.expect(g_smoke_a.reached, buf);

  // (b) 200-step swap-training run: median total of last 20 below first 20
  pipeline::Config cfg = smoke_config(424243);
  cfg.train.p_same = 0.2;
  cfg.train.learning_rate = 5e-4;
  pipeline::Session session(cfg);
  std::vector<pipeline::Sample> samples;
  for (int i = 0; i < 3; ++i) {
    pipeline::Sample s;
    s.name = "face" + std::to_string(i);
    s.image = synth_face(64, 0.5 * i);
    s.landmarks = face_landmarks(0.01 * i);
    s.mask = img::box_mask(64, 64, 0.5, 0.5, 0.26, 0.3);
    samples.push_back(std::move(s));
  }
  pipeline::Dataset data = pipeline::Dataset::from_samples(samples);
  pipeline::pretrain_generator(session, data, 50, nullptr);
  std::vector<double> totals;
  pipeline::train(session, data, 200,
                  [&](int64_t, const losses::LossBundle& b) { totals.push_back(b.total); });
  std::vector<double> first(totals.begin(), totals.begin() + 20);
  std::vector<double> last(totals.end() - 20, totals.end());
  double m_first = median(first);
  double m_last = median(last);
  std::snprintf(buf, sizeof(buf), "swap-training medians: first20 %.4f last20 %.4f",
                m_first, m_last);
  std::fprintf(stderr, "  [smoke] %s\n", buf);
  c.expect(m_last < m_first, buf);
}

void criterion_9(Checker& c) {
  if (g_smoke_a.checkpoint.empty()) {
    c.expect(false, "criterion 8(a) did not run");
    return;
  }
  SmokeRunResult second = run_smoke_overfit(424242, "acceptance_out/smoke_a2", true);
  c.expect(files_identical(g_smoke_a.checkpoint, second.checkpoint),
           "checkpoints differ between identical seeded runs");
  c.expect(files_identical(g_smoke_a.image, second.image),
           "output images differ between identical seeded runs");
}

void criterion_10(Checker& c) {
  std::vector<std::vector<double>> sources = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  c.close(metrics::id_retrieval_rate(sources, sources, {0, 1, 2}), 1.0, 0.0,
          "retrieval on orthogonal embeddings");
  std::vector<std::vector<double>> swapped = {{1, 0, 0}, {0, 1, 0}, {0, 1, 0}};
  c.close(metrics::id_retrieval_rate(swapped, sources, {0, 1, 2}), 2.0 / 3.0, 1e-12,
          "one-error retrieval 2/3");
  ag::Tensor z({3, 2, 2});
  ag::Tensor p({3, 2, 2});
  p[0] = 3.0;
  p[1] = 4.0;
  auto first_two = [](const ag::Tensor& t) {
    return std::vector<double>{t[0], t[1]};
  };
  c.close(metrics::attribute_error({z}, {p}, first_two), 5.0, 0.0,
          "attribute error 3-4-5 case");
}

}  // namespace

int main() {
  struct Entry {
    int id;
    const char* name;
    std::function<void(Checker&)> run;
  };
  std::vector<Entry> criteria = {
      {1, "latent algebra suite", criterion_1},
      {2, "loss oracle suite", criterion_2},
      {3, "gradient checks", criterion_3},
      {4, "histogram-mapping oracle", criterion_4},
      {5, "Frechet/FID suite", criterion_5},
      {6, "trajectory suite", criterion_6},
      {7, "blending suite", criterion_7},
      {8, "end-to-end smoke", criterion_8},
      {9, "determinism of seeded runs", criterion_9},
      {10, "metric sanity", criterion_10},
  };
  int failures = 0;
  for (const auto& entry : criteria) {
    Checker c;
    auto t0 = std::chrono::steady_clock::now();
    try {
      entry.run(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.ok) {
      std::printf("[PASS] criterion %2d: %s (%.1fs)\n", entry.id, entry.name, secs);
    } else {
      std::printf("[FAIL] criterion %2d: %s (%.1fs) -- %s\n", entry.id, entry.name,
                  secs, c.detail.c_str());
      ++failures;
    }
    std::fflush(stdout);
  }
  return failures;
}
