#include "faceswap/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "faceswap/blending.hpp"
#include "faceswap/checkpoint.hpp"
#include "faceswap/image.hpp"
#include "faceswap/metrics.hpp"

namespace faceswap::pipeline {

namespace {

using ag::Var;
namespace fs = std::filesystem;

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.code(), std::string(name) + ": " + e.what());
  }
}

Var image_var(const ag::Tensor& img) {
  return ag::constant(img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)}));
}

Var heatmap_var(const nets::HeatmapStack& h) {
  return ag::constant(h.maps.reshaped(
      {1, h.maps.dim(0), h.maps.dim(1), h.maps.dim(2)}));
}

Var fold_mean(const std::vector<Var>& parts) {
  Var acc = parts[0];
  for (size_t i = 1; i < parts.size(); ++i) acc = ag::add(acc, parts[i]);
  return ag::scale(acc, 1.0 / static_cast<double>(parts.size()));
}

void check_image(const ag::Tensor& img, int64_t resolution, const std::string& what) {
  require(img.rank() == 3 && img.dim(0) == 3 && img.dim(1) == resolution &&
              img.dim(2) == resolution,
          ErrorCode::shape_mismatch,
          what + " must be [3," + std::to_string(resolution) + "," +
              std::to_string(resolution) + "], got " + ag::shape_str(img.shape()));
}

void check_mask(const ag::Tensor& mask, int64_t resolution, const std::string& what) {
  require(mask.rank() == 3 && mask.dim(0) == 1 && mask.dim(1) == resolution &&
              mask.dim(2) == resolution,
          ErrorCode::shape_mismatch,
          what + " must be [1," + std::to_string(resolution) + "," +
              std::to_string(resolution) + "], got " + ag::shape_str(mask.shape()));
}

}  // namespace

int64_t ModelConfig::split_index() const {
  int64_t L = num_vectors();
  if (structure_k == 0) return latent::structure_split_index(L);
  require(structure_k >= 1 && structure_k <= L - 1, ErrorCode::invalid_config,
          "structure_k " + std::to_string(structure_k) + " outside [1," +
              std::to_string(L - 1) + "]");
  return structure_k;
}

Models::Models(const ModelConfig& cfg, const perception::ProviderKeys& keys,
               uint64_t seed)
    : mcfg(cfg),
      gen(cfg.gen, Rng(seed).fork(1)),
      inv(cfg.gen, Rng(seed).fork(2)),
      lenc(cfg.gen, cfg.num_landmarks, cfg.grid(), cfg.split_index(),
           Rng(seed).fork(3)),
      tenc(cfg.gen, Rng(seed).fork(4)),
      dec(cfg.gen, Rng(seed).fork(5)),
      disc(cfg.gen, Rng(seed).fork(6)) {
  perception::ProviderContext ctx;
  ctx.resolution = cfg.gen.resolution;
  ctx.num_landmarks = cfg.num_landmarks;
  ctx.seed = seed;
  providers = perception::ProviderRegistry::instance().resolve(keys, ctx);
}

nets::ParamList Models::named_params() const {
  nets::ParamList p;
  gen.collect_params(p);
  inv.collect_params(p);
  lenc.collect_params(p);
  tenc.collect_params(p);
  dec.collect_params(p);
  disc.collect_params(p);
  return p;
}

Session::Session(const Config& config)
    : cfg(config),
      models(config.model, config.providers, config.train.seed),
      data_rng(config.train.seed, 0) {
  if (cfg.model.disable_appearance_swap) cfg.train.weights.st = 0.0;
  apply_trainability();
  ag::AdamConfig ac{cfg.train.learning_rate, cfg.train.beta1, cfg.train.beta2,
                    cfg.train.epsilon};
  nets::ParamList gen_side;
  if (!cfg.train.freeze_generator) models.gen.collect_params(gen_side);
  if (cfg.train.train_inverter) models.inv.collect_params(gen_side);
  models.lenc.collect_params(gen_side);
  models.tenc.collect_params(gen_side);
  models.dec.collect_params(gen_side);
  opt_g = ag::Adam(nets::param_vars(gen_side), ac);
  nets::ParamList d;
  models.disc.collect_params(d);
  opt_d = ag::Adam(nets::param_vars(d), ac);
}

void Session::apply_trainability() {
  models.gen.set_trainable(!cfg.train.freeze_generator);
  models.inv.set_trainable(cfg.train.train_inverter);
  models.lenc.set_trainable(true);
  models.tenc.set_trainable(true);
  models.dec.set_trainable(true);
  models.disc.set_trainable(true);
}

std::vector<ag::Var> Session::gen_side_params() const { return opt_g.params(); }

SwapGraph swap_forward(const Models& models, const Var& x_s, const Var& x_t,
                       const ag::Tensor& mask, const nets::LandmarkSet& l_s,
                       const nets::LandmarkSet& l_t) {
  const ModelConfig& mc = models.mcfg;
  int64_t L = mc.num_vectors();
  int64_t K = mc.split_index();
  require(static_cast<int64_t>(l_s.points.size()) == mc.num_landmarks &&
              static_cast<int64_t>(l_t.points.size()) == mc.num_landmarks,
          ErrorCode::invalid_argument,
          "swap: landmark sets must have " + std::to_string(mc.num_landmarks) +
              " points");
  Var w_s = stage("invert_source", [&] { return models.inv.invert(x_s); });
  Var w_t = stage("invert_target", [&] { return models.inv.invert(x_t); });
  Var g_s = ag::slice(w_s, 1, 0, K);
  Var h_s = ag::slice(w_s, 1, K, L - K);
  Var g_t = ag::slice(w_t, 1, 0, K);
  Var h_t = ag::slice(w_t, 1, K, L - K);
  nets::HeatmapStack hs =
      stage("rasterize_source_heatmaps",
            [&] { return nets::rasterize_heatmaps(l_s, mc.grid(), mc.heatmap_sigma); });
  nets::HeatmapStack ht =
      stage("rasterize_target_heatmaps",
            [&] { return nets::rasterize_heatmaps(l_t, mc.grid(), mc.heatmap_sigma); });
  SwapGraph out;
  out.direction = stage("landmark_encoder", [&] {
    return models.lenc.encode(heatmap_var(hs), heatmap_var(ht));
  });
  out.g_hat = ag::add(g_s, out.direction);
  out.g_t = g_t;
  Var h_used = mc.disable_appearance_swap ? h_s : h_t;
  out.w_hat = ag::concat({out.g_hat, h_used}, 1);
  auto synth = stage("synthesize", [&] { return models.gen.synthesize(out.w_hat); });
  out.y_s = synth.image;
  if (mc.disable_background_transfer) {
    // ablation Var.2: composite the side output over the target at pixel level
    out.y_f = stage("pixel_composite",
                    [&] { return blend::aggregate_level(out.y_s, x_t, mask); });
  } else {
    std::vector<Var> f_t =
        stage("target_encoder", [&] { return models.tenc.encode(x_t); });
    std::vector<Var> agg = stage("aggregate_pyramid", [&] {
      return blend::aggregate_pyramid(synth.pyramid, f_t, mask, mc.hard_mask);
    });
    out.y_f = stage("decode", [&] { return models.dec.decode(agg); });
  }
  return out;
}

SwapResult swap_image(const Models& models, const ag::Tensor& x_s,
                      const ag::Tensor& x_t, const ag::Tensor& mask,
                      const nets::LandmarkSet& l_s, const nets::LandmarkSet& l_t) {
  int64_t R = models.mcfg.gen.resolution;
  check_image(x_s, R, "source image");
  check_image(x_t, R, "target image");
  check_mask(mask, R, "inner-face mask");
  SwapGraph g = swap_forward(models, image_var(x_s), image_var(x_t), mask, l_s, l_t);
  int64_t L = models.mcfg.num_vectors();
  int64_t K = models.mcfg.split_index();
  int64_t D = models.mcfg.gen.latent_width;
  SwapResult r;
  r.side_output = g.y_s->value.reshaped({3, R, R});
  r.final_image = g.y_f->value.reshaped({3, R, R});
  r.swap_code = latent::LatentCode{g.w_hat->value.reshaped({L, D}), K};
  r.direction = latent::TransferDirection{g.direction->value.reshaped({K, D})};
  return r;
}

// ----- dataset -----

Dataset Dataset::load_dir(const std::string& dir, int64_t resolution,
                          int64_t num_landmarks) {
  require(fs::is_directory(dir), ErrorCode::io_error,
          "dataset directory '" + dir + "' does not exist");
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string name = entry.path().filename().string();
    if (name.size() < 4 || name.substr(name.size() - 4) != ".png") continue;
    if (name.size() > 9 && name.substr(name.size() - 9) == ".mask.png") continue;
    stems.push_back(name.substr(0, name.size() - 4));
  }
  std::sort(stems.begin(), stems.end());
  require(!stems.empty(), ErrorCode::io_error,
          "dataset directory '" + dir + "' contains no images");
  std::vector<Sample> samples;
  for (const auto& stem : stems) {
    Sample s;
    s.name = stem;
    std::string base = dir + "/" + stem;
    s.image = img::load_png_rgb(base + ".png");
    check_image(s.image, resolution, "dataset image '" + base + ".png'");
    s.landmarks = nets::load_landmarks_json(base + ".landmarks.json");
    require(static_cast<int64_t>(s.landmarks.points.size()) == num_landmarks,
            ErrorCode::invalid_config,
            "landmark file '" + base + ".landmarks.json' has " +
                std::to_string(s.landmarks.points.size()) + " points, expected " +
                std::to_string(num_landmarks));
    s.mask = img::load_png_mask(base + ".mask.png");
    check_mask(s.mask, resolution, "mask '" + base + ".mask.png'");
    samples.push_back(std::move(s));
  }
  return from_samples(std::move(samples));
}

Dataset Dataset::from_samples(std::vector<Sample> samples) {
  Dataset d;
  d.samples_ = std::move(samples);
  return d;
}

std::vector<BatchPair> sample_batch(const Dataset& data, int64_t batch_size,
                                    double p_same, Rng& rng) {
  require(data.size() > 0, ErrorCode::invalid_argument, "sample_batch: empty dataset");
  require(batch_size >= 1, ErrorCode::invalid_argument, "sample_batch: batch_size >= 1");
  require(p_same >= 0.0 && p_same <= 1.0, ErrorCode::invalid_argument,
          "sample_batch: p_same must be in [0,1]");
  int64_t n = static_cast<int64_t>(data.size());
  std::vector<BatchPair> out;
  out.reserve(static_cast<size_t>(batch_size));
  for (int64_t b = 0; b < batch_size; ++b) {
    BatchPair p;
    bool want_same = rng.uniform() < p_same;
    p.source = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(n)));
    if (want_same || n == 1) {
      p.target = p.source;
    } else {
      int64_t t = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(n - 1)));
      p.target = t >= p.source ? t + 1 : t;
    }
    p.same = p.source == p.target;
    out.push_back(p);
  }
  return out;
}

// ----- training -----

losses::LossBundle train_step(Session& s, const Dataset& data,
                              const std::vector<BatchPair>& batch) {
  require(!batch.empty(), ErrorCode::invalid_argument, "train_step: empty batch");
  const ModelConfig& mc = s.cfg.model;
  const TrainConfig& tc = s.cfg.train;
  int64_t R = mc.gen.resolution;

  struct Item {
    SwapGraph g;
    Var xs, xt;
    const Sample* tgt = nullptr;
    bool same = false;
  };
  std::vector<Item> items;
  items.reserve(batch.size());
  for (const auto& pair : batch) {
    const Sample& src = data.at(static_cast<size_t>(pair.source));
    const Sample& tgt = data.at(static_cast<size_t>(pair.target));
    Item it;
    it.xs = image_var(src.image);
    it.xt = image_var(tgt.image);
    it.g = swap_forward(s.models, it.xs, it.xt, tgt.mask, src.landmarks,
                        tgt.landmarks);
    it.tgt = &tgt;
    it.same = pair.same;
    items.push_back(std::move(it));
  }
  (void)R;

  // discriminator update on detached fakes
  std::vector<Var> fakes, reals;
  for (const auto& it : items) {
    fakes.push_back(s.models.disc.discriminate(ag::stopgrad(it.g.y_f)));
    reals.push_back(s.models.disc.discriminate(it.xt));
  }
  Var d_loss = losses::discriminator_loss(ag::concat(fakes, 0), ag::concat(reals, 0));
  require(!std::isnan(d_loss->value[0]), ErrorCode::poisoned_loss,
          "train_step: discriminator loss is NaN");
  s.opt_d.zero_grad();
  ag::backward(d_loss);
  s.opt_d.step();

  // generator-side update against the refreshed discriminator
  std::vector<Var> scores, ids, lmks, recs, sts;
  for (const auto& it : items) {
    scores.push_back(s.models.disc.discriminate(it.g.y_f));
    ids.push_back(losses::identity_loss(it.g.y_f, it.xs,
                                        s.models.providers.identity_embed));
    lmks.push_back(losses::landmark_alignment_loss(
        it.g.y_s, it.g.y_f, it.xt, s.models.providers.landmark_estimate));
    recs.push_back(losses::reconstruction_loss(it.g.y_s, it.g.y_f, it.xt, it.same,
                                               tc.alpha_perceptual,
                                               s.models.providers.perceptual));
    if (tc.weights.st == 0.0) {
      sts.push_back(ag::constant(ag::Tensor::scalar(0.0)));
    } else {
      sts.push_back(losses::style_transfer_loss(it.g.y_f, it.tgt->image,
                                                it.tgt->mask, tc.hm_scope));
    }
  }
  Var adv = losses::adversarial_generator_loss(ag::concat(scores, 0));
  Var id = fold_mean(ids);
  Var lmk = fold_mean(lmks);
  Var rec = fold_mean(recs);
  Var st = fold_mean(sts);
  Var total = losses::total_loss(adv, id, lmk, rec, st, tc.weights);
  s.opt_g.zero_grad();
  ag::backward(total);
  s.opt_g.step();
  ++s.iteration;

  losses::LossBundle bundle;
  bundle.adv = adv->value[0];
  bundle.id = id->value[0];
  bundle.lmk = lmk->value[0];
  bundle.rec = rec->value[0];
  bundle.st = st->value[0];
  bundle.total = total->value[0];
  return bundle;
}

void train(Session& s, const Dataset& data, int64_t iterations, const ProgressFn& cb) {
  int64_t batch_size = s.cfg.train.batch(s.cfg.model.gen.resolution);
  for (int64_t i = 0; i < iterations; ++i) {
    std::vector<BatchPair> batch =
        sample_batch(data, batch_size, s.cfg.train.p_same, s.data_rng);
    losses::LossBundle bundle = train_step(s, data, batch);
    if (cb) cb(s.iteration, bundle);
  }
}

void pretrain_generator(Session& s, const Dataset& data, int64_t iterations,
                        const std::function<void(int64_t, double)>& cb) {
  const TrainConfig& tc = s.cfg.train;
  s.models.gen.set_trainable(true);
  s.models.inv.set_trainable(true);
  nets::ParamList warm;
  s.models.gen.collect_params(warm);
  s.models.inv.collect_params(warm);
  ag::Adam opt(nets::param_vars(warm),
               ag::AdamConfig{tc.learning_rate, tc.beta1, tc.beta2, tc.epsilon});
  int64_t batch_size = tc.batch(s.cfg.model.gen.resolution);
  for (int64_t i = 0; i < iterations; ++i) {
    std::vector<BatchPair> batch = sample_batch(data, batch_size, 1.0, s.data_rng);
    std::vector<Var> parts;
    for (const auto& pair : batch) {
      const Sample& sample = data.at(static_cast<size_t>(pair.source));
      Var x = image_var(sample.image);
      Var w = s.models.inv.invert(x);
      auto synth = s.models.gen.synthesize(w);
      Var loss = ag::mse(synth.image, x);
      loss = ag::add(loss, ag::scale(ag::mse(s.models.providers.perceptual(synth.image),
                                             s.models.providers.perceptual(x)),
                                     tc.alpha_perceptual));
      parts.push_back(loss);
    }
    Var loss = fold_mean(parts);
    require(!std::isnan(loss->value[0]), ErrorCode::poisoned_loss,
            "pretrain_generator: reconstruction loss is NaN");
    opt.zero_grad();
    ag::backward(loss);
    opt.step();
    if (cb) cb(i + 1, loss->value[0]);
  }
  s.apply_trainability();
}

// ----- checkpointing -----

namespace {

nlohmann::json config_to_json(const Config& cfg) {
  nlohmann::json j;
  j["model"] = {
      {"resolution", cfg.model.gen.resolution},
      {"latent_width", cfg.model.gen.latent_width},
      {"channel_cap", cfg.model.gen.channel_cap},
      {"channel_budget", cfg.model.gen.channel_budget},
      {"channel_scale", cfg.model.gen.channel_scale},
      {"noise_injection", cfg.model.gen.noise_injection},
      {"structure_k", cfg.model.structure_k},
      {"num_landmarks", cfg.model.num_landmarks},
      {"heatmap_grid", cfg.model.heatmap_grid},
      {"heatmap_sigma", cfg.model.heatmap_sigma},
      {"hard_mask", cfg.model.hard_mask},
      {"disable_appearance_swap", cfg.model.disable_appearance_swap},
      {"disable_background_transfer", cfg.model.disable_background_transfer},
  };
  j["train"] = {
      {"learning_rate", cfg.train.learning_rate},
      {"beta1", cfg.train.beta1},
      {"beta2", cfg.train.beta2},
      {"epsilon", cfg.train.epsilon},
      {"batch_size", cfg.train.batch_size},
      {"iterations", cfg.train.iterations},
      {"pretrain_iterations", cfg.train.pretrain_iterations},
      {"lambda_adv", cfg.train.weights.adv},
      {"lambda_id", cfg.train.weights.id},
      {"lambda_lmk", cfg.train.weights.lmk},
      {"lambda_rec", cfg.train.weights.rec},
      {"lambda_st", cfg.train.weights.st},
      {"alpha_perceptual", cfg.train.alpha_perceptual},
      {"p_same", cfg.train.p_same},
      {"seed", cfg.train.seed},
      {"freeze_generator", cfg.train.freeze_generator},
      {"train_inverter", cfg.train.train_inverter},
      {"hm_scope", cfg.train.hm_scope == losses::HmScope::mask ? "mask" : "global"},
  };
  j["providers"] = {
      {"identity", cfg.providers.identity},   {"landmark", cfg.providers.landmark},
      {"perceptual", cfg.providers.perceptual}, {"flow", cfg.providers.flow},
      {"pose", cfg.providers.pose},           {"expression", cfg.providers.expression},
  };
  j["video"] = {
      {"lambda_ct", cfg.video.lambda_ct},
      {"lambda_ft", cfg.video.lambda_ft},
      {"flow_mode", cfg.video.flow_mode},
      {"ft_aggregation", cfg.video.ft_aggregation},
      {"temporal_steps", cfg.video.temporal_steps},
      {"temporal_lr", cfg.video.temporal_lr},
  };
  return j;
}

Config config_from_json(const nlohmann::json& j) {
  Config cfg;
  const auto& m = j.at("model");
  cfg.model.gen.resolution = m.at("resolution").get<int64_t>();
  cfg.model.gen.latent_width = m.at("latent_width").get<int64_t>();
  cfg.model.gen.channel_cap = m.at("channel_cap").get<int64_t>();
  cfg.model.gen.channel_budget = m.at("channel_budget").get<int64_t>();
  cfg.model.gen.channel_scale = m.at("channel_scale").get<double>();
  cfg.model.gen.noise_injection = m.at("noise_injection").get<bool>();
  cfg.model.structure_k = m.at("structure_k").get<int64_t>();
  cfg.model.num_landmarks = m.at("num_landmarks").get<int64_t>();
  cfg.model.heatmap_grid = m.at("heatmap_grid").get<int64_t>();
  cfg.model.heatmap_sigma = m.at("heatmap_sigma").get<double>();
  cfg.model.hard_mask = m.at("hard_mask").get<bool>();
  cfg.model.disable_appearance_swap = m.at("disable_appearance_swap").get<bool>();
  cfg.model.disable_background_transfer =
      m.at("disable_background_transfer").get<bool>();
  const auto& t = j.at("train");
  cfg.train.learning_rate = t.at("learning_rate").get<double>();
  cfg.train.beta1 = t.at("beta1").get<double>();
  cfg.train.beta2 = t.at("beta2").get<double>();
  cfg.train.epsilon = t.at("epsilon").get<double>();
  cfg.train.batch_size = t.at("batch_size").get<int64_t>();
  cfg.train.iterations = t.at("iterations").get<int64_t>();
  cfg.train.pretrain_iterations = t.at("pretrain_iterations").get<int64_t>();
  cfg.train.weights.adv = t.at("lambda_adv").get<double>();
  cfg.train.weights.id = t.at("lambda_id").get<double>();
  cfg.train.weights.lmk = t.at("lambda_lmk").get<double>();
  cfg.train.weights.rec = t.at("lambda_rec").get<double>();
  cfg.train.weights.st = t.at("lambda_st").get<double>();
  cfg.train.alpha_perceptual = t.at("alpha_perceptual").get<double>();
  cfg.train.p_same = t.at("p_same").get<double>();
  cfg.train.seed = t.at("seed").get<uint64_t>();
  cfg.train.freeze_generator = t.at("freeze_generator").get<bool>();
  cfg.train.train_inverter = t.at("train_inverter").get<bool>();
  cfg.train.hm_scope = t.at("hm_scope").get<std::string>() == "global"
                           ? losses::HmScope::global
                           : losses::HmScope::mask;
  const auto& p = j.at("providers");
  cfg.providers.identity = p.at("identity").get<std::string>();
  cfg.providers.landmark = p.at("landmark").get<std::string>();
  cfg.providers.perceptual = p.at("perceptual").get<std::string>();
  cfg.providers.flow = p.at("flow").get<std::string>();
  cfg.providers.pose = p.at("pose").get<std::string>();
  cfg.providers.expression = p.at("expression").get<std::string>();
  const auto& v = j.at("video");
  cfg.video.lambda_ct = v.at("lambda_ct").get<double>();
  cfg.video.lambda_ft = v.at("lambda_ft").get<double>();
  cfg.video.flow_mode = v.at("flow_mode").get<std::string>();
  cfg.video.ft_aggregation = v.at("ft_aggregation").get<std::string>();
  cfg.video.temporal_steps = v.at("temporal_steps").get<int64_t>();
  cfg.video.temporal_lr = v.at("temporal_lr").get<double>();
  return cfg;
}

void append_moment_tensors(std::vector<ckpt::NamedTensor>& out,
                           const std::string& prefix, const nets::ParamList& named,
                           ag::Adam& opt) {
  require(named.size() == opt.params().size(), ErrorCode::contract_violation,
          "optimizer/param list size mismatch");
  for (size_t i = 0; i < named.size(); ++i) {
    out.push_back({prefix + "/m/" + named[i].name, opt.moments1()[i]});
    out.push_back({prefix + "/v/" + named[i].name, opt.moments2()[i]});
  }
}

nets::ParamList gen_side_named(const Session& s) {
  nets::ParamList gen_side;
  if (!s.cfg.train.freeze_generator) s.models.gen.collect_params(gen_side);
  if (s.cfg.train.train_inverter) s.models.inv.collect_params(gen_side);
  s.models.lenc.collect_params(gen_side);
  s.models.tenc.collect_params(gen_side);
  s.models.dec.collect_params(gen_side);
  return gen_side;
}

}  // namespace

void save_checkpoint(const Session& s, const std::string& path) {
  nlohmann::json manifest = config_to_json(s.cfg);
  manifest["format_version"] = ckpt::kFormatVersion;
  manifest["iteration"] = s.iteration;
  manifest["rng"] = {{"seed", s.data_rng.seed()}, {"counter", s.data_rng.counter()}};
  manifest["opt_g_step"] = const_cast<Session&>(s).opt_g.timestep();
  manifest["opt_d_step"] = const_cast<Session&>(s).opt_d.timestep();
  std::vector<ckpt::NamedTensor> tensors;
  for (const auto& e : s.models.named_params()) tensors.push_back({e.name, e.var->value});
  nets::ParamList gside = gen_side_named(s);
  nets::ParamList dside;
  s.models.disc.collect_params(dside);
  append_moment_tensors(tensors, "optg", gside, const_cast<Session&>(s).opt_g);
  append_moment_tensors(tensors, "optd", dside, const_cast<Session&>(s).opt_d);
  ckpt::write_container(path, manifest, tensors);
}

std::unique_ptr<Session> load_session(const std::string& path) {
  ckpt::Container c = ckpt::read_container(path);
  require(c.manifest.contains("format_version"), ErrorCode::corrupt_checkpoint,
          "checkpoint '" + path + "' has no format_version");
  int version = c.manifest.at("format_version").get<int>();
  require(version == ckpt::kFormatVersion, ErrorCode::version_mismatch,
          "checkpoint format version " + std::to_string(version) +
              " does not match supported version " +
              std::to_string(ckpt::kFormatVersion));
  Config cfg;
  try {
    cfg = config_from_json(c.manifest);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::corrupt_checkpoint,
         "checkpoint '" + path + "' manifest is incomplete: " + e.what());
  }
  auto s = std::make_unique<Session>(cfg);
  s->iteration = c.manifest.at("iteration").get<int64_t>();
  uint64_t rng_seed = c.manifest.at("rng").at("seed").get<uint64_t>();
  uint64_t rng_counter = c.manifest.at("rng").at("counter").get<uint64_t>();
  s->data_rng = Rng(rng_seed, rng_counter);
  s->opt_g.timestep() = c.manifest.at("opt_g_step").get<int64_t>();
  s->opt_d.timestep() = c.manifest.at("opt_d_step").get<int64_t>();

  std::map<std::string, const ag::Tensor*> by_name;
  for (const auto& nt : c.tensors) {
    require(by_name.emplace(nt.name, &nt.tensor).second, ErrorCode::corrupt_checkpoint,
            "duplicate tensor '" + nt.name + "' in checkpoint");
  }
  std::set<std::string> consumed;
  auto take = [&](const std::string& name, const ag::Shape& shape) -> const ag::Tensor* {
    auto it = by_name.find(name);
    require(it != by_name.end(), ErrorCode::corrupt_checkpoint,
            "checkpoint is missing tensor '" + name + "'");
    require(it->second->shape() == shape, ErrorCode::corrupt_checkpoint,
            "checkpoint tensor '" + name + "' has shape " +
                ag::shape_str(it->second->shape()) + ", expected " +
                ag::shape_str(shape));
    consumed.insert(name);
    return it->second;
  };
  for (const auto& e : s->models.named_params())
    e.var->value = take(e.name, e.var->value.shape())->clone();
  nets::ParamList gside = gen_side_named(*s);
  nets::ParamList dside;
  s->models.disc.collect_params(dside);
  auto load_moments = [&](const std::string& prefix, const nets::ParamList& named,
                          ag::Adam& opt) {
    for (size_t i = 0; i < named.size(); ++i) {
      opt.moments1()[i] = take(prefix + "/m/" + named[i].name,
                               opt.moments1()[i].shape())->clone();
      opt.moments2()[i] = take(prefix + "/v/" + named[i].name,
                               opt.moments2()[i].shape())->clone();
    }
  };
  load_moments("optg", gside, s->opt_g);
  load_moments("optd", dside, s->opt_d);
  for (const auto& [name, tensor] : by_name) {
    (void)tensor;
    require(consumed.count(name) == 1, ErrorCode::corrupt_checkpoint,
            "unknown tensor '" + name + "' in checkpoint");
  }
  return s;
}

void save_latent_code(const latent::LatentCode& code, const std::string& name,
                      const std::string& path) {
  latent::validate(code);
  nlohmann::json manifest;
  manifest["format_version"] = ckpt::kFormatVersion;
  manifest["latent"] = {{"name", name},
                        {"L", code.vectors.dim(0)},
                        {"D", code.vectors.dim(1)},
                        {"K", code.split_index}};
  ckpt::write_container(path, manifest, {{"latent/" + name, code.vectors}});
}

latent::LatentCode load_latent_code(const std::string& name, const std::string& path) {
  ckpt::Container c = ckpt::read_container(path);
  require(c.manifest.contains("latent"), ErrorCode::corrupt_checkpoint,
          "'" + path + "' does not contain a latent code");
  const auto& meta = c.manifest.at("latent");
  require(meta.at("name").get<std::string>() == name, ErrorCode::corrupt_checkpoint,
          "latent code '" + name + "' not found in '" + path + "'");
  int64_t L = meta.at("L").get<int64_t>();
  int64_t D = meta.at("D").get<int64_t>();
  int64_t K = meta.at("K").get<int64_t>();
  require(c.tensors.size() == 1 && c.tensors[0].name == "latent/" + name,
          ErrorCode::corrupt_checkpoint, "unexpected tensors in latent container");
  const ag::Tensor& t = c.tensors[0].tensor;
  require(t.rank() == 2 && t.dim(0) == L && t.dim(1) == D,
          ErrorCode::corrupt_checkpoint, "latent tensor shape mismatch");
  latent::LatentCode code{t.clone(), K};
  latent::validate(code);
  return code;
}

// ----- evaluation -----

EvalReport evaluate_pairs(Session& s, const std::string& pairs_manifest_path) {
  std::ifstream in(pairs_manifest_path);
  require(in.good(), ErrorCode::io_error,
          "cannot open pairs manifest '" + pairs_manifest_path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::io_error, "invalid pairs manifest: " + std::string(e.what()));
  }
  require(j.is_array() && j.size() >= 2, ErrorCode::invalid_argument,
          "pairs manifest must be an array of at least 2 pairs");
  int64_t R = s.cfg.model.gen.resolution;
  std::vector<ag::Tensor> swapped, targets;
  std::vector<std::vector<double>> swapped_embeds, source_embeds;
  std::vector<int64_t> labels;
  auto embed_of = [&](const ag::Tensor& image) {
    Var e = s.models.providers.identity_embed(image_var(image));
    std::vector<double> v(static_cast<size_t>(e->value.size()));
    for (int64_t i = 0; i < e->value.size(); ++i) v[static_cast<size_t>(i)] = e->value[i];
    return v;
  };
  for (size_t i = 0; i < j.size(); ++i) {
    const auto& pair = j[i];
    auto path_of = [&](const char* key) {
      require(pair.contains(key), ErrorCode::invalid_argument,
              "pairs manifest entry " + std::to_string(i) + " missing '" + key + "'");
      return pair.at(key).get<std::string>();
    };
    ag::Tensor x_s = img::load_png_rgb(path_of("source"));
    ag::Tensor x_t = img::load_png_rgb(path_of("target"));
    ag::Tensor mask = img::load_png_mask(path_of("mask"));
    nets::LandmarkSet l_s = nets::load_landmarks_json(path_of("source_landmarks"));
    nets::LandmarkSet l_t = nets::load_landmarks_json(path_of("target_landmarks"));
    check_image(x_s, R, "source image");
    check_image(x_t, R, "target image");
    SwapResult r = swap_image(s.models, x_s, x_t, mask, l_s, l_t);
    swapped.push_back(r.final_image);
    targets.push_back(x_t);
    swapped_embeds.push_back(embed_of(r.final_image));
    source_embeds.push_back(embed_of(x_s));
    labels.push_back(static_cast<int64_t>(i));
  }
  EvalReport rep;
  double sim = 0.0;
  for (size_t i = 0; i < swapped_embeds.size(); ++i)
    sim += metrics::cosine_similarity(swapped_embeds[i], source_embeds[i]);
  rep.id_similarity = sim / static_cast<double>(swapped_embeds.size());
  rep.id_retrieval = metrics::id_retrieval_rate(swapped_embeds, source_embeds, labels);
  rep.pose_error = metrics::attribute_error(swapped, targets, s.models.providers.pose);
  rep.expression_error =
      metrics::attribute_error(swapped, targets, s.models.providers.expression);
  rep.fid = metrics::fid(swapped, targets, [&](const ag::Tensor& im) {
    return embed_of(im);
  });
  return rep;
}

void write_report(const EvalReport& r, const std::string& path) {
  nlohmann::json j = {
      {"id_similarity", r.id_similarity},   {"id_retrieval", r.id_retrieval},
      {"pose_error", r.pose_error},         {"expression_error", r.expression_error},
      {"fid", r.fid},
  };
  std::ofstream out(path);
  require(out.good(), ErrorCode::io_error, "cannot write report '" + path + "'");
  out << j.dump(2) << "\n";
}

}  // namespace faceswap::pipeline
