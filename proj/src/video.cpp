#include "faceswap/video.hpp"

#include <cmath>

#include "faceswap/blending.hpp"
#include "faceswap/losses.hpp"
#include "faceswap/optim.hpp"
#include "faceswap/pipeline.hpp"

namespace faceswap::video {

namespace {

using ag::Var;

Var image_var(const ag::Tensor& img) {
  return ag::constant(img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)}));
}

Var flow_var(const perception::FlowField& f) { return ag::constant(f.field); }

Var fold_sum(const std::vector<Var>& parts) {
  Var acc = parts[0];
  for (size_t i = 1; i < parts.size(); ++i) acc = ag::add(acc, parts[i]);
  return acc;
}

// Restores the session's configured trainability when temporal optimization
// is done, whatever happens in between.
struct FreezeGuard {
  pipeline::Session& session;
  explicit FreezeGuard(pipeline::Session& s) : session(s) {
    session.models.gen.set_trainable(false);
    session.models.inv.set_trainable(false);
    session.models.lenc.set_trainable(false);
    session.models.tenc.set_trainable(false);
    session.models.dec.set_trainable(false);
    session.models.disc.set_trainable(false);
  }
  ~FreezeGuard() { session.apply_trainability(); }
};

nets::LandmarkSet landmarks_from_provider(const pipeline::Session& s,
                                          const ag::Tensor& frame) {
  Var est = s.models.providers.landmark_estimate(image_var(frame));
  nets::LandmarkSet l;
  int64_t n = est->value.size() / 2;
  for (int64_t i = 0; i < n; ++i)
    l.points.push_back({est->value[2 * i], est->value[2 * i + 1]});
  return l;
}

}  // namespace

ag::Var code_trajectory_loss(const std::vector<Var>& swap_structs,
                             const std::vector<Var>& target_structs) {
  require(swap_structs.size() == target_structs.size(), ErrorCode::invalid_argument,
          "code_trajectory_loss: sequence length mismatch");
  require(swap_structs.size() >= 2, ErrorCode::invalid_argument,
          "code_trajectory_loss: need at least 2 frames, got " +
              std::to_string(swap_structs.size()));
  for (size_t k = 0; k < swap_structs.size(); ++k)
    require(swap_structs[k]->value.same_shape(target_structs[k]->value) &&
                swap_structs[k]->value.same_shape(swap_structs[0]->value),
            ErrorCode::shape_mismatch, "code_trajectory_loss: code shape mismatch");
  std::vector<Var> terms;
  for (size_t k = 1; k < swap_structs.size(); ++k) {
    Var d_swap = ag::sub(swap_structs[k], swap_structs[k - 1]);
    Var d_tgt = ag::sub(target_structs[k], target_structs[k - 1]);
    terms.push_back(ag::mse(d_swap, d_tgt));
  }
  return ag::scale(fold_sum(terms), 1.0 / static_cast<double>(terms.size()));
}

ag::Var flow_trajectory_penalty(const std::vector<FlowTriple>& triples,
                                FlowMode mode, FtAggregation agg) {
  require(!triples.empty(), ErrorCode::invalid_argument,
          "flow_trajectory_penalty: no flow triples");
  std::vector<Var> terms;
  for (const auto& t : triples) {
    require(t.f01->value.same_shape(t.f02->value) &&
                t.f01->value.same_shape(t.f20->value),
            ErrorCode::shape_mismatch, "flow_trajectory_penalty: flow shape mismatch");
    Var bracket = mode == FlowMode::literal
                      ? ag::scale(ag::add(t.f02, t.f20), 0.5)
                      : ag::scale(ag::sub(t.f02, t.f20), 0.25);
    Var ms = ag::mean_all(ag::square(ag::sub(bracket, t.f01)));
    terms.push_back(agg == FtAggregation::group ? ag::sqrt_op(ms) : ms);
  }
  return fold_sum(terms);
}

double flow_trajectory_loss(const FrameSequence& swapped, const FlowFn& flow,
                            FlowMode mode, FtAggregation agg) {
  int64_t m = static_cast<int64_t>(swapped.frames.size());
  require(m >= 3, ErrorCode::invalid_argument,
          "flow_trajectory_loss: need at least 3 frames, got " + std::to_string(m));
  std::vector<FlowTriple> triples;
  for (int64_t k = 0; k + 2 < m; ++k) {
    FlowTriple t;
    t.f01 = flow_var(flow(swapped.frames[k], swapped.frames[k + 1]));
    t.f02 = flow_var(flow(swapped.frames[k], swapped.frames[k + 2]));
    t.f20 = flow_var(flow(swapped.frames[k + 2], swapped.frames[k]));
    triples.push_back(std::move(t));
  }
  return ag::scalar_value(flow_trajectory_penalty(triples, mode, agg));
}

FrameSequence swap_video(pipeline::Session& session, const ag::Tensor& source,
                         const nets::LandmarkSet& source_landmarks,
                         const FrameSequence& targets,
                         const std::vector<ag::Tensor>& masks,
                         const VideoSwapOptions& options) {
  int64_t m = static_cast<int64_t>(targets.frames.size());
  require(m >= 1, ErrorCode::invalid_argument, "swap_video: empty target sequence");
  require(static_cast<int64_t>(masks.size()) == m, ErrorCode::invalid_config,
          "swap_video: have " + std::to_string(masks.size()) + " masks for " +
              std::to_string(m) + " frames (first missing index " +
              std::to_string(masks.size()) + ")");
  if (targets.landmarks)
    require(static_cast<int64_t>(targets.landmarks->size()) == m,
            ErrorCode::invalid_config,
            "swap_video: landmark list length " +
                std::to_string(targets.landmarks->size()) + " != frame count " +
                std::to_string(m) + " (first missing index " +
                std::to_string(targets.landmarks->size()) + ")");
  auto frame_landmarks = [&](int64_t k) -> nets::LandmarkSet {
    if (targets.landmarks) return (*targets.landmarks)[static_cast<size_t>(k)];
    return landmarks_from_provider(session, targets.frames[static_cast<size_t>(k)]);
  };

  FrameSequence out;
  if (options.mode == VideoMode::independent || m == 1) {
    for (int64_t k = 0; k < m; ++k) {
      pipeline::SwapResult r = pipeline::swap_image(
          session.models, source, targets.frames[static_cast<size_t>(k)],
          masks[static_cast<size_t>(k)], source_landmarks, frame_landmarks(k));
      out.frames.push_back(r.final_image);
    }
    return out;
  }

  // temporal mode: optimize the per-frame structure codes, networks frozen
  FreezeGuard guard(session);
  const pipeline::ModelConfig& mc = session.cfg.model;
  int64_t L = mc.num_vectors();
  int64_t K = mc.split_index();
  int64_t R = mc.gen.resolution;

  Var x_s = image_var(source);
  Var w_s = session.models.inv.invert(x_s);
  Var g_s = ag::slice(w_s, 1, 0, K);
  Var h_s = ag::slice(w_s, 1, K, L - K);
  nets::HeatmapStack heat_s =
      nets::rasterize_heatmaps(source_landmarks, mc.grid(), mc.heatmap_sigma);
  Var heat_s_var = ag::constant(heat_s.maps.reshaped(
      {1, heat_s.maps.dim(0), heat_s.maps.dim(1), heat_s.maps.dim(2)}));

  struct FrameState {
    Var x_t;
    Var h_used;                 // appearance rows fed to the swap code
    Var g_t;                    // target structure rows (constant)
    std::vector<Var> f_t;       // target features (constants)
    ag::Tensor mask;
    Var code;                   // trainable g_hat
  };
  std::vector<FrameState> frames;
  for (int64_t k = 0; k < m; ++k) {
    FrameState fsk;
    fsk.x_t = image_var(targets.frames[static_cast<size_t>(k)]);
    Var w_t = session.models.inv.invert(fsk.x_t);
    fsk.g_t = ag::constant(ag::slice(w_t, 1, 0, K)->value);
    Var h_t = ag::slice(w_t, 1, K, L - K);
    fsk.h_used = ag::constant((mc.disable_appearance_swap ? h_s : h_t)->value);
    nets::LandmarkSet l_t = frame_landmarks(k);
    nets::HeatmapStack heat_t =
        nets::rasterize_heatmaps(l_t, mc.grid(), mc.heatmap_sigma);
    Var heat_t_var = ag::constant(heat_t.maps.reshaped(
        {1, heat_t.maps.dim(0), heat_t.maps.dim(1), heat_t.maps.dim(2)}));
    Var n = session.models.lenc.encode(heat_s_var, heat_t_var);
    fsk.code = ag::make_param(ag::add(g_s, n)->value.clone());
    if (!mc.disable_background_transfer) {
      for (const Var& f : session.models.tenc.encode(fsk.x_t))
        fsk.f_t.push_back(ag::constant(f->value));
    }
    fsk.mask = masks[static_cast<size_t>(k)];
    frames.push_back(std::move(fsk));
  }

  auto decode_frame = [&](const FrameState& fsk) -> std::pair<Var, Var> {
    Var w_hat = ag::concat({fsk.code, fsk.h_used}, 1);
    auto synth = session.models.gen.synthesize(w_hat);
    Var y_f;
    if (mc.disable_background_transfer) {
      y_f = blend::aggregate_level(synth.image, fsk.x_t, fsk.mask);
    } else {
      std::vector<Var> agg =
          blend::aggregate_pyramid(synth.pyramid, fsk.f_t, fsk.mask, mc.hard_mask);
      y_f = session.models.dec.decode(agg);
    }
    return {synth.image, y_f};
  };

  std::vector<Var> code_params;
  for (auto& fsk : frames) code_params.push_back(fsk.code);
  ag::Adam opt(code_params, ag::AdamConfig{options.temporal_lr, 0.9, 0.999, 1e-8});
  const losses::LossWeights& lw = session.cfg.train.weights;

  for (int64_t step = 0; step < options.temporal_steps; ++step) {
    std::vector<Var> per_frame_terms;
    std::vector<ag::Tensor> decoded;
    for (const auto& fsk : frames) {
      auto [y_s, y_f] = decode_frame(fsk);
      decoded.push_back(y_f->value.reshaped({3, R, R}));
      Var id = losses::identity_loss(y_f, x_s, session.models.providers.identity_embed);
      Var lmk = losses::landmark_alignment_loss(
          y_s, y_f, fsk.x_t, session.models.providers.landmark_estimate);
      per_frame_terms.push_back(
          ag::add(ag::scale(id, lw.id), ag::scale(lmk, lw.lmk)));
    }
    Var obj = ag::scale(fold_sum(per_frame_terms), 1.0 / static_cast<double>(m));
    std::vector<Var> g_targets;
    for (const auto& fsk : frames) g_targets.push_back(fsk.g_t);
    obj = ag::add(obj, ag::scale(code_trajectory_loss(code_params, g_targets),
                                 options.lambda_ct));
    if (m >= 3 && options.lambda_ft != 0.0) {
      FrameSequence current;
      current.frames = decoded;
      double ft = flow_trajectory_loss(current, session.models.providers.flow,
                                       options.flow_mode, options.ft_aggregation);
      // flows come from a non-differentiable estimator; contributes value only
      obj = ag::add(obj, ag::constant(ag::Tensor::scalar(options.lambda_ft * ft)));
    }
    if (options.objective_trace)
      options.objective_trace->push_back(ag::scalar_value(obj));
    opt.zero_grad();
    ag::backward(obj);
    opt.step();
  }

  for (const auto& fsk : frames) {
    auto [y_s, y_f] = decode_frame(fsk);
    (void)y_s;
    out.frames.push_back(y_f->value.reshaped({3, R, R}));
  }
  return out;
}

}  // namespace faceswap::video
