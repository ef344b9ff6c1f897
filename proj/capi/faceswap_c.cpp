#include "faceswap_c.h"

#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "faceswap/config.hpp"
#include "faceswap/image.hpp"
#include "faceswap/pipeline.hpp"
#include "faceswap/selftest.hpp"
#include "faceswap/video.hpp"

namespace {

namespace fsw = faceswap;
namespace fsys = std::filesystem;

thread_local std::string g_last_error;

int code_of(const fsw::Error& e) {
  switch (e.code()) {
    case fsw::ErrorCode::invalid_argument: return FS_E_INVALID_ARGUMENT;
    case fsw::ErrorCode::invalid_config: return FS_E_INVALID_CONFIG;
    case fsw::ErrorCode::shape_mismatch: return FS_E_SHAPE;
    case fsw::ErrorCode::io_error: return FS_E_IO;
    case fsw::ErrorCode::corrupt_checkpoint: return FS_E_CORRUPT_CHECKPOINT;
    case fsw::ErrorCode::version_mismatch: return FS_E_VERSION;
    case fsw::ErrorCode::numerical: return FS_E_NUMERICAL;
    case fsw::ErrorCode::degenerate_input: return FS_E_DEGENERATE_INPUT;
    case fsw::ErrorCode::poisoned_loss: return FS_E_POISONED_LOSS;
    case fsw::ErrorCode::contract_violation: return FS_E_CONTRACT;
    case fsw::ErrorCode::insufficient_samples: return FS_E_INSUFFICIENT_SAMPLES;
  }
  return FS_E_INTERNAL;
}

template <typename F>
int guarded(F&& f) {
  try {
    f();
    return FS_OK;
  } catch (const fsw::Error& e) {
    g_last_error = e.what();
    return code_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FS_E_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return FS_E_INTERNAL;
  }
}

int require_arg(bool ok, const char* message) {
  if (ok) return FS_OK;
  g_last_error = message;
  return FS_E_INVALID_ARGUMENT;
}

}  // namespace

struct fs_session {
  std::unique_ptr<fsw::pipeline::Session> impl;
};

extern "C" {

uint32_t fs_abi_version(void) { return 1; }

const char* fs_last_error(void) { return g_last_error.c_str(); }

int fs_session_create(const char* config_path, const char* const* overrides,
                      size_t n_overrides, fs_session** out) {
  int rc = require_arg(out != nullptr, "fs_session_create: out is NULL");
  if (rc != FS_OK) return rc;
  return guarded([&] {
    std::vector<std::string> ov;
    for (size_t i = 0; i < n_overrides; ++i) {
      fsw::require(overrides && overrides[i], fsw::ErrorCode::invalid_argument,
                   "fs_session_create: NULL override entry");
      ov.emplace_back(overrides[i]);
    }
    fsw::pipeline::Config cfg =
        fsw::config::make(config_path ? config_path : "", ov);
    auto s = std::make_unique<fs_session>();
    s->impl = std::make_unique<fsw::pipeline::Session>(cfg);
    *out = s.release();
  });
}

void fs_session_destroy(fs_session* s) { delete s; }

int fs_session_save_checkpoint(fs_session* s, const char* path) {
  int rc = require_arg(s && path, "fs_session_save_checkpoint: NULL argument");
  if (rc != FS_OK) return rc;
  return guarded([&] { fsw::pipeline::save_checkpoint(*s->impl, path); });
}

int fs_session_load_checkpoint(fs_session* s, const char* path) {
  int rc = require_arg(s && path, "fs_session_load_checkpoint: NULL argument");
  if (rc != FS_OK) return rc;
  return guarded([&] { s->impl = fsw::pipeline::load_session(path); });
}

int fs_session_iteration(fs_session* s, uint64_t* out) {
  int rc = require_arg(s && out, "fs_session_iteration: NULL argument");
  if (rc != FS_OK) return rc;
  *out = static_cast<uint64_t>(s->impl->iteration);
  return FS_OK;
}

int fs_train(fs_session* s, const char* data_dir, uint64_t iterations,
             fs_progress_cb cb, void* user) {
  int rc = require_arg(s && data_dir, "fs_train: NULL argument");
  if (rc != FS_OK) return rc;
  return guarded([&] {
    auto& session = *s->impl;
    fsw::pipeline::Dataset data = fsw::pipeline::Dataset::load_dir(
        data_dir, session.cfg.model.gen.resolution, session.cfg.model.num_landmarks);
    int64_t n = iterations ? static_cast<int64_t>(iterations)
                           : session.cfg.train.iterations;
    fsw::pipeline::train(
        session, data, n,
        [&](int64_t it, const fsw::losses::LossBundle& b) {
          if (!cb) return;
          double losses[6] = {b.adv, b.id, b.lmk, b.rec, b.st, b.total};
          cb(static_cast<uint64_t>(it), losses, user);
        });
  });
}

int fs_pretrain_generator(fs_session* s, const char* data_dir, uint64_t iterations,
                          fs_progress_cb cb, void* user) {
  int rc = require_arg(s && data_dir, "fs_pretrain_generator: NULL argument");
  if (rc != FS_OK) return rc;
  return guarded([&] {
    auto& session = *s->impl;
    fsw::pipeline::Dataset data = fsw::pipeline::Dataset::load_dir(
        data_dir, session.cfg.model.gen.resolution, session.cfg.model.num_landmarks);
    int64_t n = iterations ? static_cast<int64_t>(iterations)
                           : session.cfg.train.pretrain_iterations;
    fsw::pipeline::pretrain_generator(session, data, n, [&](int64_t it, double loss) {
      if (!cb) return;
      double losses[6] = {loss, 0, 0, 0, 0, loss};
      cb(static_cast<uint64_t>(it), losses, user);
    });
  });
}

int fs_swap_image_files(fs_session* s, const char* source_png,
                        const char* target_png, const char* mask_png,
                        const char* source_landmarks_json,
                        const char* target_landmarks_json,
                        const char* out_final_png, const char* out_side_png) {
  int rc = require_arg(s && source_png && target_png && mask_png &&
                           source_landmarks_json && target_landmarks_json &&
                           out_final_png,
                       "fs_swap_image_files: NULL argument");
  if (rc != FS_OK) return rc;
  return guarded([&] {
    auto& session = *s->impl;
    fsw::ag::Tensor x_s = fsw::img::load_png_rgb(source_png);
    fsw::ag::Tensor x_t = fsw::img::load_png_rgb(target_png);
    fsw::ag::Tensor mask = fsw::img::load_png_mask(mask_png);
    fsw::nets::LandmarkSet l_s = fsw::nets::load_landmarks_json(source_landmarks_json);
    fsw::nets::LandmarkSet l_t = fsw::nets::load_landmarks_json(target_landmarks_json);
    fsw::pipeline::SwapResult r =
        fsw::pipeline::swap_image(session.models, x_s, x_t, mask, l_s, l_t);
    fsw::img::save_png_rgb(r.final_image, out_final_png);
    if (out_side_png) fsw::img::save_png_rgb(r.side_output, out_side_png);
  });
}

int fs_swap_image_buffers(fs_session* s, const uint8_t* source_rgb,
                          const uint8_t* target_rgb, const uint8_t* mask_gray,
                          int32_t width, int32_t height,
                          const double* source_landmarks,
                          const double* target_landmarks, size_t n_landmarks,
                          uint8_t* out_final_rgb, uint8_t* out_side_rgb) {
  int rc = require_arg(s && source_rgb && target_rgb && mask_gray &&
                           source_landmarks && target_landmarks &&
                           out_final_rgb && width > 0 && height > 0,
                       "fs_swap_image_buffers: NULL or non-positive argument");
  if (rc != FS_OK) return rc;
  return guarded([&] {
    auto& session = *s->impl;
    int64_t h = height, w = width;
    auto to_image = [&](const uint8_t* buf) {
      fsw::ag::Tensor t({3, h, w});
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
          for (int64_t c = 0; c < 3; ++c)
            t[(c * h + y) * w + x] = fsw::img::from_u8(buf[(y * w + x) * 3 + c]);
      return t;
    };
    fsw::ag::Tensor mask({1, h, w});
    for (int64_t i = 0; i < h * w; ++i) mask[i] = mask_gray[i] >= 128 ? 1.0 : 0.0;
    auto to_landmarks = [&](const double* p) {
      fsw::nets::LandmarkSet l;
      for (size_t i = 0; i < n_landmarks; ++i)
        l.points.push_back({p[2 * i], p[2 * i + 1]});
      return l;
    };
    fsw::pipeline::SwapResult r = fsw::pipeline::swap_image(
        session.models, to_image(source_rgb), to_image(target_rgb), mask,
        to_landmarks(source_landmarks), to_landmarks(target_landmarks));
    auto to_buf = [&](const fsw::ag::Tensor& img, uint8_t* buf) {
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
          for (int64_t c = 0; c < 3; ++c)
            buf[(y * w + x) * 3 + c] = fsw::img::to_u8(img[(c * h + y) * w + x]);
    };
    to_buf(r.final_image, out_final_rgb);
    if (out_side_rgb) to_buf(r.side_output, out_side_rgb);
  });
}

int fs_swap_video_dir(fs_session* s, const char* source_png,
                      const char* source_landmarks_json, const char* target_dir,
                      const char* out_dir, const char* mode) {
  int rc = require_arg(s && source_png && target_dir && out_dir && mode,
                       "fs_swap_video_dir: NULL argument");
  if (rc != FS_OK) return rc;
  return guarded([&] {
    auto& session = *s->impl;
    std::string mode_str = mode;
    fsw::require(mode_str == "independent" || mode_str == "temporal",
                 fsw::ErrorCode::invalid_argument,
                 "swap-video mode must be 'independent' or 'temporal', got '" +
                     mode_str + "'");
    fsw::ag::Tensor source = fsw::img::load_png_rgb(source_png);

    char name[64];
    fsw::video::FrameSequence targets;
    std::vector<fsw::ag::Tensor> masks;
    std::vector<fsw::nets::LandmarkSet> landmark_list;
    bool have_all_landmarks = true;
    for (int64_t k = 0;; ++k) {
      std::snprintf(name, sizeof(name), "frame_%06lld.png",
                    static_cast<long long>(k));
      fsys::path frame_path = fsys::path(target_dir) / name;
      if (!fsys::exists(frame_path)) break;
      targets.frames.push_back(fsw::img::load_png_rgb(frame_path.string()));
      std::snprintf(name, sizeof(name), "mask_%06lld.png",
                    static_cast<long long>(k));
      fsys::path mask_path = fsys::path(target_dir) / name;
      fsw::require(fsys::exists(mask_path), fsw::ErrorCode::invalid_config,
                   "swap-video: missing mask for frame " + std::to_string(k) +
                       " ('" + mask_path.string() + "')");
      masks.push_back(fsw::img::load_png_mask(mask_path.string()));
      std::snprintf(name, sizeof(name), "landmarks_%06lld.json",
                    static_cast<long long>(k));
      fsys::path lmk_path = fsys::path(target_dir) / name;
      if (fsys::exists(lmk_path))
        landmark_list.push_back(fsw::nets::load_landmarks_json(lmk_path.string()));
      else
        have_all_landmarks = false;
    }
    fsw::require(!targets.frames.empty(), fsw::ErrorCode::io_error,
                 std::string("swap-video: no frame_000000.png under '") +
                     target_dir + "'");
    if (have_all_landmarks) targets.landmarks = std::move(landmark_list);

    fsw::nets::LandmarkSet l_s;
    if (source_landmarks_json) {
      l_s = fsw::nets::load_landmarks_json(source_landmarks_json);
    } else {
      fsw::ag::Var est = session.models.providers.landmark_estimate(
          fsw::ag::constant(source.reshaped({1, 3, source.dim(1), source.dim(2)})));
      for (int64_t i = 0; i < est->value.size() / 2; ++i)
        l_s.points.push_back({est->value[2 * i], est->value[2 * i + 1]});
    }

    fsw::video::VideoSwapOptions opts;
    opts.mode = mode_str == "temporal" ? fsw::video::VideoMode::temporal
                                       : fsw::video::VideoMode::independent;
    opts.temporal_steps = session.cfg.video.temporal_steps;
    opts.temporal_lr = session.cfg.video.temporal_lr;
    opts.lambda_ct = session.cfg.video.lambda_ct;
    opts.lambda_ft = session.cfg.video.lambda_ft;
    opts.flow_mode = session.cfg.video.flow_mode == "midpoint"
                         ? fsw::video::FlowMode::midpoint
                         : fsw::video::FlowMode::literal;
    opts.ft_aggregation = session.cfg.video.ft_aggregation == "plain_mse"
                              ? fsw::video::FtAggregation::plain_mse
                              : fsw::video::FtAggregation::group;
    fsw::video::FrameSequence out =
        fsw::video::swap_video(session, source, l_s, targets, masks, opts);

    fsys::create_directories(out_dir);
    for (size_t k = 0; k < out.frames.size(); ++k) {
      std::snprintf(name, sizeof(name), "frame_%06lld.png",
                    static_cast<long long>(k));
      fsw::img::save_png_rgb(out.frames[k], (fsys::path(out_dir) / name).string());
    }
  });
}

int fs_evaluate(fs_session* s, const char* pairs_manifest_json,
                const char* report_json_out) {
  int rc = require_arg(s && pairs_manifest_json && report_json_out,
                       "fs_evaluate: NULL argument");
  if (rc != FS_OK) return rc;
  return guarded([&] {
    fsw::pipeline::EvalReport rep =
        fsw::pipeline::evaluate_pairs(*s->impl, pairs_manifest_json);
    fsw::pipeline::write_report(rep, report_json_out);
  });
}

int fs_self_test(fs_log_cb cb, void* user) {
  int failures = 0;
  int rc = guarded([&] {
    failures = fsw::pipeline::run_self_test([&](const std::string& line) {
      if (cb) cb(line.c_str(), user);
    });
  });
  if (rc != FS_OK) return rc;
  if (failures > 0) {
    g_last_error = std::to_string(failures) + " self-test check(s) failed";
    return FS_E_CONTRACT;
  }
  return FS_OK;
}

}  // extern "C"
