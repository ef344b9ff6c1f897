#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "faceswap_c.h"

namespace {

int g_log_level = 1;  // 0 = quiet, 1 = info, 2 = debug

void info(const std::string& line) {
  if (g_log_level >= 1) std::fprintf(stderr, "%s\n", line.c_str());
}

struct SessionHandle {
  fs_session* ptr = nullptr;
  ~SessionHandle() { fs_session_destroy(ptr); }
};

int runtime_fail(const char* what) {
  std::fprintf(stderr, "error: %s: %s\n", what, fs_last_error());
  return 2;
}

std::vector<const char*> override_ptrs(const std::vector<std::string>& overrides) {
  std::vector<const char*> out;
  for (const auto& o : overrides) out.push_back(o.c_str());
  return out;
}

struct CommonOpts {
  std::string config;
  std::vector<std::string> overrides;
  int64_t seed = -1;
  int64_t resolution = 0;

  std::vector<std::string> collect() const {
    std::vector<std::string> all = overrides;
    if (seed >= 0) all.push_back("train.seed=" + std::to_string(seed));
    if (resolution > 0)
      all.push_back("model.resolution=" + std::to_string(resolution));
    return all;
  }
};

int create_session(const CommonOpts& common, SessionHandle& session) {
  std::vector<std::string> overrides = common.collect();
  std::vector<const char*> ptrs = override_ptrs(overrides);
  int rc = fs_session_create(common.config.empty() ? nullptr : common.config.c_str(),
                             ptrs.data(), ptrs.size(), &session.ptr);
  if (rc != FS_OK) return runtime_fail("cannot create session");
  return 0;
}

int load_session(const std::string& checkpoint, const CommonOpts& common,
                 SessionHandle& session) {
  int rc = create_session(common, session);
  if (rc != 0) return rc;
  if (fs_session_load_checkpoint(session.ptr, checkpoint.c_str()) != FS_OK)
    return runtime_fail("cannot load checkpoint");
  return 0;
}

void progress_printer(uint64_t iteration, const double* losses, void*) {
  if (g_log_level >= 2 || (g_log_level >= 1 && iteration % 50 == 0))
    std::fprintf(stderr,
                 "iter %8llu  adv %.4f  id %.4f  lmk %.4f  rec %.4f  st %.4f  "
                 "total %.4f\n",
                 static_cast<unsigned long long>(iteration), losses[0], losses[1],
                 losses[2], losses[3], losses[4], losses[5]);
}

void pretrain_printer(uint64_t iteration, const double* losses, void*) {
  if (g_log_level >= 2 || (g_log_level >= 1 && iteration % 50 == 0))
    std::fprintf(stderr, "pretrain %8llu  recon %.5f\n",
                 static_cast<unsigned long long>(iteration), losses[0]);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-disentanglement face swapping toolkit"};
  app.require_subcommand(1);

  CommonOpts common;
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "quiet | info | debug")
      ->check(CLI::IsMember({"quiet", "info", "debug"}));
  app.add_option("--seed", common.seed, "override train.seed");
  app.add_option("--resolution", common.resolution, "override model.resolution");

  // train
  auto* train = app.add_subcommand("train", "run swap training");
  std::string data_dir, out_dir, init_from;
  int64_t iterations = 0;
  train->add_option("--config", common.config, "INI config file");
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--iterations", iterations, "override iteration count");
  train->add_option("--init-from", init_from, "start from an existing checkpoint");
  train->add_option("--set", common.overrides, "config override section.key=value");

  // pretrain-generator
  auto* pretrain = app.add_subcommand(
      "pretrain-generator", "reconstruction-only generator + inverter warmup");
  pretrain->add_option("--config", common.config, "INI config file");
  pretrain->add_option("--data", data_dir, "dataset directory")->required();
  pretrain->add_option("--out", out_dir, "output directory")->required();
  pretrain->add_option("--iterations", iterations, "override iteration count");
  pretrain->add_option("--set", common.overrides, "config override section.key=value");

  // swap
  auto* swap = app.add_subcommand("swap", "swap a source face onto a target image");
  std::string checkpoint, source, target, mask, src_lmk, tgt_lmk, out_png, side_png;
  swap->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  swap->add_option("--source", source, "source face PNG")->required();
  swap->add_option("--target", target, "target face PNG")->required();
  swap->add_option("--mask", mask, "inner-face mask PNG")->required();
  swap->add_option("--source-landmarks", src_lmk, "source landmarks JSON")->required();
  swap->add_option("--target-landmarks", tgt_lmk, "target landmarks JSON")->required();
  swap->add_option("--out", out_png, "output PNG")->required();
  swap->add_option("--side-out", side_png, "also write the side output y_s");

  // swap-video
  auto* swap_video = app.add_subcommand("swap-video", "swap a source face onto a frame directory");
  std::string target_dir, mode = "independent";
  swap_video->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  swap_video->add_option("--source", source, "source face PNG")->required();
  swap_video->add_option("--source-landmarks", src_lmk,
                         "source landmarks JSON (omit to use the landmark provider)");
  swap_video->add_option("--target-dir", target_dir, "directory of frame_%06d.png")
      ->required();
  swap_video->add_option("--mode", mode, "independent | temporal")
      ->check(CLI::IsMember({"independent", "temporal"}));
  swap_video->add_option("--out", out_dir, "output frame directory")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "compute swap quality metrics");
  std::string pairs, report;
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  evaluate->add_option("--pairs", pairs, "pairs manifest JSON")->required();
  evaluate->add_option("--report", report, "output report JSON")->required();

  // self-test
  app.add_subcommand("self-test", "run the built-in invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  g_log_level = log_level == "quiet" ? 0 : log_level == "debug" ? 2 : 1;

  if (app.got_subcommand("self-test")) {
    int rc = fs_self_test(
        [](const char* line, void*) { std::printf("%s\n", line); }, nullptr);
    if (rc != FS_OK) {
      std::fprintf(stderr, "self-test failed: %s\n", fs_last_error());
      return 2;
    }
    info("self-test passed");
    return 0;
  }

  if (app.got_subcommand("train") || app.got_subcommand("pretrain-generator")) {
    bool is_pretrain = app.got_subcommand("pretrain-generator");
    SessionHandle session;
    int rc = init_from.empty() ? create_session(common, session)
                               : load_session(init_from, common, session);
    if (rc != 0) return rc;
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
      std::fprintf(stderr, "error: cannot create output directory '%s'\n",
                   out_dir.c_str());
      return 2;
    }
    uint64_t n = iterations > 0 ? static_cast<uint64_t>(iterations) : 0;
    int train_rc =
        is_pretrain
            ? fs_pretrain_generator(session.ptr, data_dir.c_str(), n,
                                    pretrain_printer, nullptr)
            : fs_train(session.ptr, data_dir.c_str(), n, progress_printer, nullptr);
    if (train_rc != FS_OK) return runtime_fail("training failed");
    std::string ck = out_dir + "/checkpoint.fsck";
    if (fs_session_save_checkpoint(session.ptr, ck.c_str()) != FS_OK)
      return runtime_fail("cannot save checkpoint");
    info("wrote " + ck);
    return 0;
  }

  if (app.got_subcommand("swap")) {
    SessionHandle session;
    int rc = load_session(checkpoint, common, session);
    if (rc != 0) return rc;
    if (fs_swap_image_files(session.ptr, source.c_str(), target.c_str(),
                            mask.c_str(), src_lmk.c_str(), tgt_lmk.c_str(),
                            out_png.c_str(),
                            side_png.empty() ? nullptr : side_png.c_str()) != FS_OK)
      return runtime_fail("swap failed");
    info("wrote " + out_png);
    return 0;
  }

  if (app.got_subcommand("swap-video")) {
    SessionHandle session;
    int rc = load_session(checkpoint, common, session);
    if (rc != 0) return rc;
    if (fs_swap_video_dir(session.ptr, source.c_str(),
                          src_lmk.empty() ? nullptr : src_lmk.c_str(),
                          target_dir.c_str(), out_dir.c_str(),
                          mode.c_str()) != FS_OK)
      return runtime_fail("swap-video failed");
    info("wrote frames to " + out_dir);
    return 0;
  }

  if (app.got_subcommand("evaluate")) {
    SessionHandle session;
    int rc = load_session(checkpoint, common, session);
    if (rc != 0) return rc;
    if (fs_evaluate(session.ptr, pairs.c_str(), report.c_str()) != FS_OK)
      return runtime_fail("evaluate failed");
    info("wrote " + report);
    return 0;
  }

  return 1;
}
