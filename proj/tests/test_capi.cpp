#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "faceswap/image.hpp"
#include "faceswap/nets.hpp"
#include "faceswap_c.h"

namespace fs = std::filesystem;
using namespace faceswap;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / name;
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& file = "") const {
    return (file.empty() ? path : path / file).string();
  }
};

ag::Tensor synth_image(int64_t res, double phase) {
  ag::Tensor t({3, res, res});
  for (int64_t y = 0; y < res; ++y)
    for (int64_t x = 0; x < res; ++x) {
      double u = static_cast<double>(x) / (res - 1);
      double v = static_cast<double>(y) / (res - 1);
      t[(0 * res + y) * res + x] = 0.5 * std::sin(5 * u + phase);
      t[(1 * res + y) * res + x] = 0.5 * v - 0.25;
      t[(2 * res + y) * res + x] = 0.4 * std::cos(4 * v + phase);
    }
  return t;
}

void write_landmarks(const std::string& path, double shift) {
  nets::LandmarkSet l;
  for (int i = 0; i < 4; ++i)
    l.points.push_back({0.25 + 0.15 * i, 0.4 + shift + 0.04 * i});
  nets::save_landmarks_json(l, path);
}

std::vector<std::string> tiny_overrides(uint64_t seed) {
  return {
      "model.resolution=32",      "model.latent_width=8",
      "model.channel_scale=0.015625", "model.num_landmarks=4",
      "model.heatmap_grid=16",    "train.seed=" + std::to_string(seed),
      "train.batch_size=2",
  };
}

struct Session {
  fs_session* ptr = nullptr;
  ~Session() { fs_session_destroy(ptr); }
};

int create_tiny(Session& s, uint64_t seed) {
  std::vector<std::string> ov = tiny_overrides(seed);
  std::vector<const char*> ptrs;
  for (const auto& o : ov) ptrs.push_back(o.c_str());
  return fs_session_create(nullptr, ptrs.data(), ptrs.size(), &s.ptr);
}

}  // namespace

TEST_CASE("abi version and error message plumbing") {
  CHECK(fs_abi_version() == 1);
  fs_session* raw = nullptr;
  CHECK(fs_session_create(nullptr, nullptr, 0, nullptr) == FS_E_INVALID_ARGUMENT);
  CHECK(std::string(fs_last_error()).find("out is NULL") != std::string::npos);
  // unknown config key surfaces as invalid config with a message
  const char* bad[] = {"model.warp=1"};
  CHECK(fs_session_create(nullptr, bad, 1, &raw) == FS_E_INVALID_CONFIG);
  CHECK(std::string(fs_last_error()).find("warp") != std::string::npos);
}

TEST_CASE("session create, checkpoint save/load, iteration counter") {
  TempDir dir("fsw_capi_session");
  Session s;
  REQUIRE(create_tiny(s, 21) == FS_OK);
  uint64_t it = 99;
  CHECK(fs_session_iteration(s.ptr, &it) == FS_OK);
  CHECK(it == 0);
  std::string ck = dir.str("ck.fsck");
  CHECK(fs_session_save_checkpoint(s.ptr, ck.c_str()) == FS_OK);
  CHECK(fs_session_load_checkpoint(s.ptr, ck.c_str()) == FS_OK);
  CHECK(fs_session_load_checkpoint(s.ptr, dir.str("missing.fsck").c_str()) == FS_E_IO);
}

TEST_CASE("file-based swap through the C API") {
  TempDir dir("fsw_capi_swap");
  Session s;
  REQUIRE(create_tiny(s, 22) == FS_OK);
  img::save_png_rgb(synth_image(32, 0.0), dir.str("src.png"));
  img::save_png_rgb(synth_image(32, 1.5), dir.str("tgt.png"));
  img::save_png_mask(img::box_mask(32, 32, 0.5, 0.5, 0.3, 0.3), dir.str("mask.png"));
  write_landmarks(dir.str("src.json"), 0.0);
  write_landmarks(dir.str("tgt.json"), 0.02);

  REQUIRE(fs_swap_image_files(s.ptr, dir.str("src.png").c_str(),
                              dir.str("tgt.png").c_str(), dir.str("mask.png").c_str(),
                              dir.str("src.json").c_str(), dir.str("tgt.json").c_str(),
                              dir.str("out.png").c_str(),
                              dir.str("side.png").c_str()) == FS_OK);
  CHECK(fs::exists(dir.str("out.png")));
  CHECK(fs::exists(dir.str("side.png")));
  ag::Tensor out = img::load_png_rgb(dir.str("out.png"));
  CHECK(out.shape() == ag::Shape{3, 32, 32});

  // missing mask file: IO error naming the path
  int rc = fs_swap_image_files(s.ptr, dir.str("src.png").c_str(),
                               dir.str("tgt.png").c_str(), dir.str("nope.png").c_str(),
                               dir.str("src.json").c_str(), dir.str("tgt.json").c_str(),
                               dir.str("out2.png").c_str(), nullptr);
  CHECK(rc == FS_E_IO);
  CHECK(std::string(fs_last_error()).find("nope.png") != std::string::npos);
}

TEST_CASE("buffer-based swap matches the file-based result") {
  TempDir dir("fsw_capi_buf");
  Session s;
  REQUIRE(create_tiny(s, 23) == FS_OK);
  ag::Tensor src = synth_image(32, 0.4);
  ag::Tensor tgt = synth_image(32, 2.0);
  ag::Tensor mask = img::box_mask(32, 32, 0.5, 0.5, 0.3, 0.3);
  // materialize the same 8-bit content both ways
  img::save_png_rgb(src, dir.str("src.png"));
  img::save_png_rgb(tgt, dir.str("tgt.png"));
  img::save_png_mask(mask, dir.str("mask.png"));
  write_landmarks(dir.str("src.json"), 0.0);
  write_landmarks(dir.str("tgt.json"), 0.01);
  REQUIRE(fs_swap_image_files(s.ptr, dir.str("src.png").c_str(),
                              dir.str("tgt.png").c_str(), dir.str("mask.png").c_str(),
                              dir.str("src.json").c_str(), dir.str("tgt.json").c_str(),
                              dir.str("out.png").c_str(), nullptr) == FS_OK);

  std::vector<uint8_t> src8(3 * 32 * 32), tgt8(3 * 32 * 32), mask8(32 * 32);
  for (int64_t y = 0; y < 32; ++y)
    for (int64_t x = 0; x < 32; ++x) {
      for (int64_t c = 0; c < 3; ++c) {
        src8[(y * 32 + x) * 3 + c] = img::to_u8(src[(c * 32 + y) * 32 + x]);
        tgt8[(y * 32 + x) * 3 + c] = img::to_u8(tgt[(c * 32 + y) * 32 + x]);
      }
      mask8[y * 32 + x] = mask[y * 32 + x] >= 0.5 ? 255 : 0;
    }
  std::vector<double> lmk_s, lmk_t;
  for (int i = 0; i < 4; ++i) {
    lmk_s.push_back(0.25 + 0.15 * i);
    lmk_s.push_back(0.4 + 0.04 * i);
    lmk_t.push_back(0.25 + 0.15 * i);
    lmk_t.push_back(0.41 + 0.04 * i);
  }
  std::vector<uint8_t> out8(3 * 32 * 32);
  REQUIRE(fs_swap_image_buffers(s.ptr, src8.data(), tgt8.data(), mask8.data(), 32, 32,
                                lmk_s.data(), lmk_t.data(), 4, out8.data(),
                                nullptr) == FS_OK);
  ag::Tensor from_file = img::load_png_rgb(dir.str("out.png"));
  int64_t diffs = 0;
  for (int64_t y = 0; y < 32; ++y)
    for (int64_t x = 0; x < 32; ++x)
      for (int64_t c = 0; c < 3; ++c)
        if (img::to_u8(from_file[(c * 32 + y) * 32 + x]) != out8[(y * 32 + x) * 3 + c])
          ++diffs;
  CHECK(diffs == 0);
}

TEST_CASE("pretrain + train + evaluate through the C API") {
  TempDir dir("fsw_capi_train");
  Session s;
  REQUIRE(create_tiny(s, 24) == FS_OK);
  // two-sample dataset
  for (int i = 0; i < 2; ++i) {
    std::string base = dir.str("face" + std::to_string(i));
    img::save_png_rgb(synth_image(32, 0.8 * i), base + ".png");
    write_landmarks(base + ".landmarks.json", 0.01 * i);
    img::save_png_mask(img::box_mask(32, 32, 0.5, 0.5, 0.28, 0.3), base + ".mask.png");
  }
  int pre_calls = 0;
  REQUIRE(fs_pretrain_generator(
              s.ptr, dir.str().c_str(), 3,
              [](uint64_t, const double*, void* user) { ++*static_cast<int*>(user); },
              &pre_calls) == FS_OK);
  CHECK(pre_calls == 3);
  REQUIRE(fs_train(s.ptr, dir.str().c_str(), 2, nullptr, nullptr) == FS_OK);
  uint64_t it = 0;
  CHECK(fs_session_iteration(s.ptr, &it) == FS_OK);
  CHECK(it == 2);
  std::string ck = dir.str("trained.fsck");
  REQUIRE(fs_session_save_checkpoint(s.ptr, ck.c_str()) == FS_OK);

  // evaluate over a two-pair manifest
  std::string manifest = dir.str("pairs.json");
  {
    std::ofstream out(manifest);
    out << "[";
    for (int i = 0; i < 2; ++i) {
      std::string base = dir.str("face" + std::to_string(i));
      std::string other = dir.str("face" + std::to_string(1 - i));
      out << (i ? "," : "") << "{\"source\":\"" << base << ".png\",\"target\":\""
          << other << ".png\",\"mask\":\"" << other
          << ".mask.png\",\"source_landmarks\":\"" << base
          << ".landmarks.json\",\"target_landmarks\":\"" << other
          << ".landmarks.json\"}";
    }
    out << "]";
  }
  REQUIRE(fs_evaluate(s.ptr, manifest.c_str(), dir.str("report.json").c_str()) == FS_OK);
  CHECK(fs::exists(dir.str("report.json")));
}

TEST_CASE("video swap through the C API") {
  TempDir dir("fsw_capi_video");
  Session s;
  REQUIRE(create_tiny(s, 25) == FS_OK);
  img::save_png_rgb(synth_image(32, 0.0), dir.str("src.png"));
  write_landmarks(dir.str("src.json"), 0.0);
  fs::create_directories(dir.str("frames"));
  for (int k = 0; k < 2; ++k) {
    char name[64];
    std::snprintf(name, sizeof(name), "frames/frame_%06d.png", k);
    img::save_png_rgb(synth_image(32, 1.0 + 0.1 * k), dir.str(name));
    std::snprintf(name, sizeof(name), "frames/landmarks_%06d.json", k);
    write_landmarks(dir.str(name), 0.01 * k);
    std::snprintf(name, sizeof(name), "frames/mask_%06d.png", k);
    img::save_png_mask(img::box_mask(32, 32, 0.5, 0.5, 0.3, 0.3), dir.str(name));
  }
  REQUIRE(fs_swap_video_dir(s.ptr, dir.str("src.png").c_str(),
                            dir.str("src.json").c_str(), dir.str("frames").c_str(),
                            dir.str("out").c_str(), "independent") == FS_OK);
  CHECK(fs::exists(dir.str("out/frame_000000.png")));
  CHECK(fs::exists(dir.str("out/frame_000001.png")));
  // bad mode is an invalid argument
  CHECK(fs_swap_video_dir(s.ptr, dir.str("src.png").c_str(), nullptr,
                          dir.str("frames").c_str(), dir.str("out2").c_str(),
                          "sideways") == FS_E_INVALID_ARGUMENT);
}

TEST_CASE("self test through the C API") {
  int lines = 0;
  CHECK(fs_self_test(
            [](const char*, void* user) { ++*static_cast<int*>(user); },
            &lines) == FS_OK);
  CHECK(lines > 10);
}
