#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "faceswap/rng.hpp"
#include "faceswap/tensor.hpp"

namespace faceswap::nets {

struct GeneratorConfig {
  int64_t resolution = 1024;    // power of two, 32..1024
  int64_t latent_width = 512;   // D
  int64_t channel_cap = 512;
  int64_t channel_budget = 32768;
  double channel_scale = 1.0;   // toy-scale multiplier in (0,1]
  bool noise_injection = false;

  void validate() const;
};

// L = 2*(log2(resolution) - 1); 18 vectors at 1024.
int64_t num_latent_vectors(int64_t resolution);

// min(cap, budget/res) * scale, rounded to the nearest multiple of 4, floor 4.
// Reproduces the full-scale schedule 8x8x512 ... 1024x1024x32 exactly.
int64_t channel_width(int64_t level_resolution, const GeneratorConfig& cfg);

// Pyramid level resolutions 8,16,...,resolution (coarsest first).
std::vector<int64_t> pyramid_resolutions(int64_t resolution);

struct LandmarkSet {
  std::vector<std::array<double, 2>> points;  // normalized [0,1]^2
};

LandmarkSet load_landmarks_json(const std::string& path);
void save_landmarks_json(const LandmarkSet& l, const std::string& path);

struct HeatmapStack {
  ag::Tensor maps;      // [N,G,G], values in [0,1]
  int64_t clamped = 0;  // landmarks clamped to the border
};

// channel i = exp(-((u - x_i*(G-1))^2 + (v - y_i*(G-1))^2) / (2*sigma^2))
HeatmapStack rasterize_heatmaps(const LandmarkSet& l, int64_t grid, double sigma);

struct ParamEntry {
  std::string name;
  ag::Var var;
};
using ParamList = std::vector<ParamEntry>;

std::vector<ag::Var> param_vars(const ParamList& params);

namespace detail {
struct GeneratorImpl;
struct InverterImpl;
struct LandmarkEncoderImpl;
struct TargetEncoderImpl;
struct DecoderImpl;
struct DiscriminatorImpl;
}  // namespace detail

// Style-modulated generator: learned 4x4 constant, two modulated conv layers
// per resolution level, per-level feature taps from 8x8 up to the output.
class Generator {
 public:
  Generator(const GeneratorConfig& cfg, Rng rng);
  struct Output {
    ag::Var image;                 // [B,3,R,R], tanh-squashed
    std::vector<ag::Var> pyramid;  // coarsest (8x8) first
  };
  Output synthesize(const ag::Var& w) const;  // w: [B,L,D]
  void collect_params(ParamList& out) const;  // names under "gen/"
  void set_trainable(bool trainable);

 private:
  std::shared_ptr<detail::GeneratorImpl> impl_;
};

// pSp-style face inverter: conv backbone with per-latent-row map-to-vector
// heads grouped into coarse/medium/fine pyramid levels.
class Inverter {
 public:
  Inverter(const GeneratorConfig& cfg, Rng rng);
  ag::Var invert(const ag::Var& image) const;  // [B,3,R,R] -> [B,L,D]
  void collect_params(ParamList& out) const;   // "inv/"
  void set_trainable(bool trainable);

 private:
  std::shared_ptr<detail::InverterImpl> impl_;
};

// Maps source/target heatmap stacks to the K x D structure transfer
// direction. Heads exist only for the coarse and medium levels, and their
// final projections are zero-initialized so a fresh encoder emits zero.
class LandmarkEncoder {
 public:
  LandmarkEncoder(const GeneratorConfig& cfg, int64_t num_landmarks,
                  int64_t grid, int64_t split_index, Rng rng);
  ag::Var encode(const ag::Var& heat_s, const ag::Var& heat_t) const;  // [B,K,D]
  void collect_params(ParamList& out) const;  // "lenc/"
  void set_trainable(bool trainable);

 private:
  std::shared_ptr<detail::LandmarkEncoderImpl> impl_;
};

// Strided-conv downsample blocks emitting one feature map per pyramid level,
// shape-matched to the generator taps, returned coarsest first.
class TargetEncoder {
 public:
  TargetEncoder(const GeneratorConfig& cfg, Rng rng);
  std::vector<ag::Var> encode(const ag::Var& image) const;
  void collect_params(ParamList& out) const;  // "tenc/"
  void set_trainable(bool trainable);

 private:
  std::shared_ptr<detail::TargetEncoderImpl> impl_;
};

// Mirror of the target encoder: transpose-conv upsampling, each block
// consuming the previous output concatenated with the aggregated feature.
class Decoder {
 public:
  Decoder(const GeneratorConfig& cfg, Rng rng);
  ag::Var decode(const std::vector<ag::Var>& aggregated) const;  // [B,3,R,R]
  void collect_params(ParamList& out) const;  // "dec/"
  void set_trainable(bool trainable);

 private:
  std::shared_ptr<detail::DecoderImpl> impl_;
};

class Discriminator {
 public:
  Discriminator(const GeneratorConfig& cfg, Rng rng);
  ag::Var discriminate(const ag::Var& image) const;  // [B,1] in (0,1)
  void collect_params(ParamList& out) const;  // "disc/"
  void set_trainable(bool trainable);

 private:
  std::shared_ptr<detail::DiscriminatorImpl> impl_;
};

}  // namespace faceswap::nets
