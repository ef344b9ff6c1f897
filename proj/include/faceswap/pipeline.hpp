#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "faceswap/latent.hpp"
#include "faceswap/losses.hpp"
#include "faceswap/nets.hpp"
#include "faceswap/optim.hpp"
#include "faceswap/perception.hpp"
#include "faceswap/rng.hpp"
#include "faceswap/tensor.hpp"

namespace faceswap::pipeline {

struct ModelConfig {
  nets::GeneratorConfig gen;
  int64_t structure_k = 0;  // 0 = proportional rule round(7L/18)
  int64_t num_landmarks = 68;
  int64_t heatmap_grid = 0;  // 0 = resolution
  double heatmap_sigma = 2.0;
  bool hard_mask = false;
  bool disable_appearance_swap = false;      // ablation Var.1
  bool disable_background_transfer = false;  // ablation Var.2

  int64_t num_vectors() const { return nets::num_latent_vectors(gen.resolution); }
  int64_t split_index() const;
  int64_t grid() const { return heatmap_grid > 0 ? heatmap_grid : gen.resolution; }
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int64_t batch_size = 0;  // 0 = 8 at resolution >= 512, else 4
  int64_t iterations = 500000;
  int64_t pretrain_iterations = 500;
  losses::LossWeights weights;
  double alpha_perceptual = 0.8;
  double p_same = 0.2;
  uint64_t seed = 0;
  bool freeze_generator = true;
  bool train_inverter = true;
  losses::HmScope hm_scope = losses::HmScope::mask;

  int64_t batch(int64_t resolution) const {
    return batch_size > 0 ? batch_size : (resolution >= 512 ? 8 : 4);
  }
};

struct VideoConfig {
  double lambda_ct = 1.0;
  double lambda_ft = 1.0;
  std::string flow_mode = "literal";      // literal | midpoint
  std::string ft_aggregation = "group";   // group | plain_mse
  int64_t temporal_steps = 10;
  double temporal_lr = 0.01;
};

struct Config {
  ModelConfig model;
  TrainConfig train;
  perception::ProviderKeys providers;
  VideoConfig video;
};

struct Models {
  ModelConfig mcfg;
  nets::Generator gen;
  nets::Inverter inv;
  nets::LandmarkEncoder lenc;
  nets::TargetEncoder tenc;
  nets::Decoder dec;
  nets::Discriminator disc;
  perception::ProviderSet providers;

  Models(const ModelConfig& cfg, const perception::ProviderKeys& keys,
         uint64_t seed);
  nets::ParamList named_params() const;  // fixed order: gen,inv,lenc,tenc,dec,disc
};

// Training + inference state. Construction is fully deterministic from the
// config (network init and data order derive from train.seed).
struct Session {
  Config cfg;
  Models models;
  ag::Adam opt_g;  // generator-side trainables
  ag::Adam opt_d;  // discriminator
  int64_t iteration = 0;
  Rng data_rng;

  explicit Session(const Config& cfg);
  std::vector<ag::Var> gen_side_params() const;
  void apply_trainability();
};

struct SwapResult {
  ag::Tensor side_output;  // y_s, [3,R,R]
  ag::Tensor final_image;  // y_f, [3,R,R]
  latent::LatentCode swap_code;
  latent::TransferDirection direction;
};

// Live graph version used by training and the temporal video optimizer.
struct SwapGraph {
  ag::Var y_s, y_f;      // [1,3,R,R]
  ag::Var w_hat;         // [1,L,D]
  ag::Var g_hat, g_t;    // [1,K,D]
  ag::Var direction;     // [1,K,D]
};

SwapGraph swap_forward(const Models& models, const ag::Var& x_s, const ag::Var& x_t,
                       const ag::Tensor& mask, const nets::LandmarkSet& l_s,
                       const nets::LandmarkSet& l_t);

SwapResult swap_image(const Models& models, const ag::Tensor& x_s,
                      const ag::Tensor& x_t, const ag::Tensor& mask,
                      const nets::LandmarkSet& l_s, const nets::LandmarkSet& l_t);

// ----- dataset + batches -----

struct Sample {
  std::string name;
  ag::Tensor image;  // [3,R,R]
  nets::LandmarkSet landmarks;
  ag::Tensor mask;  // [1,R,R]
};

class Dataset {
 public:
  static Dataset load_dir(const std::string& dir, int64_t resolution,
                          int64_t num_landmarks);
  static Dataset from_samples(std::vector<Sample> samples);
  size_t size() const { return samples_.size(); }
  const Sample& at(size_t i) const { return samples_[i]; }

 private:
  std::vector<Sample> samples_;
};

struct BatchPair {
  int64_t source = 0;
  int64_t target = 0;
  bool same = false;
};

std::vector<BatchPair> sample_batch(const Dataset& data, int64_t batch_size,
                                    double p_same, Rng& rng);

// ----- training -----

losses::LossBundle train_step(Session& s, const Dataset& data,
                              const std::vector<BatchPair>& batch);

using ProgressFn = std::function<void(int64_t iteration, const losses::LossBundle&)>;

void train(Session& s, const Dataset& data, int64_t iterations, const ProgressFn& cb);

// Reconstruction-only warmup that trains generator + inverter so swap
// training can run against a frozen generator.
void pretrain_generator(Session& s, const Dataset& data, int64_t iterations,
                        const std::function<void(int64_t, double)>& cb);

// ----- checkpointing -----

void save_checkpoint(const Session& s, const std::string& path);
std::unique_ptr<Session> load_session(const std::string& path);

// Latent codes stored in the same container (`latent/<name>` + L/D/K metadata).
void save_latent_code(const latent::LatentCode& code, const std::string& name,
                      const std::string& path);
latent::LatentCode load_latent_code(const std::string& name, const std::string& path);

// ----- evaluation -----

struct EvalReport {
  double id_similarity = 0.0;
  double id_retrieval = 0.0;
  double pose_error = 0.0;
  double expression_error = 0.0;
  double fid = 0.0;
};

EvalReport evaluate_pairs(Session& s, const std::string& pairs_manifest_path);
void write_report(const EvalReport& r, const std::string& path);

}  // namespace faceswap::pipeline
