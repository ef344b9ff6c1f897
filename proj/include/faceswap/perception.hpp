#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "faceswap/tensor.hpp"

namespace faceswap::perception {

// Pluggable stand-ins for the pre-trained auxiliary networks. Each provider
// is deterministic given its construction seed; the differentiable ones
// (identity, landmark, perceptual) are built from frozen autodiff graphs so
// gradients flow into their image arguments.

struct FlowField {
  ag::Tensor field;  // [2,H,W]; channel 0 = dx, channel 1 = dy (pixels)
};

struct ProviderSet {
  std::function<ag::Var(const ag::Var&)> identity_embed;     // [B,3,H,W] -> [B,64], unit rows
  std::function<ag::Var(const ag::Var&)> landmark_estimate;  // [B,3,H,W] -> [B,2N] in [0,1]
  std::function<ag::Var(const ag::Var&)> perceptual;         // [B,3,H,W] -> [B,F]
  std::function<FlowField(const ag::Tensor&, const ag::Tensor&)> flow;  // [3,H,W]x2
  std::function<std::vector<double>(const ag::Tensor&)> pose;        // -> 4
  std::function<std::vector<double>(const ag::Tensor&)> expression;  // -> 8
};

struct ProviderContext {
  int64_t resolution = 64;
  int64_t num_landmarks = 68;
  uint64_t seed = 0;
};

struct ProviderKeys {
  std::string identity = "toy";
  std::string landmark = "toy";
  std::string perceptual = "toy";
  std::string flow = "toy";
  std::string pose = "toy";
  std::string expression = "toy";
};

// Registry mapping string keys to provider factories. "toy" factories are
// pre-registered for all six slots; users may register real models behind
// the same interfaces.
class ProviderRegistry {
 public:
  static ProviderRegistry& instance();

  using Installer = std::function<void(ProviderSet&, const ProviderContext&)>;
  enum class Slot { identity, landmark, perceptual, flow, pose, expression };

  void register_provider(Slot slot, const std::string& key, Installer fn);
  ProviderSet resolve(const ProviderKeys& keys, const ProviderContext& ctx) const;

 private:
  ProviderRegistry();
  std::map<Slot, std::map<std::string, Installer>> installers_;
};

// individual toy providers (used directly by tests)
std::function<ag::Var(const ag::Var&)> toy_identity_embedder(const ProviderContext& ctx);
std::function<ag::Var(const ag::Var&)> toy_landmark_estimator(const ProviderContext& ctx);
std::function<ag::Var(const ag::Var&)> toy_perceptual_extractor(const ProviderContext& ctx);

// Global-translation flow by exhaustive integer search over [-R,R]^2 with
// R = resolution/8, minimizing mean absolute difference over the overlap.
// Ties prefer the smaller displacement norm, then lexicographic (dx, dy).
FlowField toy_flow_estimate(const ag::Tensor& a, const ag::Tensor& b);

FlowField analytic_translation_flow(std::array<double, 2> v, int64_t h, int64_t w);

std::vector<double> toy_pose_features(const ag::Tensor& image);
std::vector<double> toy_expression_features(const ag::Tensor& image);

}  // namespace faceswap::perception
