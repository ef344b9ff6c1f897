#pragma once

#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "faceswap/nets.hpp"
#include "faceswap/perception.hpp"
#include "faceswap/tensor.hpp"

namespace faceswap::pipeline {
struct Session;
}

namespace faceswap::video {

struct FrameSequence {
  std::vector<ag::Tensor> frames;  // [3,H,W] each
  std::optional<std::vector<nets::LandmarkSet>> landmarks;
};

enum class FlowMode { literal, midpoint };
enum class FtAggregation { group, plain_mse };
enum class VideoMode { independent, temporal };

using FlowFn =
    std::function<perception::FlowField(const ag::Tensor&, const ag::Tensor&)>;

// mean over k of MSE((g_hat^k - g_hat^{k-1}) - (g_t^k - g_t^{k-1}))
ag::Var code_trajectory_loss(const std::vector<ag::Var>& swap_structs,
                             const std::vector<ag::Var>& target_structs);

// One flow triple per window k: forward one-step, forward two-step, backward
// two-step. literal penalizes (f02 + f20)/2 - f01 (the formula as published);
// midpoint uses (f02 - f20)/4 - f01, which vanishes for uniform translation.
struct FlowTriple {
  ag::Var f01, f02, f20;  // each [2,H,W]
};

ag::Var flow_trajectory_penalty(const std::vector<FlowTriple>& triples,
                                FlowMode mode, FtAggregation agg);

double flow_trajectory_loss(const FrameSequence& swapped, const FlowFn& flow,
                            FlowMode mode, FtAggregation agg = FtAggregation::group);

struct VideoSwapOptions {
  VideoMode mode = VideoMode::independent;
  int64_t temporal_steps = 10;
  double temporal_lr = 0.01;
  double lambda_ct = 1.0;
  double lambda_ft = 1.0;
  FlowMode flow_mode = FlowMode::literal;
  FtAggregation ft_aggregation = FtAggregation::group;
  // objective trace for the temporal optimization, one entry per step
  std::vector<double>* objective_trace = nullptr;
};

// Swaps a source face onto every frame. Temporal mode starts from the
// per-frame codes and optimizes the structure codes under the trajectory
// constraints plus per-frame identity/landmark terms, networks frozen.
FrameSequence swap_video(pipeline::Session& session, const ag::Tensor& source,
                         const nets::LandmarkSet& source_landmarks,
                         const FrameSequence& targets,
                         const std::vector<ag::Tensor>& masks,
                         const VideoSwapOptions& options);

}  // namespace faceswap::video
