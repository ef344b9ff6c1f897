#pragma once

#include <vector>

#include "faceswap/tensor.hpp"

namespace faceswap::blend {

// Inner-face masks: FaceMask is a binary [1,H,W] map at image resolution;
// SoftMask is a [1,h,w] map in [0,1] produced by area downsampling.

// Exact area averaging over non-overlapping blocks.
ag::Tensor downsample_mask(const ag::Tensor& mask, int64_t level_resolution);

ag::Tensor threshold_mask(const ag::Tensor& soft, double t = 0.5);

// out = m*f_s + (1-m)*f_t with the mask broadcast over batch and channels.
// Where m is exactly 1 the output is f_s bit for bit, where exactly 0 it is
// f_t; gradients are m towards f_s and (1-m) towards f_t.
ag::Var aggregate_level(const ag::Var& f_s, const ag::Var& f_t,
                        const ag::Tensor& soft_mask);

// Per-level downsample + aggregate over a whole pyramid. With hard_mask the
// soft mask is thresholded at 0.5, recovering literal replacement.
std::vector<ag::Var> aggregate_pyramid(const std::vector<ag::Var>& F_s,
                                       const std::vector<ag::Var>& F_t,
                                       const ag::Tensor& mask,
                                       bool hard_mask = false);

}  // namespace faceswap::blend
