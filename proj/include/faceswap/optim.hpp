#pragma once

#include <cstdint>
#include <vector>

#include "faceswap/tensor.hpp"

namespace faceswap::ag {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam over a fixed parameter list. Parameters and both moment buffers are
// rounded to float32 after every step so that the float32 checkpoint
// container restores training state exactly.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Var> params, AdamConfig cfg);

  void zero_grad();
  void step();

  const std::vector<Var>& params() const { return params_; }
  std::vector<Tensor>& moments1() { return m_; }
  std::vector<Tensor>& moments2() { return v_; }
  int64_t& timestep() { return t_; }
  int64_t timestep() const { return t_; }
  AdamConfig& config() { return cfg_; }

 private:
  std::vector<Var> params_;
  std::vector<Tensor> m_, v_;
  int64_t t_ = 0;
  AdamConfig cfg_;
};

}  // namespace faceswap::ag
