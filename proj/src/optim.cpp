#include "faceswap/optim.hpp"

#include <cmath>

namespace faceswap::ag {

Adam::Adam(std::vector<Var> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.push_back(Tensor::zeros(p->value.shape()));
    v_.push_back(Tensor::zeros(p->value.shape()));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_)
    if (p->grad.defined()) p->grad.fill_(0.0);
}

void Adam::step() {
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Var& p = params_[i];
    if (!p->grad.defined()) p->ensure_grad();
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (int64_t j = 0; j < p->value.size(); ++j) {
      double g = p->grad[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      double mhat = m[j] / bc1;
      double vhat = v[j] / bc2;
      p->value[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    p->value.quantize_f32_();
    m.quantize_f32_();
    v.quantize_f32_();
  }
}

}  // namespace faceswap::ag
