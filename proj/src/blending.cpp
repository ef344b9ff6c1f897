#include "faceswap/blending.hpp"

namespace faceswap::blend {

ag::Tensor downsample_mask(const ag::Tensor& mask, int64_t level_resolution) {
  require(mask.rank() == 3 && mask.dim(0) == 1, ErrorCode::shape_mismatch,
          "downsample_mask expects [1,H,W], got " + ag::shape_str(mask.shape()));
  int64_t h = mask.dim(1), w = mask.dim(2);
  require(level_resolution >= 1 && h % level_resolution == 0 &&
              w % level_resolution == 0,
          ErrorCode::invalid_argument,
          "downsample_mask: level resolution " + std::to_string(level_resolution) +
              " does not divide mask size " + std::to_string(h) + "x" +
              std::to_string(w));
  int64_t fy = h / level_resolution, fx = w / level_resolution;
  ag::Tensor out({1, level_resolution, level_resolution});
  double inv = 1.0 / (static_cast<double>(fy) * static_cast<double>(fx));
  for (int64_t oy = 0; oy < level_resolution; ++oy)
    for (int64_t ox = 0; ox < level_resolution; ++ox) {
      double s = 0.0;
      for (int64_t ky = 0; ky < fy; ++ky)
        for (int64_t kx = 0; kx < fx; ++kx)
          s += mask[(oy * fy + ky) * w + ox * fx + kx];
      out[oy * level_resolution + ox] = s * inv;
    }
  return out;
}

ag::Tensor threshold_mask(const ag::Tensor& soft, double t) {
  ag::Tensor out(soft.shape());
  for (int64_t i = 0; i < soft.size(); ++i) out[i] = soft[i] >= t ? 1.0 : 0.0;
  return out;
}

ag::Var aggregate_level(const ag::Var& f_s, const ag::Var& f_t,
                        const ag::Tensor& soft_mask) {
  const ag::Tensor& vs = f_s->value;
  const ag::Tensor& vt = f_t->value;
  require(vs.same_shape(vt), ErrorCode::shape_mismatch,
          "aggregate_level: " + ag::shape_str(vs.shape()) + " vs " +
              ag::shape_str(vt.shape()));
  require(vs.rank() == 4, ErrorCode::shape_mismatch,
          "aggregate_level expects [B,C,h,w] features");
  require(soft_mask.rank() == 3 && soft_mask.dim(0) == 1 &&
              soft_mask.dim(1) == vs.dim(2) && soft_mask.dim(2) == vs.dim(3),
          ErrorCode::shape_mismatch,
          "aggregate_level: mask " + ag::shape_str(soft_mask.shape()) +
              " does not match features " + ag::shape_str(vs.shape()));
  int64_t bc = vs.dim(0) * vs.dim(1);
  int64_t hw = vs.dim(2) * vs.dim(3);
  ag::Tensor out(vs.shape());
  for (int64_t p = 0; p < bc; ++p) {
    const double* ps = vs.data() + p * hw;
    const double* pt = vt.data() + p * hw;
    double* po = out.data() + p * hw;
    for (int64_t i = 0; i < hw; ++i) {
      double m = soft_mask[i];
      // exact selection at the endpoints keeps binary masks bitwise
      po[i] = m == 1.0 ? ps[i] : (m == 0.0 ? pt[i] : m * ps[i] + (1.0 - m) * pt[i]);
    }
  }
  ag::Tensor mask_copy = soft_mask;
  return ag::make_op(out, {f_s, f_t}, [bc, hw, mask_copy](ag::Node& n) {
    ag::Var ps = n.parents[0];
    ag::Var pt = n.parents[1];
    if (ps->requires_grad) {
      ps->ensure_grad();
      for (int64_t p = 0; p < bc; ++p) {
        const double* g = n.grad.data() + p * hw;
        double* d = ps->grad.data() + p * hw;
        for (int64_t i = 0; i < hw; ++i) d[i] += g[i] * mask_copy[i];
      }
    }
    if (pt->requires_grad) {
      pt->ensure_grad();
      for (int64_t p = 0; p < bc; ++p) {
        const double* g = n.grad.data() + p * hw;
        double* d = pt->grad.data() + p * hw;
        for (int64_t i = 0; i < hw; ++i) d[i] += g[i] * (1.0 - mask_copy[i]);
      }
    }
  });
}

std::vector<ag::Var> aggregate_pyramid(const std::vector<ag::Var>& F_s,
                                       const std::vector<ag::Var>& F_t,
                                       const ag::Tensor& mask, bool hard_mask) {
  require(F_s.size() == F_t.size(), ErrorCode::shape_mismatch,
          "aggregate_pyramid: level count mismatch, " +
              std::to_string(F_s.size()) + " vs " + std::to_string(F_t.size()));
  require(!F_s.empty(), ErrorCode::invalid_argument,
          "aggregate_pyramid: empty pyramid");
  std::vector<ag::Var> out;
  out.reserve(F_s.size());
  for (size_t i = 0; i < F_s.size(); ++i) {
    int64_t res = F_t[i]->value.dim(2);
    ag::Tensor m = downsample_mask(mask, res);
    if (hard_mask) m = threshold_mask(m);
    out.push_back(aggregate_level(F_s[i], F_t[i], m));
  }
  return out;
}

}  // namespace faceswap::blend
