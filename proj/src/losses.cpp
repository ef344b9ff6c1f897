#include "faceswap/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace faceswap::losses {

namespace {

using ag::Var;

Var neg_log_clamped(const Var& x) {
  return ag::neg(ag::log_op(ag::clamp_min(x, kEpsLog)));
}

void check_nonempty_scores(const Var& s, const char* who) {
  require(s && s->value.size() >= 1, ErrorCode::invalid_argument,
          std::string(who) + ": empty score batch");
}

}  // namespace

Var adversarial_generator_loss(const Var& scores) {
  check_nonempty_scores(scores, "adversarial_generator_loss");
  return ag::mean_all(neg_log_clamped(scores));
}

Var discriminator_loss(const Var& fake_scores, const Var& real_scores) {
  check_nonempty_scores(fake_scores, "discriminator_loss (fake)");
  check_nonempty_scores(real_scores, "discriminator_loss (real)");
  Var one_minus_fake = ag::add_scalar(ag::neg(fake_scores), 1.0);
  return ag::add(ag::mean_all(neg_log_clamped(one_minus_fake)),
                 ag::mean_all(neg_log_clamped(real_scores)));
}

Var identity_loss(const Var& y_f, const Var& x_s, const ImageFn& embed) {
  Var e1 = embed(y_f);
  Var e2 = embed(x_s);
  require(e1->value.rank() == 2 && e1->value.same_shape(e2->value),
          ErrorCode::shape_mismatch, "identity_loss: embedding shape mismatch");
  for (const Var& e : {e1, e2}) {
    double* p = e->value.data();
    int64_t rows = e->value.dim(0), cols = e->value.dim(1);
    for (int64_t r = 0; r < rows; ++r) {
      double n2 = 0.0;
      for (int64_t c = 0; c < cols; ++c) n2 += p[r * cols + c] * p[r * cols + c];
      require(n2 > 1e-24, ErrorCode::degenerate_input,
              "identity_loss: degenerate zero embedding");
    }
  }
  Var n1 = ag::l2_normalize_rows(e1);
  Var n2 = ag::l2_normalize_rows(e2);
  Var cos = ag::sum_axes(ag::mul(n1, n2), {1}, false);  // [B]
  return ag::mean_all(ag::add_scalar(ag::neg(cos), 1.0));
}

Var landmark_alignment_loss(const Var& y_s, const Var& y_f, const Var& x_t,
                            const ImageFn& estimate) {
  Var es = estimate(y_s);
  Var ef = estimate(y_f);
  Var et = estimate(x_t);
  require(es->value.same_shape(et->value) && ef->value.same_shape(et->value),
          ErrorCode::contract_violation,
          "landmark_alignment_loss: estimator output length changed across calls");
  return ag::add(ag::mse(es, et), ag::mse(ef, et));
}

Var reconstruction_loss(const Var& y_s, const Var& y_f, const Var& x_t,
                        bool same_identity, double alpha, const ImageFn& perceptual) {
  if (!same_identity) return ag::constant(ag::Tensor::scalar(0.0));
  require(y_s->value.same_shape(x_t->value) && y_f->value.same_shape(x_t->value),
          ErrorCode::shape_mismatch, "reconstruction_loss: image shape mismatch");
  Var ft = perceptual(x_t);
  Var loss = ag::add(ag::mse(y_f, x_t), ag::scale(ag::mse(perceptual(y_f), ft), alpha));
  loss = ag::add(loss, ag::mse(y_s, x_t));
  loss = ag::add(loss, ag::scale(ag::mse(perceptual(y_s), ft), alpha));
  return loss;
}

std::vector<double> quantile_map_values(const std::vector<double>& values,
                                        const std::vector<double>& reference) {
  require(!values.empty() && !reference.empty(), ErrorCode::invalid_argument,
          "quantile_map_values: empty input");
  int64_t n = static_cast<int64_t>(values.size());
  std::vector<double> ref_sorted = reference;
  std::sort(ref_sorted.begin(), ref_sorted.end());
  int64_t nr = static_cast<int64_t>(ref_sorted.size());

  std::vector<int64_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    return values[a] < values[b] || (values[a] == values[b] && a < b);
  });

  auto ref_at = [&](double pos) {
    int64_t lo = static_cast<int64_t>(std::floor(pos));
    int64_t hi = static_cast<int64_t>(std::ceil(pos));
    if (lo < 0) lo = 0;
    if (hi > nr - 1) hi = nr - 1;
    double t = pos - static_cast<double>(lo);
    return ref_sorted[lo] + t * (ref_sorted[hi] - ref_sorted[lo]);
  };

  std::vector<double> out(values.size());
  // ties share the mean of their rank range
  int64_t a = 0;
  while (a < n) {
    int64_t b = a;
    while (b + 1 < n && values[order[b + 1]] == values[order[a]]) ++b;
    double rank = 0.5 * static_cast<double>(a + b);
    double q = n == 1 ? 0.5 : rank / static_cast<double>(n - 1);
    double mapped = ref_at(q * static_cast<double>(nr - 1));
    for (int64_t i = a; i <= b; ++i) out[order[i]] = mapped;
    a = b + 1;
  }
  return out;
}

HistogramMapResult histogram_map(const ag::Tensor& y, const ag::Tensor& ref,
                                 const ag::Tensor& mask) {
  require(y.rank() == 3 && y.dim(0) == 3 && y.same_shape(ref),
          ErrorCode::shape_mismatch, "histogram_map: expected matching [3,H,W] images");
  require(mask.rank() == 3 && mask.dim(0) == 1 && mask.dim(1) == y.dim(1) &&
              mask.dim(2) == y.dim(2),
          ErrorCode::shape_mismatch, "histogram_map: mask size mismatch");
  int64_t hw = y.dim(1) * y.dim(2);
  std::vector<int64_t> inside;
  for (int64_t i = 0; i < hw; ++i)
    if (mask[i] != 0.0) inside.push_back(i);
  HistogramMapResult result{y.clone(), false};
  if (inside.empty()) {
    result.empty_mask = true;
    return result;
  }
  for (int64_t c = 0; c < 3; ++c) {
    const double* py = y.data() + c * hw;
    const double* pr = ref.data() + c * hw;
    double* po = result.image.data() + c * hw;
    std::vector<double> y_vals, ref_vals;
    y_vals.reserve(inside.size());
    ref_vals.reserve(inside.size());
    for (int64_t i : inside) {
      y_vals.push_back(py[i]);
      ref_vals.push_back(pr[i]);
    }
    std::vector<double> mapped = quantile_map_values(y_vals, ref_vals);
    for (size_t i = 0; i < inside.size(); ++i) po[inside[i]] = mapped[i];
  }
  return result;
}

Var style_transfer_loss(const Var& y_f, const ag::Tensor& x_t,
                        const ag::Tensor& mask, HmScope scope) {
  require(y_f && y_f->value.rank() == 4 && y_f->value.dim(0) == 1 &&
              y_f->value.dim(1) == 3,
          ErrorCode::shape_mismatch, "style_transfer_loss: expected [1,3,H,W]");
  ag::Tensor img = y_f->value.reshaped(
      {3, y_f->value.dim(2), y_f->value.dim(3)});
  ag::Tensor m = scope == HmScope::global
                     ? ag::Tensor::full({1, img.dim(1), img.dim(2)}, 1.0)
                     : mask;
  HistogramMapResult hm = histogram_map(img, x_t, m);
  if (hm.empty_mask) return ag::constant(ag::Tensor::scalar(0.0));
  ag::Tensor target = hm.image.reshaped(y_f->value.shape());
  return ag::mse(y_f, ag::constant(target));
}

Var total_loss(const Var& adv, const Var& id, const Var& lmk, const Var& rec,
               const Var& st, const LossWeights& w) {
  auto check = [](const Var& v, const char* name) {
    require(v && v->value.size() == 1, ErrorCode::invalid_argument,
            std::string("total_loss: ") + name + " must be a scalar");
    require(!std::isnan(v->value[0]), ErrorCode::poisoned_loss,
            std::string("total_loss: component '") + name + "' is NaN");
  };
  check(adv, "adv");
  check(id, "id");
  check(lmk, "lmk");
  check(rec, "rec");
  check(st, "st");
  Var out = ag::scale(adv, w.adv);
  out = ag::add(out, ag::scale(id, w.id));
  out = ag::add(out, ag::scale(lmk, w.lmk));
  out = ag::add(out, ag::scale(rec, w.rec));
  out = ag::add(out, ag::scale(st, w.st));
  return out;
}

}  // namespace faceswap::losses
