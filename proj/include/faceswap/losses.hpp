#pragma once

#include <functional>
#include <string>
#include <vector>

#include "faceswap/tensor.hpp"

namespace faceswap::losses {

// Every ||.||_2 term is realized as the mean of squared elementwise
// differences so magnitudes stay resolution-independent.

inline constexpr double kEpsLog = 1e-8;

struct LossWeights {
  double adv = 1.0;
  double id = 2.0;
  double lmk = 0.1;
  double rec = 2.0;
  double st = 0.2;
};

struct LossBundle {
  double adv = 0.0, id = 0.0, lmk = 0.0, rec = 0.0, st = 0.0;
  double total = 0.0;
};

using ImageFn = std::function<ag::Var(const ag::Var&)>;

// mean of -log(max(score, eps)); scores are probabilities from the
// discriminator. The clamp guards the log argument only, so a perfect score
// of 1 contributes exactly 0.
ag::Var adversarial_generator_loss(const ag::Var& scores);

// mean -log(max(1-fake, eps)) + mean -log(max(real, eps))
ag::Var discriminator_loss(const ag::Var& fake_scores, const ag::Var& real_scores);

// 1 - cos(embed(y_f), embed(x_s)), mean over the batch; embeddings are
// re-normalized defensively, a zero embedding is an error.
ag::Var identity_loss(const ag::Var& y_f, const ag::Var& x_s, const ImageFn& embed);

// MSE(est(y_s), est(x_t)) + MSE(est(y_f), est(x_t))
ag::Var landmark_alignment_loss(const ag::Var& y_s, const ag::Var& y_f,
                                const ag::Var& x_t, const ImageFn& estimate);

// 0 unless same_identity; otherwise pixel + alpha*perceptual terms for both
// the side output and the final image.
ag::Var reconstruction_loss(const ag::Var& y_s, const ag::Var& y_f,
                            const ag::Var& x_t, bool same_identity, double alpha,
                            const ImageFn& perceptual);

struct HistogramMapResult {
  ag::Tensor image;
  bool empty_mask = false;
};

// Mapping core: value with rank r among n sorted inputs maps to the linearly
// interpolated quantile r/(n-1) of the sorted reference values; ties share
// the mean of their rank range. Returns outputs in input order.
std::vector<double> quantile_map_values(const std::vector<double>& values,
                                        const std::vector<double>& reference);

// Monotone quantile remapping of y's masked pixels onto ref's masked
// distribution, per RGB channel; pixels outside the mask are copied
// unchanged. The result is a constant guidance target (no gradient).
HistogramMapResult histogram_map(const ag::Tensor& y, const ag::Tensor& ref,
                                 const ag::Tensor& mask);

enum class HmScope { mask, global };

// MSE(y_f, hm(y_f, x_t)); the guidance image is detached, so gradient flows
// only through y_f.
ag::Var style_transfer_loss(const ag::Var& y_f, const ag::Tensor& x_t,
                            const ag::Tensor& mask, HmScope scope = HmScope::mask);

// lambda-weighted combination; a NaN component aborts naming the component.
ag::Var total_loss(const ag::Var& adv, const ag::Var& id, const ag::Var& lmk,
                   const ag::Var& rec, const ag::Var& st, const LossWeights& w);

}  // namespace faceswap::losses
