#include "faceswap/metrics.hpp"

#include <cmath>

namespace faceswap::metrics {

namespace {

constexpr double kEigFloor = -1e-8;

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// symmetric PSD square root with the spec's eigenvalue clamping
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
  Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  require(es.info() == Eigen::Success, ErrorCode::numerical,
          std::string("eigendecomposition failed in ") + what);
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    require(ev[i] >= kEigFloor, ErrorCode::numerical,
            std::string(what) + ": matrix is not PSD within tolerance (eigenvalue " +
                std::to_string(ev[i]) + ")");
    if (ev[i] < 0.0) ev[i] = 0.0;
    ev[i] = std::sqrt(ev[i]);
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size() && !a.empty(), ErrorCode::invalid_argument,
          "cosine_similarity: length mismatch or empty vectors");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  require(na > 0.0 && nb > 0.0, ErrorCode::degenerate_input,
          "cosine_similarity: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double id_retrieval_rate(const std::vector<std::vector<double>>& swapped_embeds,
                         const std::vector<std::vector<double>>& source_embeds,
                         const std::vector<int64_t>& source_labels) {
  require(!swapped_embeds.empty() && !source_embeds.empty(),
          ErrorCode::invalid_argument, "id_retrieval_rate: empty input");
  require(swapped_embeds.size() == source_labels.size(), ErrorCode::invalid_argument,
          "id_retrieval_rate: one true-source label per swapped embedding required");
  int64_t hits = 0;
  for (size_t q = 0; q < swapped_embeds.size(); ++q) {
    double best = -2.0;
    int64_t best_ix = -1;
    bool tie = false;
    for (size_t g = 0; g < source_embeds.size(); ++g) {
      double c = cosine_similarity(swapped_embeds[q], source_embeds[g]);
      if (c > best) {
        best = c;
        best_ix = static_cast<int64_t>(g);
        tie = false;
      } else if (c == best) {
        tie = true;
      }
    }
    if (!tie && best_ix == source_labels[q]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(swapped_embeds.size());
}

double attribute_error(const std::vector<ag::Tensor>& swapped,
                       const std::vector<ag::Tensor>& targets,
                       const FeatureFn& estimate) {
  require(swapped.size() == targets.size() && !swapped.empty(),
          ErrorCode::invalid_argument,
          "attribute_error: lists must be equal-length and non-empty");
  double sum = 0.0;
  for (size_t i = 0; i < swapped.size(); ++i) {
    std::vector<double> fa = estimate(swapped[i]);
    std::vector<double> fb = estimate(targets[i]);
    require(fa.size() == fb.size(), ErrorCode::contract_violation,
            "attribute_error: estimator output length mismatch");
    double d2 = 0.0;
    for (size_t j = 0; j < fa.size(); ++j) d2 += (fa[j] - fb[j]) * (fa[j] - fb[j]);
    sum += std::sqrt(d2);
  }
  return sum / static_cast<double>(swapped.size());
}

GaussianStats gaussian_stats(const std::vector<std::vector<double>>& features) {
  require(features.size() >= 2, ErrorCode::insufficient_samples,
          "gaussian_stats: need at least 2 samples, got " +
              std::to_string(features.size()));
  Eigen::Index d = static_cast<Eigen::Index>(features[0].size());
  for (const auto& f : features)
    require(static_cast<Eigen::Index>(f.size()) == d, ErrorCode::invalid_argument,
            "gaussian_stats: inconsistent feature lengths");
  Eigen::Index n = static_cast<Eigen::Index>(features.size());
  GaussianStats s;
  s.mean = Eigen::VectorXd::Zero(d);
  for (const auto& f : features) s.mean += to_eigen(f);
  s.mean /= static_cast<double>(n);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& f : features) {
    Eigen::VectorXd c = to_eigen(f) - s.mean;
    cov += c * c.transpose();
  }
  cov /= static_cast<double>(n - 1);
  s.cov = 0.5 * (cov + cov.transpose());
  return s;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  require(a.mean.size() == b.mean.size(), ErrorCode::invalid_argument,
          "frechet_distance: dimension mismatch");
  double d2 = (a.mean - b.mean).squaredNorm();
  Eigen::MatrixXd ra = psd_sqrt(a.cov, "frechet_distance");
  Eigen::MatrixXd inner = ra * b.cov * ra;
  Eigen::MatrixXd sym = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  require(es.info() == Eigen::Success, ErrorCode::numerical,
          "frechet_distance: eigendecomposition failed");
  double tr_sqrt = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    double ev = es.eigenvalues()[i];
    require(ev >= kEigFloor, ErrorCode::numerical,
            "frechet_distance: product matrix not PSD within tolerance");
    if (ev < 0.0) ev = 0.0;
    tr_sqrt += std::sqrt(ev);
  }
  double out = d2 + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
  return out < 0.0 ? 0.0 : out;
}

double fid(const std::vector<ag::Tensor>& images_a,
           const std::vector<ag::Tensor>& images_b, const FeatureFn& extractor) {
  auto extract = [&](const std::vector<ag::Tensor>& images) {
    std::vector<std::vector<double>> out;
    out.reserve(images.size());
    for (const auto& im : images) out.push_back(extractor(im));
    return out;
  };
  return frechet_distance(gaussian_stats(extract(images_a)),
                          gaussian_stats(extract(images_b)));
}

}  // namespace faceswap::metrics
