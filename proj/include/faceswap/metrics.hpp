#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

#include "faceswap/tensor.hpp"

namespace faceswap::metrics {

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// Fraction of swapped embeddings whose nearest source (max cosine) is the
// true source; ties count as failures.
double id_retrieval_rate(const std::vector<std::vector<double>>& swapped_embeds,
                         const std::vector<std::vector<double>>& source_embeds,
                         const std::vector<int64_t>& source_labels);

using FeatureFn = std::function<std::vector<double>(const ag::Tensor&)>;

// Mean Euclidean distance between per-pair feature vectors.
double attribute_error(const std::vector<ag::Tensor>& swapped,
                       const std::vector<ag::Tensor>& targets,
                       const FeatureFn& estimate);

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // unbiased (n-1), symmetrized
};

GaussianStats gaussian_stats(const std::vector<std::vector<double>>& features);

// ||mu_A - mu_B||^2 + Tr(S_A + S_B - 2 (S_A S_B)^{1/2}), square root via
// eigendecomposition of S_A^{1/2} S_B S_A^{1/2}.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

double fid(const std::vector<ag::Tensor>& images_a,
           const std::vector<ag::Tensor>& images_b, const FeatureFn& extractor);

}  // namespace faceswap::metrics
