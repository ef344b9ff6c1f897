#include "faceswap/latent.hpp"

#include <cmath>
#include <cstring>

namespace faceswap::latent {

int64_t structure_split_index(int64_t num_vectors) {
  require(num_vectors >= 2, ErrorCode::invalid_config,
          "structure_split_index: need at least 2 latent vectors, got " +
              std::to_string(num_vectors));
  int64_t k = std::llround(7.0 * static_cast<double>(num_vectors) / 18.0);
  if (k < 1) k = 1;
  if (k > num_vectors - 1) k = num_vectors - 1;
  return k;
}

void validate(const LatentCode& w) {
  require(w.vectors.defined() && w.vectors.rank() == 2, ErrorCode::shape_mismatch,
          "LatentCode: vectors must be [L,D]");
  int64_t L = w.vectors.dim(0);
  require(L >= 2 && w.vectors.dim(1) >= 1, ErrorCode::invalid_argument,
          "LatentCode: L >= 2 and D >= 1 required");
  require(w.split_index >= 1 && w.split_index <= L - 1, ErrorCode::invalid_argument,
          "LatentCode: split_index " + std::to_string(w.split_index) +
              " outside [1," + std::to_string(L - 1) + "]");
  require(w.vectors.all_finite(), ErrorCode::invalid_argument,
          "LatentCode: non-finite entries");
}

std::pair<StructureCode, AppearanceCode> split_code(const LatentCode& w) {
  validate(w);
  int64_t L = w.vectors.dim(0), D = w.vectors.dim(1), K = w.split_index;
  StructureCode g{ag::Tensor({K, D})};
  AppearanceCode h{ag::Tensor({L - K, D})};
  std::memcpy(g.vectors.data(), w.vectors.data(),
              static_cast<size_t>(K * D) * sizeof(double));
  std::memcpy(h.vectors.data(), w.vectors.data() + K * D,
              static_cast<size_t>((L - K) * D) * sizeof(double));
  return {std::move(g), std::move(h)};
}

LatentCode merge_code(const StructureCode& g, const AppearanceCode& h) {
  require(g.vectors.rank() == 2 && h.vectors.rank() == 2, ErrorCode::shape_mismatch,
          "merge_code: expects 2-d codes");
  require(g.vectors.dim(1) == h.vectors.dim(1), ErrorCode::shape_mismatch,
          "merge_code: width mismatch, " + std::to_string(g.vectors.dim(1)) +
              " vs " + std::to_string(h.vectors.dim(1)));
  int64_t K = g.vectors.dim(0), A = h.vectors.dim(0), D = g.vectors.dim(1);
  LatentCode w{ag::Tensor({K + A, D}), K};
  std::memcpy(w.vectors.data(), g.vectors.data(),
              static_cast<size_t>(K * D) * sizeof(double));
  std::memcpy(w.vectors.data() + K * D, h.vectors.data(),
              static_cast<size_t>(A * D) * sizeof(double));
  return w;
}

StructureCode apply_transfer_direction(const StructureCode& g_s,
                                       const TransferDirection& n) {
  require(g_s.vectors.same_shape(n.vectors), ErrorCode::shape_mismatch,
          "apply_transfer_direction: " + ag::shape_str(g_s.vectors.shape()) +
              " vs " + ag::shape_str(n.vectors.shape()));
  StructureCode out{ag::Tensor(g_s.vectors.shape())};
  for (int64_t i = 0; i < out.vectors.size(); ++i)
    out.vectors[i] = g_s.vectors[i] + n.vectors[i];
  return out;
}

LatentCode compose_swap_code(const StructureCode& g_hat,
                             const AppearanceCode& h_t) {
  return merge_code(g_hat, h_t);
}

}  // namespace faceswap::latent
