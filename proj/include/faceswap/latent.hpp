#pragma once

#include <cstdint>
#include <utility>

#include "faceswap/tensor.hpp"

namespace faceswap::latent {

// Extended latent space: an ordered stack of L width-D vectors with a
// structure/appearance split at row K. All types are immutable values; every
// operation returns fresh tensors and never touches its inputs.

struct LatentCode {
  ag::Tensor vectors;   // [L,D]
  int64_t split_index;  // K, 1 <= K <= L-1
};

struct StructureCode {
  ag::Tensor vectors;  // [K,D]
};

struct AppearanceCode {
  ag::Tensor vectors;  // [L-K,D]
};

struct TransferDirection {
  ag::Tensor vectors;  // [K,D]
};

// K = round(7*L/18), half away from zero, clamped to [1, L-1]. Generalizes
// the full-scale choice of 7 structure rows out of 18.
int64_t structure_split_index(int64_t num_vectors);

void validate(const LatentCode& w);

std::pair<StructureCode, AppearanceCode> split_code(const LatentCode& w);
LatentCode merge_code(const StructureCode& g, const AppearanceCode& h);
StructureCode apply_transfer_direction(const StructureCode& g_s,
                                       const TransferDirection& n);
LatentCode compose_swap_code(const StructureCode& g_hat,
                             const AppearanceCode& h_t);

}  // namespace faceswap::latent
