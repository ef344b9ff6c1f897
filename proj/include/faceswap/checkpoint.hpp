#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "faceswap/tensor.hpp"

namespace faceswap::ckpt {

inline constexpr int kFormatVersion = 1;

// Container layout: u64 manifest length, manifest JSON text, then per tensor
// a length-prefixed name, dims, and a row-major little-endian float32 blob.
struct NamedTensor {
  std::string name;
  ag::Tensor tensor;
};

struct Container {
  nlohmann::json manifest;
  std::vector<NamedTensor> tensors;
};

void write_container(const std::string& path, const nlohmann::json& manifest,
                     const std::vector<NamedTensor>& tensors);
Container read_container(const std::string& path);

}  // namespace faceswap::ckpt
