#pragma once

#include <cstdint>
#include <string>

#include "faceswap/tensor.hpp"

namespace faceswap::img {

// Images are [3,H,W] tensors with values in [-1,1], channel order RGB.
// Masks are [1,H,W] tensors with values in {0,1}.

// 8-bit conversion at the I/O boundary: (v+1)*127.5 rounded half up, clamped.
uint8_t to_u8(double v);
double from_u8(uint8_t b);

ag::Tensor load_png_rgb(const std::string& path);
void save_png_rgb(const ag::Tensor& image, const std::string& path);

// Grayscale PNG; pixel >= 128 maps to 1, else 0.
ag::Tensor load_png_mask(const std::string& path);
void save_png_mask(const ag::Tensor& mask, const std::string& path);

// PSNR on the [0,1] intensity scale (inputs are [-1,1] images).
double psnr(const ag::Tensor& a, const ag::Tensor& b);

// Axis-aligned box mask for tests; center and half-extents in [0,1] units.
ag::Tensor box_mask(int64_t h, int64_t w, double cx, double cy, double half_w,
                    double half_h);

}  // namespace faceswap::img
