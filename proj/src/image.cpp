#include "faceswap/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <vector>

namespace faceswap::img {

uint8_t to_u8(double v) {
  double x = std::floor((v + 1.0) * 127.5 + 0.5);
  if (x < 0.0) x = 0.0;
  if (x > 255.0) x = 255.0;
  return static_cast<uint8_t>(x);
}

double from_u8(uint8_t b) { return static_cast<double>(b) / 127.5 - 1.0; }

namespace {

std::vector<uint8_t> read_png(const std::string& path, int want_channels,
                              int64_t* w_out, int64_t* h_out) {
  png_image im;
  std::memset(&im, 0, sizeof(im));
  im.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&im, path.c_str()))
    fail(ErrorCode::io_error, "cannot read PNG '" + path + "': " + im.message);
  im.format = want_channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<uint8_t> buf(PNG_IMAGE_SIZE(im));
  if (!png_image_finish_read(&im, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&im);
    fail(ErrorCode::io_error, "cannot decode PNG '" + path + "': " + im.message);
  }
  *w_out = im.width;
  *h_out = im.height;
  return buf;
}

void write_png(const std::string& path, const uint8_t* data, int64_t w,
               int64_t h, int channels) {
  png_image im;
  std::memset(&im, 0, sizeof(im));
  im.version = PNG_IMAGE_VERSION;
  im.width = static_cast<png_uint_32>(w);
  im.height = static_cast<png_uint_32>(h);
  im.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&im, path.c_str(), 0, data, 0, nullptr))
    fail(ErrorCode::io_error, "cannot write PNG '" + path + "': " + im.message);
}

}  // namespace

ag::Tensor load_png_rgb(const std::string& path) {
  int64_t w = 0, h = 0;
  std::vector<uint8_t> buf = read_png(path, 3, &w, &h);
  ag::Tensor t({3, h, w});
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t c = 0; c < 3; ++c)
        t[(c * h + y) * w + x] = from_u8(buf[(y * w + x) * 3 + c]);
  return t;
}

void save_png_rgb(const ag::Tensor& image, const std::string& path) {
  require(image.rank() == 3 && image.dim(0) == 3, ErrorCode::shape_mismatch,
          "save_png_rgb expects [3,H,W], got " + ag::shape_str(image.shape()));
  int64_t h = image.dim(1), w = image.dim(2);
  std::vector<uint8_t> buf(static_cast<size_t>(3 * h * w));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t c = 0; c < 3; ++c)
        buf[(y * w + x) * 3 + c] = to_u8(image[(c * h + y) * w + x]);
  write_png(path, buf.data(), w, h, 3);
}

ag::Tensor load_png_mask(const std::string& path) {
  int64_t w = 0, h = 0;
  std::vector<uint8_t> buf = read_png(path, 1, &w, &h);
  ag::Tensor t({1, h, w});
  for (int64_t i = 0; i < h * w; ++i) t[i] = buf[i] >= 128 ? 1.0 : 0.0;
  return t;
}

void save_png_mask(const ag::Tensor& mask, const std::string& path) {
  require(mask.rank() == 3 && mask.dim(0) == 1, ErrorCode::shape_mismatch,
          "save_png_mask expects [1,H,W], got " + ag::shape_str(mask.shape()));
  int64_t h = mask.dim(1), w = mask.dim(2);
  std::vector<uint8_t> buf(static_cast<size_t>(h * w));
  for (int64_t i = 0; i < h * w; ++i) buf[i] = mask[i] >= 0.5 ? 255 : 0;
  write_png(path, buf.data(), w, h, 1);
}

double psnr(const ag::Tensor& a, const ag::Tensor& b) {
  require(a.same_shape(b), ErrorCode::shape_mismatch, "psnr: shape mismatch");
  double mse = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) {
    double d = (a[i] - b[i]) * 0.5;  // [-1,1] -> [0,1] scale
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

ag::Tensor box_mask(int64_t h, int64_t w, double cx, double cy, double half_w,
                    double half_h) {
  ag::Tensor m({1, h, w});
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double u = (static_cast<double>(x) + 0.5) / static_cast<double>(w);
      double v = (static_cast<double>(y) + 0.5) / static_cast<double>(h);
      m[y * w + x] =
          (std::abs(u - cx) <= half_w && std::abs(v - cy) <= half_h) ? 1.0 : 0.0;
    }
  return m;
}

}  // namespace faceswap::img
