#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "faceswap/error.hpp"
#include "faceswap/rng.hpp"

namespace faceswap::ag {

using Shape = std::vector<int64_t>;

int64_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major double tensor. Storage is shared between copies; all graph
// operations allocate fresh outputs and never write through their inputs.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int64_t i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t size() const { return size_; }

  const double* data() const { return data_->data(); }
  double* data() { return data_->data(); }
  double operator[](int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }
  double& operator[](int64_t i) { return (*data_)[static_cast<size_t>(i)]; }

  Tensor clone() const;
  Tensor reshaped(Shape s) const;  // shares storage, size must match
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  bool bit_equal(const Tensor& o) const;
  double max_abs_diff(const Tensor& o) const;

  void fill_(double v);
  void quantize_f32_();  // round every entry to the nearest float32

 private:
  Shape shape_;
  int64_t size_ = 0;
  std::shared_ptr<std::vector<double>> data_;
};

Tensor random_normal(Shape shape, Rng& rng, double stddev = 1.0);
Tensor random_uniform(Shape shape, Rng& rng, double lo, double hi);

// ----- reverse-mode autodiff -----

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // lazily allocated
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backprop;

  void ensure_grad();
};

Var constant(Tensor v);
Var make_param(Tensor v);
Var make_op(Tensor value, std::vector<Var> parents,
            std::function<void(Node&)> backprop);

// Backpropagates from a scalar root (size-1 tensor).
void backward(const Var& root);
void zero_grad(const std::vector<Var>& params);

// elementwise, with numpy-style broadcasting
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var neg(const Var& a);
Var scale(const Var& a, double k);
Var add_scalar(const Var& a, double k);
Var exp_op(const Var& a);
Var log_op(const Var& a);
Var sqrt_op(const Var& a);
Var tanh_op(const Var& a);
Var sigmoid_op(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var clamp_min(const Var& a, double lo);
Var clamp(const Var& a, double lo, double hi);
Var square(const Var& a);

Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var sum_axes(const Var& a, std::vector<int64_t> axes, bool keepdim);

Var reshape(const Var& a, Shape s);
Var slice(const Var& a, int64_t axis, int64_t start, int64_t len);
Var concat(const std::vector<Var>& parts, int64_t axis);
Var stopgrad(const Var& a);

Var matmul(const Var& a, const Var& b);  // [M,K] x [K,N]
Var transpose2d(const Var& a);           // [M,N] -> [N,M]

// x:[B,Ci,H,W], w:[Co,Ci,k,k], b:[Co] or null
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// x:[B,Ci,H,W], w:[Ci,Co,k,k]; output [B,Co,(H-1)s-2p+k,...]
Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride,
                     int pad);
Var upsample_nearest2x(const Var& x);
Var avg_pool(const Var& x, int factor);  // exact area mean over blocks
Var softmax_lastdim(const Var& x);

// composites
Var mse(const Var& a, const Var& b);
Var l2_normalize_rows(const Var& x, double eps = 1e-24);  // [B,C]
Var global_avg_pool(const Var& x);                        // [B,C,H,W] -> [B,C]

double scalar_value(const Var& v);

}  // namespace faceswap::ag
