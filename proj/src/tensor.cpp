#include "faceswap/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

namespace faceswap::ag {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                        Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>;

void check_finite_shape(const Shape& s) {
  for (int64_t d : s)
    require(d > 0, ErrorCode::shape_mismatch,
            "tensor dimensions must be positive, got " + shape_str(s));
}

}  // namespace

int64_t shape_size(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  check_finite_shape(shape_);
  size_ = shape_size(shape_);
  data_ = std::make_shared<std::vector<double>>(static_cast<size_t>(size_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  check_finite_shape(shape_);
  size_ = shape_size(shape_);
  require(size_ == static_cast<int64_t>(values.size()), ErrorCode::shape_mismatch,
          "tensor init: " + shape_str(shape_) + " needs " + std::to_string(size_) +
              " values, got " + std::to_string(values.size()));
  data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::full(Shape shape, double v) {
  Tensor t(std::move(shape));
  t.fill_(v);
  return t;
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  t.size_ = size_;
  t.data_ = std::make_shared<std::vector<double>>(*data_);
  return t;
}

Tensor Tensor::reshaped(Shape s) const {
  require(shape_size(s) == size_, ErrorCode::shape_mismatch,
          "reshape " + shape_str(shape_) + " -> " + shape_str(s));
  Tensor t;
  t.shape_ = std::move(s);
  t.size_ = size_;
  t.data_ = data_;
  return t;
}

bool Tensor::all_finite() const {
  for (double v : *data_)
    if (!std::isfinite(v)) return false;
  return true;
}

bool Tensor::bit_equal(const Tensor& o) const {
  if (shape_ != o.shape_) return false;
  return std::memcmp(data_->data(), o.data_->data(),
                     static_cast<size_t>(size_) * sizeof(double)) == 0;
}

double Tensor::max_abs_diff(const Tensor& o) const {
  require(same_shape(o), ErrorCode::shape_mismatch, "max_abs_diff shape mismatch");
  double m = 0.0;
  for (int64_t i = 0; i < size_; ++i)
    m = std::max(m, std::abs((*data_)[i] - (*o.data_)[i]));
  return m;
}

void Tensor::fill_(double v) { std::fill(data_->begin(), data_->end(), v); }

void Tensor::quantize_f32_() {
  for (double& v : *data_) v = static_cast<double>(static_cast<float>(v));
}

Tensor random_normal(Shape shape, Rng& rng, double stddev) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * stddev;
  return t;
}

Tensor random_uniform(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// ----- graph plumbing -----

void Node::ensure_grad() {
  if (!grad.defined()) grad = Tensor::zeros(value.shape());
}

Var constant(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = false;
  return n;
}

Var make_param(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  return n;
}

Var make_op(Tensor value, std::vector<Var> parents,
            std::function<void(Node&)> backprop) {
  bool needs = false;
  for (const auto& p : parents)
    if (p && p->requires_grad) needs = true;
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = needs;
  if (needs) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

void backward(const Var& root) {
  require(root && root->value.size() == 1, ErrorCode::invalid_argument,
          "backward: root must be a scalar");
  // iterative post-order over parents
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  struct Frame {
    Node* n;
    size_t next;
  };
  std::vector<Frame> stack;
  if (root->requires_grad) stack.push_back({root.get(), 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      Node* p = f.n->parents[f.next++].get();
      if (p && p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    n->ensure_grad();
    if (n->backprop) n->backprop(*n);
  }
}

void zero_grad(const std::vector<Var>& params) {
  for (const auto& p : params)
    if (p && p->grad.defined()) p->grad.fill_(0.0);
}

// ----- broadcasting -----

namespace {

Shape broadcast_shape(const Shape& a, const Shape& b) {
  size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (size_t i = 0; i < r; ++i) {
    int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    require(da == db || da == 1 || db == 1, ErrorCode::shape_mismatch,
            "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `in` aligned to an output of shape `out`; broadcast dims get 0.
std::vector<int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<int64_t> strides(out.size(), 0);
  int64_t s = 1;
  for (size_t i = 0; i < in.size(); ++i) {
    size_t ii = in.size() - 1 - i;
    size_t oi = out.size() - 1 - i;
    strides[oi] = (in[ii] == 1 && out[oi] != 1) ? 0 : s;
    s *= in[ii];
  }
  return strides;
}

// Applies fn(out_flat, a_flat, b_flat) over the broadcast iteration space.
template <typename Fn>
void broadcast_iterate(const Shape& out, const Shape& sa, const Shape& sb, Fn fn) {
  int64_t n = shape_size(out);
  auto stra = broadcast_strides(sa, out);
  auto strb = broadcast_strides(sb, out);
  size_t r = out.size();
  std::vector<int64_t> idx(r, 0);
  int64_t ia = 0, ib = 0;
  for (int64_t o = 0; o < n; ++o) {
    fn(o, ia, ib);
    for (size_t d = r; d-- > 0;) {
      if (++idx[d] < out[d]) {
        ia += stra[d];
        ib += strb[d];
        break;
      }
      idx[d] = 0;
      ia -= stra[d] * (out[d] - 1);
      ib -= strb[d] * (out[d] - 1);
    }
  }
}

bool same_dims(const Shape& a, const Shape& b) { return a == b; }

enum class BinOp { Add, Sub, Mul, Div };

Var binary(const Var& a, const Var& b, BinOp op) {
  const Tensor& va = a->value;
  const Tensor& vb = b->value;
  Tensor out;
  if (same_dims(va.shape(), vb.shape())) {
    out = Tensor::zeros(va.shape());
    const double* pa = va.data();
    const double* pb = vb.data();
    double* po = out.data();
    int64_t n = out.size();
    switch (op) {
      case BinOp::Add: for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i]; break;
      case BinOp::Sub: for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i]; break;
      case BinOp::Mul: for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i]; break;
      case BinOp::Div: for (int64_t i = 0; i < n; ++i) po[i] = pa[i] / pb[i]; break;
    }
  } else {
    Shape os = broadcast_shape(va.shape(), vb.shape());
    out = Tensor::zeros(os);
    const double* pa = va.data();
    const double* pb = vb.data();
    double* po = out.data();
    switch (op) {
      case BinOp::Add:
        broadcast_iterate(os, va.shape(), vb.shape(),
                          [&](int64_t o, int64_t i, int64_t j) { po[o] = pa[i] + pb[j]; });
        break;
      case BinOp::Sub:
        broadcast_iterate(os, va.shape(), vb.shape(),
                          [&](int64_t o, int64_t i, int64_t j) { po[o] = pa[i] - pb[j]; });
        break;
      case BinOp::Mul:
        broadcast_iterate(os, va.shape(), vb.shape(),
                          [&](int64_t o, int64_t i, int64_t j) { po[o] = pa[i] * pb[j]; });
        break;
      case BinOp::Div:
        broadcast_iterate(os, va.shape(), vb.shape(),
                          [&](int64_t o, int64_t i, int64_t j) { po[o] = pa[i] / pb[j]; });
        break;
    }
  }
  return make_op(out, {a, b}, [op](Node& n) {
    Var pa = n.parents[0];
    Var pb = n.parents[1];
    const Tensor& g = n.grad;
    const Shape& os = n.value.shape();
    if (pa->requires_grad) {
      pa->ensure_grad();
      double* dst = pa->grad.data();
      const double* gs = g.data();
      const double* vbp = pb->value.data();
      switch (op) {
        case BinOp::Add:
        case BinOp::Sub:
          broadcast_iterate(os, pa->value.shape(), pb->value.shape(),
                            [&](int64_t o, int64_t i, int64_t) { dst[i] += gs[o]; });
          break;
        case BinOp::Mul:
          broadcast_iterate(os, pa->value.shape(), pb->value.shape(),
                            [&](int64_t o, int64_t i, int64_t j) { dst[i] += gs[o] * vbp[j]; });
          break;
        case BinOp::Div:
          broadcast_iterate(os, pa->value.shape(), pb->value.shape(),
                            [&](int64_t o, int64_t i, int64_t j) { dst[i] += gs[o] / vbp[j]; });
          break;
      }
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      double* dst = pb->grad.data();
      const double* gs = g.data();
      const double* vap = pa->value.data();
      const double* vbp = pb->value.data();
      switch (op) {
        case BinOp::Add:
          broadcast_iterate(os, pa->value.shape(), pb->value.shape(),
                            [&](int64_t o, int64_t, int64_t j) { dst[j] += gs[o]; });
          break;
        case BinOp::Sub:
          broadcast_iterate(os, pa->value.shape(), pb->value.shape(),
                            [&](int64_t o, int64_t, int64_t j) { dst[j] -= gs[o]; });
          break;
        case BinOp::Mul:
          broadcast_iterate(os, pa->value.shape(), pb->value.shape(),
                            [&](int64_t o, int64_t i, int64_t j) { dst[j] += gs[o] * vap[i]; });
          break;
        case BinOp::Div:
          broadcast_iterate(os, pa->value.shape(), pb->value.shape(),
                            [&](int64_t o, int64_t i, int64_t j) {
                              dst[j] -= gs[o] * vap[i] / (vbp[j] * vbp[j]);
                            });
          break;
      }
    }
  });
}

Var unary(const Var& a, std::function<double(double)> f,
          std::function<double(double /*x*/, double /*y*/)> dfdx) {
  Tensor out = Tensor::zeros(a->value.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = f(a->value[i]);
  Tensor saved = out;  // shares storage with node value
  return make_op(out, {a}, [dfdx, saved](Node& n) {
    Var p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int64_t i = 0; i < n.grad.size(); ++i)
      p->grad[i] += n.grad[i] * dfdx(p->value[i], saved[i]);
  });
}

}  // namespace

Var add(const Var& a, const Var& b) { return binary(a, b, BinOp::Add); }
Var sub(const Var& a, const Var& b) { return binary(a, b, BinOp::Sub); }
Var mul(const Var& a, const Var& b) { return binary(a, b, BinOp::Mul); }
Var div(const Var& a, const Var& b) { return binary(a, b, BinOp::Div); }

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double k) {
  return unary(a, [k](double x) { return k * x; },
               [k](double, double) { return k; });
}

Var add_scalar(const Var& a, double k) {
  return unary(a, [k](double x) { return x + k; },
               [](double, double) { return 1.0; });
}

Var exp_op(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Var log_op(const Var& a) {
  return unary(a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Var sqrt_op(const Var& a) {
  return unary(a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

Var tanh_op(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid_op(const Var& a) {
  return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(a, [slope](double x) { return x >= 0.0 ? x : slope * x; },
               [slope](double x, double) { return x >= 0.0 ? 1.0 : slope; });
}

Var clamp_min(const Var& a, double lo) {
  return unary(a, [lo](double x) { return x < lo ? lo : x; },
               [lo](double x, double) { return x < lo ? 0.0 : 1.0; });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
               [lo, hi](double x, double) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}

Var sum_all(const Var& a) {
  double s = 0.0;
  for (int64_t i = 0; i < a->value.size(); ++i) s += a->value[i];
  return make_op(Tensor::scalar(s), {a}, [](Node& n) {
    Var p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    double g = n.grad[0];
    for (int64_t i = 0; i < p->grad.size(); ++i) p->grad[i] += g;
  });
}

Var mean_all(const Var& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a->value.size()));
}

Var sum_axes(const Var& a, std::vector<int64_t> axes, bool keepdim) {
  const Shape& in = a->value.shape();
  std::vector<bool> reduced(in.size(), false);
  for (int64_t ax : axes) {
    require(ax >= 0 && ax < static_cast<int64_t>(in.size()),
            ErrorCode::invalid_argument, "sum_axes: bad axis");
    reduced[static_cast<size_t>(ax)] = true;
  }
  Shape kept(in.size());
  for (size_t i = 0; i < in.size(); ++i) kept[i] = reduced[i] ? 1 : in[i];
  Tensor out = Tensor::zeros(kept);
  {
    const double* pa = a->value.data();
    double* po = out.data();
    broadcast_iterate(in, kept, in, [&](int64_t, int64_t i, int64_t j) {
      // iteration space == input shape; i indexes the reduced output
      po[i] += pa[j];
    });
  }
  Shape final_shape;
  if (keepdim) {
    final_shape = kept;
  } else {
    for (size_t i = 0; i < in.size(); ++i)
      if (!reduced[i]) final_shape.push_back(in[i]);
    if (final_shape.empty()) final_shape.push_back(1);
    out = out.reshaped(final_shape);
  }
  Shape kept_copy = kept;
  return make_op(out, {a}, [kept_copy](Node& n) {
    Var p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const Shape& in = p->value.shape();
    Tensor g = n.grad.reshaped(kept_copy);
    double* dst = p->grad.data();
    const double* gs = g.data();
    broadcast_iterate(in, kept_copy, in,
                      [&](int64_t, int64_t i, int64_t j) { dst[j] += gs[i]; });
  });
}

Var reshape(const Var& a, Shape s) {
  Tensor out = a->value.clone().reshaped(std::move(s));
  return make_op(out, {a}, [](Node& n) {
    Var p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int64_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
  });
}

namespace {

// flat index helpers for slicing along one axis
struct AxisSpan {
  int64_t outer, mid_in, mid_out, inner, start;
};

AxisSpan axis_span(const Shape& in, int64_t axis, int64_t start, int64_t len) {
  AxisSpan s{1, in[static_cast<size_t>(axis)], len, 1, start};
  for (int64_t i = 0; i < axis; ++i) s.outer *= in[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < in.size(); ++i)
    s.inner *= in[i];
  return s;
}

}  // namespace

Var slice(const Var& a, int64_t axis, int64_t start, int64_t len) {
  const Shape& in = a->value.shape();
  require(axis >= 0 && axis < a->value.rank(), ErrorCode::invalid_argument,
          "slice: bad axis");
  require(start >= 0 && len > 0 && start + len <= in[static_cast<size_t>(axis)],
          ErrorCode::invalid_argument, "slice: out of range");
  Shape os = in;
  os[static_cast<size_t>(axis)] = len;
  Tensor out = Tensor::zeros(os);
  AxisSpan sp = axis_span(in, axis, start, len);
  const double* src = a->value.data();
  double* dst = out.data();
  for (int64_t o = 0; o < sp.outer; ++o)
    for (int64_t m = 0; m < sp.mid_out; ++m)
      std::memcpy(dst + (o * sp.mid_out + m) * sp.inner,
                  src + (o * sp.mid_in + sp.start + m) * sp.inner,
                  static_cast<size_t>(sp.inner) * sizeof(double));
  return make_op(out, {a}, [sp](Node& n) {
    Var p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    double* dst = p->grad.data();
    const double* gs = n.grad.data();
    for (int64_t o = 0; o < sp.outer; ++o)
      for (int64_t m = 0; m < sp.mid_out; ++m) {
        double* d = dst + (o * sp.mid_in + sp.start + m) * sp.inner;
        const double* g = gs + (o * sp.mid_out + m) * sp.inner;
        for (int64_t i = 0; i < sp.inner; ++i) d[i] += g[i];
      }
  });
}

Var concat(const std::vector<Var>& parts, int64_t axis) {
  require(!parts.empty(), ErrorCode::invalid_argument, "concat: empty input");
  const Shape& s0 = parts[0]->value.shape();
  require(axis >= 0 && axis < static_cast<int64_t>(s0.size()),
          ErrorCode::invalid_argument, "concat: bad axis");
  int64_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p->value.shape();
    require(s.size() == s0.size(), ErrorCode::shape_mismatch, "concat: rank mismatch");
    for (size_t i = 0; i < s.size(); ++i)
      require(static_cast<int64_t>(i) == axis || s[i] == s0[i],
              ErrorCode::shape_mismatch, "concat: dim mismatch");
    total += s[static_cast<size_t>(axis)];
  }
  Shape os = s0;
  os[static_cast<size_t>(axis)] = total;
  Tensor out = Tensor::zeros(os);
  std::vector<int64_t> offs;
  int64_t off = 0;
  for (const auto& p : parts) {
    offs.push_back(off);
    int64_t len = p->value.dim(axis);
    AxisSpan sp = axis_span(os, axis, off, len);
    const double* src = p->value.data();
    double* dst = out.data();
    for (int64_t o = 0; o < sp.outer; ++o)
      for (int64_t m = 0; m < sp.mid_out; ++m)
        std::memcpy(dst + (o * sp.mid_in + off + m) * sp.inner,
                    src + (o * len + m) * sp.inner,
                    static_cast<size_t>(sp.inner) * sizeof(double));
    off += len;
  }
  return make_op(out, parts, [axis, offs, os](Node& n) {
    for (size_t k = 0; k < n.parents.size(); ++k) {
      Var p = n.parents[k];
      if (!p->requires_grad) continue;
      p->ensure_grad();
      int64_t len = p->value.dim(axis);
      AxisSpan sp = axis_span(os, axis, offs[k], len);
      const double* gs = n.grad.data();
      double* dst = p->grad.data();
      for (int64_t o = 0; o < sp.outer; ++o)
        for (int64_t m = 0; m < sp.mid_out; ++m) {
          const double* g = gs + (o * sp.mid_in + offs[k] + m) * sp.inner;
          double* d = dst + (o * len + m) * sp.inner;
          for (int64_t i = 0; i < sp.inner; ++i) d[i] += g[i];
        }
    }
  });
}

Var stopgrad(const Var& a) { return constant(a->value); }

Var matmul(const Var& a, const Var& b) {
  const Tensor& va = a->value;
  const Tensor& vb = b->value;
  require(va.rank() == 2 && vb.rank() == 2 && va.dim(1) == vb.dim(0),
          ErrorCode::shape_mismatch,
          "matmul: " + shape_str(va.shape()) + " x " + shape_str(vb.shape()));
  int64_t M = va.dim(0), K = va.dim(1), N = vb.dim(1);
  Tensor out = Tensor::zeros({M, N});
  {
    ConstMatMap A(va.data(), M, K);
    ConstMatMap B(vb.data(), K, N);
    MatMap C(out.data(), M, N);
    C.noalias() = A * B;
  }
  return make_op(out, {a, b}, [M, K, N](Node& n) {
    Var pa = n.parents[0];
    Var pb = n.parents[1];
    ConstMatMap G(n.grad.data(), M, N);
    if (pa->requires_grad) {
      pa->ensure_grad();
      ConstMatMap B(pb->value.data(), K, N);
      MatMap dA(pa->grad.data(), M, K);
      dA.noalias() += G * B.transpose();
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      ConstMatMap A(pa->value.data(), M, K);
      MatMap dB(pb->grad.data(), K, N);
      dB.noalias() += A.transpose() * G;
    }
  });
}

Var transpose2d(const Var& a) {
  const Tensor& v = a->value;
  require(v.rank() == 2, ErrorCode::shape_mismatch, "transpose2d expects 2-d");
  int64_t M = v.dim(0), N = v.dim(1);
  Tensor out({N, M});
  for (int64_t i = 0; i < M; ++i)
    for (int64_t j = 0; j < N; ++j) out[j * M + i] = v[i * N + j];
  return make_op(out, {a}, [M, N](Node& n) {
    Var p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int64_t i = 0; i < M; ++i)
      for (int64_t j = 0; j < N; ++j) p->grad[i * N + j] += n.grad[j * M + i];
  });
}

// ----- convolution via im2col + GEMM -----

namespace {

struct ConvDims {
  int64_t B, Ci, H, W, Co, k, Ho, Wo;
  int stride, pad;
};

// col: [Ci*k*k, Ho*Wo]
void im2col(const double* x, const ConvDims& d, double* col) {
  for (int64_t c = 0; c < d.Ci; ++c)
    for (int64_t ki = 0; ki < d.k; ++ki)
      for (int64_t kj = 0; kj < d.k; ++kj) {
        double* dst = col + ((c * d.k + ki) * d.k + kj) * d.Ho * d.Wo;
        for (int64_t oy = 0; oy < d.Ho; ++oy) {
          int64_t iy = oy * d.stride - d.pad + ki;
          if (iy < 0 || iy >= d.H) {
            std::fill(dst + oy * d.Wo, dst + (oy + 1) * d.Wo, 0.0);
            continue;
          }
          const double* row = x + (c * d.H + iy) * d.W;
          for (int64_t ox = 0; ox < d.Wo; ++ox) {
            int64_t ix = ox * d.stride - d.pad + kj;
            dst[oy * d.Wo + ox] = (ix < 0 || ix >= d.W) ? 0.0 : row[ix];
          }
        }
      }
}

// adjoint of im2col; accumulates into x
void col2im_acc(const double* col, const ConvDims& d, double* x) {
  for (int64_t c = 0; c < d.Ci; ++c)
    for (int64_t ki = 0; ki < d.k; ++ki)
      for (int64_t kj = 0; kj < d.k; ++kj) {
        const double* src = col + ((c * d.k + ki) * d.k + kj) * d.Ho * d.Wo;
        for (int64_t oy = 0; oy < d.Ho; ++oy) {
          int64_t iy = oy * d.stride - d.pad + ki;
          if (iy < 0 || iy >= d.H) continue;
          double* row = x + (c * d.H + iy) * d.W;
          for (int64_t ox = 0; ox < d.Wo; ++ox) {
            int64_t ix = ox * d.stride - d.pad + kj;
            if (ix >= 0 && ix < d.W) row[ix] += src[oy * d.Wo + ox];
          }
        }
      }
}

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
  require(x.rank() == 4 && w.rank() == 4, ErrorCode::shape_mismatch,
          "conv2d expects 4-d input and weight");
  require(w.dim(2) == w.dim(3), ErrorCode::shape_mismatch, "conv2d: square kernels only");
  ConvDims d{};
  d.B = x.dim(0); d.Ci = x.dim(1); d.H = x.dim(2); d.W = x.dim(3);
  d.Co = w.dim(0); d.k = w.dim(2); d.stride = stride; d.pad = pad;
  require(w.dim(1) == d.Ci, ErrorCode::shape_mismatch,
          "conv2d: weight expects " + std::to_string(w.dim(1)) + " input channels, got " +
              std::to_string(d.Ci));
  d.Ho = (d.H + 2 * pad - d.k) / stride + 1;
  d.Wo = (d.W + 2 * pad - d.k) / stride + 1;
  require(d.Ho > 0 && d.Wo > 0, ErrorCode::shape_mismatch, "conv2d: empty output");
  return d;
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  ConvDims d = conv_dims(x->value, w->value, stride, pad);
  if (b) {
    require(b->value.rank() == 1 && b->value.dim(0) == d.Co, ErrorCode::shape_mismatch,
            "conv2d: bias shape");
  }
  Tensor out = Tensor::zeros({d.B, d.Co, d.Ho, d.Wo});
  std::vector<double> col(static_cast<size_t>(d.Ci * d.k * d.k * d.Ho * d.Wo));
  for (int64_t bi = 0; bi < d.B; ++bi) {
    im2col(x->value.data() + bi * d.Ci * d.H * d.W, d, col.data());
    ConstMatMap W(w->value.data(), d.Co, d.Ci * d.k * d.k);
    ConstMatMap C(col.data(), d.Ci * d.k * d.k, d.Ho * d.Wo);
    MatMap O(out.data() + bi * d.Co * d.Ho * d.Wo, d.Co, d.Ho * d.Wo);
    O.noalias() = W * C;
  }
  if (b) {
    for (int64_t bi = 0; bi < d.B; ++bi)
      for (int64_t c = 0; c < d.Co; ++c) {
        double bv = b->value[c];
        double* p = out.data() + (bi * d.Co + c) * d.Ho * d.Wo;
        for (int64_t i = 0; i < d.Ho * d.Wo; ++i) p[i] += bv;
      }
  }
  std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
  return make_op(out, parents, [d](Node& n) {
    Var px = n.parents[0];
    Var pw = n.parents[1];
    Var pb = n.parents.size() > 2 ? n.parents[2] : nullptr;
    int64_t ckk = d.Ci * d.k * d.k;
    std::vector<double> col;
    if (px->requires_grad || pw->requires_grad)
      col.resize(static_cast<size_t>(ckk * d.Ho * d.Wo));
    if (px->requires_grad) px->ensure_grad();
    if (pw->requires_grad) pw->ensure_grad();
    for (int64_t bi = 0; bi < d.B; ++bi) {
      ConstMatMap G(n.grad.data() + bi * d.Co * d.Ho * d.Wo, d.Co, d.Ho * d.Wo);
      if (pw->requires_grad) {
        im2col(px->value.data() + bi * d.Ci * d.H * d.W, d, col.data());
        ConstMatMap C(col.data(), ckk, d.Ho * d.Wo);
        MatMap dW(pw->grad.data(), d.Co, ckk);
        dW.noalias() += G * C.transpose();
      }
      if (px->requires_grad) {
        ConstMatMap W(pw->value.data(), d.Co, ckk);
        MatMap dC(col.data(), ckk, d.Ho * d.Wo);
        dC.noalias() = W.transpose() * G;
        col2im_acc(col.data(), d, px->grad.data() + bi * d.Ci * d.H * d.W);
      }
    }
    if (pb && pb->requires_grad) {
      pb->ensure_grad();
      for (int64_t bi = 0; bi < d.B; ++bi)
        for (int64_t c = 0; c < d.Co; ++c) {
          const double* g = n.grad.data() + (bi * d.Co + c) * d.Ho * d.Wo;
          double s = 0.0;
          for (int64_t i = 0; i < d.Ho * d.Wo; ++i) s += g[i];
          pb->grad[c] += s;
        }
    }
  });
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  const Tensor& vx = x->value;
  const Tensor& vw = w->value;
  require(vx.rank() == 4 && vw.rank() == 4 && vw.dim(2) == vw.dim(3),
          ErrorCode::shape_mismatch, "conv_transpose2d: bad shapes");
  require(vw.dim(0) == vx.dim(1), ErrorCode::shape_mismatch,
          "conv_transpose2d: weight/input channel mismatch");
  // Output spatial size solves the conv relation in reverse.
  ConvDims d{};
  d.B = vx.dim(0); d.Ci = vx.dim(1); d.Co = vw.dim(1); d.k = vw.dim(2);
  d.stride = stride; d.pad = pad;
  d.Ho = vx.dim(2); d.Wo = vx.dim(3);
  d.H = (d.Ho - 1) * stride - 2 * pad + d.k;
  d.W = (d.Wo - 1) * stride - 2 * pad + d.k;
  require(d.H > 0 && d.W > 0, ErrorCode::shape_mismatch, "conv_transpose2d: empty output");
  if (b)
    require(b->value.rank() == 1 && b->value.dim(0) == d.Co, ErrorCode::shape_mismatch,
            "conv_transpose2d: bias shape");
  // Reuse conv geometry with roles swapped: "input" of the adjoint conv is the
  // output here (C=Co, HxW), its im2col grid enumerates x positions (Ho,Wo).
  ConvDims g = d;
  g.Ci = d.Co;  // channels that participate in col2im
  int64_t ckk = d.Co * d.k * d.k;
  Tensor out = Tensor::zeros({d.B, d.Co, d.H, d.W});
  std::vector<double> col(static_cast<size_t>(ckk * d.Ho * d.Wo));
  for (int64_t bi = 0; bi < d.B; ++bi) {
    ConstMatMap W(vw.data(), d.Ci, ckk);
    ConstMatMap X(vx.data() + bi * d.Ci * d.Ho * d.Wo, d.Ci, d.Ho * d.Wo);
    MatMap C(col.data(), ckk, d.Ho * d.Wo);
    C.noalias() = W.transpose() * X;
    col2im_acc(col.data(), g, out.data() + bi * d.Co * d.H * d.W);
  }
  if (b) {
    for (int64_t bi = 0; bi < d.B; ++bi)
      for (int64_t c = 0; c < d.Co; ++c) {
        double bv = b->value[c];
        double* p = out.data() + (bi * d.Co + c) * d.H * d.W;
        for (int64_t i = 0; i < d.H * d.W; ++i) p[i] += bv;
      }
  }
  std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
  return make_op(out, parents, [d, g, ckk](Node& n) {
    Var px = n.parents[0];
    Var pw = n.parents[1];
    Var pb = n.parents.size() > 2 ? n.parents[2] : nullptr;
    std::vector<double> col(static_cast<size_t>(ckk * d.Ho * d.Wo));
    if (px->requires_grad) px->ensure_grad();
    if (pw->requires_grad) pw->ensure_grad();
    for (int64_t bi = 0; bi < d.B; ++bi) {
      // columns of the upstream gradient at each x position
      im2col(n.grad.data() + bi * d.Co * d.H * d.W, g, col.data());
      ConstMatMap C(col.data(), ckk, d.Ho * d.Wo);
      if (px->requires_grad) {
        ConstMatMap W(pw->value.data(), d.Ci, ckk);
        MatMap dX(px->grad.data() + bi * d.Ci * d.Ho * d.Wo, d.Ci, d.Ho * d.Wo);
        dX.noalias() += W * C;
      }
      if (pw->requires_grad) {
        ConstMatMap X(px->value.data() + bi * d.Ci * d.Ho * d.Wo, d.Ci, d.Ho * d.Wo);
        MatMap dW(pw->grad.data(), d.Ci, ckk);
        dW.noalias() += X * C.transpose();
      }
    }
    if (pb && pb->requires_grad) {
      pb->ensure_grad();
      for (int64_t bi = 0; bi < d.B; ++bi)
        for (int64_t c = 0; c < d.Co; ++c) {
          const double* gp = n.grad.data() + (bi * d.Co + c) * d.H * d.W;
          double s = 0.0;
          for (int64_t i = 0; i < d.H * d.W; ++i) s += gp[i];
          pb->grad[c] += s;
        }
    }
  });
}

Var upsample_nearest2x(const Var& x) {
  const Tensor& v = x->value;
  require(v.rank() == 4, ErrorCode::shape_mismatch, "upsample expects 4-d");
  int64_t B = v.dim(0), C = v.dim(1), H = v.dim(2), W = v.dim(3);
  Tensor out = Tensor::zeros({B, C, H * 2, W * 2});
  const double* src = v.data();
  double* dst = out.data();
  for (int64_t bc = 0; bc < B * C; ++bc)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t xx = 0; xx < W; ++xx) {
        double s = src[(bc * H + y) * W + xx];
        double* o = dst + (bc * 2 * H + 2 * y) * 2 * W + 2 * xx;
        o[0] = s;
        o[1] = s;
        o[2 * W] = s;
        o[2 * W + 1] = s;
      }
  return make_op(out, {x}, [B, C, H, W](Node& n) {
    Var p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* g = n.grad.data();
    double* d = p->grad.data();
    for (int64_t bc = 0; bc < B * C; ++bc)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t xx = 0; xx < W; ++xx) {
          const double* o = g + (bc * 2 * H + 2 * y) * 2 * W + 2 * xx;
          d[(bc * H + y) * W + xx] += o[0] + o[1] + o[2 * W] + o[2 * W + 1];
        }
  });
}

Var avg_pool(const Var& x, int factor) {
  const Tensor& v = x->value;
  require(v.rank() == 4, ErrorCode::shape_mismatch, "avg_pool expects 4-d");
  require(factor >= 1, ErrorCode::invalid_argument, "avg_pool: factor >= 1");
  int64_t B = v.dim(0), C = v.dim(1), H = v.dim(2), W = v.dim(3);
  require(H % factor == 0 && W % factor == 0, ErrorCode::invalid_argument,
          "avg_pool: factor must divide the spatial size");
  int64_t Ho = H / factor, Wo = W / factor;
  double inv = 1.0 / (static_cast<double>(factor) * factor);
  Tensor out = Tensor::zeros({B, C, Ho, Wo});
  const double* src = v.data();
  double* dst = out.data();
  for (int64_t bc = 0; bc < B * C; ++bc)
    for (int64_t oy = 0; oy < Ho; ++oy)
      for (int64_t ox = 0; ox < Wo; ++ox) {
        double s = 0.0;
        for (int64_t ky = 0; ky < factor; ++ky)
          for (int64_t kx = 0; kx < factor; ++kx)
            s += src[(bc * H + oy * factor + ky) * W + ox * factor + kx];
        dst[(bc * Ho + oy) * Wo + ox] = s * inv;
      }
  return make_op(out, {x}, [B, C, H, W, Ho, Wo, factor, inv](Node& n) {
    Var p = n.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* g = n.grad.data();
    double* d = p->grad.data();
    for (int64_t bc = 0; bc < B * C; ++bc)
      for (int64_t oy = 0; oy < Ho; ++oy)
        for (int64_t ox = 0; ox < Wo; ++ox) {
          double gv = g[(bc * Ho + oy) * Wo + ox] * inv;
          for (int64_t ky = 0; ky < factor; ++ky)
            for (int64_t kx = 0; kx < factor; ++kx)
              d[(bc * H + oy * factor + ky) * W + ox * factor + kx] += gv;
        }
  });
}

Var softmax_lastdim(const Var& x) {
  const Tensor& v = x->value;
  int64_t n = v.dim(v.rank() - 1);
  int64_t rows = v.size() / n;
  Tensor out = Tensor::zeros(v.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const double* src = v.data() + r * n;
    double* dst = out.data() + r * n;
    double mx = src[0];
    for (int64_t i = 1; i < n; ++i) mx = std::max(mx, src[i]);
    double sum = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      dst[i] = std::exp(src[i] - mx);
      sum += dst[i];
    }
    for (int64_t i = 0; i < n; ++i) dst[i] /= sum;
  }
  Tensor saved = out;
  return make_op(out, {x}, [n, rows, saved](Node& nd) {
    Var p = nd.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      const double* y = saved.data() + r * n;
      const double* g = nd.grad.data() + r * n;
      double dot = 0.0;
      for (int64_t i = 0; i < n; ++i) dot += y[i] * g[i];
      double* d = p->grad.data() + r * n;
      for (int64_t i = 0; i < n; ++i) d[i] += y[i] * (g[i] - dot);
    }
  });
}

Var mse(const Var& a, const Var& b) {
  require(a->value.same_shape(b->value), ErrorCode::shape_mismatch,
          "mse: " + shape_str(a->value.shape()) + " vs " + shape_str(b->value.shape()));
  return mean_all(square(sub(a, b)));
}

Var l2_normalize_rows(const Var& x, double eps) {
  require(x->value.rank() == 2, ErrorCode::shape_mismatch, "l2_normalize_rows: 2-d");
  Var norms = sqrt_op(add_scalar(sum_axes(square(x), {1}, true), eps));
  return div(x, norms);
}

Var global_avg_pool(const Var& x) {
  require(x->value.rank() == 4, ErrorCode::shape_mismatch, "global_avg_pool: 4-d");
  int64_t B = x->value.dim(0), C = x->value.dim(1);
  double inv = 1.0 / (static_cast<double>(x->value.dim(2)) * x->value.dim(3));
  return reshape(scale(sum_axes(x, {2, 3}, false), inv), {B, C});
}

double scalar_value(const Var& v) {
  require(v && v->value.size() == 1, ErrorCode::invalid_argument,
          "scalar_value: not a scalar");
  return v->value[0];
}

}  // namespace faceswap::ag
