#include "faceswap/perception.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace faceswap::perception {

namespace {

using ag::Var;

struct FrozenConv {
  Var w, b;
  int stride;
  Var operator()(const Var& x) const { return ag::conv2d(x, w, b, stride, 1); }
};

FrozenConv frozen_conv(Rng& rng, int64_t ci, int64_t co, int stride) {
  FrozenConv c;
  double stddev = std::sqrt(2.0 / static_cast<double>(ci * 9));
  c.w = ag::constant(ag::random_normal({co, ci, 3, 3}, rng, stddev));
  c.b = ag::constant(ag::random_normal({co}, rng, 0.1));
  c.stride = stride;
  return c;
}

void check_image_batch(const Var& x, const char* who) {
  require(x && x->value.rank() == 4 && x->value.dim(1) == 3,
          ErrorCode::shape_mismatch,
          std::string(who) + ": expected [B,3,H,W] image batch");
}

}  // namespace

std::function<Var(const Var&)> toy_identity_embedder(const ProviderContext& ctx) {
  Rng rng = Rng(ctx.seed).fork(0x1D);
  auto c1 = std::make_shared<FrozenConv>(frozen_conv(rng, 3, 16, 2));
  auto c2 = std::make_shared<FrozenConv>(frozen_conv(rng, 16, 32, 2));
  auto c3 = std::make_shared<FrozenConv>(frozen_conv(rng, 32, 64, 2));
  // fixed bias keeps the pooled vector away from zero for flat inputs
  auto bias = std::make_shared<ag::Tensor>(ag::random_normal({1, 64}, rng, 0.05));
  return [c1, c2, c3, bias](const Var& x) -> Var {
    check_image_batch(x, "identity embedder");
    Var f = ag::leaky_relu((*c1)(x), 0.2);
    f = ag::leaky_relu((*c2)(f), 0.2);
    f = ag::leaky_relu((*c3)(f), 0.2);
    Var v = ag::add(ag::global_avg_pool(f), ag::constant(*bias));
    return ag::l2_normalize_rows(v);
  };
}

std::function<Var(const Var&)> toy_landmark_estimator(const ProviderContext& ctx) {
  Rng rng = Rng(ctx.seed).fork(0x2E);
  int64_t n = ctx.num_landmarks;
  auto c1 = std::make_shared<FrozenConv>(frozen_conv(rng, 3, 16, 2));
  auto c2 = std::make_shared<FrozenConv>(frozen_conv(rng, 16, 16, 2));
  auto heads = std::make_shared<FrozenConv>(frozen_conv(rng, 16, n, 1));
  return [c1, c2, heads, n](const Var& x) -> Var {
    check_image_batch(x, "landmark estimator");
    int64_t batch = x->value.dim(0);
    Var f = ag::leaky_relu((*c1)(x), 0.2);
    f = ag::leaky_relu((*c2)(f), 0.2);
    Var h = (*heads)(f);  // [B,N,g,g]
    int64_t g = h->value.dim(2);
    Var p = ag::softmax_lastdim(ag::reshape(h, {batch * n, g * g}));
    // expected coordinates over the normalized pixel grid
    ag::Tensor coords({g * g, 2});
    for (int64_t v = 0; v < g; ++v)
      for (int64_t u = 0; u < g; ++u) {
        coords[(v * g + u) * 2 + 0] = static_cast<double>(u) / static_cast<double>(g - 1);
        coords[(v * g + u) * 2 + 1] = static_cast<double>(v) / static_cast<double>(g - 1);
      }
    Var xy = ag::matmul(p, ag::constant(coords));  // [B*N,2]
    return ag::reshape(xy, {batch, 2 * n});
  };
}

std::function<Var(const Var&)> toy_perceptual_extractor(const ProviderContext& ctx) {
  Rng rng = Rng(ctx.seed).fork(0x3F);
  auto c1 = std::make_shared<FrozenConv>(frozen_conv(rng, 3, 8, 2));
  auto c2 = std::make_shared<FrozenConv>(frozen_conv(rng, 8, 16, 2));
  auto c3 = std::make_shared<FrozenConv>(frozen_conv(rng, 16, 16, 2));
  return [c1, c2, c3](const Var& x) -> Var {
    check_image_batch(x, "perceptual extractor");
    int64_t batch = x->value.dim(0);
    Var f1 = ag::leaky_relu((*c1)(x), 0.2);
    Var f2 = ag::leaky_relu((*c2)(f1), 0.2);
    Var f3 = ag::leaky_relu((*c3)(f2), 0.2);
    auto flat = [batch](const Var& v) {
      return ag::reshape(v, {batch, v->value.size() / batch});
    };
    return ag::concat({flat(f1), flat(f2), flat(f3)}, 1);
  };
}

FlowField toy_flow_estimate(const ag::Tensor& a, const ag::Tensor& b) {
  require(a.rank() == 3 && a.dim(0) == 3 && a.same_shape(b),
          ErrorCode::shape_mismatch, "flow estimate: expected matching [3,H,W] images");
  int64_t h = a.dim(1), w = a.dim(2);
  int64_t radius = std::max<int64_t>(1, std::min(h, w) / 8);
  double best_cost = std::numeric_limits<double>::infinity();
  int64_t best_dx = 0, best_dy = 0;
  for (int64_t dy = -radius; dy <= radius; ++dy)
    for (int64_t dx = -radius; dx <= radius; ++dx) {
      int64_t x0 = std::max<int64_t>(0, -dx), x1 = w - std::max<int64_t>(0, dx);
      int64_t y0 = std::max<int64_t>(0, -dy), y1 = h - std::max<int64_t>(0, dy);
      double sum = 0.0;
      int64_t count = 0;
      for (int64_t c = 0; c < 3; ++c) {
        const double* pa = a.data() + c * h * w;
        const double* pb = b.data() + c * h * w;
        for (int64_t y = y0; y < y1; ++y)
          for (int64_t x = x0; x < x1; ++x) {
            sum += std::abs(pa[y * w + x] - pb[(y + dy) * w + x + dx]);
            ++count;
          }
      }
      double cost = sum / static_cast<double>(count);
      bool better = cost < best_cost;
      if (!better && cost == best_cost) {
        int64_t n_new = dx * dx + dy * dy;
        int64_t n_old = best_dx * best_dx + best_dy * best_dy;
        better = n_new < n_old ||
                 (n_new == n_old &&
                  (dx < best_dx || (dx == best_dx && dy < best_dy)));
      }
      if (better) {
        best_cost = cost;
        best_dx = dx;
        best_dy = dy;
      }
    }
  return analytic_translation_flow(
      {static_cast<double>(best_dx), static_cast<double>(best_dy)}, h, w);
}

FlowField analytic_translation_flow(std::array<double, 2> v, int64_t h, int64_t w) {
  require(std::isfinite(v[0]) && std::isfinite(v[1]), ErrorCode::invalid_argument,
          "analytic flow: displacement must be finite");
  FlowField f{ag::Tensor({2, h, w})};
  for (int64_t i = 0; i < h * w; ++i) {
    f.field[i] = v[0];
    f.field[h * w + i] = v[1];
  }
  return f;
}

namespace {

struct Quadrant {
  int64_t y0, y1, x0, x1;
};

std::array<Quadrant, 4> quadrants(int64_t h, int64_t w) {
  int64_t hy = h / 2, hx = w / 2;
  return {Quadrant{0, hy, 0, hx}, Quadrant{0, hy, hx, w},
          Quadrant{hy, h, 0, hx}, Quadrant{hy, h, hx, w}};
}

}  // namespace

std::vector<double> toy_pose_features(const ag::Tensor& image) {
  require(image.rank() == 3 && image.dim(0) == 3, ErrorCode::shape_mismatch,
          "pose features: expected [3,H,W]");
  int64_t h = image.dim(1), w = image.dim(2);
  std::vector<double> out;
  for (const auto& q : quadrants(h, w)) {
    double s = 0.0;
    int64_t count = 0;
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t y = q.y0; y < q.y1; ++y)
        for (int64_t x = q.x0; x < q.x1; ++x) {
          s += image[(c * h + y) * w + x];
          ++count;
        }
    out.push_back(s / static_cast<double>(count));
  }
  return out;
}

std::vector<double> toy_expression_features(const ag::Tensor& image) {
  require(image.rank() == 3 && image.dim(0) == 3, ErrorCode::shape_mismatch,
          "expression features: expected [3,H,W]");
  int64_t h = image.dim(1), w = image.dim(2);
  std::vector<double> out;
  for (const auto& q : quadrants(h, w)) {
    double sx = 0.0, sy = 0.0;
    int64_t nx = 0, ny = 0;
    for (int64_t c = 0; c < 3; ++c) {
      const double* p = image.data() + c * h * w;
      for (int64_t y = q.y0; y < q.y1; ++y)
        for (int64_t x = q.x0; x < q.x1 - 1; ++x) {
          sx += std::abs(p[y * w + x + 1] - p[y * w + x]);
          ++nx;
        }
      for (int64_t y = q.y0; y < q.y1 - 1; ++y)
        for (int64_t x = q.x0; x < q.x1; ++x) {
          sy += std::abs(p[(y + 1) * w + x] - p[y * w + x]);
          ++ny;
        }
    }
    out.push_back(nx ? sx / static_cast<double>(nx) : 0.0);
    out.push_back(ny ? sy / static_cast<double>(ny) : 0.0);
  }
  return out;
}

ProviderRegistry& ProviderRegistry::instance() {
  static ProviderRegistry reg;
  return reg;
}

ProviderRegistry::ProviderRegistry() {
  register_provider(Slot::identity, "toy", [](ProviderSet& set, const ProviderContext& ctx) {
    set.identity_embed = toy_identity_embedder(ctx);
  });
  register_provider(Slot::landmark, "toy", [](ProviderSet& set, const ProviderContext& ctx) {
    set.landmark_estimate = toy_landmark_estimator(ctx);
  });
  register_provider(Slot::perceptual, "toy", [](ProviderSet& set, const ProviderContext& ctx) {
    set.perceptual = toy_perceptual_extractor(ctx);
  });
  register_provider(Slot::flow, "toy", [](ProviderSet& set, const ProviderContext&) {
    set.flow = [](const ag::Tensor& a, const ag::Tensor& b) {
      return toy_flow_estimate(a, b);
    };
  });
  register_provider(Slot::pose, "toy", [](ProviderSet& set, const ProviderContext&) {
    set.pose = toy_pose_features;
  });
  register_provider(Slot::expression, "toy", [](ProviderSet& set, const ProviderContext&) {
    set.expression = toy_expression_features;
  });
}

void ProviderRegistry::register_provider(Slot slot, const std::string& key,
                                         Installer fn) {
  installers_[slot][key] = std::move(fn);
}

ProviderSet ProviderRegistry::resolve(const ProviderKeys& keys,
                                      const ProviderContext& ctx) const {
  ProviderSet set;
  auto install = [&](Slot slot, const std::string& key, const char* what) {
    auto slot_it = installers_.find(slot);
    require(slot_it != installers_.end(), ErrorCode::invalid_config,
            std::string("no providers registered for ") + what);
    auto it = slot_it->second.find(key);
    require(it != slot_it->second.end(), ErrorCode::invalid_config,
            "unknown " + std::string(what) + " provider '" + key + "'");
    it->second(set, ctx);
  };
  install(Slot::identity, keys.identity, "identity");
  install(Slot::landmark, keys.landmark, "landmark");
  install(Slot::perceptual, keys.perceptual, "perceptual");
  install(Slot::flow, keys.flow, "flow");
  install(Slot::pose, keys.pose, "pose");
  install(Slot::expression, keys.expression, "expression");
  return set;
}

}  // namespace faceswap::perception
