#include "faceswap/nets.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace faceswap::nets {

namespace {

using ag::Var;

bool is_pow2(int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

int64_t log2i(int64_t v) {
  int64_t n = 0;
  while (v > 1) {
    v >>= 1;
    ++n;
  }
  return n;
}

struct Conv {
  Var w, b;
  int stride = 1, pad = 1;
  Var operator()(const Var& x) const { return ag::conv2d(x, w, b, stride, pad); }
};

Conv make_conv(Rng& rng, int64_t ci, int64_t co, int64_t k, int stride, int pad) {
  Conv c;
  double stddev = std::sqrt(2.0 / static_cast<double>(ci * k * k));
  c.w = ag::make_param(ag::random_normal({co, ci, k, k}, rng, stddev));
  c.b = ag::make_param(ag::Tensor::zeros({co}));
  c.stride = stride;
  c.pad = pad;
  return c;
}

struct ConvT {
  Var w, b;
  int stride = 2, pad = 1;
  Var operator()(const Var& x) const {
    return ag::conv_transpose2d(x, w, b, stride, pad);
  }
};

ConvT make_convt(Rng& rng, int64_t ci, int64_t co, int64_t k) {
  ConvT c;
  double stddev = std::sqrt(2.0 / static_cast<double>(ci * k * k));
  c.w = ag::make_param(ag::random_normal({ci, co, k, k}, rng, stddev));
  c.b = ag::make_param(ag::Tensor::zeros({co}));
  return c;
}

struct Dense {
  Var w, b;
  Var operator()(const Var& x) const { return ag::add(ag::matmul(x, w), b); }
};

Dense make_dense(Rng& rng, int64_t in, int64_t out, double bias_init = 0.0) {
  Dense d;
  d.w = ag::make_param(
      ag::random_normal({in, out}, rng, std::sqrt(1.0 / static_cast<double>(in))));
  d.b = ag::make_param(ag::Tensor::full({out}, bias_init));
  return d;
}

Dense make_zero_dense(int64_t in, int64_t out) {
  Dense d;
  d.w = ag::make_param(ag::Tensor::zeros({in, out}));
  d.b = ag::make_param(ag::Tensor::zeros({out}));
  return d;
}

void push(ParamList& out, const std::string& name, const Var& v) {
  out.push_back({name, v});
}

void push_conv(ParamList& out, const std::string& name, const Conv& c) {
  push(out, name + "/w", c.w);
  push(out, name + "/b", c.b);
}

void push_convt(ParamList& out, const std::string& name, const ConvT& c) {
  push(out, name + "/w", c.w);
  push(out, name + "/b", c.b);
}

void push_dense(ParamList& out, const std::string& name, const Dense& d) {
  push(out, name + "/w", d.w);
  push(out, name + "/b", d.b);
}

void quantize_params(const ParamList& params) {
  for (const auto& e : params) e.var->value.quantize_f32_();
}

void set_trainable_all(const ParamList& params, bool trainable) {
  for (const auto& e : params) e.var->requires_grad = trainable;
}

constexpr double kLrelu = 0.2;

// Backbone shared by the pSp-style encoders: a stride-1 stem followed by
// stride-2 blocks down to 8x8.
struct Backbone {
  Conv stem;
  std::vector<Conv> downs;
  std::vector<int64_t> down_res;  // resolution after each down block

  // returns the activation after each down block, finest first
  std::vector<Var> run(const Var& x) const {
    std::vector<Var> maps;
    Var f = ag::leaky_relu(stem(x), kLrelu);
    for (const auto& d : downs) {
      f = ag::leaky_relu(d(f), kLrelu);
      maps.push_back(f);
    }
    return maps;
  }
};

Backbone make_backbone(Rng& rng, int64_t in_channels, int64_t input_res,
                       const GeneratorConfig& cfg) {
  Backbone b;
  b.stem = make_conv(rng, in_channels, channel_width(std::max<int64_t>(input_res, 8), cfg),
                     3, 1, 1);
  int64_t prev = channel_width(std::max<int64_t>(input_res, 8), cfg);
  for (int64_t res = input_res / 2; res >= 8; res /= 2) {
    int64_t c = channel_width(std::max<int64_t>(res, 8), cfg);
    b.downs.push_back(make_conv(rng, prev, c, 3, 2, 1));
    b.down_res.push_back(res);
    prev = c;
  }
  return b;
}

void push_backbone(ParamList& out, const std::string& name, const Backbone& b) {
  push_conv(out, name + "/stem", b.stem);
  for (size_t i = 0; i < b.downs.size(); ++i)
    push_conv(out, name + "/down" + std::to_string(i), b.downs[i]);
}

// map-to-vector head: stride-2 convs to 4x4, global average pool, projection
struct Head {
  std::vector<Conv> convs;
  Dense out;
  size_t map_index = 0;

  Var run(const std::vector<Var>& maps) const {
    Var f = maps[map_index];
    for (const auto& c : convs) f = ag::leaky_relu(c(f), kLrelu);
    return out(ag::global_avg_pool(f));
  }
};

Head make_head(Rng& rng, int64_t map_res, int64_t channels, int64_t out_dim,
               size_t map_index, bool zero_out) {
  Head h;
  h.map_index = map_index;
  for (int64_t res = map_res; res > 4; res /= 2)
    h.convs.push_back(make_conv(rng, channels, channels, 3, 2, 1));
  h.out = zero_out ? make_zero_dense(channels, out_dim)
                   : make_dense(rng, channels, out_dim);
  return h;
}

void push_head(ParamList& out, const std::string& name, const Head& h) {
  for (size_t i = 0; i < h.convs.size(); ++i)
    push_conv(out, name + "/c" + std::to_string(i), h.convs[i]);
  push_dense(out, name + "/out", h.out);
}

// pSp groups latent rows as coarse/medium/fine (3/4/11 of 18 at full scale);
// keep those proportions at toy scale with at least one row per group.
struct RowGroups {
  int64_t coarse, medium, fine;
};

RowGroups latent_row_groups(int64_t L) {
  RowGroups g{};
  g.coarse = std::max<int64_t>(1, std::llround(3.0 * static_cast<double>(L) / 18.0));
  g.medium = std::max<int64_t>(1, std::llround(4.0 * static_cast<double>(L) / 18.0));
  if (g.coarse + g.medium > L - 1) g.medium = std::max<int64_t>(0, L - 1 - g.coarse);
  g.fine = L - g.coarse - g.medium;
  return g;
}

size_t map_index_for_res(const std::vector<int64_t>& down_res, int64_t want) {
  // closest available map not finer than `want`; down_res is finest-first
  for (size_t i = 0; i < down_res.size(); ++i)
    if (down_res[i] <= want) return i;
  return down_res.size() - 1;
}

}  // namespace

void GeneratorConfig::validate() const {
  require(is_pow2(resolution) && resolution >= 32 && resolution <= 1024,
          ErrorCode::invalid_config,
          "resolution must be a power of two in [32,1024], got " +
              std::to_string(resolution));
  require(latent_width >= 1, ErrorCode::invalid_config, "latent_width >= 1");
  require(channel_cap >= 4 && channel_budget >= 4, ErrorCode::invalid_config,
          "channel_cap and channel_budget must be >= 4");
  require(channel_scale > 0.0 && channel_scale <= 1.0, ErrorCode::invalid_config,
          "channel_scale must be in (0,1]");
}

int64_t num_latent_vectors(int64_t resolution) {
  require(is_pow2(resolution) && resolution >= 4 && resolution <= 1024,
          ErrorCode::invalid_config,
          "num_latent_vectors: resolution must be a power of two in [4,1024], got " +
              std::to_string(resolution));
  return 2 * (log2i(resolution) - 1);
}

int64_t channel_width(int64_t level_resolution, const GeneratorConfig& cfg) {
  double base = std::min(static_cast<double>(cfg.channel_cap),
                         static_cast<double>(cfg.channel_budget) /
                             static_cast<double>(level_resolution));
  double scaled = base * cfg.channel_scale;
  int64_t mult4 = 4 * std::llround(scaled / 4.0);
  return std::max<int64_t>(4, mult4);
}

std::vector<int64_t> pyramid_resolutions(int64_t resolution) {
  std::vector<int64_t> out;
  for (int64_t res = 8; res <= resolution; res *= 2) out.push_back(res);
  return out;
}

LandmarkSet load_landmarks_json(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io_error, "cannot open landmark file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::io_error, "invalid landmark JSON '" + path + "': " + e.what());
  }
  require(j.is_array() && !j.empty(), ErrorCode::io_error,
          "landmark file '" + path + "' must be a non-empty array of [x,y] pairs");
  LandmarkSet l;
  for (const auto& p : j) {
    require(p.is_array() && p.size() == 2, ErrorCode::io_error,
            "landmark file '" + path + "': entries must be [x,y] pairs");
    l.points.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return l;
}

void save_landmarks_json(const LandmarkSet& l, const std::string& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& p : l.points) j.push_back({p[0], p[1]});
  std::ofstream out(path);
  require(out.good(), ErrorCode::io_error, "cannot write landmark file '" + path + "'");
  out << j.dump();
}

HeatmapStack rasterize_heatmaps(const LandmarkSet& l, int64_t grid, double sigma) {
  require(grid >= 8, ErrorCode::invalid_argument, "heatmap grid must be >= 8");
  require(sigma > 0.0, ErrorCode::invalid_argument, "heatmap sigma must be > 0");
  require(!l.points.empty(), ErrorCode::invalid_argument, "empty landmark set");
  int64_t n = static_cast<int64_t>(l.points.size());
  HeatmapStack out{ag::Tensor({n, grid, grid}), 0};
  double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  for (int64_t i = 0; i < n; ++i) {
    double x = l.points[static_cast<size_t>(i)][0];
    double y = l.points[static_cast<size_t>(i)][1];
    if (x < 0.0 || x > 1.0 || y < 0.0 || y > 1.0) {
      ++out.clamped;
      x = std::min(1.0, std::max(0.0, x));
      y = std::min(1.0, std::max(0.0, y));
    }
    double cx = x * static_cast<double>(grid - 1);
    double cy = y * static_cast<double>(grid - 1);
    double* ch = out.maps.data() + i * grid * grid;
    for (int64_t v = 0; v < grid; ++v)
      for (int64_t u = 0; u < grid; ++u) {
        double du = static_cast<double>(u) - cx;
        double dv = static_cast<double>(v) - cy;
        ch[v * grid + u] = std::exp(-(du * du + dv * dv) * inv2s2);
      }
  }
  return out;
}

std::vector<ag::Var> param_vars(const ParamList& params) {
  std::vector<ag::Var> out;
  out.reserve(params.size());
  for (const auto& e : params) out.push_back(e.var);
  return out;
}

// ----- generator -----

namespace detail {

struct ModLayer {
  Dense affine;  // D -> Ci, bias init 1
  Var w;         // [Co,Ci,3,3]
  Var b;         // [Co]
  Var noise_strength;    // [1], only when noise injection is on
  ag::Tensor noise_buf;  // [1,1,res,res] fixed draw

  Var run(const Var& x, const Var& w_row) const {
    int64_t batch = x->value.dim(0);
    int64_t ci = x->value.dim(1);
    int64_t co = w->value.dim(0);
    Var s = affine(w_row);  // [B,Ci]
    Var sx = ag::mul(x, ag::reshape(s, {batch, ci, 1, 1}));
    Var y = ag::conv2d(sx, w, nullptr, 1, 1);
    // demodulation: rsqrt over the per-sample modulated filter energy
    Var w2 = ag::sum_axes(ag::square(w), {2, 3}, false);         // [Co,Ci]
    Var d2 = ag::matmul(ag::square(s), ag::transpose2d(w2));     // [B,Co]
    Var dem = ag::div(ag::constant(ag::Tensor::scalar(1.0)),
                      ag::sqrt_op(ag::add_scalar(d2, 1e-8)));
    y = ag::mul(y, ag::reshape(dem, {batch, co, 1, 1}));
    if (noise_strength)
      y = ag::add(y, ag::mul(ag::constant(noise_buf), noise_strength));
    y = ag::add(y, ag::reshape(b, {1, co, 1, 1}));
    return ag::leaky_relu(y, kLrelu);
  }
};

struct GeneratorImpl {
  GeneratorConfig cfg;
  int64_t L = 0, D = 0;
  std::vector<int64_t> level_res;  // 4,8,...,R
  Var const_input;
  std::vector<ModLayer> layers;  // two per level
  Conv to_rgb;
  ParamList params;
};

struct InverterImpl {
  GeneratorConfig cfg;
  int64_t L = 0, D = 0;
  Backbone backbone;
  std::vector<Head> heads;  // one per latent row
  ParamList params;
};

struct LandmarkEncoderImpl {
  int64_t K = 0, D = 0, G = 0, N = 0;
  Backbone backbone;
  std::vector<Head> heads;  // one per structure row, zero-init projections
  ParamList params;
};

struct TargetEncoderImpl {
  GeneratorConfig cfg;
  Backbone backbone;  // stem tap at R plus one tap per down block
  ParamList params;
};

struct DecoderImpl {
  GeneratorConfig cfg;
  Conv first;
  struct Block {
    ConvT up;
    Conv merge;
  };
  std::vector<Block> blocks;
  Conv to_rgb;
  ParamList params;
};

struct DiscriminatorImpl {
  GeneratorConfig cfg;
  Conv stem;
  std::vector<Conv> downs;
  Dense out;
  ParamList params;
};

}  // namespace detail

Generator::Generator(const GeneratorConfig& cfg, Rng rng)
    : impl_(std::make_shared<detail::GeneratorImpl>()) {
  cfg.validate();
  impl_->cfg = cfg;
  impl_->L = num_latent_vectors(cfg.resolution);
  impl_->D = cfg.latent_width;
  for (int64_t res = 4; res <= cfg.resolution; res *= 2)
    impl_->level_res.push_back(res);
  auto width = [&](int64_t res) {
    return channel_width(std::max<int64_t>(res, 8), cfg);
  };
  impl_->const_input =
      ag::make_param(ag::random_normal({1, width(4), 4, 4}, rng));
  int64_t prev = width(4);
  for (int64_t res : impl_->level_res) {
    int64_t c = width(res);
    for (int j = 0; j < 2; ++j) {
      detail::ModLayer ml;
      int64_t ci = j == 0 ? prev : c;
      ml.affine = make_dense(rng, impl_->D, ci, 1.0);
      ml.w = ag::make_param(ag::random_normal(
          {c, ci, 3, 3}, rng, std::sqrt(2.0 / static_cast<double>(ci * 9))));
      ml.b = ag::make_param(ag::Tensor::zeros({c}));
      if (cfg.noise_injection) {
        ml.noise_strength = ag::make_param(ag::Tensor::zeros({1}));
        ml.noise_buf = ag::random_normal({1, 1, res, res}, rng);
      }
      impl_->layers.push_back(std::move(ml));
    }
    prev = c;
  }
  impl_->to_rgb = make_conv(rng, prev, 3, 1, 1, 0);

  ParamList& p = impl_->params;
  push(p, "gen/const", impl_->const_input);
  for (size_t i = 0; i < impl_->layers.size(); ++i) {
    const auto& ml = impl_->layers[i];
    std::string base = "gen/layer" + std::to_string(i);
    push_dense(p, base + "/affine", ml.affine);
    push(p, base + "/w", ml.w);
    push(p, base + "/b", ml.b);
    if (ml.noise_strength) push(p, base + "/noise_strength", ml.noise_strength);
  }
  push_conv(p, "gen/torgb", impl_->to_rgb);
  quantize_params(p);
}

Generator::Output Generator::synthesize(const ag::Var& w) const {
  const auto& im = *impl_;
  require(w && w->value.rank() == 3 && w->value.dim(1) == im.L &&
              w->value.dim(2) == im.D,
          ErrorCode::shape_mismatch,
          "synthesize: latent stack must be [B," + std::to_string(im.L) + "," +
              std::to_string(im.D) + "], got " +
              (w ? ag::shape_str(w->value.shape()) : std::string("null")));
  int64_t batch = w->value.dim(0);
  Var x = ag::add(im.const_input,
                  ag::constant(ag::Tensor::zeros({batch, 1, 1, 1})));
  Output out;
  size_t li = 0;
  for (int64_t res : im.level_res) {
    if (res > 4) x = ag::upsample_nearest2x(x);
    for (int j = 0; j < 2; ++j, ++li) {
      Var row = ag::reshape(ag::slice(w, 1, static_cast<int64_t>(li), 1),
                            {batch, im.D});
      x = im.layers[li].run(x, row);
    }
    if (res >= 8) out.pyramid.push_back(x);
  }
  out.image = ag::tanh_op(im.to_rgb(x));
  return out;
}

void Generator::collect_params(ParamList& out) const {
  out.insert(out.end(), impl_->params.begin(), impl_->params.end());
}

void Generator::set_trainable(bool trainable) {
  set_trainable_all(impl_->params, trainable);
}

// ----- inverter -----

Inverter::Inverter(const GeneratorConfig& cfg, Rng rng)
    : impl_(std::make_shared<detail::InverterImpl>()) {
  cfg.validate();
  impl_->cfg = cfg;
  impl_->L = num_latent_vectors(cfg.resolution);
  impl_->D = cfg.latent_width;
  impl_->backbone = make_backbone(rng, 3, cfg.resolution, cfg);
  RowGroups g = latent_row_groups(impl_->L);
  const auto& dres = impl_->backbone.down_res;
  size_t coarse_ix = map_index_for_res(dres, 8);
  size_t medium_ix = map_index_for_res(dres, 16);
  size_t fine_ix = map_index_for_res(dres, 32);
  for (int64_t r = 0; r < impl_->L; ++r) {
    size_t ix = r < g.coarse            ? coarse_ix
                : r < g.coarse + g.medium ? medium_ix
                                          : fine_ix;
    int64_t res = dres[ix];
    impl_->heads.push_back(make_head(rng, res, channel_width(res, cfg),
                                     impl_->D, ix, false));
  }
  ParamList& p = impl_->params;
  push_backbone(p, "inv/backbone", impl_->backbone);
  for (size_t i = 0; i < impl_->heads.size(); ++i)
    push_head(p, "inv/head" + std::to_string(i), impl_->heads[i]);
  quantize_params(p);
}

ag::Var Inverter::invert(const ag::Var& image) const {
  const auto& im = *impl_;
  require(image && image->value.rank() == 4 && image->value.dim(1) == 3 &&
              image->value.dim(2) == im.cfg.resolution &&
              image->value.dim(3) == im.cfg.resolution,
          ErrorCode::shape_mismatch,
          "invert: image must be [B,3," + std::to_string(im.cfg.resolution) +
              "," + std::to_string(im.cfg.resolution) + "]");
  int64_t batch = image->value.dim(0);
  std::vector<Var> maps = im.backbone.run(image);
  std::vector<Var> rows;
  rows.reserve(im.heads.size());
  for (const auto& h : im.heads)
    rows.push_back(ag::reshape(h.run(maps), {batch, 1, im.D}));
  return ag::concat(rows, 1);
}

void Inverter::collect_params(ParamList& out) const {
  out.insert(out.end(), impl_->params.begin(), impl_->params.end());
}

void Inverter::set_trainable(bool trainable) {
  set_trainable_all(impl_->params, trainable);
}

// ----- landmark encoder -----

LandmarkEncoder::LandmarkEncoder(const GeneratorConfig& cfg, int64_t num_landmarks,
                                 int64_t grid, int64_t split_index, Rng rng)
    : impl_(std::make_shared<detail::LandmarkEncoderImpl>()) {
  require(num_landmarks >= 1, ErrorCode::invalid_config, "num_landmarks >= 1");
  require(is_pow2(grid) && grid >= 8, ErrorCode::invalid_config,
          "heatmap grid must be a power of two >= 8, got " + std::to_string(grid));
  impl_->K = split_index;
  impl_->D = cfg.latent_width;
  impl_->G = grid;
  impl_->N = num_landmarks;
  impl_->backbone = make_backbone(rng, 2 * num_landmarks, grid, cfg);
  if (impl_->backbone.downs.empty()) {
    // grid == 8: the stem map is the only level; add one identity-resolution
    // down block so heads have a map to read
    impl_->backbone.downs.push_back(
        make_conv(rng, channel_width(8, cfg), channel_width(8, cfg), 3, 1, 1));
    impl_->backbone.down_res.push_back(8);
  }
  const auto& dres = impl_->backbone.down_res;
  size_t coarse_ix = map_index_for_res(dres, 8);
  size_t medium_ix = map_index_for_res(dres, 16);
  int64_t k_coarse = std::max<int64_t>(
      1, std::llround(3.0 * static_cast<double>(impl_->K) / 7.0));
  if (k_coarse > impl_->K) k_coarse = impl_->K;
  for (int64_t r = 0; r < impl_->K; ++r) {
    size_t ix = r < k_coarse ? coarse_ix : medium_ix;
    int64_t res = dres[ix];
    impl_->heads.push_back(
        make_head(rng, res, channel_width(res, cfg), impl_->D, ix, true));
  }
  ParamList& p = impl_->params;
  push_backbone(p, "lenc/backbone", impl_->backbone);
  for (size_t i = 0; i < impl_->heads.size(); ++i)
    push_head(p, "lenc/head" + std::to_string(i), impl_->heads[i]);
  quantize_params(p);
}

ag::Var LandmarkEncoder::encode(const ag::Var& heat_s, const ag::Var& heat_t) const {
  const auto& im = *impl_;
  auto check = [&](const ag::Var& h, const char* which) {
    require(h && h->value.rank() == 4 && h->value.dim(1) == im.N &&
                h->value.dim(2) == im.G && h->value.dim(3) == im.G,
            ErrorCode::shape_mismatch,
            std::string("landmark encoder: ") + which + " heatmaps must be [B," +
                std::to_string(im.N) + "," + std::to_string(im.G) + "," +
                std::to_string(im.G) + "]");
  };
  check(heat_s, "source");
  check(heat_t, "target");
  require(heat_s->value.dim(0) == heat_t->value.dim(0), ErrorCode::shape_mismatch,
          "landmark encoder: batch mismatch");
  int64_t batch = heat_s->value.dim(0);
  Var x = ag::concat({heat_s, heat_t}, 1);
  std::vector<Var> maps = im.backbone.run(x);
  std::vector<Var> rows;
  rows.reserve(im.heads.size());
  for (const auto& h : im.heads)
    rows.push_back(ag::reshape(h.run(maps), {batch, 1, im.D}));
  return ag::concat(rows, 1);
}

void LandmarkEncoder::collect_params(ParamList& out) const {
  out.insert(out.end(), impl_->params.begin(), impl_->params.end());
}

void LandmarkEncoder::set_trainable(bool trainable) {
  set_trainable_all(impl_->params, trainable);
}

// ----- target encoder -----

TargetEncoder::TargetEncoder(const GeneratorConfig& cfg, Rng rng)
    : impl_(std::make_shared<detail::TargetEncoderImpl>()) {
  cfg.validate();
  impl_->cfg = cfg;
  impl_->backbone = make_backbone(rng, 3, cfg.resolution, cfg);
  ParamList& p = impl_->params;
  push_backbone(p, "tenc/backbone", impl_->backbone);
  quantize_params(p);
}

std::vector<ag::Var> TargetEncoder::encode(const ag::Var& image) const {
  const auto& im = *impl_;
  require(image && image->value.rank() == 4 && image->value.dim(1) == 3 &&
              image->value.dim(2) == im.cfg.resolution &&
              image->value.dim(3) == im.cfg.resolution,
          ErrorCode::shape_mismatch,
          "target encoder: image must be [B,3," +
              std::to_string(im.cfg.resolution) + "," +
              std::to_string(im.cfg.resolution) + "]");
  // finest-to-coarsest emission: stem tap at R, then one tap per down block
  std::vector<Var> taps;
  Var f = ag::leaky_relu(im.backbone.stem(image), kLrelu);
  taps.push_back(f);
  for (const auto& d : im.backbone.downs) {
    f = ag::leaky_relu(d(f), kLrelu);
    taps.push_back(f);
  }
  std::reverse(taps.begin(), taps.end());  // coarsest (8x8) first
  return taps;
}

void TargetEncoder::collect_params(ParamList& out) const {
  out.insert(out.end(), impl_->params.begin(), impl_->params.end());
}

void TargetEncoder::set_trainable(bool trainable) {
  set_trainable_all(impl_->params, trainable);
}

// ----- decoder -----

Decoder::Decoder(const GeneratorConfig& cfg, Rng rng)
    : impl_(std::make_shared<detail::DecoderImpl>()) {
  cfg.validate();
  impl_->cfg = cfg;
  std::vector<int64_t> res = pyramid_resolutions(cfg.resolution);
  int64_t c8 = channel_width(8, cfg);
  impl_->first = make_conv(rng, c8, c8, 3, 1, 1);
  int64_t prev = c8;
  for (size_t i = 1; i < res.size(); ++i) {
    int64_t c = channel_width(res[i], cfg);
    detail::DecoderImpl::Block blk;
    blk.up = make_convt(rng, prev, c, 4);
    blk.merge = make_conv(rng, 2 * c, c, 3, 1, 1);
    impl_->blocks.push_back(std::move(blk));
    prev = c;
  }
  impl_->to_rgb = make_conv(rng, prev, 3, 1, 1, 0);
  ParamList& p = impl_->params;
  push_conv(p, "dec/first", impl_->first);
  for (size_t i = 0; i < impl_->blocks.size(); ++i) {
    push_convt(p, "dec/block" + std::to_string(i) + "/up", impl_->blocks[i].up);
    push_conv(p, "dec/block" + std::to_string(i) + "/merge", impl_->blocks[i].merge);
  }
  push_conv(p, "dec/torgb", impl_->to_rgb);
  quantize_params(p);
}

ag::Var Decoder::decode(const std::vector<ag::Var>& aggregated) const {
  const auto& im = *impl_;
  size_t expected = im.blocks.size() + 1;
  require(aggregated.size() == expected, ErrorCode::shape_mismatch,
          "decoder: expected " + std::to_string(expected) + " pyramid levels, got " +
              std::to_string(aggregated.size()));
  Var x = ag::leaky_relu(im.first(aggregated[0]), kLrelu);
  for (size_t i = 0; i < im.blocks.size(); ++i) {
    x = ag::leaky_relu(im.blocks[i].up(x), kLrelu);
    x = ag::concat({x, aggregated[i + 1]}, 1);
    x = ag::leaky_relu(im.blocks[i].merge(x), kLrelu);
  }
  return ag::tanh_op(im.to_rgb(x));
}

void Decoder::collect_params(ParamList& out) const {
  out.insert(out.end(), impl_->params.begin(), impl_->params.end());
}

void Decoder::set_trainable(bool trainable) {
  set_trainable_all(impl_->params, trainable);
}

// ----- discriminator -----

Discriminator::Discriminator(const GeneratorConfig& cfg, Rng rng)
    : impl_(std::make_shared<detail::DiscriminatorImpl>()) {
  cfg.validate();
  impl_->cfg = cfg;
  auto width = [&](int64_t res) {
    return channel_width(std::max<int64_t>(res, 8), cfg);
  };
  impl_->stem = make_conv(rng, 3, width(cfg.resolution), 3, 1, 1);
  int64_t prev = width(cfg.resolution);
  for (int64_t res = cfg.resolution / 2; res >= 4; res /= 2) {
    impl_->downs.push_back(make_conv(rng, prev, width(res), 3, 2, 1));
    prev = width(res);
  }
  impl_->out = make_dense(rng, prev * 16, 1);
  ParamList& p = impl_->params;
  push_conv(p, "disc/stem", impl_->stem);
  for (size_t i = 0; i < impl_->downs.size(); ++i)
    push_conv(p, "disc/down" + std::to_string(i), impl_->downs[i]);
  push_dense(p, "disc/out", impl_->out);
  quantize_params(p);
}

ag::Var Discriminator::discriminate(const ag::Var& image) const {
  const auto& im = *impl_;
  require(image && image->value.rank() == 4 && image->value.dim(1) == 3 &&
              image->value.dim(2) == im.cfg.resolution &&
              image->value.dim(3) == im.cfg.resolution,
          ErrorCode::shape_mismatch,
          "discriminator: image must be [B,3," +
              std::to_string(im.cfg.resolution) + "," +
              std::to_string(im.cfg.resolution) + "]");
  int64_t batch = image->value.dim(0);
  Var f = ag::leaky_relu(im.stem(image), kLrelu);
  for (const auto& d : im.downs) f = ag::leaky_relu(d(f), kLrelu);
  Var flat = ag::reshape(f, {batch, f->value.size() / batch});
  Var logit = im.out(flat);
  // keep scores strictly inside (0,1) even for saturated logits
  return ag::sigmoid_op(ag::clamp(logit, -36.0, 36.0));
}

void Discriminator::collect_params(ParamList& out) const {
  out.insert(out.end(), impl_->params.begin(), impl_->params.end());
}

void Discriminator::set_trainable(bool trainable) {
  set_trainable_all(impl_->params, trainable);
}

}  // namespace faceswap::nets
