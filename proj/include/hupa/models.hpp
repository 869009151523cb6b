#pragma once

// The two policy generators compared by this project.
//
// Both share a convolutional trunk that turns the 31x31 map image into a
// bottleneck code z. On top of it
//   * HUPA: a linear head maps z to the complete parameter vector theta of a
//     small primary MLP (4 -> h -> h -> h -> 8), which then classifies
//     (s, g) into one of the 8 actions;
//   * Embedding: a head maps z to an embedding phi, which enters a resident
//     primary MLP only through its first layer. The per-map context that
//     would be transmitted is the projection We * phi (h floats).
//
// In both cases the per-map "context" (theta or the projection) depends on
// the image alone and can be computed once per map.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "hupa/binary_io.hpp"
#include "hupa/checkpoint.hpp"
#include "hupa/gridworld.hpp"
#include "hupa/layers.hpp"

namespace hupa {

using nn::Tensor;

enum class ModelKind { hupa, embedding };

inline std::string_view model_kind_name(ModelKind k) { return k == ModelKind::hupa ? "hupa" : "embedding"; }

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "hupa") return ModelKind::hupa;
  if (s == "embedding") return ModelKind::embedding;
  throw std::invalid_argument("unknown model kind '" + std::string(s) + "'");
}

inline constexpr int kPrimaryInputs = 4;
inline constexpr int kBottleneck = 128;
inline constexpr std::array<int, 5> kWidths = {16, 32, 64, 128, 256};

/// Parameter count of the primary MLP with three hidden layers of width h.
constexpr std::size_t primary_param_count(int h, int d = kPrimaryInputs) {
  const auto H = static_cast<std::size_t>(h), D = static_cast<std::size_t>(d);
  return (D * H + H) + 2 * (H * H + H) + (8 * H + 8);
}

/// Offsets of the flat primary layout [W1, b1, W2, b2, W3, b3, Wout, bout];
/// weights are row-major out x in.
struct PrimaryLayout {
  int h = 0;
  int d = 0;

  std::size_t w1() const { return 0; }
  std::size_t b1() const { return w1() + static_cast<std::size_t>(d) * h; }
  std::size_t w2() const { return b1() + h; }
  std::size_t b2() const { return w2() + static_cast<std::size_t>(h) * h; }
  std::size_t w3() const { return b2() + h; }
  std::size_t b3() const { return w3() + static_cast<std::size_t>(h) * h; }
  std::size_t wout() const { return b3() + h; }
  std::size_t bout() const { return wout() + 8 * static_cast<std::size_t>(h); }
  std::size_t size() const { return bout() + 8; }

  /// Fan-in of the generated layer that flat entry `i` belongs to.
  int fan_in_of(std::size_t i) const { return i < w2() ? d : h; }
};

/// Pointers to the eight primary blocks, in a flat vector or in separate
/// tensors.
template <class P>
struct PrimaryBlocks {
  P w1, b1, w2, b2, w3, b3, wout, bout;
};

template <class T>
PrimaryBlocks<T*> primary_blocks(T* flat, const PrimaryLayout& L) {
  return {flat + L.w1(), flat + L.b1(), flat + L.w2(), flat + L.b2(),
          flat + L.w3(), flat + L.b3(), flat + L.wout(), flat + L.bout()};
}

template <class T>
struct PrimaryCache {
  int n = 0;
  nn::RowMatrix<T> x, h1, h2, h3;
};

/// Batched primary forward. `extra_bias` (length h, may be null) is added to
/// the first pre-activation; that is how the embedding context enters.
template <class T>
void primary_forward(const PrimaryBlocks<const T*>& p, const PrimaryLayout& L, const T* extra_bias, const T* X,
                     int n, T* logits, PrimaryCache<T>& c) {
  using nn::linear_forward;
  c.n = n;
  c.x = nn::ConstMatMap<T>(X, n, L.d);
  c.h1.resize(n, L.h);
  c.h2.resize(n, L.h);
  c.h3.resize(n, L.h);
  linear_forward(p.w1, p.b1, X, n, L.d, L.h, c.h1.data());
  if (extra_bias) c.h1.rowwise() += nn::ConstVecMap<T>(extra_bias, L.h).transpose();
  nn::relu_inplace(c.h1.data(), c.h1.size());
  linear_forward(p.w2, p.b2, c.h1.data(), n, L.h, L.h, c.h2.data());
  nn::relu_inplace(c.h2.data(), c.h2.size());
  linear_forward(p.w3, p.b3, c.h2.data(), n, L.h, L.h, c.h3.data());
  nn::relu_inplace(c.h3.data(), c.h3.size());
  linear_forward(p.wout, p.bout, c.h3.data(), n, L.h, 8, logits);
}

/// Accumulates gradients into `g` (and `g_extra_bias` when non-null).
template <class T>
void primary_backward(const PrimaryBlocks<const T*>& p, const PrimaryLayout& L, const PrimaryCache<T>& c,
                      const T* glogits, const PrimaryBlocks<T*>& g, T* g_extra_bias) {
  using nn::linear_backward;
  const int n = c.n;
  nn::RowMatrix<T> gh3(n, L.h), gh2(n, L.h), gh1(n, L.h);
  linear_backward(p.wout, c.h3.data(), glogits, n, L.h, 8, g.wout, g.bout, gh3.data());
  nn::relu_backward_inplace(c.h3.data(), gh3.data(), gh3.size());
  linear_backward(p.w3, c.h2.data(), gh3.data(), n, L.h, L.h, g.w3, g.b3, gh2.data());
  nn::relu_backward_inplace(c.h2.data(), gh2.data(), gh2.size());
  linear_backward(p.w2, c.h1.data(), gh2.data(), n, L.h, L.h, g.w2, g.b2, gh1.data());
  nn::relu_backward_inplace(c.h1.data(), gh1.data(), gh1.size());
  linear_backward<T>(p.w1, c.x.data(), gh1.data(), n, L.d, L.h, g.w1, g.b1, nullptr);
  if (g_extra_bias) nn::VecMap<T>(g_extra_bias, L.h) += gh1.colwise().sum().transpose();
}

/// Coordinates scaled to [-1, 1].
constexpr double normalize_coord(int c) { return (c - 15) / 15.0; }

template <class T>
std::array<T, kPrimaryInputs> primary_input(Cell s, Cell g) {
  return {static_cast<T>(normalize_coord(s.row)), static_cast<T>(normalize_coord(s.col)),
          static_cast<T>(normalize_coord(g.row)), static_cast<T>(normalize_coord(g.col))};
}

// ---------------------------------------------------------------------------
// Trunk

inline constexpr int kTrunkPoolWindow = 2;
inline constexpr int kTrunkFlat = 32 * 4 * 4;

/// Closed-form trunk parameter count for the fixed channel plan.
constexpr std::size_t trunk_param_count(int bottleneck = kBottleneck) {
  auto conv = [](std::size_t in, std::size_t out, std::size_t k) { return out * in * k * k + out; };
  const std::size_t stem = conv(1, 8, 3);
  const std::size_t b1 = conv(8, 16, 3) + conv(16, 16, 3) + conv(8, 16, 1);
  const std::size_t b2 = 2 * conv(16, 16, 3);
  const std::size_t b3 = conv(16, 32, 3) + conv(32, 32, 3) + conv(16, 32, 1);
  const std::size_t b4 = 2 * conv(32, 32, 3);
  const std::size_t fc = static_cast<std::size_t>(kTrunkFlat) * bottleneck + bottleneck;
  return stem + b1 + b2 + b3 + b4 + fc;
}

template <class T>
struct TrunkCache {
  nn::ConvCache<T> stem;
  Tensor<T> stem_out;
  std::array<nn::ResidualCache<T>, 4> blocks;
  std::vector<int> pool_in_shape;
  nn::LinearCache<T> fc;
  Tensor<T> z;
};

/// conv3x3 1->8, residual 8->16/2, 16->16, 16->32/2, 32->32, avgpool 2
/// (8x8 -> 4x4), flatten 512, linear 512->B, relu.
struct Trunk {
  nn::Conv2d stem;
  std::array<nn::ResidualBlock, 4> blocks;
  nn::AvgPool pool{kTrunkPoolWindow};
  nn::Linear fc;

  template <class T>
  static Trunk create(nn::ParamSet<T>& ps, int bottleneck = kBottleneck) {
    Trunk t;
    t.stem = nn::Conv2d::create(ps, "trunk.stem", 1, 8, 3, 1);
    t.blocks[0] = nn::ResidualBlock::create(ps, "trunk.block1", 8, 16, 2);
    t.blocks[1] = nn::ResidualBlock::create(ps, "trunk.block2", 16, 16, 1);
    t.blocks[2] = nn::ResidualBlock::create(ps, "trunk.block3", 16, 32, 2);
    t.blocks[3] = nn::ResidualBlock::create(ps, "trunk.block4", 32, 32, 1);
    t.fc = nn::Linear::create(ps, "trunk.bottleneck", kTrunkFlat, bottleneck);
    return t;
  }

  template <class T, class Rng>
  void init(nn::ParamSet<T>& ps, Rng& rng) const {
    stem.init(ps, rng);
    for (const auto& b : blocks) b.init(ps, rng);
    fc.init(ps, rng);
  }

  std::size_t param_count() const {
    std::size_t n = stem.param_count() + fc.param_count();
    for (const auto& b : blocks) n += b.param_count();
    return n;
  }

  template <class T>
  const Tensor<T>& forward(const nn::ParamSet<T>& ps, const Tensor<T>& image, TrunkCache<T>& c) const {
    c.stem_out = stem.forward(ps, image, c.stem);
    nn::relu_inplace(c.stem_out.data(), c.stem_out.size());
    Tensor<T> x = blocks[0].forward(ps, c.stem_out, c.blocks[0]);
    for (std::size_t i = 1; i < blocks.size(); ++i) x = blocks[i].forward(ps, x, c.blocks[i]);
    c.pool_in_shape = x.shape();
    const Tensor<T> pooled = pool.forward(x);
    c.z = fc.forward(ps, pooled.reshaped({kTrunkFlat}), &c.fc);
    nn::relu_inplace(c.z.data(), c.z.size());
    return c.z;
  }

  /// Accumulates trunk parameter gradients from dL/dz.
  template <class T>
  void backward(nn::ParamSet<T>& ps, const TrunkCache<T>& c, Tensor<T> gz) const {
    nn::relu_backward_inplace(c.z.data(), gz.data(), gz.size());
    const Tensor<T> gflat = fc.backward(ps, c.fc, gz);
    const std::vector<int> pooled_shape{c.pool_in_shape[0], c.pool_in_shape[1] / pool.window,
                                        c.pool_in_shape[2] / pool.window};
    Tensor<T> gx = pool.backward(c.pool_in_shape, gflat.reshaped(pooled_shape));
    for (std::size_t i = blocks.size(); i-- > 1;) gx = blocks[i].backward(ps, c.blocks[i], std::move(gx));
    gx = blocks[0].backward(ps, c.blocks[0], std::move(gx));
    nn::relu_backward_inplace(c.stem_out.data(), gx.data(), gx.size());
    stem.backward(ps, c.stem, gx, /*need_input_grad=*/false);
  }
};

// ---------------------------------------------------------------------------
// Parameter budgets

inline std::size_t hupa_total_params(int h, int bottleneck = kBottleneck) {
  return trunk_param_count(bottleneck) + (static_cast<std::size_t>(bottleneck) + 1) * primary_param_count(h);
}

/// Trunk + head B->M (with bias) + projection We (h x M) + resident MLP.
inline std::size_t embedding_total_params(int h, int m, int bottleneck = kBottleneck) {
  return trunk_param_count(bottleneck) + static_cast<std::size_t>(m) * (bottleneck + 1 + h) + primary_param_count(h);
}

/// Embedding size that makes the baseline's parameter total match HUPA's.
inline int match_embedding_dim(int h, int bottleneck = kBottleneck) {
  const double budget = static_cast<double>(hupa_total_params(h, bottleneck)) -
                        static_cast<double>(trunk_param_count(bottleneck)) - static_cast<double>(primary_param_count(h));
  const long m = std::lround(budget / static_cast<double>(bottleneck + 1 + h));
  if (m < 1) throw std::invalid_argument("match_embedding_dim: budget leaves no room for an embedding");
  return static_cast<int>(m);
}

// ---------------------------------------------------------------------------
// Models

struct ModelSpec {
  ModelKind kind = ModelKind::hupa;
  int width = 16;
  int bottleneck = kBottleneck;
  /// Embedding size (embedding kind only); 0 selects match_embedding_dim.
  int embedding_dim = 0;
};

template <class T>
struct ContextCache {
  TrunkCache<T> trunk;
  nn::LinearCache<T> head;
  Tensor<T> phi;  // embedding kind only
};

template <class T>
class PolicyModel {
 public:
  PolicyModel() = default;

  explicit PolicyModel(ModelSpec spec) : spec_(spec), layout_{spec.width, kPrimaryInputs} {
    if (spec_.width < 1) throw std::invalid_argument("model width must be >= 1");
    trunk_ = Trunk::create(ps_, spec_.bottleneck);
    if (spec_.kind == ModelKind::hupa) {
      head_ = nn::Linear::create(ps_, "head", spec_.bottleneck, static_cast<int>(layout_.size()));
    } else {
      if (spec_.embedding_dim == 0) spec_.embedding_dim = match_embedding_dim(spec_.width, spec_.bottleneck);
      const int m = spec_.embedding_dim;
      head_ = nn::Linear::create(ps_, "head", spec_.bottleneck, m);
      proj_ = ps_.add("embed.proj", {spec_.width, m});
      const int h = spec_.width;
      ids_.w1 = ps_.add("primary.fc1.weight", {h, kPrimaryInputs});
      ids_.b1 = ps_.add("primary.fc1.bias", {h});
      ids_.w2 = ps_.add("primary.fc2.weight", {h, h});
      ids_.b2 = ps_.add("primary.fc2.bias", {h});
      ids_.w3 = ps_.add("primary.fc3.weight", {h, h});
      ids_.b3 = ps_.add("primary.fc3.bias", {h});
      ids_.wout = ps_.add("primary.out.weight", {8, h});
      ids_.bout = ps_.add("primary.out.bias", {8});
    }
  }

  /// Fresh initialization. Conv/linear layers use fan-in Kaiming-uniform.
  /// The HUPA head scales its weights by 1/sqrt(B * generated fan-in) and
  /// starts its bias at an ordinary primary initialization, so the generated
  /// network begins at conventional magnitude.
  template <class Rng>
  void init(Rng& rng) {
    trunk_.init(ps_, rng);
    if (spec_.kind == ModelKind::hupa) {
      T* w = ps_.value(head_.weight);
      T* b = ps_.value(head_.bias);
      const int B = spec_.bottleneck;
      for (std::size_t i = 0; i < layout_.size(); ++i) {
        const double fan = layout_.fan_in_of(i);
        nn::uniform_fill(w + i * static_cast<std::size_t>(B), static_cast<std::size_t>(B),
                         1.0 / std::sqrt(B * fan), rng);
        nn::uniform_fill(b + i, 1, 1.0 / std::sqrt(fan), rng);
      }
    } else {
      head_.init(ps_, rng);
      nn::kaiming_uniform<T>(ps_.value(proj_), ps_[proj_].value.size(), nullptr, 0, spec_.embedding_dim, rng);
      const int h = spec_.width;
      auto lin = [&](int w, int b, int fan) {
        nn::kaiming_uniform(ps_.value(w), ps_[w].value.size(), ps_.value(b), ps_[b].value.size(), fan, rng);
      };
      lin(ids_.w1, ids_.b1, kPrimaryInputs);
      lin(ids_.w2, ids_.b2, h);
      lin(ids_.w3, ids_.b3, h);
      lin(ids_.wout, ids_.bout, h);
    }
  }

  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    init(rng);
  }

  const ModelSpec& spec() const { return spec_; }
  ModelKind kind() const { return spec_.kind; }
  int width() const { return spec_.width; }
  const PrimaryLayout& layout() const { return layout_; }
  nn::ParamSet<T>& params() { return ps_; }
  const nn::ParamSet<T>& params() const { return ps_; }
  std::size_t parameter_count() const { return ps_.total_size(); }
  std::size_t trunk_parameter_count() const { return trunk_.param_count(); }

  /// Floats per map sent to the edge: |theta| for HUPA, h for embedding.
  std::size_t context_size() const {
    return spec_.kind == ModelKind::hupa ? layout_.size() : static_cast<std::size_t>(spec_.width);
  }

  static Tensor<T> image_tensor(const MapImage& img) {
    return Tensor<T>({1, kGridSize, kGridSize}, std::vector<T>(img.pixels.begin(), img.pixels.end()));
  }

  /// theta_E (HUPA) or the first-layer projection We * phi (embedding).
  Tensor<T> context(const Tensor<T>& image, ContextCache<T>& c) const {
    const Tensor<T>& z = trunk_.forward(ps_, image, c.trunk);
    if (spec_.kind == ModelKind::hupa) return head_.forward(ps_, z, &c.head);
    c.phi = head_.forward(ps_, z, &c.head);
    Tensor<T> p({spec_.width});
    nn::linear_forward<T>(ps_.value(proj_), nullptr, c.phi.data(), 1, spec_.embedding_dim, spec_.width, p.data());
    return p;
  }

  Tensor<T> context(const MapImage& img) const {
    ContextCache<T> c;
    return context(image_tensor(img), c);
  }

  /// Accumulates generator gradients from dL/dcontext.
  void context_backward(const ContextCache<T>& c, const Tensor<T>& gctx) {
    Tensor<T> ghead;
    if (spec_.kind == ModelKind::hupa) {
      ghead = gctx;
    } else {
      ghead = Tensor<T>({spec_.embedding_dim});
      nn::linear_backward<T>(ps_.value(proj_), c.phi.data(), gctx.data(), 1, spec_.embedding_dim, spec_.width,
                             ps_.grad(proj_), nullptr, ghead.data());
    }
    Tensor<T> gz = head_.backward(ps_, c.head, ghead);
    trunk_.backward(ps_, c.trunk, std::move(gz));
  }

  /// Logits [n x 8] for n rows of primary inputs under a given context.
  void policy_forward(const T* ctx, const T* X, int n, T* logits, PrimaryCache<T>& c) const {
    if (spec_.kind == ModelKind::hupa)
      primary_forward<T>(primary_blocks<const T>(ctx, layout_), layout_, nullptr, X, n, logits, c);
    else
      primary_forward<T>(resident_blocks(), layout_, ctx, X, n, logits, c);
  }

  /// Accumulates dL/dcontext into `gctx` and resident-MLP gradients.
  void policy_backward(const T* ctx, const PrimaryCache<T>& c, const T* glogits, T* gctx) {
    if (spec_.kind == ModelKind::hupa) {
      primary_backward<T>(primary_blocks<const T>(ctx, layout_), layout_, c, glogits, primary_blocks<T>(gctx, layout_),
                          nullptr);
    } else {
      const PrimaryBlocks<T*> g{ps_.grad(ids_.w1), ps_.grad(ids_.b1), ps_.grad(ids_.w2), ps_.grad(ids_.b2),
                                ps_.grad(ids_.w3), ps_.grad(ids_.b3), ps_.grad(ids_.wout), ps_.grad(ids_.bout)};
      primary_backward<T>(resident_blocks(), layout_, c, glogits, g, gctx);
    }
  }

  /// Single-query convenience: logits for state s and goal g on `img`.
  Tensor<T> logits(const MapImage& img, Cell s, Cell g) const { return logits_with_context(context(img), s, g); }

  Tensor<T> logits_with_context(const Tensor<T>& ctx, Cell s, Cell g) const {
    const auto x = primary_input<T>(s, g);
    Tensor<T> out({8});
    PrimaryCache<T> c;
    policy_forward(ctx.data(), x.data(), 1, out.data(), c);
    return out;
  }

  /// Severs the map path of the embedding baseline (test hook).
  void zero_projection() {
    if (spec_.kind != ModelKind::embedding) throw std::logic_error("zero_projection: embedding models only");
    ps_[proj_].value.fill(T(0));
  }

  void zero_head() {
    ps_[head_.weight].value.fill(T(0));
    ps_[head_.bias].value.fill(T(0));
  }

  template <class U>
  PolicyModel<U> cast() const {
    PolicyModel<U> out(spec_);
    out.params().set_flat_values(std::span<const U>(convert<U>(ps_.flat_values())));
    return out;
  }

  std::vector<nn::NamedTensor> to_named_tensors() const { return nn::to_named_tensors(ps_); }

  /// Rebuilds the model described by checkpoint tensors (kind and width are
  /// inferred from the tensor shapes).
  static PolicyModel from_named_tensors(const std::vector<nn::NamedTensor>& tensors) {
    const auto find = [&](std::string_view name) -> const nn::NamedTensor* {
      for (const auto& t : tensors)
        if (t.name == name) return &t;
      return nullptr;
    };
    const auto* head = find("head.weight");
    const auto* bottleneck = find("trunk.bottleneck.weight");
    if (!head || !bottleneck || head->tensor.rank() != 2)
      throw FormatError(FormatError::Kind::invalid, "checkpoint is not a policy model");
    ModelSpec spec;
    spec.bottleneck = bottleneck->tensor.dim(0);
    if (const auto* fc1 = find("primary.fc1.weight")) {
      spec.kind = ModelKind::embedding;
      spec.width = fc1->tensor.dim(0);
      spec.embedding_dim = head->tensor.dim(0);
    } else {
      spec.kind = ModelKind::hupa;
      spec.width = 0;
      for (int h = 1; h <= 4096; ++h)
        if (primary_param_count(h) == static_cast<std::size_t>(head->tensor.dim(0))) spec.width = h;
      if (spec.width == 0) throw FormatError(FormatError::Kind::invalid, "checkpoint head matches no primary width");
    }
    PolicyModel model(spec);
    nn::assign_named_tensors(model.ps_, tensors);
    return model;
  }

 private:
  template <class U>
  static std::vector<U> convert(const std::vector<T>& v) {
    return std::vector<U>(v.begin(), v.end());
  }

  PrimaryBlocks<const T*> resident_blocks() const {
    return {ps_.value(ids_.w1), ps_.value(ids_.b1), ps_.value(ids_.w2), ps_.value(ids_.b2),
            ps_.value(ids_.w3), ps_.value(ids_.b3), ps_.value(ids_.wout), ps_.value(ids_.bout)};
  }

  ModelSpec spec_;
  PrimaryLayout layout_;
  nn::ParamSet<T> ps_;
  Trunk trunk_;
  nn::Linear head_;
  int proj_ = -1;
  PrimaryBlocks<int> ids_{-1, -1, -1, -1, -1, -1, -1, -1};
};

// ---------------------------------------------------------------------------
// theta export: "HUPATHTA" | h u32 | d u32 | f32 x |theta|

inline constexpr std::string_view kThetaMagic = "HUPATHTA";

inline std::vector<std::uint8_t> encode_theta(std::span<const float> theta, int h, int d = kPrimaryInputs) {
  if (theta.size() != primary_param_count(h, d)) throw std::invalid_argument("theta length does not match layout");
  ByteWriter w;
  w.put_bytes(kThetaMagic);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(h));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  for (float v : theta) w.put<float>(v);
  return std::move(w.bytes());
}

struct ThetaFile {
  int h = 0;
  int d = 0;
  std::vector<float> theta;
};

inline ThetaFile decode_theta(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.remaining() < kThetaMagic.size() || r.get_string(kThetaMagic.size()) != kThetaMagic)
    throw FormatError(FormatError::Kind::bad_magic, "not a theta file");
  ThetaFile f;
  f.h = static_cast<int>(r.get<std::uint32_t>());
  f.d = static_cast<int>(r.get<std::uint32_t>());
  f.theta.resize(primary_param_count(f.h, f.d));
  for (float& v : f.theta) v = r.get<float>();
  if (r.remaining() != 0) throw FormatError(FormatError::Kind::corrupt, "trailing bytes after theta");
  return f;
}

}  // namespace hupa
