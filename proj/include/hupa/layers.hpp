#pragma once

// Layer primitives with hand-written backward passes. Dense products go
// through Eigen; everything runs single-threaded with a fixed reduction
// order so forward and backward passes are bitwise reproducible.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string_view>

#include "hupa/tensor.hpp"

namespace hupa::nn {

enum class LayerKind { conv3x3, linear, relu, residual_block, avgpool, softmax_xent };

constexpr std::string_view layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv3x3: return "conv3x3";
    case LayerKind::linear: return "linear";
    case LayerKind::relu: return "relu";
    case LayerKind::residual_block: return "residual_block";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::softmax_xent: return "softmax_xent";
  }
  return "?";
}

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;
template <class T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <class T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

/// Records ReLU activation patterns while enabled. The gradient checker uses
/// it to discard coordinates whose perturbation crosses a kink.
struct ReluTrace {
  bool enabled = false;
  std::uint64_t hash = 0xcbf29ce484222325ull;

  void fold(std::uint64_t bits) { hash = (hash ^ bits) * 0x100000001b3ull; }
};

inline ReluTrace& relu_trace() {
  thread_local ReluTrace trace;
  return trace;
}

template <class T>
void relu_inplace(T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > T(0) ? x[i] : T(0);
  ReluTrace& trace = relu_trace();
  if (!trace.enabled) return;
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < n; ++i) {
    word = (word << 1) | (x[i] > T(0) ? 1u : 0u);
    if (i % 64 == 63) {
      trace.fold(word);
      word = 0;
    }
  }
  trace.fold(word);
}

/// Zeroes `g` wherever the ReLU output `y` was not positive.
template <class T>
void relu_backward_inplace(const T* y, T* g, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!(y[i] > T(0))) g[i] = T(0);
}

template <class T>
Tensor<T> relu(Tensor<T> x) {
  relu_inplace(x.data(), x.size());
  return x;
}

// ---------------------------------------------------------------------------
// Dense kernels

/// Y(n x out) = X(n x in) * W^T + b, W stored out x in.
template <class T>
void linear_forward(const T* W, const T* b, const T* X, int n, int in, int out, T* Y) {
  MatMap<T> y(Y, n, out);
  y.noalias() = ConstMatMap<T>(X, n, in) * ConstMatMap<T>(W, out, in).transpose();
  if (b) y.rowwise() += ConstVecMap<T>(b, out).transpose();
}

/// Accumulates GW += GY^T X and Gb += colsum(GY); writes GX = GY W if given.
template <class T>
void linear_backward(const T* W, const T* X, const T* GY, int n, int in, int out, T* GW, T* Gb, T* GX) {
  ConstMatMap<T> gy(GY, n, out);
  if (GW) MatMap<T>(GW, out, in).noalias() += gy.transpose() * ConstMatMap<T>(X, n, in);
  if (Gb) VecMap<T>(Gb, out) += gy.colwise().sum().transpose();
  if (GX) MatMap<T>(GX, n, in).noalias() = gy * ConstMatMap<T>(W, out, in);
}

// ---------------------------------------------------------------------------
// Initialization

/// Uniform(-bound, bound) fill.
template <class T, class Rng>
void uniform_fill(T* x, std::size_t n, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<T>(dist(rng));
}

/// Kaiming-uniform with a = sqrt(5), i.e. bound 1/sqrt(fan_in) for the
/// weight and the bias alike.
template <class T, class Rng>
void kaiming_uniform(T* w, std::size_t wn, T* b, std::size_t bn, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  uniform_fill(w, wn, bound, rng);
  if (b) uniform_fill(b, bn, bound, rng);
}

// ---------------------------------------------------------------------------
// Layers. Each layer refers to its parameters by id in a ParamSet.

template <class T>
struct LinearCache {
  Tensor<T> input;
};

struct Linear {
  int in = 0;
  int out = 0;
  int weight = -1;
  int bias = -1;

  template <class T>
  static Linear create(ParamSet<T>& ps, const std::string& name, int in, int out) {
    Linear l{in, out, -1, -1};
    l.weight = ps.add(name + ".weight", {out, in});
    l.bias = ps.add(name + ".bias", {out});
    return l;
  }

  template <class T, class Rng>
  void init(ParamSet<T>& ps, Rng& rng) const {
    kaiming_uniform(ps.value(weight), ps[weight].value.size(), ps.value(bias), ps[bias].value.size(), in, rng);
  }

  std::size_t param_count() const { return static_cast<std::size_t>(in) * out + out; }

  /// Input of shape [n, in] (or a vector of length in).
  template <class T>
  Tensor<T> forward(const ParamSet<T>& ps, const Tensor<T>& x, LinearCache<T>* cache = nullptr) const {
    if (x.size() % static_cast<std::size_t>(in) != 0 || x.size() == 0)
      throw std::invalid_argument("linear: input size " + std::to_string(x.size()) +
                                  " incompatible with in=" + std::to_string(in));
    const int n = static_cast<int>(x.size() / static_cast<std::size_t>(in));
    Tensor<T> y(x.rank() == 1 ? std::vector<int>{out} : std::vector<int>{n, out});
    linear_forward(ps.value(weight), ps.value(bias), x.data(), n, in, out, y.data());
    if (cache) cache->input = x;
    return y;
  }

  template <class T>
  Tensor<T> backward(ParamSet<T>& ps, const LinearCache<T>& cache, const Tensor<T>& gy) const {
    const int n = static_cast<int>(cache.input.size() / static_cast<std::size_t>(in));
    Tensor<T> gx(cache.input.shape());
    linear_backward(ps.value(weight), cache.input.data(), gy.data(), n, in, out, ps.grad(weight),
                    ps.grad(bias), gx.data());
    return gx;
  }
};

template <class T>
struct ConvCache {
  int height = 0;
  int width = 0;
  RowMatrix<T> columns;  // (in * k * k) x (out_h * out_w)
};

/// Square convolution (cross-correlation) with zero padding; kernel 3 with
/// padding 1, or kernel 1 with padding 0 for projections.
struct Conv2d {
  int in = 0;
  int out = 0;
  int kernel = 3;
  int stride = 1;
  int weight = -1;
  int bias = -1;

  int pad() const { return kernel / 2; }
  int out_dim(int d) const { return (d + 2 * pad() - kernel) / stride + 1; }
  int fan_in() const { return in * kernel * kernel; }
  std::size_t param_count() const { return static_cast<std::size_t>(out) * fan_in() + out; }

  template <class T>
  static Conv2d create(ParamSet<T>& ps, const std::string& name, int in, int out, int kernel, int stride) {
    Conv2d c{in, out, kernel, stride, -1, -1};
    c.weight = ps.add(name + ".weight", {out, in, kernel, kernel});
    c.bias = ps.add(name + ".bias", {out});
    return c;
  }

  template <class T, class Rng>
  void init(ParamSet<T>& ps, Rng& rng) const {
    kaiming_uniform(ps.value(weight), ps[weight].value.size(), ps.value(bias), ps[bias].value.size(), fan_in(),
                    rng);
  }

  template <class T>
  void im2col(const T* x, int H, int W, RowMatrix<T>& col) const {
    const int oh = out_dim(H), ow = out_dim(W), p = pad();
    col.setZero(fan_in(), oh * ow);
    for (int c = 0; c < in; ++c)
      for (int ky = 0; ky < kernel; ++ky)
        for (int kx = 0; kx < kernel; ++kx) {
          T* row = col.data() + static_cast<std::ptrdiff_t>((c * kernel + ky) * kernel + kx) * oh * ow;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride + ky - p;
            if (iy < 0 || iy >= H) continue;
            const T* src = x + (static_cast<std::ptrdiff_t>(c) * H + iy) * W;
            T* dst = row + oy * ow;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride + kx - p;
              if (ix >= 0 && ix < W) dst[ox] = src[ix];
            }
          }
        }
  }

  template <class T>
  void col2im(const RowMatrix<T>& col, int H, int W, T* gx) const {
    const int oh = out_dim(H), ow = out_dim(W), p = pad();
    for (int c = 0; c < in; ++c)
      for (int ky = 0; ky < kernel; ++ky)
        for (int kx = 0; kx < kernel; ++kx) {
          const T* row = col.data() + static_cast<std::ptrdiff_t>((c * kernel + ky) * kernel + kx) * oh * ow;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride + ky - p;
            if (iy < 0 || iy >= H) continue;
            T* dst = gx + (static_cast<std::ptrdiff_t>(c) * H + iy) * W;
            const T* src = row + oy * ow;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride + kx - p;
              if (ix >= 0 && ix < W) dst[ix] += src[ox];
            }
          }
        }
  }

  /// Input [in, H, W] -> output [out, ceil(H/stride), ceil(W/stride)].
  template <class T>
  Tensor<T> forward(const ParamSet<T>& ps, const Tensor<T>& x, ConvCache<T>& cache) const {
    if (x.rank() != 3 || x.dim(0) != in)
      throw std::invalid_argument("conv: expected input [" + std::to_string(in) + ",H,W], got " +
                                  shape_string(x.shape()));
    if (ps[weight].value.shape() != std::vector<int>{out, in, kernel, kernel})
      throw std::invalid_argument("conv: weight shape mismatch");
    const int H = x.dim(1), W = x.dim(2);
    const int oh = out_dim(H), ow = out_dim(W);
    cache.height = H;
    cache.width = W;
    im2col(x.data(), H, W, cache.columns);
    Tensor<T> y({out, oh, ow});
    MatMap<T> ym(y.data(), out, oh * ow);
    ym.noalias() = ConstMatMap<T>(ps.value(weight), out, fan_in()) * cache.columns;
    ym.colwise() += ConstVecMap<T>(ps.value(bias), out);
    return y;
  }

  template <class T>
  Tensor<T> forward(const ParamSet<T>& ps, const Tensor<T>& x) const {
    ConvCache<T> cache;
    return forward(ps, x, cache);
  }

  /// Accumulates parameter gradients; returns the input gradient when asked.
  template <class T>
  Tensor<T> backward(ParamSet<T>& ps, const ConvCache<T>& cache, const Tensor<T>& gy, bool need_input_grad = true) const {
    const int P = out_dim(cache.height) * out_dim(cache.width);
    ConstMatMap<T> g(gy.data(), out, P);
    MatMap<T>(ps.grad(weight), out, fan_in()).noalias() += g * cache.columns.transpose();
    VecMap<T>(ps.grad(bias), out) += g.rowwise().sum();
    if (!need_input_grad) return {};
    RowMatrix<T> gcol = ConstMatMap<T>(ps.value(weight), out, fan_in()).transpose() * g;
    Tensor<T> gx({in, cache.height, cache.width});
    col2im(gcol, cache.height, cache.width, gx.data());
    return gx;
  }
};

template <class T>
struct ResidualCache {
  ConvCache<T> conv1, conv2, proj;
  Tensor<T> hidden;  // relu(conv1(x))
  Tensor<T> output;
};

/// relu(conv2(relu(conv1(x))) + skip(x)); skip is a strided 1x1 projection
/// when the stride or channel count changes, identity otherwise.
struct ResidualBlock {
  Conv2d conv1;
  Conv2d conv2;
  std::optional<Conv2d> proj;

  template <class T>
  static ResidualBlock create(ParamSet<T>& ps, const std::string& name, int in, int out, int stride) {
    ResidualBlock b;
    b.conv1 = Conv2d::create(ps, name + ".conv1", in, out, 3, stride);
    b.conv2 = Conv2d::create(ps, name + ".conv2", out, out, 3, 1);
    if (stride != 1 || in != out) b.proj = Conv2d::create(ps, name + ".proj", in, out, 1, stride);
    return b;
  }

  template <class T, class Rng>
  void init(ParamSet<T>& ps, Rng& rng) const {
    conv1.init(ps, rng);
    conv2.init(ps, rng);
    if (proj) proj->init(ps, rng);
  }

  std::size_t param_count() const {
    return conv1.param_count() + conv2.param_count() + (proj ? proj->param_count() : 0);
  }
  int out_dim(int d) const { return conv1.out_dim(d); }

  template <class T>
  Tensor<T> forward(const ParamSet<T>& ps, const Tensor<T>& x, ResidualCache<T>& cache) const {
    cache.hidden = conv1.forward(ps, x, cache.conv1);
    relu_inplace(cache.hidden.data(), cache.hidden.size());
    Tensor<T> y = conv2.forward(ps, cache.hidden, cache.conv2);
    if (proj) {
      const Tensor<T> skip = proj->forward(ps, x, cache.proj);
      VecMap<T>(y.data(), static_cast<Eigen::Index>(y.size())) += ConstVecMap<T>(skip.data(), static_cast<Eigen::Index>(skip.size()));
    } else {
      if (x.shape() != y.shape()) throw std::invalid_argument("residual: identity skip shape mismatch");
      VecMap<T>(y.data(), static_cast<Eigen::Index>(y.size())) += ConstVecMap<T>(x.data(), static_cast<Eigen::Index>(x.size()));
    }
    relu_inplace(y.data(), y.size());
    cache.output = y;
    return y;
  }

  template <class T>
  Tensor<T> forward(const ParamSet<T>& ps, const Tensor<T>& x) const {
    ResidualCache<T> cache;
    return forward(ps, x, cache);
  }

  template <class T>
  Tensor<T> backward(ParamSet<T>& ps, const ResidualCache<T>& cache, Tensor<T> gy, bool need_input_grad = true) const {
    relu_backward_inplace(cache.output.data(), gy.data(), gy.size());
    Tensor<T> gh = conv2.backward(ps, cache.conv2, gy);
    relu_backward_inplace(cache.hidden.data(), gh.data(), gh.size());
    Tensor<T> gx = conv1.backward(ps, cache.conv1, gh, need_input_grad);
    if (proj) {
      Tensor<T> gskip = proj->backward(ps, cache.proj, gy, need_input_grad);
      if (need_input_grad)
        VecMap<T>(gx.data(), static_cast<Eigen::Index>(gx.size())) += ConstVecMap<T>(gskip.data(), static_cast<Eigen::Index>(gskip.size()));
    } else if (need_input_grad) {
      VecMap<T>(gx.data(), static_cast<Eigen::Index>(gx.size())) += ConstVecMap<T>(gy.data(), static_cast<Eigen::Index>(gy.size()));
    }
    return gx;
  }
};

/// Non-overlapping average pooling with a square window.
struct AvgPool {
  int window = 2;

  template <class T>
  Tensor<T> forward(const Tensor<T>& x) const {
    if (x.rank() != 3 || x.dim(1) % window || x.dim(2) % window)
      throw std::invalid_argument("avgpool: spatial dims must be divisible by the window");
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2), oh = H / window, ow = W / window;
    Tensor<T> y({C, oh, ow});
    const T scale = T(1) / static_cast<T>(window * window);
    for (int c = 0; c < C; ++c)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          T s = 0;
          for (int dy = 0; dy < window; ++dy)
            for (int dx = 0; dx < window; ++dx)
              s += x[(static_cast<std::size_t>(c) * H + oy * window + dy) * W + ox * window + dx];
          y[(static_cast<std::size_t>(c) * oh + oy) * ow + ox] = s * scale;
        }
    return y;
  }

  template <class T>
  Tensor<T> backward(const std::vector<int>& input_shape, const Tensor<T>& gy) const {
    const int C = input_shape[0], H = input_shape[1], W = input_shape[2], oh = H / window, ow = W / window;
    Tensor<T> gx(input_shape);
    const T scale = T(1) / static_cast<T>(window * window);
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          gx[(static_cast<std::size_t>(c) * H + y) * W + x] =
              gy[(static_cast<std::size_t>(c) * oh + y / window) * ow + x / window] * scale;
    return gx;
  }
};

/// Loss and gradient for one row of 8 logits against a class index 0..7.
template <class T>
T softmax_cross_entropy_row(const T* logits, int label, T* grad, int classes = 8) {
  if (label < 0 || label >= classes) throw std::out_of_range("softmax_cross_entropy: label out of range");
  T mx = logits[0];
  for (int i = 1; i < classes; ++i) mx = std::max(mx, logits[i]);
  T z = 0;
  for (int i = 0; i < classes; ++i) z += std::exp(logits[i] - mx);
  const T log_z = std::log(z) + mx;
  if (grad) {
    for (int i = 0; i < classes; ++i) grad[i] = std::exp(logits[i] - log_z);
    grad[label] -= T(1);
  }
  return log_z - logits[label];
}

template <class T>
struct LossAndGrad {
  T loss;
  Tensor<T> grad;
};

/// Cross-entropy of one logit vector against an action id 1..8.
template <class T>
LossAndGrad<T> softmax_cross_entropy(const Tensor<T>& logits, int action_id) {
  if (logits.size() != 8) throw std::invalid_argument("softmax_cross_entropy: expected 8 logits");
  if (action_id < 1 || action_id > 8) throw std::out_of_range("softmax_cross_entropy: label out of range");
  Tensor<T> grad({8});
  const T loss = softmax_cross_entropy_row(logits.data(), action_id - 1, grad.data());
  return {loss, std::move(grad)};
}

template <class T>
Tensor<T> softmax(const Tensor<T>& logits) {
  Tensor<T> p(logits.shape());
  T mx = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
  T z = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
  for (auto& v : p.vec()) v /= z;
  return p;
}

/// Index of the largest entry, lowest index on ties.
template <class T>
int argmax(const T* x, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (x[i] > x[best]) best = i;
  return best;
}

// Free-function forms over explicit weight tensors.

/// Input [C,H,W], weights [O,C,3,3], bias [O]; padding 1.
template <class T>
Tensor<T> conv3x3(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride) {
  if (w.rank() != 4 || w.dim(2) != 3 || w.dim(3) != 3 || b.size() != static_cast<std::size_t>(w.dim(0)))
    throw std::invalid_argument("conv3x3: weights must be [O,C,3,3] with bias [O]");
  ParamSet<T> ps;
  const Conv2d c = Conv2d::create(ps, "conv", w.dim(1), w.dim(0), 3, stride);
  ps[c.weight].value = w;
  ps[c.bias].value = b;
  return c.forward(ps, x);
}

/// W [out,in], b [out], x [in] or [n,in].
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& b) {
  if (W.rank() != 2 || b.size() != static_cast<std::size_t>(W.dim(0)))
    throw std::invalid_argument("linear: weights must be [out,in] with bias [out]");
  ParamSet<T> ps;
  const Linear l = Linear::create(ps, "linear", W.dim(1), W.dim(0));
  ps[l.weight].value = W;
  ps[l.bias].value = b;
  return l.forward(ps, x);
}

}  // namespace hupa::nn
