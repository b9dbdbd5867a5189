#pragma once

// Layer primitives for the 1-D U-Net. Layers only store shapes and offsets
// into a flat parameter buffer; forward passes fill a cache that the matching
// backward pass consumes. Feature maps are C x L matrices.

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "trajdiffuse/core.hpp"

namespace trajdiffuse::nn {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <class S>
using ConstWeights = Eigen::Map<const RowMat<S>>;
template <class S>
using Weights = Eigen::Map<RowMat<S>>;
template <class S>
using ConstBias = Eigen::Map<const Vec<S>>;
template <class S>
using Bias = Eigen::Map<Vec<S>>;

struct ParamEntry {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Ordered registry of named tensors packed into one flat buffer.
class ParamLayout {
public:
  std::size_t add(std::string name, std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    entries_.push_back({std::move(name), std::move(shape), total_, n});
    total_ += n;
    return entries_.back().offset;
  }
  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::size_t total() const { return total_; }

  const ParamEntry& find(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return e;
    throw Error("no parameter named '" + name + "'");
  }

private:
  std::vector<ParamEntry> entries_;
  std::size_t total_ = 0;
};

// ---------------------------------------------------------------------------
// Activations

template <class S>
S softplus(S x) {
  return x > S(20) ? x : std::log1p(std::exp(x));
}

template <class S>
S mish_value(S x) {
  return x * std::tanh(softplus(x));
}

template <class S>
S mish_derivative(S x) {
  const S t = std::tanh(softplus(x));
  const S sig = S(1) / (S(1) + std::exp(-x));
  return t + x * (S(1) - t * t) * sig;
}

template <class Derived>
auto mish(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return x.unaryExpr([](S v) { return mish_value(v); }).eval();
}

template <class D1, class D2>
auto mish_backward(const Eigen::MatrixBase<D1>& pre, const Eigen::MatrixBase<D2>& dy) {
  using S = typename D1::Scalar;
  return pre.unaryExpr([](S v) { return mish_derivative(v); }).cwiseProduct(dy).eval();
}

// ---------------------------------------------------------------------------
// Conv1d: weight out x in x kernel (row-major), bias out.

template <class S>
struct ConvCache {
  Mat<S> cols;
  std::size_t in_len = 0;
};

struct Conv1d {
  std::size_t in = 0, out = 0, kernel = 1, stride = 1, pad = 0;
  std::size_t w = 0, b = 0;

  static Conv1d make(ParamLayout& layout, const std::string& name, std::size_t in, std::size_t out,
                     std::size_t kernel, std::size_t stride, std::size_t pad) {
    Conv1d c{in, out, kernel, stride, pad, 0, 0};
    c.w = layout.add(name + ".weight", {out, in, kernel});
    c.b = layout.add(name + ".bias", {out});
    return c;
  }

  std::size_t out_len(std::size_t len) const { return (len + 2 * pad - kernel) / stride + 1; }

  template <class S>
  Mat<S> forward(const S* p, const Mat<S>& x, ConvCache<S>& cache) const {
    const auto len = static_cast<std::size_t>(x.cols());
    const std::size_t lo = out_len(len);
    cache.in_len = len;
    cache.cols.setZero(static_cast<Eigen::Index>(in * kernel), static_cast<Eigen::Index>(lo));
    for (std::size_t c = 0; c < in; ++c)
      for (std::size_t j = 0; j < kernel; ++j)
        for (std::size_t t = 0; t < lo; ++t) {
          const auto src = static_cast<std::ptrdiff_t>(t * stride + j) - static_cast<std::ptrdiff_t>(pad);
          if (src >= 0 && src < static_cast<std::ptrdiff_t>(len))
            cache.cols(static_cast<Eigen::Index>(c * kernel + j), static_cast<Eigen::Index>(t)) =
                x(static_cast<Eigen::Index>(c), src);
        }
    ConstWeights<S> wm(p + w, static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in * kernel));
    ConstBias<S> bv(p + b, static_cast<Eigen::Index>(out));
    Mat<S> y = wm * cache.cols;
    y.colwise() += bv;
    return y;
  }

  template <class S>
  Mat<S> backward(const S* p, S* g, const ConvCache<S>& cache, const Mat<S>& dy) const {
    ConstWeights<S> wm(p + w, static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in * kernel));
    Weights<S> gw(g + w, static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in * kernel));
    Bias<S> gb(g + b, static_cast<Eigen::Index>(out));
    gw.noalias() += dy * cache.cols.transpose();
    gb += dy.rowwise().sum();
    const Mat<S> dcols = wm.transpose() * dy;
    Mat<S> dx = Mat<S>::Zero(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(cache.in_len));
    const auto lo = static_cast<std::size_t>(dy.cols());
    for (std::size_t c = 0; c < in; ++c)
      for (std::size_t j = 0; j < kernel; ++j)
        for (std::size_t t = 0; t < lo; ++t) {
          const auto src = static_cast<std::ptrdiff_t>(t * stride + j) - static_cast<std::ptrdiff_t>(pad);
          if (src >= 0 && src < static_cast<std::ptrdiff_t>(cache.in_len))
            dx(static_cast<Eigen::Index>(c), src) +=
                dcols(static_cast<Eigen::Index>(c * kernel + j), static_cast<Eigen::Index>(t));
        }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// GroupNorm over (channels-in-group x length), per-channel affine.

template <class S>
struct NormCache {
  Mat<S> xhat;
  Vec<S> rstd;
};

struct GroupNorm {
  static constexpr double kEps = 1e-5;
  std::size_t channels = 0, groups = 1;
  std::size_t gamma = 0, beta = 0;

  static GroupNorm make(ParamLayout& layout, const std::string& name, std::size_t channels, std::size_t groups) {
    if (groups == 0 || channels % groups != 0)
      throw ShapeError("GroupNorm: " + std::to_string(channels) + " channels not divisible into " +
                       std::to_string(groups) + " groups");
    GroupNorm n{channels, groups, 0, 0};
    n.gamma = layout.add(name + ".gamma", {channels});
    n.beta = layout.add(name + ".beta", {channels});
    return n;
  }

  template <class S>
  Mat<S> forward(const S* p, const Mat<S>& x, NormCache<S>& cache) const {
    const auto per = static_cast<Eigen::Index>(channels / groups);
    const Eigen::Index len = x.cols();
    const S count = static_cast<S>(per * len);
    cache.xhat.resize(x.rows(), len);
    cache.rstd.resize(static_cast<Eigen::Index>(groups));
    Mat<S> y(x.rows(), len);
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const auto r0 = static_cast<Eigen::Index>(gi) * per;
      auto blk = x.middleRows(r0, per);
      const S mean = blk.sum() / count;
      const S var = (blk.array() - mean).square().sum() / count;
      const S rstd = S(1) / std::sqrt(var + static_cast<S>(kEps));
      cache.rstd(static_cast<Eigen::Index>(gi)) = rstd;
      cache.xhat.middleRows(r0, per) = (blk.array() - mean) * rstd;
    }
    for (Eigen::Index c = 0; c < x.rows(); ++c)
      y.row(c) = cache.xhat.row(c).array() * p[gamma + static_cast<std::size_t>(c)] +
                 p[beta + static_cast<std::size_t>(c)];
    return y;
  }

  template <class S>
  Mat<S> backward(const S* p, S* g, const NormCache<S>& cache, const Mat<S>& dy) const {
    const auto per = static_cast<Eigen::Index>(channels / groups);
    const Eigen::Index len = dy.cols();
    const S count = static_cast<S>(per * len);
    Mat<S> dxhat(dy.rows(), len);
    for (Eigen::Index c = 0; c < dy.rows(); ++c) {
      g[gamma + static_cast<std::size_t>(c)] += dy.row(c).dot(cache.xhat.row(c));
      g[beta + static_cast<std::size_t>(c)] += dy.row(c).sum();
      dxhat.row(c) = dy.row(c) * p[gamma + static_cast<std::size_t>(c)];
    }
    Mat<S> dx(dy.rows(), len);
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const auto r0 = static_cast<Eigen::Index>(gi) * per;
      auto dh = dxhat.middleRows(r0, per);
      auto xh = cache.xhat.middleRows(r0, per);
      const S sum_dh = dh.sum();
      const S sum_dh_xh = dh.cwiseProduct(xh).sum();
      const S rstd = cache.rstd(static_cast<Eigen::Index>(gi));
      dx.middleRows(r0, per) = (rstd / count) * (count * dh.array() - sum_dh - xh.array() * sum_dh_xh);
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Dense layer on vectors.

struct Linear {
  std::size_t in = 0, out = 0;
  std::size_t w = 0, b = 0;

  static Linear make(ParamLayout& layout, const std::string& name, std::size_t in, std::size_t out) {
    Linear l{in, out, 0, 0};
    l.w = layout.add(name + ".weight", {out, in});
    l.b = layout.add(name + ".bias", {out});
    return l;
  }

  template <class S>
  Vec<S> forward(const S* p, const Vec<S>& x) const {
    ConstWeights<S> wm(p + w, static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    return wm * x + ConstBias<S>(p + b, static_cast<Eigen::Index>(out));
  }

  /// Accumulates parameter gradients; returns d/dx.
  template <class S>
  Vec<S> backward(const S* p, S* g, const Vec<S>& x, const Vec<S>& dy) const {
    ConstWeights<S> wm(p + w, static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    Weights<S> gw(g + w, static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    gw.noalias() += dy * x.transpose();
    Bias<S>(g + b, static_cast<Eigen::Index>(out)) += dy;
    return wm.transpose() * dy;
  }
};

// ---------------------------------------------------------------------------
// Cross-channel attention: the C channels are tokens of dimension W (the
// feature length). Single head, no positional encoding, residual output.

template <class S>
struct AttnCache {
  Mat<S> x, q, k, v, a;
};

struct ChannelAttention {
  std::size_t width = 0;
  std::size_t wq = 0, wk = 0, wv = 0;

  static ChannelAttention make(ParamLayout& layout, const std::string& name, std::size_t width) {
    ChannelAttention a{width, 0, 0, 0};
    a.wq = layout.add(name + ".query", {width, width});
    a.wk = layout.add(name + ".key", {width, width});
    a.wv = layout.add(name + ".value", {width, width});
    return a;
  }

  template <class S>
  Mat<S> forward(const S* p, const Mat<S>& x, AttnCache<S>& cache) const {
    if (static_cast<std::size_t>(x.cols()) != width)
      throw ShapeError("ChannelAttention: token width " + std::to_string(x.cols()) + " != " + std::to_string(width));
    const auto wdim = static_cast<Eigen::Index>(width);
    cache.x = x;
    cache.q = x * ConstWeights<S>(p + wq, wdim, wdim);
    cache.k = x * ConstWeights<S>(p + wk, wdim, wdim);
    cache.v = x * ConstWeights<S>(p + wv, wdim, wdim);
    Mat<S> scores = cache.q * cache.k.transpose() / std::sqrt(static_cast<S>(width));
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
      const S m = scores.row(r).maxCoeff();
      scores.row(r) = (scores.row(r).array() - m).exp();
      scores.row(r) /= scores.row(r).sum();
    }
    cache.a = std::move(scores);
    return x + cache.a * cache.v;
  }

  template <class S>
  Mat<S> backward(const S* p, S* g, const AttnCache<S>& cache, const Mat<S>& dy) const {
    const auto wdim = static_cast<Eigen::Index>(width);
    const Mat<S> da = dy * cache.v.transpose();
    const Mat<S> dv = cache.a.transpose() * dy;
    Mat<S> ds(da.rows(), da.cols());
    for (Eigen::Index r = 0; r < da.rows(); ++r) {
      const S inner = da.row(r).dot(cache.a.row(r));
      ds.row(r) = cache.a.row(r).array() * (da.row(r).array() - inner);
    }
    ds /= std::sqrt(static_cast<S>(width));
    const Mat<S> dq = ds * cache.k;
    const Mat<S> dk = ds.transpose() * cache.q;
    Weights<S>(g + wq, wdim, wdim).noalias() += cache.x.transpose() * dq;
    Weights<S>(g + wk, wdim, wdim).noalias() += cache.x.transpose() * dk;
    Weights<S>(g + wv, wdim, wdim).noalias() += cache.x.transpose() * dv;
    Mat<S> dx = dy;
    dx.noalias() += dq * ConstWeights<S>(p + wq, wdim, wdim).transpose();
    dx.noalias() += dk * ConstWeights<S>(p + wk, wdim, wdim).transpose();
    dx.noalias() += dv * ConstWeights<S>(p + wv, wdim, wdim).transpose();
    return dx;
  }
};

// ---------------------------------------------------------------------------

/// Sinusoidal encoding of a step index: [sin(i f_j), cos(i f_j)], with
/// frequencies f_j geometrically spaced from 1 down to 1/10000.
template <class S>
Vec<S> sinusoidal_embedding(std::size_t step, std::size_t dim) {
  if (dim < 4 || dim % 2 != 0) throw ShapeError("step embedding dim must be even and >= 4");
  const std::size_t half = dim / 2;
  Vec<S> e(static_cast<Eigen::Index>(dim));
  const double scale = std::log(10000.0) / static_cast<double>(half - 1);
  for (std::size_t j = 0; j < half; ++j) {
    const double arg = static_cast<double>(step) * std::exp(-scale * static_cast<double>(j));
    e(static_cast<Eigen::Index>(j)) = static_cast<S>(std::sin(arg));
    e(static_cast<Eigen::Index>(j + half)) = static_cast<S>(std::cos(arg));
  }
  return e;
}

template <class S>
Mat<S> upsample_nearest(const Mat<S>& x) {
  Mat<S> y(x.rows(), 2 * x.cols());
  for (Eigen::Index t = 0; t < x.cols(); ++t) {
    y.col(2 * t) = x.col(t);
    y.col(2 * t + 1) = x.col(t);
  }
  return y;
}

template <class S>
Mat<S> upsample_nearest_backward(const Mat<S>& dy) {
  Mat<S> dx(dy.rows(), dy.cols() / 2);
  for (Eigen::Index t = 0; t < dx.cols(); ++t) dx.col(t) = dy.col(2 * t) + dy.col(2 * t + 1);
  return dx;
}

}  // namespace trajdiffuse::nn
