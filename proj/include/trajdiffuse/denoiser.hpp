#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "trajdiffuse/core.hpp"
#include "trajdiffuse/nn/ops.hpp"

namespace trajdiffuse {

/// Shape of the denoiser network. Everything here determines the parameter
/// layout; two descriptors that compare equal produce identical layouts.
struct Architecture {
  std::size_t horizon = 20;  ///< trajectory length T
  std::size_t n_steps = 25;  ///< largest admissible step index
  std::vector<std::size_t> widths{32, 64, 128};
  std::size_t blocks_per_level = 2;
  std::size_t kernel = 5;
  std::size_t groups = 8;
  std::size_t embed_dim = 32;
  std::size_t channels = 2;

  std::size_t levels() const { return widths.size(); }
  std::size_t downsample_factor() const { return std::size_t{1} << (levels() - 1); }
  std::size_t bottleneck_len() const { return horizon / downsample_factor(); }

  void validate() const {
    if (widths.empty()) throw ShapeError("architecture needs at least one level");
    if (horizon == 0 || horizon % downsample_factor() != 0)
      throw ShapeError("trajectory length " + std::to_string(horizon) + " not divisible by downsampling factor " +
                       std::to_string(downsample_factor()));
    if (kernel % 2 == 0) throw ShapeError("kernel length must be odd");
    if (blocks_per_level == 0) throw ShapeError("blocks_per_level must be >= 1");
    if (n_steps == 0) throw ShapeError("n_steps must be >= 1");
    for (auto w : widths)
      if (w == 0 || w % groups != 0) throw ShapeError("channel width " + std::to_string(w) + " not divisible by groups");
  }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

namespace detail {

template <class S>
struct BlockCache {
  nn::ConvCache<S> conv;
  nn::NormCache<S> norm;
  nn::Mat<S> pre;
};

/// Conv -> GroupNorm -> Mish.
struct ConvBlock {
  nn::Conv1d conv;
  nn::GroupNorm norm;

  static ConvBlock make(nn::ParamLayout& l, const std::string& name, std::size_t in, std::size_t out,
                        std::size_t kernel, std::size_t groups) {
    return {nn::Conv1d::make(l, name + ".conv", in, out, kernel, 1, kernel / 2),
            nn::GroupNorm::make(l, name + ".norm", out, groups)};
  }

  template <class S>
  nn::Mat<S> forward(const S* p, const nn::Mat<S>& x, BlockCache<S>& c) const {
    c.pre = norm.forward(p, conv.forward(p, x, c.conv), c.norm);
    return nn::mish(c.pre);
  }

  template <class S>
  nn::Mat<S> backward(const S* p, S* g, const BlockCache<S>& c, const nn::Mat<S>& dy) const {
    return conv.backward(p, g, c.conv, norm.backward(p, g, c.norm, nn::mish_backward(c.pre, dy)));
  }
};

template <class S>
struct ResCache {
  BlockCache<S> b1, b2;
  nn::ConvCache<S> skip;
};

/// Two conv blocks with an additive step-embedding projection in between and
/// a 1x1-conv (or identity) residual path.
struct ResBlock {
  ConvBlock b1, b2;
  nn::Linear step_proj;
  bool has_skip = false;
  nn::Conv1d skip;

  static ResBlock make(nn::ParamLayout& l, const std::string& name, std::size_t in, std::size_t out,
                       const Architecture& a) {
    ResBlock r;
    r.b1 = ConvBlock::make(l, name + ".block1", in, out, a.kernel, a.groups);
    r.step_proj = nn::Linear::make(l, name + ".step_proj", a.embed_dim, out);
    r.b2 = ConvBlock::make(l, name + ".block2", out, out, a.kernel, a.groups);
    r.has_skip = in != out;
    if (r.has_skip) r.skip = nn::Conv1d::make(l, name + ".skip", in, out, 1, 1, 0);
    return r;
  }

  template <class S>
  nn::Mat<S> forward(const S* p, const nn::Mat<S>& x, const nn::Vec<S>& step_act, ResCache<S>& c) const {
    nn::Mat<S> h = b1.forward(p, x, c.b1);
    h.colwise() += step_proj.forward(p, step_act);
    nn::Mat<S> y = b2.forward(p, h, c.b2);
    if (has_skip)
      y += skip.forward(p, x, c.skip);
    else
      y += x;
    return y;
  }

  template <class S>
  nn::Mat<S> backward(const S* p, S* g, const ResCache<S>& c, const nn::Vec<S>& step_act, const nn::Mat<S>& dy,
                      nn::Vec<S>& d_step_act) const {
    const nn::Mat<S> dh = b2.backward(p, g, c.b2, dy);
    d_step_act += step_proj.backward(p, g, step_act, nn::Vec<S>(dh.rowwise().sum()));
    nn::Mat<S> dx = b1.backward(p, g, c.b1, dh);
    if (has_skip)
      dx += skip.backward(p, g, c.skip, dy);
    else
      dx += dy;
    return dx;
  }
};

}  // namespace detail

/// Intermediate activations of one forward pass, consumed by backward.
template <class S>
struct UNetCache {
  nn::Vec<S> embed, hidden_pre, step_pre, step_act;
  std::vector<detail::ResCache<S>> enc, dec;
  std::vector<nn::ConvCache<S>> down, up;
  detail::ResCache<S> mid1, mid2;
  nn::AttnCache<S> attn;
  detail::BlockCache<S> head;
  nn::ConvCache<S> out;
};

/// 1-D U-Net over a channels x T signal predicting the clean trajectory.
///
/// Encoder: per level, `blocks_per_level` residual blocks then a stride-2
/// conv (except at the last level). Bottleneck: residual block, cross-channel
/// attention, residual block. Decoder mirrors the encoder with concatenated
/// skips and nearest-neighbour upsampling followed by a conv. The output conv
/// is added to the input, so a zero output layer makes the net the identity.
class UNet1d {
public:
  explicit UNet1d(Architecture arch) : arch_(std::move(arch)) {
    arch_.validate();
    const auto& a = arch_;
    const std::size_t e = a.embed_dim;
    embed1_ = nn::Linear::make(layout_, "step_mlp.0", e, 4 * e);
    embed2_ = nn::Linear::make(layout_, "step_mlp.1", 4 * e, e);

    std::size_t ch = a.channels;
    for (std::size_t l = 0; l < a.levels(); ++l) {
      for (std::size_t b = 0; b < a.blocks_per_level; ++b) {
        enc_.push_back(detail::ResBlock::make(layout_, name("enc", l, b), ch, a.widths[l], a));
        ch = a.widths[l];
      }
      if (l + 1 < a.levels()) down_.push_back(nn::Conv1d::make(layout_, level("down", l), ch, ch, 3, 2, 1));
    }
    const std::size_t bottom = a.widths.back();
    mid1_ = detail::ResBlock::make(layout_, "mid.0", bottom, bottom, a);
    attn_ = nn::ChannelAttention::make(layout_, "mid.attn", a.bottleneck_len());
    mid2_ = detail::ResBlock::make(layout_, "mid.1", bottom, bottom, a);

    for (std::size_t l = a.levels(); l-- > 0;) {
      const std::size_t w = a.widths[l];
      for (std::size_t b = 0; b < a.blocks_per_level; ++b)
        dec_.push_back(detail::ResBlock::make(layout_, name("dec", l, b), b == 0 ? 2 * w : w, w, a));
      if (l > 0) up_.push_back(nn::Conv1d::make(layout_, level("up", l), w, a.widths[l - 1], a.kernel, 1, a.kernel / 2));
    }
    head_ = detail::ConvBlock::make(layout_, "head", a.widths[0], a.widths[0], a.kernel, a.groups);
    out_ = nn::Conv1d::make(layout_, "out", a.widths[0], a.channels, 1, 1, 0);
  }

  const Architecture& arch() const { return arch_; }
  const nn::ParamLayout& layout() const { return layout_; }
  std::size_t parameter_count() const { return layout_.total(); }

  /// Offsets of the output conv, zeroed for near-identity initialisation.
  const nn::Conv1d& output_layer() const { return out_; }

  /// x: channels x T, standardised and conditioned. Returns the clean estimate.
  template <class S>
  nn::Mat<S> forward(std::span<const S> params, const nn::Mat<S>& x, std::size_t step, UNetCache<S>& c) const {
    check_inputs(params.size(), x, step);
    const S* p = params.data();
    const auto& a = arch_;

    c.embed = nn::sinusoidal_embedding<S>(step, a.embed_dim);
    c.hidden_pre = embed1_.forward(p, c.embed);
    c.step_pre = embed2_.forward(p, nn::Vec<S>(nn::mish(c.hidden_pre)));
    c.step_act = nn::mish(c.step_pre);

    c.enc.resize(enc_.size());
    c.dec.resize(dec_.size());
    c.down.resize(down_.size());
    c.up.resize(up_.size());

    std::vector<nn::Mat<S>> skips;
    nn::Mat<S> h = x;
    std::size_t bi = 0;
    for (std::size_t l = 0; l < a.levels(); ++l) {
      for (std::size_t b = 0; b < a.blocks_per_level; ++b, ++bi) h = enc_[bi].forward(p, h, c.step_act, c.enc[bi]);
      skips.push_back(h);
      if (l + 1 < a.levels()) h = down_[l].forward(p, h, c.down[l]);
    }
    h = mid1_.forward(p, h, c.step_act, c.mid1);
    h = attn_.forward(p, h, c.attn);
    h = mid2_.forward(p, h, c.step_act, c.mid2);

    bi = 0;
    std::size_t ui = 0;
    for (std::size_t l = a.levels(); l-- > 0;) {
      nn::Mat<S> cat(h.rows() + skips[l].rows(), h.cols());
      cat << h, skips[l];
      h = std::move(cat);
      for (std::size_t b = 0; b < a.blocks_per_level; ++b, ++bi) h = dec_[bi].forward(p, h, c.step_act, c.dec[bi]);
      if (l > 0) {
        h = up_[ui].forward(p, nn::upsample_nearest(h), c.up[ui]);
        ++ui;
      }
    }
    h = head_.forward(p, h, c.head);
    return x + out_.forward(p, h, c.out);
  }

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
  /// Returns d(loss)/d(x).
  template <class S>
  nn::Mat<S> backward(std::span<const S> params, const UNetCache<S>& c, const nn::Mat<S>& dout,
                      std::span<S> grad) const {
    if (grad.size() != layout_.total() || params.size() != layout_.total())
      throw ShapeError("denoiser backward: parameter/gradient buffer size mismatch");
    if (dout.rows() != static_cast<Eigen::Index>(arch_.channels) ||
        dout.cols() != static_cast<Eigen::Index>(arch_.horizon))
      throw ShapeError("denoiser backward: upstream gradient shape mismatch");
    const S* p = params.data();
    S* g = grad.data();
    const auto& a = arch_;
    nn::Vec<S> d_step = nn::Vec<S>::Zero(static_cast<Eigen::Index>(a.embed_dim));

    nn::Mat<S> dx_total = dout;
    nn::Mat<S> dh = head_.backward(p, g, c.head, out_.backward(p, g, c.out, dout));

    std::vector<nn::Mat<S>> dskips(a.levels());
    std::size_t bi = dec_.size();
    std::size_t ui = up_.size();
    for (std::size_t l = 0; l < a.levels(); ++l) {
      if (l > 0) {
        --ui;
        dh = nn::upsample_nearest_backward<S>(up_[ui].backward(p, g, c.up[ui], dh));
      }
      for (std::size_t b = 0; b < a.blocks_per_level; ++b) {
        --bi;
        dh = dec_[bi].backward(p, g, c.dec[bi], c.step_act, dh, d_step);
      }
      const auto w = static_cast<Eigen::Index>(a.widths[l]);
      dskips[l] = dh.bottomRows(dh.rows() - w);
      dh = nn::Mat<S>(dh.topRows(w));
    }

    dh = mid2_.backward(p, g, c.mid2, c.step_act, dh, d_step);
    dh = attn_.backward(p, g, c.attn, dh);
    dh = mid1_.backward(p, g, c.mid1, c.step_act, dh, d_step);

    bi = enc_.size();
    for (std::size_t l = a.levels(); l-- > 0;) {
      if (l + 1 < a.levels()) dh = down_[l].backward(p, g, c.down[l], dh);
      dh += dskips[l];
      for (std::size_t b = 0; b < a.blocks_per_level; ++b) {
        --bi;
        dh = enc_[bi].backward(p, g, c.enc[bi], c.step_act, dh, d_step);
      }
    }
    dx_total += dh;

    const nn::Vec<S> d_step_pre = nn::mish_backward(c.step_pre, d_step);
    const nn::Vec<S> hidden_act = nn::mish(c.hidden_pre);
    const nn::Vec<S> d_hidden = nn::mish_backward(c.hidden_pre, embed2_.backward(p, g, hidden_act, d_step_pre));
    embed1_.backward(p, g, c.embed, d_hidden);
    return dx_total;
  }

private:
  static std::string level(const char* what, std::size_t l) { return std::string(what) + "." + std::to_string(l); }
  static std::string name(const char* what, std::size_t l, std::size_t b) {
    return level(what, l) + "." + std::to_string(b);
  }

  template <class S>
  void check_inputs(std::size_t n_params, const nn::Mat<S>& x, std::size_t step) const {
    if (n_params != layout_.total()) throw ShapeError("denoiser: parameter buffer size mismatch");
    if (x.rows() != static_cast<Eigen::Index>(arch_.channels)) throw ShapeError("denoiser: wrong channel count");
    const auto len = static_cast<std::size_t>(x.cols());
    if (len % arch_.downsample_factor() != 0)
      throw ShapeError("trajectory length " + std::to_string(len) + " not divisible by downsampling factor " +
                       std::to_string(arch_.downsample_factor()));
    if (len != arch_.horizon)
      throw ShapeError("trajectory length " + std::to_string(len) + " != model horizon " +
                       std::to_string(arch_.horizon));
    if (step < 1 || step > arch_.n_steps)
      throw ShapeError("step index " + std::to_string(step) + " outside [1, " + std::to_string(arch_.n_steps) + "]");
  }

  Architecture arch_;
  nn::ParamLayout layout_;
  nn::Linear embed1_, embed2_;
  std::vector<detail::ResBlock> enc_, dec_;
  std::vector<nn::Conv1d> down_, up_;
  detail::ResBlock mid1_, mid2_;
  nn::ChannelAttention attn_;
  detail::ConvBlock head_;
  nn::Conv1d out_;
};

/// Network topology together with its flat parameter buffer.
template <class S>
class DenoiserParams {
public:
  explicit DenoiserParams(Architecture arch) : net_(std::move(arch)), values_(net_.parameter_count(), S(0)) {}

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases, unit
  /// norm scales, zero norm shifts. With `zero_output` the output conv starts
  /// at zero.
  static DenoiserParams initialized(Architecture arch, std::uint64_t seed, bool zero_output = true) {
    DenoiserParams d(std::move(arch));
    std::mt19937_64 rng(seed);
    const auto& entries = d.net_.layout().entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      auto span = d.tensor(e);
      const bool is_gamma = e.name.ends_with(".gamma");
      const bool is_beta = e.name.ends_with(".beta");
      if (is_gamma || is_beta) {
        std::fill(span.begin(), span.end(), S(is_gamma ? 1 : 0));
        continue;
      }
      // Bias fan-in comes from the weight registered just before it.
      const auto& w = e.name.ends_with(".bias") && i > 0 ? entries[i - 1] : e;
      std::size_t fan_in = 1;
      for (std::size_t k = 1; k < w.shape.size(); ++k) fan_in *= w.shape[k];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (auto& v : span) v = static_cast<S>(u(rng));
    }
    if (zero_output) {
      const auto& out = d.net_.output_layer();
      std::fill_n(d.values_.begin() + static_cast<std::ptrdiff_t>(out.w), out.out * out.in * out.kernel, S(0));
      std::fill_n(d.values_.begin() + static_cast<std::ptrdiff_t>(out.b), out.out, S(0));
    }
    return d;
  }

  const Architecture& arch() const { return net_.arch(); }
  const UNet1d& net() const { return net_; }
  const nn::ParamLayout& layout() const { return net_.layout(); }
  std::vector<S>& values() { return values_; }
  const std::vector<S>& values() const { return values_; }

  std::span<S> tensor(const nn::ParamEntry& e) { return {values_.data() + e.offset, e.size}; }
  std::span<const S> tensor(const nn::ParamEntry& e) const { return {values_.data() + e.offset, e.size}; }
  std::span<S> tensor(const std::string& name) { return tensor(layout().find(name)); }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](S v) { return std::isfinite(static_cast<double>(v)); });
  }

  friend bool operator==(const DenoiserParams& a, const DenoiserParams& b) {
    return a.arch() == b.arch() && a.values_ == b.values_;
  }

private:
  UNet1d net_;
  std::vector<S> values_;
};

namespace detail {
template <class S>
nn::Mat<S> sample_matrix(const TrajBatch& b, std::size_t k) {
  nn::Mat<S> m(2, static_cast<Eigen::Index>(b.frames()));
  for (std::size_t t = 0; t < b.frames(); ++t) {
    m(0, static_cast<Eigen::Index>(t)) = static_cast<S>(b(k, t, 0));
    m(1, static_cast<Eigen::Index>(t)) = static_cast<S>(b(k, t, 1));
  }
  return m;
}
}  // namespace detail

/// Runs the denoiser on every sample of a standardised, conditioned batch.
template <class S>
TrajBatch denoiser_forward(const DenoiserParams<S>& params, const TrajBatch& x_cond, std::size_t step) {
  TrajBatch out(x_cond.k(), x_cond.t_obs(), x_cond.t_pred());
  UNetCache<S> cache;
  for (std::size_t k = 0; k < x_cond.k(); ++k) {
    const auto y = params.net().forward(std::span<const S>(params.values()), detail::sample_matrix<S>(x_cond, k), step,
                                        cache);
    for (std::size_t t = 0; t < out.frames(); ++t) {
      out(k, t, 0) = static_cast<double>(y(0, static_cast<Eigen::Index>(t)));
      out(k, t, 1) = static_cast<double>(y(1, static_cast<Eigen::Index>(t)));
    }
  }
  return out;
}

/// Gradient of sum(upstream * forward(x_cond)) with respect to every parameter.
template <class S>
std::vector<S> denoiser_backward(const DenoiserParams<S>& params, const TrajBatch& x_cond, std::size_t step,
                                 const TrajBatch& upstream) {
  if (!x_cond.same_shape(upstream)) throw ShapeError("denoiser_backward: upstream gradient shape mismatch");
  std::vector<S> grad(params.values().size(), S(0));
  UNetCache<S> cache;
  for (std::size_t k = 0; k < x_cond.k(); ++k) {
    params.net().forward(std::span<const S>(params.values()), detail::sample_matrix<S>(x_cond, k), step, cache);
    params.net().backward(std::span<const S>(params.values()), cache, detail::sample_matrix<S>(upstream, k),
                          std::span<S>(grad));
  }
  return grad;
}

}  // namespace trajdiffuse
