#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "trajdiffuse/denoiser.hpp"

namespace td = trajdiffuse;
namespace nn = trajdiffuse::nn;

namespace {

td::TrajBatch random_input(std::size_t t_obs, std::size_t t_pred, std::uint64_t seed, std::size_t k = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  td::TrajBatch b(k, t_obs, t_pred);
  for (auto& v : b.data()) v = n(rng);
  return b;
}

td::Architecture small_arch() {
  td::Architecture a;
  a.horizon = 20;
  a.n_steps = 25;
  a.widths = {8, 16, 16};
  a.kernel = 5;
  a.groups = 4;
  a.embed_dim = 8;
  return a;
}

}  // namespace

TEST(Denoiser, ZeroOutputLayerIsIdentity) {
  const auto p = td::DenoiserParams<double>::initialized(small_arch(), 3, /*zero_output=*/true);
  const auto x = random_input(8, 12, 1, 3);
  EXPECT_EQ(td::denoiser_forward(p, x, 7), x);
}

TEST(Denoiser, StepEmbeddingReachesOutput) {
  const auto p = td::DenoiserParams<double>::initialized(small_arch(), 3, /*zero_output=*/false);
  const auto x = random_input(8, 12, 2);
  const auto a = td::denoiser_forward(p, x, 1);
  const auto b = td::denoiser_forward(p, x, 25);
  double max_diff = 0;
  for (std::size_t j = 0; j < a.size(); ++j) max_diff = std::max(max_diff, std::abs(a.data()[j] - b.data()[j]));
  EXPECT_GT(max_diff, 0.0);
}

TEST(Denoiser, InternalLengthsHalveAndRestore) {
  td::DenoiserParams<float> p(td::Architecture{});
  td::UNetCache<float> cache;
  nn::Mat<float> x = nn::Mat<float>::Random(2, 20);
  const auto y = p.net().forward(std::span<const float>(p.values()), x, 3, cache);
  ASSERT_EQ(cache.down.size(), 2u);
  EXPECT_EQ(cache.down[0].in_len, 20u);
  EXPECT_EQ(cache.down[1].in_len, 10u);
  EXPECT_EQ(cache.attn.x.cols(), 5);
  EXPECT_EQ(cache.up[0].cols.cols(), 10);
  EXPECT_EQ(cache.up[1].cols.cols(), 20);
  EXPECT_EQ(y.cols(), 20);
  EXPECT_EQ(y.rows(), 2);
}

TEST(Denoiser, DefaultArchitectureHasSixEncoderBlocks) {
  const td::UNet1d net{td::Architecture{}};
  std::size_t enc_blocks = 0, dec_blocks = 0;
  for (const auto& e : net.layout().entries()) {
    if (e.name.starts_with("enc.") && e.name.ends_with(".block1.conv.weight")) ++enc_blocks;
    if (e.name.starts_with("dec.") && e.name.ends_with(".block1.conv.weight")) ++dec_blocks;
  }
  EXPECT_EQ(enc_blocks, 6u);
  EXPECT_EQ(dec_blocks, 6u);
  EXPECT_EQ(net.layout().find("enc.0.0.block1.conv.weight").shape, (std::vector<std::size_t>{32, 2, 5}));
  EXPECT_EQ(net.layout().find("mid.attn.query").shape, (std::vector<std::size_t>{5, 5}));
}

TEST(Denoiser, ParameterCountIsDeterministic) {
  EXPECT_EQ(td::UNet1d(small_arch()).parameter_count(), td::UNet1d(small_arch()).parameter_count());
  EXPECT_EQ(td::DenoiserParams<float>::initialized(small_arch(), 5),
            td::DenoiserParams<float>::initialized(small_arch(), 5));
}

TEST(Denoiser, ShapePreservedForAdmissibleLengths) {
  for (std::size_t horizon : {4u, 8u, 12u, 20u, 32u}) {
    auto a = small_arch();
    a.horizon = horizon;
    const auto p = td::DenoiserParams<double>::initialized(a, 1, false);
    const auto x = random_input(horizon / 2, horizon - horizon / 2, horizon, 2);
    const auto y = td::denoiser_forward(p, x, 2);
    EXPECT_TRUE(y.same_shape(x));
    EXPECT_TRUE(y.all_finite());
  }
}

TEST(Denoiser, RejectsBadInputs) {
  auto a = small_arch();
  a.horizon = 18;
  EXPECT_THROW(td::UNet1d{a}, td::ShapeError);

  const auto p = td::DenoiserParams<double>::initialized(small_arch(), 1);
  EXPECT_THROW(td::denoiser_forward(p, random_input(8, 10, 1), 3), td::ShapeError);  // 18 not divisible by 4
  EXPECT_THROW(td::denoiser_forward(p, random_input(8, 16, 1), 3), td::ShapeError);  // horizon mismatch
  EXPECT_THROW(td::denoiser_forward(p, random_input(8, 12, 1), 0), td::ShapeError);
  EXPECT_THROW(td::denoiser_forward(p, random_input(8, 12, 1), 26), td::ShapeError);
  EXPECT_THROW(td::denoiser_backward(p, random_input(8, 12, 1), 3, random_input(8, 12, 1, 2)), td::ShapeError);
}

TEST(Denoiser, ForwardAndBackwardAreBitReproducible) {
  const auto p = td::DenoiserParams<double>::initialized(small_arch(), 9, false);
  const auto x = random_input(8, 12, 4, 2);
  const auto up = random_input(8, 12, 5, 2);
  EXPECT_EQ(td::denoiser_forward(p, x, 4), td::denoiser_forward(p, x, 4));
  EXPECT_EQ(td::denoiser_backward(p, x, 4, up), td::denoiser_backward(p, x, 4, up));
}

TEST(DenoiserBackward, ZeroUpstreamGivesZeroGradients) {
  const auto p = td::DenoiserParams<double>::initialized(small_arch(), 2, false);
  const td::TrajBatch zero(1, 8, 12);
  for (double g : td::denoiser_backward(p, random_input(8, 12, 3), 5, zero)) EXPECT_EQ(g, 0.0);
}

TEST(DenoiserBackward, OutputBiasGradientIsSummedUpstream) {
  td::Architecture a;
  a.horizon = 4;
  a.n_steps = 5;
  a.widths = {2};
  a.blocks_per_level = 1;
  a.kernel = 3;
  a.groups = 1;
  a.embed_dim = 4;
  a.channels = 1;
  auto p = td::DenoiserParams<double>::initialized(a, 4, false);
  td::UNetCache<double> cache;
  nn::Mat<double> x(1, 4), up(1, 4);
  x << 0.3, -1.0, 0.5, 2.0;
  up << 1.0, -2.0, 0.5, 3.0;
  p.net().forward(std::span<const double>(p.values()), x, 2, cache);
  std::vector<double> grad(p.values().size(), 0.0);
  p.net().backward(std::span<const double>(p.values()), cache, up, std::span<double>(grad));
  EXPECT_DOUBLE_EQ(grad[p.layout().find("out.bias").offset], 2.5);
}

TEST(DenoiserBackward, MatchesFiniteDifferences) {
  const auto arch = td::testing::tiny_architecture();
  ASSERT_LE(td::UNet1d(arch).parameter_count(), 5000u);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto r = td::testing::gradient_check(arch, seed);
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed << " worst parameter "
                                     << td::UNet1d(arch).layout().entries().size() << " index " << r.worst_index;
  }
}

TEST(DenoiserBackward, InputGradientMatchesFiniteDifferences) {
  const auto arch = td::testing::tiny_architecture();
  const auto p = td::DenoiserParams<double>::initialized(arch, 11, false);
  td::UNetCache<double> cache;
  nn::Mat<double> x = nn::Mat<double>::Random(2, 8);
  const nn::Mat<double> up = nn::Mat<double>::Random(2, 8);
  const std::span<const double> pv(p.values());
  p.net().forward(pv, x, 3, cache);
  std::vector<double> grad(p.values().size(), 0.0);
  const auto dx = p.net().backward(pv, cache, up, std::span<double>(grad));
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double keep = x(j);
    x(j) = keep + 1e-5;
    const double lp = p.net().forward(pv, x, 3, cache).cwiseProduct(up).sum();
    x(j) = keep - 1e-5;
    const double lm = p.net().forward(pv, x, 3, cache).cwiseProduct(up).sum();
    x(j) = keep;
    EXPECT_NEAR(dx(j), (lp - lm) / 2e-5, 1e-6 * std::max(1.0, std::abs(dx(j))));
  }
}

// --- cross-channel attention -------------------------------------------------

namespace {

struct AttnFixture {
  nn::ParamLayout layout;
  nn::ChannelAttention attn;
  std::vector<double> params;

  explicit AttnFixture(std::size_t width, std::uint64_t seed) {
    attn = nn::ChannelAttention::make(layout, "attn", width);
    params.resize(layout.total());
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1, 1);
    for (auto& v : params) v = u(rng);
  }
};

}  // namespace

TEST(ChannelAttention, SingleChannelAttendsToItself) {
  AttnFixture f(4, 1);
  nn::Mat<double> x(1, 4);
  x << 0.5, -1.0, 2.0, 0.25;
  nn::AttnCache<double> cache;
  const auto y = f.attn.forward(f.params.data(), x, cache);
  EXPECT_EQ(cache.a(0, 0), 1.0);
  const nn::Mat<double> expected = x + x * nn::ConstWeights<double>(f.params.data() + f.attn.wv, 4, 4);
  EXPECT_TRUE(y.isApprox(expected, 1e-14));
}

TEST(ChannelAttention, IdenticalChannelsGiveUniformWeights) {
  AttnFixture f(5, 2);
  nn::Mat<double> x(4, 5);
  for (int c = 0; c < 4; ++c) x.row(c) << 1.0, -0.5, 0.25, 2.0, 0.0;
  nn::AttnCache<double> cache;
  f.attn.forward(f.params.data(), x, cache);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(cache.a(r, c), 0.25, 1e-15);
}

TEST(ChannelAttention, MatchesScalarLoopOracle) {
  constexpr std::size_t C = 3, W = 4;
  AttnFixture f(W, 3);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n;
  nn::Mat<double> x(C, W);
  for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = n(rng);

  auto w = [&](std::size_t base, std::size_t r, std::size_t c) { return f.params[base + r * W + c]; };
  double q[C][W] = {}, k[C][W] = {}, v[C][W] = {};
  for (std::size_t t = 0; t < C; ++t)
    for (std::size_t o = 0; o < W; ++o)
      for (std::size_t i = 0; i < W; ++i) {
        q[t][o] += x(t, i) * w(f.attn.wq, i, o);
        k[t][o] += x(t, i) * w(f.attn.wk, i, o);
        v[t][o] += x(t, i) * w(f.attn.wv, i, o);
      }
  nn::AttnCache<double> cache;
  const auto y = f.attn.forward(f.params.data(), x, cache);
  for (std::size_t t = 0; t < C; ++t) {
    double score[C], z = 0;
    for (std::size_t u = 0; u < C; ++u) {
      score[u] = 0;
      for (std::size_t o = 0; o < W; ++o) score[u] += q[t][o] * k[u][o];
      score[u] = std::exp(score[u] / std::sqrt(static_cast<double>(W)));
      z += score[u];
    }
    for (std::size_t o = 0; o < W; ++o) {
      double out = x(t, o);
      for (std::size_t u = 0; u < C; ++u) out += score[u] / z * v[u][o];
      EXPECT_NEAR(y(t, o), out, 1e-10);
    }
  }
}

TEST(StepEmbedding, EqualIndicesMatchDistinctDiffer) {
  const auto a = nn::sinusoidal_embedding<double>(5, 32);
  EXPECT_EQ(a, nn::sinusoidal_embedding<double>(5, 32));
  for (std::size_t i = 1; i <= 100; ++i)
    if (i != 5) {
      EXPECT_GT((a - nn::sinusoidal_embedding<double>(i, 32)).norm(), 1e-6);
    }
  EXPECT_THROW(nn::sinusoidal_embedding<double>(1, 3), td::ShapeError);
}
