#include "hupa/models.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <iostream>

namespace hupa {
namespace {

// Standalone MLP reading a flat vector in [W1,b1,W2,b2,W3,b3,Wout,bout]
// order, weights row-major out x in.
std::vector<double> reference_mlp(std::span<const float> theta, int h, const std::vector<double>& x) {
  std::size_t off = 0;
  auto layer = [&](const std::vector<double>& in, int out, bool relu) {
    const int n = static_cast<int>(in.size());
    std::vector<double> y(static_cast<std::size_t>(out));
    const std::size_t w = off, b = off + static_cast<std::size_t>(out) * n;
    for (int o = 0; o < out; ++o) {
      double s = theta[b + o];
      for (int i = 0; i < n; ++i) s += theta[w + static_cast<std::size_t>(o) * n + i] * in[i];
      y[o] = relu ? std::max(0.0, s) : s;
    }
    off = b + out;
    return y;
  };
  auto a = layer(x, h, true);
  a = layer(a, h, true);
  a = layer(a, h, true);
  auto out = layer(a, 8, false);
  EXPECT_EQ(off, theta.size());
  return out;
}

TEST(PrimaryParamCount, Examples) {
  EXPECT_EQ(primary_param_count(128, 4), 34696u);
  EXPECT_EQ(primary_param_count(16, 4), 760u);
  EXPECT_EQ(primary_param_count(256, 4), 134920u);
  EXPECT_EQ(129u * primary_param_count(256), 17404680u);
  EXPECT_EQ(PrimaryLayout({16, 4}).size(), 760u);
}

TEST(ParameterCounts, BuiltModelsMatchClosedForms) {
  for (int h : kWidths) {
    const PolicyModel<float> hupa({ModelKind::hupa, h});
    EXPECT_EQ(hupa.trunk_parameter_count(), trunk_param_count());
    EXPECT_EQ(hupa.parameter_count(), hupa_total_params(h)) << h;
    const PolicyModel<float> emb({ModelKind::embedding, h});
    EXPECT_EQ(emb.spec().embedding_dim, match_embedding_dim(h));
    EXPECT_EQ(emb.parameter_count(), embedding_total_params(h, match_embedding_dim(h))) << h;
  }
}

TEST(ParameterCounts, TrunkFromLayerShapes) {
  // 3x3 convs: stem 1->8; block1 8->16, 16->16 + 1x1 8->16; block2 two 16->16;
  // block3 16->32, 32->32 + 1x1 16->32; block4 two 32->32; fc 512->128.
  const std::size_t expect = (72 + 8) + (1152 + 16 + 2304 + 16 + 128 + 16) + 2 * (2304 + 16) +
                             (4608 + 32 + 9216 + 32 + 512 + 32) + 2 * (9216 + 32) + (512 * 128 + 128);
  EXPECT_EQ(trunk_param_count(), expect);
}

TEST(MatchEmbeddingDim, WithinTwoPercentAndMonotone) {
  int prev = 0;
  for (int h : kWidths) {
    const int m = match_embedding_dim(h);
    const double hupa = static_cast<double>(hupa_total_params(h));
    const double emb = static_cast<double>(embedding_total_params(h, m));
    EXPECT_LE(std::abs(emb - hupa) / hupa, 0.02) << h;
    EXPECT_GE(m, prev);
    prev = m;
  }
  EXPECT_NEAR(match_embedding_dim(128), 17300, 100);
  EXPECT_THROW(match_embedding_dim(16, 0), std::invalid_argument);
}

TEST(ParameterCounts, ReportAgainstPublishedTotals) {
  const double published[] = {315e3, 544e3, 1.4e6, 4.7e6, 17.6e6};
  for (std::size_t i = 0; i < kWidths.size(); ++i) {
    const double total = static_cast<double>(hupa_total_params(kWidths[i]));
    std::cout << "width " << kWidths[i] << ": hupa " << total << " vs published " << published[i] << " ("
              << 100.0 * (total - published[i]) / published[i] << "%)\n";
  }
}

TEST(Hupa, ZeroHeadGivesUniformPolicy) {
  PolicyModel<float> m({ModelKind::hupa, 16});
  m.init(1);
  m.zero_head();
  const MapImage img = map_to_image(all_maps()[10]);
  const Tensor<float> theta = m.context(img);
  for (float v : theta.vec()) EXPECT_EQ(v, 0.0f);
  const Tensor<float> logits = m.logits(img, {1, 1}, {29, 29});
  for (float v : logits.vec()) EXPECT_EQ(v, 0.0f);
}

TEST(Hupa, ThetaSlicedIntoStandaloneMlpGivesSameLogits) {
  PolicyModel<float> m({ModelKind::hupa, 32});
  m.init(7);
  const MapImage img = map_to_image(all_maps()[42]);
  const Tensor<float> theta = m.context(img);
  ASSERT_EQ(theta.size(), primary_param_count(32));
  for (auto [s, g] : {std::pair{Cell{1, 1}, Cell{29, 29}}, std::pair{Cell{15, 10}, Cell{5, 25}}}) {
    const std::vector<double> x = {(s.row - 15) / 15.0, (s.col - 15) / 15.0, (g.row - 15) / 15.0,
                                   (g.col - 15) / 15.0};
    const auto ref = reference_mlp(theta.vec(), 32, x);
    const Tensor<float> got = m.logits(img, s, g);
    for (int k = 0; k < 8; ++k) EXPECT_NEAR(got[k], ref[k], 1e-4 * (1 + std::abs(ref[k])));
  }
}

TEST(Hupa, CachedThetaMatchesUncachedBitwise) {
  PolicyModel<float> m({ModelKind::hupa, 16});
  m.init(2);
  const MapImage img = map_to_image(all_maps()[100]);
  const Tensor<float> theta = m.context(img);
  EXPECT_EQ(m.context(img), theta);
  for (Cell s : {Cell{2, 3}, Cell{18, 27}})
    EXPECT_EQ(m.logits_with_context(theta, s, {25, 5}), m.logits(img, s, {25, 5}));
  EXPECT_EQ(m.context_size(), 760u);
}

TEST(Hupa, InitialThetaHasConventionalMagnitude) {
  PolicyModel<float> m({ModelKind::hupa, 64});
  m.init(3);
  const Tensor<float> theta = m.context(map_to_image(all_maps()[0]));
  const PrimaryLayout L{64, 4};
  double sq = 0;
  for (std::size_t i = L.w2(); i < L.b2(); ++i) sq += theta[i] * theta[i];
  const double rms = std::sqrt(sq / static_cast<double>(L.b2() - L.w2()));
  // Kaiming-uniform with bound 1/sqrt(64) has rms 1/sqrt(3*64) ~ 0.072.
  EXPECT_GT(rms, 0.02);
  EXPECT_LT(rms, 0.3);
}

TEST(Embedding, ZeroProjectionSeversTheMap) {
  PolicyModel<float> m({ModelKind::embedding, 16});
  m.init(4);
  const MapImage a = map_to_image(all_maps()[0]), b = map_to_image(all_maps()[163]);
  EXPECT_NE(m.logits(a, {5, 5}, {25, 25}), m.logits(b, {5, 5}, {25, 25}));
  m.zero_projection();
  EXPECT_EQ(m.logits(a, {5, 5}, {25, 25}), m.logits(b, {5, 5}, {25, 25}));
}

TEST(Embedding, PayloadHasLengthWidthAndIsDeterministic) {
  PolicyModel<float> m({ModelKind::embedding, 32});
  m.init(5);
  const MapImage img = map_to_image(all_maps()[9]);
  const Tensor<float> p = m.context(img);
  EXPECT_EQ(p.size(), 32u);
  EXPECT_EQ(m.context_size(), 32u);
  EXPECT_EQ(m.context(img), p);
  EXPECT_THROW(PolicyModel<float>({ModelKind::hupa, 16}).zero_projection(), std::logic_error);
}

TEST(Models, DoublePrecisionCastAgrees) {
  PolicyModel<float> m({ModelKind::embedding, 16});
  m.init(6);
  const PolicyModel<double> d = m.cast<double>();
  const MapImage img = map_to_image(all_maps()[77]);
  const auto lf = m.logits(img, {7, 8}, {22, 3});
  const auto ld = d.logits(img, {7, 8}, {22, 3});
  for (int k = 0; k < 8; ++k) EXPECT_NEAR(lf[k], ld[k], 1e-4);
}

TEST(NormalizeCoord, RangeAndCentre) {
  EXPECT_EQ(normalize_coord(0), -1.0);
  EXPECT_EQ(normalize_coord(15), 0.0);
  EXPECT_EQ(normalize_coord(30), 1.0);
  const auto x = primary_input<float>({0, 30}, {15, 15});
  EXPECT_EQ(x, (std::array<float, 4>{-1.0f, 1.0f, 0.0f, 0.0f}));
}

TEST(ModelKind, Parse) {
  EXPECT_EQ(parse_model_kind("hupa"), ModelKind::hupa);
  EXPECT_EQ(parse_model_kind("embedding"), ModelKind::embedding);
  EXPECT_THROW(parse_model_kind("mlp"), std::invalid_argument);
}

}  // namespace
}  // namespace hupa
