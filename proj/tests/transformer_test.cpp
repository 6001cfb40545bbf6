/* Copyright 2026 The hrnas Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hrnas/ops.hpp"
#include "hrnas/transformer.hpp"
#include "test_util.hpp"

namespace hrnas {
namespace {

using testing::max_abs_diff;
using testing::randn;

AttentionWeights random_weights(int heads, int D, int d, std::mt19937_64& rng) {
  AttentionWeights w;
  for (int h = 0; h < heads; ++h) {
    w.wq.push_back(randn({D, d}, rng));
    w.wk.push_back(randn({D, d}, rng));
    w.wv.push_back(randn({D, d}, rng));
    w.wo.push_back(randn({d, D}, rng));
  }
  return w;
}

TEST(PositionalMap, MatchesDirectEvaluation) {
  for (auto [h, w] : {std::pair{1, 1}, std::pair{2, 2}, std::pair{4, 2}, std::pair{8, 8}}) {
    Tensor p = positional_map(h, w);
    ASSERT_EQ(p.shape(), (Shape{2, h, w}));
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        EXPECT_EQ(p.at({0, i, j}), static_cast<Real>(i) / static_cast<Real>(h));
        EXPECT_EQ(p.at({1, i, j}), static_cast<Real>(j) / static_cast<Real>(w));
      }
  }
}

TEST(PositionalMap, HandValues) {
  EXPECT_EQ(testing::values(positional_map(2, 2)), (std::vector<Real>{0, 0, 0.5f, 0.5f, 0, 0.5f, 0, 0.5f}));
  EXPECT_EQ(testing::values(positional_map(1, 1)), (std::vector<Real>{0, 0}));
  Tensor p = positional_map(4, 2);
  EXPECT_EQ(p.at({0, 3, 0}), 0.75f);
  EXPECT_EQ(p.at({0, 3, 1}), 0.75f);
  EXPECT_THROW(positional_map(0, 3), ShapeError);
}

TEST(Mhsa, SingleTokenAttendsWithWeightOne) {
  std::mt19937_64 rng(1);
  const int D = 4, d = 3;
  Tensor x = randn({2, 1, D}, rng);
  AttentionWeights w = random_weights(1, D, d, rng);
  Tensor g = Tensor::full({D}, 1), b = Tensor::zeros({D});
  AttentionResult r = mhsa(x, x, x, w, d, g, b);
  for (Real a : r.weights[0].data()) EXPECT_EQ(a, 1);
  Tensor expected = ops::layer_norm(ops::add(x, ops::linear(ops::linear(x, w.wv[0]), w.wo[0])), g, b);
  EXPECT_LT(max_abs_diff(r.output, expected), 1e-6);
}

TEST(Mhsa, ZeroQueryWeightsGiveUniformRows) {
  std::mt19937_64 rng(2);
  const int T = 5, D = 4, d = 2;
  Tensor x = randn({1, T, D}, rng);
  AttentionWeights w = random_weights(2, D, d, rng);
  for (auto& q : w.wq)
    for (auto& v : q.mutable_data()) v = 0;
  AttentionResult r = mhsa(x, x, x, w, d, Tensor::full({D}, 1), Tensor::zeros({D}));
  for (const auto& att : r.weights)
    for (Real a : att.data()) EXPECT_NEAR(a, 1.0 / T, 1e-7);
}

TEST(Mhsa, RowsSumToOneForEveryHead) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const int D = 6, d = 4;
    Tensor q = randn({2, 3, D}, rng, false, 3.0), kv = randn({2, 7, D}, rng, false, 3.0);
    AttentionWeights w = random_weights(3, D, d, rng);
    AttentionResult r = mhsa(q, kv, kv, w, d, Tensor::full({D}, 1), Tensor::zeros({D}));
    ASSERT_EQ(r.weights.size(), 3u);
    for (const auto& att : r.weights) {
      ASSERT_EQ(att.shape(), (Shape{2, 3, 7}));
      for (int row = 0; row < 6; ++row) {
        double s = 0;
        for (int k = 0; k < 7; ++k) s += att.data()[static_cast<std::size_t>(row) * 7 + k];
        EXPECT_NEAR(s, 1.0, 1e-6);
      }
    }
  }
}

TEST(Mhsa, PermutationEquivariance) {
  std::mt19937_64 rng(4);
  const int D = 4, d = 4;
  for (int n = 2; n <= 4; ++n) {
    Tensor x = randn({1, n, D}, rng);
    AttentionWeights w = random_weights(2, D, d, rng);
    Tensor g = randn({D}, rng), b = randn({D}, rng);
    Tensor y = mhsa(x, x, x, w, d, g, b).output;
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = (i + 1) % n;
    std::vector<Real> px(x.numel());
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < D; ++k) px[static_cast<std::size_t>(i) * D + k] = x.at({0, perm[static_cast<std::size_t>(i)], k});
    Tensor xp = Tensor::from(x.shape(), px);
    Tensor yp = mhsa(xp, xp, xp, w, d, g, b).output;
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < D; ++k) EXPECT_NEAR(yp.at({0, i, k}), y.at({0, perm[static_cast<std::size_t>(i)], k}), 1e-5);
  }
}

TEST(Mhsa, RejectsNonPositiveWidth) {
  Tensor x = Tensor::zeros({1, 2, 3});
  AttentionWeights w;
  EXPECT_THROW(mhsa(x, x, x, w, 0, Tensor::full({3}, 1), Tensor::zeros({3})), ConfigError);
}

TEST(Ffn, ZeroWeightsReduceToLayerNorm) {
  std::mt19937_64 rng(5);
  const int D = 4;
  TransformerStage st;
  st.w1 = Tensor::zeros({D, 4 * D});
  st.b1 = Tensor::zeros({4 * D});
  st.w2 = Tensor::zeros({4 * D, D});
  st.b2 = Tensor::zeros({D});
  st.ln2_gamma = Tensor::full({D}, 1);
  st.ln2_beta = Tensor::zeros({D});
  Tensor x = randn({2, 3, D}, rng);
  EXPECT_LT(max_abs_diff(ffn(x, st), ops::layer_norm(x, st.ln2_gamma, st.ln2_beta)), 1e-7);
}

TEST(Ffn, PositiveRegionIsLinear) {
  std::mt19937_64 rng(6);
  const int D = 3;
  TransformerStage st;
  st.w1 = testing::uniform({D, 4 * D}, rng, 0.1, 1.0);
  st.b1 = Tensor::full({4 * D}, 1);
  st.w2 = randn({4 * D, D}, rng);
  st.b2 = randn({D}, rng);
  Tensor x = testing::uniform({1, 2, D}, rng, 0.0, 1.0);
  Tensor hidden = ops::linear(x, st.w1, st.b1);
  for (Real v : hidden.data()) ASSERT_GT(v, 0);
  EXPECT_EQ(max_abs_diff(ops::relu(hidden), hidden), 0.0);
}

TEST(Ffn, MismatchedInnerWidthIsShapeError) {
  TransformerStage st;
  st.w1 = Tensor::zeros({2, 8});
  st.w2 = Tensor::zeros({6, 2});
  EXPECT_THROW(ffn(Tensor::zeros({1, 1, 2}), st), ShapeError);
}

class TransformerShapes : public ::testing::Test {
 protected:
  std::mt19937_64 rng{7};
};

TEST_F(TransformerShapes, ChannelModeTokens) {
  Transformer t({3, 4, 5, 1, TokenMode::kChannel}, 2, 6, rng);
  Tensor x = randn({2, 2, 6, 5}, rng);
  Tensor tok = t.project(x, ForwardMode::train());
  EXPECT_EQ(tok.shape(), (Shape{2, 3, 16}));
  EXPECT_EQ(t.decode(t.encode(tok)).shape(), (Shape{2, 3, 16}));
  EXPECT_EQ(t.queries().shape(), (Shape{3, 16}));
  EXPECT_EQ(t.ffn_hidden(), 64);
  EXPECT_EQ(t.inverse_project(t.decode(t.encode(tok)), 3, 3, ForwardMode::train()).shape(), (Shape{2, 6, 3, 3}));
}

TEST_F(TransformerShapes, SpatialModeTokens) {
  Transformer t({3, 4, 5, 1, TokenMode::kSpatial}, 2, 2, rng);
  Tensor x = randn({2, 2, 6, 6}, rng);
  Tensor tok = t.project(x, ForwardMode::train());
  EXPECT_EQ(tok.shape(), (Shape{2, 16, 3}));
  EXPECT_EQ(t.forward(x, 6, 6, ForwardMode::train()).shape(), x.shape());
}

TEST_F(TransformerShapes, ZeroProjectorGivesZeroTokens) {
  Transformer t({3, 2, 2, 1, TokenMode::kChannel}, 2, 2, rng);
  Tensor w = t.projector_weight();
  for (auto& v : w.mutable_data()) v = 0;
  Tensor tok = t.project(randn({2, 2, 4, 4}, rng), ForwardMode::train());
  for (Real v : tok.data()) EXPECT_EQ(v, 0);
}

TEST_F(TransformerShapes, DecodeRejectsTokenCountMismatch) {
  Transformer t({3, 2, 2, 1, TokenMode::kChannel}, 2, 2, rng);
  EXPECT_THROW(t.decode(Tensor::zeros({1, 4, 4})), ShapeError);
  t.prune_token(1);
  EXPECT_THROW(t.decode(Tensor::zeros({1, 3, 4})), ShapeError);
  EXPECT_EQ(t.decode(Tensor::zeros({1, 2, 4})).shape(), (Shape{1, 2, 4}));
}

TEST_F(TransformerShapes, SingleConstantTokenGivesConstantMap) {
  Transformer t({1, 2, 2, 1, TokenMode::kChannel}, 2, 3, rng);
  Tensor tok = Tensor::full({1, 1, 4}, 0.7f);
  Tensor maps = ops::bilinear_resize(ops::reshape(tok, {1, 1, 2, 2}), 5, 3);
  for (Real v : maps.data()) EXPECT_FLOAT_EQ(v, 0.7f);
  EXPECT_EQ(t.inverse_project(tok, 5, 3, ForwardMode::train()).shape(), (Shape{1, 3, 5, 3}));
}

TEST_F(TransformerShapes, ReductionOutputIsHalfSize) {
  Transformer t({2, 2, 2, 1, TokenMode::kChannel}, 3, 5, rng);
  Tensor y = t.forward(randn({1, 3, 7, 7}, rng), ops::conv_out_size(7, 2), ops::conv_out_size(7, 2),
                       ForwardMode::train());
  EXPECT_EQ(y.shape(), (Shape{1, 5, 4, 4}));
}

TEST_F(TransformerShapes, DefaultSizeOutputIsFinite) {
  Transformer t({8, 8, 64, 1, TokenMode::kChannel}, 4, 4, rng);
  Tensor x = randn({2, 4, 12, 12}, rng);
  Tensor y = t.forward(x, 12, 12, ForwardMode::train());
  EXPECT_EQ(y.shape(), x.shape());
  for (Real v : y.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST_F(TransformerShapes, MultiHeadForward) {
  Transformer t({3, 2, 4, 2, TokenMode::kChannel}, 2, 2, rng);
  EXPECT_EQ(t.encoder().attn.wq.size(), 2u);
  Tensor y = t.forward(randn({1, 2, 4, 4}, rng), 4, 4, ForwardMode::train());
  EXPECT_EQ(y.shape(), (Shape{1, 2, 4, 4}));
}

TEST(TransformerDegenerate, ZeroTokensIsResidualOrZero) {
  std::mt19937_64 rng(8);
  Transformer t({0, 4, 4, 1, TokenMode::kChannel}, 3, 3, rng);
  Tensor x = randn({2, 3, 6, 6}, rng);
  Tensor y = t.forward(x, 6, 6, ForwardMode::train());
  EXPECT_EQ(y.node(), x.node());
  Tensor z = t.forward(x, 3, 3, ForwardMode::train());
  EXPECT_EQ(z.shape(), (Shape{2, 3, 3, 3}));
  for (Real v : z.data()) EXPECT_EQ(v, 0);
  EXPECT_THROW(t.project(x, ForwardMode::train()), StateError);
  int visited = 0;
  t.visit_parameters("", [&](const std::string&, Tensor&) { ++visited; });
  EXPECT_EQ(visited, 0);
}

TEST(TransformerDegenerate, PruningEveryTokenEmptiesParameters) {
  std::mt19937_64 rng(9);
  Transformer t({3, 2, 2, 1, TokenMode::kChannel}, 2, 2, rng);
  t.prune_token(0);
  EXPECT_EQ(t.projector_weight().shape(), (Shape{2, 4}));
  EXPECT_EQ(t.inverse_weight().shape(), (Shape{2, 2}));
  EXPECT_EQ(t.queries().shape(), (Shape{2, 4}));
  EXPECT_EQ(t.projector_bn().channels(), 2);
  EXPECT_THROW(t.prune_token(2), std::out_of_range);
  t.prune_token(1);
  t.prune_token(0);
  EXPECT_EQ(t.n(), 0);
  Tensor x = randn({1, 2, 4, 4}, rng);
  EXPECT_EQ(max_abs_diff(t.forward(x, 4, 4, ForwardMode::train()), x), 0.0);
}

TEST(TransformerDegenerate, SpatialPruneRemovesFeatureSlices) {
  std::mt19937_64 rng(10);
  Transformer t({3, 2, 2, 1, TokenMode::kSpatial}, 2, 2, rng);
  t.prune_token(2);
  EXPECT_EQ(t.token_dim(), 2);
  EXPECT_EQ(t.token_count(), 4);
  EXPECT_EQ(t.encoder().attn.wq[0].shape(), (Shape{2, 2}));
  EXPECT_EQ(t.encoder().w1.shape(), (Shape{2, 12}));
  EXPECT_EQ(t.queries().shape(), (Shape{4, 2}));
  EXPECT_EQ(t.forward(randn({1, 2, 4, 4}, rng), 4, 4, ForwardMode::train()).shape(), (Shape{1, 2, 4, 4}));
}

TEST(TransformerInvariant, AllZeroWeightsOutputIsSeedIndependent) {
  std::mt19937_64 data_rng(11);
  Tensor x = randn({2, 3, 5, 5}, data_rng);
  std::vector<Tensor> outs;
  for (std::uint64_t seed : {1u, 2u}) {
    std::mt19937_64 rng(seed);
    Transformer t({3, 2, 4, 1, TokenMode::kChannel}, 3, 3, rng);
    t.visit_parameters("", [](const std::string& name, Tensor& p) {
      if (name.find("gamma") != std::string::npos || name.find("beta") != std::string::npos) return;
      for (auto& v : p.mutable_data()) v = 0;
    });
    outs.push_back(t.forward(x, 5, 5, ForwardMode::train()));
  }
  EXPECT_EQ(max_abs_diff(outs[0], outs[1]), 0.0);
}

TEST(TransformerConfigErrors, RejectsBadSizes) {
  std::mt19937_64 rng(12);
  EXPECT_THROW(Transformer({-1, 2, 2, 1, TokenMode::kChannel}, 2, 2, rng), ConfigError);
  EXPECT_THROW(Transformer({2, 0, 2, 1, TokenMode::kChannel}, 2, 2, rng), ConfigError);
  EXPECT_THROW(Transformer({2, 2, 0, 1, TokenMode::kChannel}, 2, 2, rng), ConfigError);
  EXPECT_THROW(token_mode_from_string("diagonal"), ConfigError);
  EXPECT_EQ(token_mode_from_string(to_string(TokenMode::kSpatial)), TokenMode::kSpatial);
}

}  // namespace
}  // namespace hrnas
