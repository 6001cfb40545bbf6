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

#include <random>

#include "hrnas/cost_model.hpp"
#include "hrnas/ops.hpp"
#include "hrnas/searching_block.hpp"
#include "test_util.hpp"

namespace hrnas {
namespace {

using testing::max_abs_diff;
using testing::randn;

BlockConfig make_config(int c_in, int c_out, int stride, int hw, int n, int expansion = 4) {
  BlockConfig c;
  c.c_in = c_in;
  c.c_out = c_out;
  c.stride = stride;
  c.expansion = expansion;
  c.in_h = c.in_w = hw;
  c.transformer = {n, 4, 8, 1, TokenMode::kChannel};
  return c;
}

std::vector<UnitRef> all_tokens(const SearchingBlock& b) {
  std::vector<UnitRef> refs;
  for (int t : b.alive_tokens()) refs.push_back({UnitKind::kToken, t});
  return refs;
}

std::vector<UnitRef> all_units(const SearchingBlock& b) {
  std::vector<UnitRef> refs;
  for (const auto& u : b.enumerate_search_units()) refs.push_back(u.ref);
  return refs;
}

TEST(SearchingBlockUnits, FirstBranchBlockHas224Units) {
  std::mt19937_64 rng(1);
  SearchingBlock b(make_config(18, 18, 1, 8, 8), rng);
  EXPECT_EQ(b.unit_count(), 3 * 4 * 18 + 8);
  EXPECT_EQ(b.unit_count(), 224);
  EXPECT_EQ(b.enumerate_search_units().size(), 224u);
}

TEST(SearchingBlockUnits, PruningTenChannelsAndAllTokensLeaves206) {
  std::mt19937_64 rng(2);
  SearchingBlock b(make_config(18, 18, 1, 8, 8), rng);
  std::vector<UnitRef> refs = all_tokens(b);
  for (int i = 0; i < 4; ++i) refs.push_back({UnitKind::kConv3, 2 * i});
  for (int i = 0; i < 3; ++i) refs.push_back({UnitKind::kConv5, i});
  for (int i = 0; i < 3; ++i) refs.push_back({UnitKind::kConv7, 71 - i});
  b.prune_units(refs);
  EXPECT_EQ(b.unit_count(), 206);
  EXPECT_EQ(b.initial_unit_count(), 224);
  EXPECT_EQ(b.alive_conv(0), 68);
  EXPECT_EQ(b.c0_weight().dim(0), b.alive_conv());
  EXPECT_EQ(b.c4_weight().dim(1), b.alive_conv());
  EXPECT_EQ(b.tokens(), 0);
}

TEST(SearchingBlockUnits, ZeroExpansionAndNoTokensHasNoUnits) {
  std::mt19937_64 rng(3);
  SearchingBlock b(make_config(4, 4, 1, 4, 0, 0), rng);
  EXPECT_EQ(b.unit_count(), 0);
  EXPECT_TRUE(b.enumerate_search_units().empty());
  EXPECT_EQ(b.form(), BlockForm::kIdentity);
}

TEST(SearchingBlockUnits, AlphaAndDeltaBindings) {
  std::mt19937_64 rng(4);
  SearchingBlock b(make_config(2, 2, 1, 16, 3, 1), rng);
  b.group_bn(1).gamma.mutable_data()[1] = 0.25f;
  b.transformer().projector_bn().gamma.mutable_data()[2] = -0.5f;
  EXPECT_EQ(b.alpha({UnitKind::kConv5, 1}), 0.25f);
  EXPECT_EQ(b.alpha({UnitKind::kToken, 2}), -0.5f);
  EXPECT_EQ(b.delta({UnitKind::kConv3, 0}), 2304u);
  EXPECT_EQ(b.delta({UnitKind::kConv5, 0}), 6400u);
  EXPECT_EQ(b.delta({UnitKind::kConv7, 0}), 7u * 7 * 16 * 16);
  for (const auto& u : b.enumerate_search_units()) EXPECT_GT(u.delta, 0u);
}

TEST(SearchingBlockPrune, RejectsUnknownAndDoubleFree) {
  std::mt19937_64 rng(5);
  SearchingBlock b(make_config(2, 2, 1, 4, 2, 1), rng);
  EXPECT_THROW(b.prune_units({{UnitKind::kConv3, 2}}), std::out_of_range);
  EXPECT_THROW(b.prune_units({{UnitKind::kToken, 2}}), std::out_of_range);
  EXPECT_THROW(b.prune_units({{UnitKind::kConv3, 0}, {UnitKind::kConv3, 0}}), StateError);
  EXPECT_EQ(b.unit_count(), 8);
  b.prune_units({{UnitKind::kConv3, 0}});
  EXPECT_THROW(b.prune_units({{UnitKind::kConv3, 0}}), StateError);
  EXPECT_FALSE(b.is_alive({UnitKind::kConv3, 0}));
  EXPECT_TRUE(b.is_alive({UnitKind::kConv3, 1}));
}

TEST(SearchingBlockPrune, UnitCountConservation) {
  std::mt19937_64 rng(6);
  SearchingBlock b(make_config(3, 3, 1, 4, 4, 2), rng);
  std::uniform_real_distribution<double> coin(0, 1);
  while (b.unit_count() > 0) {
    std::vector<UnitRef> pick;
    for (const auto& r : all_units(b))
      if (coin(rng) < 0.3) pick.push_back(r);
    const int before = b.unit_count();
    const Flops f_before = block_flops(b);
    b.prune_units(pick);
    EXPECT_EQ(before, b.unit_count() + static_cast<int>(pick.size()));
    if (!pick.empty()) EXPECT_LT(block_flops(b), f_before);
    b.forward(randn({1, 3, 4, 4}, rng), ForwardMode::train());
  }
  EXPECT_EQ(block_flops(b), 0u);
}

TEST(SearchingBlockPrune, GroupIntegrity) {
  std::mt19937_64 rng(7);
  SearchingBlock b(make_config(2, 2, 1, 4, 0, 2), rng);
  auto snapshot = [&](int g) { return testing::values(b.depthwise_weight(g)); };
  const auto w3 = snapshot(0), w7 = snapshot(2);
  b.prune_units({{UnitKind::kConv5, 1}});
  EXPECT_EQ(snapshot(0), w3);
  EXPECT_EQ(snapshot(2), w7);
  EXPECT_EQ(b.depthwise_weight(1).dim(0), 3);
}

TEST(SearchingBlockForward, StrideTwoOutputSize) {
  std::mt19937_64 rng(8);
  SearchingBlock b(make_config(3, 5, 2, 7, 2, 1), rng);
  EXPECT_EQ(b.forward(randn({2, 3, 7, 7}, rng), ForwardMode::train()).shape(), (Shape{2, 5, 4, 4}));
  EXPECT_EQ(b.out_h(), 4);
}

TEST(SearchingBlockForward, ZeroWeightsNoTokensIsIdentity) {
  std::mt19937_64 rng(9);
  SearchingBlock b(make_config(3, 3, 1, 5, 0, 2), rng);
  for (auto* bn : {&b.c0_bn(), &b.c4_bn(), &b.group_bn(0), &b.group_bn(1), &b.group_bn(2)}) {
    for (auto& v : bn->gamma.mutable_data()) v = 0;
    for (auto& v : bn->beta.mutable_data()) v = 0;
  }
  b.visit_parameters("", [](const std::string&, Tensor& p) {
    for (auto& v : p.mutable_data()) v = 0;
  });
  Tensor x = randn({2, 3, 5, 5}, rng);
  EXPECT_EQ(max_abs_diff(b.forward(x, ForwardMode::train()), x), 0.0);
}

TEST(SearchingBlockForward, RejectsWrongChannels) {
  std::mt19937_64 rng(10);
  SearchingBlock b(make_config(3, 3, 1, 4, 1, 1), rng);
  EXPECT_THROW(b.forward(Tensor::zeros({1, 2, 4, 4}), ForwardMode::train()), ShapeError);
}

// Forcing gamma = beta = 0 on one depthwise channel makes its contribution
// exactly zero, so removing it leaves every output unchanged.
TEST(SearchingBlockPrune, ExactZeroInvarianceOnFiftyRandomUnits) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> pick_c(2, 5), pick_stride(1, 2), pick_n(0, 3), pick_hw(4, 9);
  for (int trial = 0; trial < 50; ++trial) {
    const int c_in = pick_c(rng), stride = pick_stride(rng), hw = pick_hw(rng);
    const int c_out = stride == 1 && trial % 2 == 0 ? c_in : pick_c(rng);
    SearchingBlock b(make_config(c_in, c_out, stride, hw, pick_n(rng), 1), rng);
    b.visit_parameters("", [&](const std::string& name, Tensor& p) {
      if (name.find("beta") == std::string::npos) return;
      for (auto& v : p.mutable_data()) v = static_cast<Real>(std::normal_distribution<double>(0, 0.3)(rng));
    });
    std::vector<UnitRef> conv;
    for (const auto& u : b.enumerate_search_units())
      if (u.ref.kind != UnitKind::kToken) conv.push_back(u.ref);
    const UnitRef target = conv[std::uniform_int_distribution<std::size_t>(0, conv.size() - 1)(rng)];
    const int g = static_cast<int>(target.kind);
    const auto& idx = b.alive_indices(g);
    const auto pos = static_cast<std::size_t>(std::lower_bound(idx.begin(), idx.end(), target.index) - idx.begin());
    b.group_bn(g).gamma.mutable_data()[pos] = 0;
    b.group_bn(g).beta.mutable_data()[pos] = 0;

    Tensor x = randn({2, c_in, hw, hw}, rng);
    b.forward(x, ForwardMode::train());  // populate running statistics
    Tensor train_before = b.forward(x, ForwardMode::train_frozen());
    Tensor eval_before = b.forward(x, ForwardMode::eval());
    b.prune_units({target});
    EXPECT_LT(max_abs_diff(b.forward(x, ForwardMode::train_frozen()), train_before), 1e-6) << "trial " << trial;
    EXPECT_LT(max_abs_diff(b.forward(x, ForwardMode::eval()), eval_before), 1e-6) << "trial " << trial;
  }
}

TEST(SearchingBlockDegenerate, AllTokensPrunedIsMixConvPlusInput) {
  std::mt19937_64 rng(12);
  SearchingBlock b(make_config(4, 4, 1, 6, 4, 2), rng);
  b.prune_units(all_tokens(b));
  EXPECT_EQ(b.tokens(), 0);
  Tensor x = randn({2, 4, 6, 6}, rng);
  Tensor y = b.forward(x, ForwardMode::train_frozen());
  Tensor expected = ops::add(*b.mixconv(x, ForwardMode::train_frozen()), x);
  EXPECT_EQ(max_abs_diff(y, expected), 0.0);
  EXPECT_EQ(block_flops_breakdown(b, "b").transformer, 0u);
}

TEST(SearchingBlockDegenerate, FormsAfterFullPrune) {
  std::mt19937_64 rng(13);
  SearchingBlock id(make_config(18, 18, 1, 4, 2, 1), rng);
  EXPECT_THROW(id.degenerate_form(), StateError);
  id.prune_units({{UnitKind::kConv3, 0}});
  EXPECT_THROW(id.degenerate_form(), StateError);
  id.prune_units(all_units(id));
  EXPECT_EQ(id.degenerate_form(), BlockForm::kIdentity);
  Tensor x = randn({1, 18, 4, 4}, rng);
  EXPECT_EQ(max_abs_diff(id.forward(x, ForwardMode::train()), x), 0.0);
  EXPECT_EQ(block_flops(id), 0u);

  SearchingBlock red(make_config(4, 8, 2, 6, 2, 1), rng);
  red.prune_units(all_units(red));
  EXPECT_EQ(red.degenerate_form(), BlockForm::kZero);
  EXPECT_FALSE(red.contribute(randn({1, 4, 6, 6}, rng), ForwardMode::train()).has_value());
  Tensor z = red.forward(randn({1, 4, 6, 6}, rng), ForwardMode::train());
  EXPECT_EQ(z.shape(), (Shape{1, 8, 3, 3}));
  for (Real v : z.data()) EXPECT_EQ(v, 0);
}

TEST(SearchingBlockConfig, RejectsBadValues) {
  std::mt19937_64 rng(14);
  EXPECT_THROW(SearchingBlock(make_config(0, 2, 1, 4, 1), rng), ConfigError);
  EXPECT_THROW(SearchingBlock(make_config(2, 2, 3, 4, 1), rng), ConfigError);
  EXPECT_THROW(SearchingBlock(make_config(2, 2, 1, 4, 1, -1), rng), ConfigError);
  EXPECT_THROW(unit_kind_from_string("conv9"), ConfigError);
  EXPECT_EQ(unit_kind_from_string(to_string(UnitKind::kConv7)), UnitKind::kConv7);
}

}  // namespace
}  // namespace hrnas
