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

#ifndef HRNAS_SEARCHING_BLOCK_HPP_
#define HRNAS_SEARCHING_BLOCK_HPP_

#include <array>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hrnas/batch_norm.hpp"
#include "hrnas/cost_model.hpp"
#include "hrnas/transformer.hpp"

namespace hrnas {

enum class UnitKind { kConv3, kConv5, kConv7, kToken };

std::string to_string(UnitKind kind);
UnitKind unit_kind_from_string(const std::string& s);

inline constexpr std::array<int, 3> kMixKernels{3, 5, 7};

/// A unit as addressed inside its block: kind plus its index at construction
/// time (within its kernel group, or among the tokens). Indices are stable
/// across pruning.
struct UnitRef {
  UnitKind kind = UnitKind::kConv3;
  int index = 0;
  bool operator==(const UnitRef&) const = default;
};

struct BlockUnit {
  UnitRef ref;
  Real alpha = 0;   // bound batch-norm scale
  Flops delta = 0;  // cost weight
};

enum class BlockForm { kActive, kIdentity, kZero };
std::string to_string(BlockForm form);

struct BlockConfig {
  int c_in = 1;
  int c_out = 1;
  int expansion = 4;
  int stride = 1;
  int in_h = 1;
  int in_w = 1;
  TransformerConfig transformer;
};

/// MixConv path (pointwise expansion C0, depthwise 3/5/7 groups, pointwise
/// projection C4) plus a lightweight transformer, summed:
///   out = C4(concat(C1(C0(x)_1), C2(C0(x)_2), C3(C0(x)_3))) + T(x)
/// relu follows the C0 and depthwise batch norms; C4 is linear.
class SearchingBlock {
 public:
  SearchingBlock(const BlockConfig& config, std::mt19937_64& rng);

  const BlockConfig& config() const { return config_; }
  int c_in() const { return config_.c_in; }
  int c_out() const { return config_.c_out; }
  int stride() const { return config_.stride; }
  int out_h() const;
  int out_w() const;

  int group_initial() const { return config_.expansion * config_.c_in; }
  int alive_conv(int group) const { return static_cast<int>(alive_[static_cast<std::size_t>(group)].size()); }
  int alive_conv() const;
  int tokens() const { return transformer_.n(); }
  int unit_count() const { return alive_conv() + tokens(); }
  int initial_unit_count() const { return 3 * group_initial() + config_.transformer.n; }
  const std::vector<int>& alive_indices(int group) const { return alive_[static_cast<std::size_t>(group)]; }
  const std::vector<int>& alive_tokens() const { return alive_tokens_; }

  /// Full forward; a zero contribution is materialized as a zero tensor.
  Tensor forward(const Tensor& x, const ForwardMode& fm);
  /// Like forward() but returns nullopt when the block contributes nothing.
  std::optional<Tensor> contribute(const Tensor& x, const ForwardMode& fm);
  /// Output of the MixConv path alone; nullopt when all channels are gone.
  std::optional<Tensor> mixconv(const Tensor& x, const ForwardMode& fm);

  /// One unit per alive depthwise channel (grouped by kernel) and per alive
  /// token, with its importance factor and current cost weight.
  std::vector<BlockUnit> enumerate_search_units() const;
  Real alpha(const UnitRef& ref) const;
  Flops delta(const UnitRef& ref) const;
  bool is_alive(const UnitRef& ref) const;

  /// Removes the weights tied to each unit. Throws std::out_of_range for an
  /// index that never existed and StateError for a unit already pruned.
  void prune_units(const std::vector<UnitRef>& units);

  BlockForm form() const;
  /// Identity for stride 1 with c_in == c_out, zero otherwise. Throws
  /// StateError while units remain.
  BlockForm degenerate_form() const;

  BatchNorm& group_bn(int group) { return dw_bn_[static_cast<std::size_t>(group)]; }
  const BatchNorm& group_bn(int group) const { return dw_bn_[static_cast<std::size_t>(group)]; }
  BatchNorm& c0_bn() { return c0_bn_; }
  BatchNorm& c4_bn() { return c4_bn_; }
  Tensor& c0_weight() { return c0_w_; }
  Tensor& c4_weight() { return c4_w_; }
  Tensor& depthwise_weight(int group) { return dw_w_[static_cast<std::size_t>(group)]; }
  Transformer& transformer() { return transformer_; }
  const Transformer& transformer() const { return transformer_; }
  TransformerGeometry transformer_geometry() const;

  using TensorVisitor = Transformer::TensorVisitor;
  using BnVisitor = Transformer::BnVisitor;
  void visit_parameters(const std::string& prefix, const TensorVisitor& fn);
  void visit_batch_norms(const std::string& prefix, const BnVisitor& fn);

 private:
  int group_offset(int group) const;
  int position(const UnitRef& ref) const;
  void prune_conv(int group, int position);

  BlockConfig config_;
  std::array<std::vector<int>, 3> alive_;
  std::vector<int> alive_tokens_;
  Tensor c0_w_;  // E x c_in, rows grouped 3x3 | 5x5 | 7x7
  BatchNorm c0_bn_;
  std::array<Tensor, 3> dw_w_;  // E_g x k x k
  std::array<BatchNorm, 3> dw_bn_;
  Tensor c4_w_;  // c_out x E
  BatchNorm c4_bn_;
  Transformer transformer_;
};

}  // namespace hrnas

#endif  // HRNAS_SEARCHING_BLOCK_HPP_
