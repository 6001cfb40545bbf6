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

#ifndef HRNAS_SUPERNET_HPP_
#define HRNAS_SUPERNET_HPP_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hrnas/batch_norm.hpp"
#include "hrnas/searching_block.hpp"

namespace hrnas {

enum class HeadKind { kClassification, kDense };

std::string to_string(HeadKind kind);
HeadKind head_kind_from_string(const std::string& s);

/// One parallel module: per-branch block counts and widths.
struct ParallelModuleConfig {
  std::vector<int> blocks;
  std::vector<int> widths;
  int branches() const { return static_cast<int>(widths.size()); }
};

struct SupernetConfig {
  int in_channels = 3;
  int input_h = 224;
  int input_w = 224;
  int stem_channels = 24;
  std::vector<ParallelModuleConfig> modules;
  // Branch b runs at 1/4 * (1/2)^b of the input; 4 branches reach 1/32.
  int max_branches = 4;
  int expansion = 4;
  TransformerConfig transformer;
  HeadKind head = HeadKind::kClassification;
  int classes = 10;
  std::uint64_t seed = 0;

  /// Five parallel modules with 1, 2, 3, 4, 4 branches of widths
  /// 18/36/72/144, two blocks per branch, n = 8, s = 8, d = 64.
  static SupernetConfig full();
  /// Desk-scale layout: modules with 1 and 2 branches, widths 8/16,
  /// n = 4, s = 4, d = 16, 24 x 24 dense input with 3 classes.
  static SupernetConfig scaled();

  void validate() const;
};

/// A fusion-module edge: a searching block carrying input branch `from`
/// toward output branch `to` (reduction when from < to, upsampled after
/// the block when from > to).
struct FusionEdge {
  int from = 0;
  int to = 0;
  std::unique_ptr<SearchingBlock> block;
};

struct ParallelModule {
  std::vector<std::vector<std::unique_ptr<SearchingBlock>>> branches;
};

struct FusionModule {
  int m_in = 0;
  int m_out = 0;
  std::vector<FusionEdge> edges;  // sorted by (to, from)
};

/// Addressable view of every searching block in forward order.
struct BlockSlot {
  int module = 0;  // flat module index: P1, F1, P2, F2, ...
  int index = 0;   // block index inside the module
  std::string name;
  SearchingBlock* block = nullptr;
};

class Supernet {
 public:
  explicit Supernet(const SupernetConfig& config);

  const SupernetConfig& config() const { return config_; }

  Tensor forward(const Tensor& x, const ForwardMode& fm);
  Tensor stem_forward(const Tensor& x, const ForwardMode& fm);
  std::vector<Tensor> parallel_forward(int module, const std::vector<Tensor>& inputs,
                                       const ForwardMode& fm);
  std::vector<Tensor> fusion_forward(int fusion, const std::vector<Tensor>& inputs,
                                     const ForwardMode& fm);
  Tensor head_forward(const std::vector<Tensor>& branches, const ForwardMode& fm);
  /// Branch features after the last parallel module.
  std::vector<Tensor> features(const Tensor& x, const ForwardMode& fm);

  int parallel_count() const { return static_cast<int>(parallel_.size()); }
  int fusion_count() const { return static_cast<int>(fusion_.size()); }
  const ParallelModule& parallel_module(int i) const { return parallel_[static_cast<std::size_t>(i)]; }
  const FusionModule& fusion_module(int i) const { return fusion_[static_cast<std::size_t>(i)]; }
  /// Spatial size of branch b (0-based) for the configured input.
  std::pair<int, int> branch_size(int branch) const;
  int head_channels() const;
  std::string module_name(int flat_module) const;

  std::vector<BlockSlot> blocks() const;
  SearchingBlock& block(int module, int index);

  int stem_out_h() const;
  int stem_out_w() const;
  Flops stem_flops() const;
  Flops head_flops() const;

  using TensorVisitor = Transformer::TensorVisitor;
  using BnVisitor = Transformer::BnVisitor;
  void visit_parameters(const TensorVisitor& fn);
  void visit_batch_norms(const BnVisitor& fn);
  std::vector<Tensor> parameters();

 private:
  SupernetConfig config_;
  Tensor stem_w1_, stem_w2_;
  BatchNorm stem_bn1_, stem_bn2_;
  std::vector<ParallelModule> parallel_;
  std::vector<FusionModule> fusion_;
  Tensor head_w_, head_b_;
};

}  // namespace hrnas

#endif  // HRNAS_SUPERNET_HPP_
