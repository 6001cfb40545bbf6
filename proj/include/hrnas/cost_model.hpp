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

#ifndef HRNAS_COST_MODEL_HPP_
#define HRNAS_COST_MODEL_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "hrnas/transformer.hpp"

// Closed-form FLOPs accounting. One FLOP unit is one multiply-accumulate.
// Resize, normalization, activation and elementwise costs are not counted.
namespace hrnas {

class Supernet;
class SearchingBlock;

using Flops = std::uint64_t;

enum class ConvKind { kDepthwise, kPointwise, kDense };

/// depthwise: c_out * k * k * h_out * w_out (c_in must equal c_out; pass
/// 1, 1 for a single channel); pointwise: c_in * c_out * h_out * w_out;
/// dense: c_in * c_out * k * k * h_out * w_out.
Flops conv_flops(ConvKind kind, int c_in, int c_out, int k, int h_out, int w_out);

/// Geometry of one transformer instance for cost purposes.
struct TransformerGeometry {
  int n = 0;
  int s = 8;
  int d = 64;
  int heads = 1;
  TokenMode token_mode = TokenMode::kChannel;
  int c_in = 1;
  int c_out = 1;
  int in_h = 1, in_w = 1;
  int out_h = 1, out_w = 1;
  // FFN inner width; 0 means 4 * token width at the given n.
  int ffn_hidden = 0;
};

struct TransformerFlops {
  Flops projector = 0;
  Flops inverse_projector = 0;
  Flops attention_per_stage = 0;
  Flops ffn_per_stage = 0;
  Flops core() const { return 2 * (attention_per_stage + ffn_per_stage); }
  Flops total() const { return projector + inverse_projector + core(); }
};

/// O_T(n): projector n(c_in+2)HW, inverse projector n c_out H'W', and an
/// encoder and a decoder stage each costing 4nds^2 + 2n^2 d (attention) and
/// 8ns^4 (FFN) in channel mode, with a factor `heads` on attention. In
/// spatial mode the roles of n and s^2 swap (s^2 tokens of width n).
TransformerFlops transformer_flops(const TransformerGeometry& g);

/// Cost weight of one depthwise channel: k * k * h_out * w_out.
Flops conv_unit_delta(int k, int h_out, int w_out);

/// O_T(n') - O_T(n' - 1) for the geometry `g` whose n is taken as n'.
Flops token_unit_delta(const TransformerGeometry& g);

struct BlockFlops {
  std::string name;
  Flops c0 = 0;
  Flops depthwise = 0;
  Flops c4 = 0;
  Flops transformer = 0;
  Flops total() const { return c0 + depthwise + c4 + transformer; }
};

Flops block_flops(const SearchingBlock& block);
BlockFlops block_flops_breakdown(const SearchingBlock& block, const std::string& name);

struct UnitDelta {
  std::string block;
  std::string kind;
  int index = 0;
  Flops delta = 0;
};

struct ModuleFlops {
  std::string name;
  Flops total = 0;
};

/// Network-wide accounting. total == stem + sum(modules) + head, and each
/// module total is the sum of its blocks.
struct FlopsReport {
  Flops stem = 0;
  Flops head = 0;
  Flops total = 0;
  std::vector<BlockFlops> blocks;
  std::vector<ModuleFlops> modules;
  std::vector<UnitDelta> deltas;

  std::string to_table() const;
  std::string to_json() const;
};

FlopsReport flops_report(const Supernet& net);

/// Instruments one batch-1 forward pass at the network's configured input
/// size and returns the number of MACs the kernels issued.
Flops brute_force_count(Supernet& net);

}  // namespace hrnas

#endif  // HRNAS_COST_MODEL_HPP_
