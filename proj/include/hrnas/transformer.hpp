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

#ifndef HRNAS_TRANSFORMER_HPP_
#define HRNAS_TRANSFORMER_HPP_

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hrnas/batch_norm.hpp"
#include "hrnas/tensor.hpp"

namespace hrnas {

enum class TokenMode { kChannel, kSpatial };

std::string to_string(TokenMode mode);
TokenMode token_mode_from_string(const std::string& s);

struct TransformerConfig {
  int n = 8;       // tokens (projector output channels)
  int s = 8;       // projected side length
  int d = 64;      // attention hidden width per head
  int heads = 1;
  TokenMode token_mode = TokenMode::kChannel;
};

/// Q/K/V projections are D x d per head; the output projection is stored
/// as one d x D block per head, so that concat(heads) * W^O is the sum of
/// per-head products.
struct AttentionWeights {
  std::vector<Tensor> wq, wk, wv, wo;
};

/// One attention + FFN stage, each followed by residual add and layer norm.
struct TransformerStage {
  AttentionWeights attn;
  Tensor ln1_gamma, ln1_beta;
  Tensor w1, b1, w2, b2;
  Tensor ln2_gamma, ln2_beta;
};

struct AttentionResult {
  Tensor output;                 // layer_norm(query + attention)
  std::vector<Tensor> weights;   // per-head softmax maps, N x T_q x T_kv
};

/// 2 x h x w map; channel 0 holds i / h, channel 1 holds j / w.
Tensor positional_map(int h, int w);

/// Multi-head attention of `query` over `key`/`value` (all N x T x D),
/// scaled by 1/sqrt(d), wrapped in residual + layer norm.
AttentionResult mhsa(const Tensor& query, const Tensor& key, const Tensor& value,
                     const AttentionWeights& weights, int d, const Tensor& ln_gamma,
                     const Tensor& ln_beta);

/// layer_norm(x + max(0, x W1 + b1) W2 + b2).
Tensor ffn(const Tensor& x, const TransformerStage& stage);

/// Projector, encoder, decoder with learned queries, and inverse projector.
/// Token count n may shrink through pruning down to 0, at which point the
/// operator degenerates (see forward()).
class Transformer {
 public:
  Transformer() = default;
  Transformer(const TransformerConfig& config, int c_in, int c_out, std::mt19937_64& rng);

  const TransformerConfig& config() const { return config_; }
  int n() const { return n_; }
  int c_in() const { return c_in_; }
  int c_out() const { return c_out_; }
  // Tokens seen by attention and their width; depends on token_mode.
  int token_count() const;
  int token_dim() const;
  int ffn_hidden() const { return ffn_hidden_; }

  /// N x c x H x W -> N x T x D tokens. Requires n >= 1.
  Tensor project(const Tensor& x, const ForwardMode& fm);
  Tensor encode(const Tensor& tokens) const;
  Tensor decode(const Tensor& encoded) const;
  /// N x T x D tokens -> N x c_out x h_out x w_out.
  Tensor inverse_project(const Tensor& tokens, int h_out, int w_out, const ForwardMode& fm);

  /// With n >= 1: inverse_project(decode(encode(project(x)))). With n == 0:
  /// x itself when the output shape equals x's shape, otherwise zeros.
  Tensor forward(const Tensor& x, int h_out, int w_out, const ForwardMode& fm);

  // Param/state access for importance binding and pruning.
  BatchNorm& projector_bn() { return proj_bn_; }
  const BatchNorm& projector_bn() const { return proj_bn_; }
  BatchNorm& inverse_bn() { return inv_bn_; }
  const Tensor& queries() const { return queries_; }
  const Tensor& projector_weight() const { return proj_w_; }
  const Tensor& inverse_weight() const { return inv_w_; }
  const TransformerStage& encoder() const { return enc_; }
  const TransformerStage& decoder() const { return dec_; }
  TransformerStage& encoder() { return enc_; }
  TransformerStage& decoder() { return dec_; }

  /// Removes the token at current position `index` (projector row, BN entry,
  /// query row and inverse-projector column; in spatial mode the matching
  /// feature slices as well).
  void prune_token(int index);

  using TensorVisitor = std::function<void(const std::string&, Tensor&)>;
  using BnVisitor = std::function<void(const std::string&, BatchNorm&)>;
  void visit_parameters(const std::string& prefix, const TensorVisitor& fn);
  void visit_batch_norms(const std::string& prefix, const BnVisitor& fn);

 private:
  void clear_parameters();

  TransformerConfig config_;
  int n_ = 0;
  int c_in_ = 0;
  int c_out_ = 0;
  int ffn_hidden_ = 0;
  Tensor proj_w_;      // n x (c_in + 2)
  BatchNorm proj_bn_;  // n
  TransformerStage enc_, dec_;
  Tensor queries_;     // T x D
  Tensor inv_w_;       // c_out x n
  BatchNorm inv_bn_;   // c_out
};

}  // namespace hrnas

#endif  // HRNAS_TRANSFORMER_HPP_
