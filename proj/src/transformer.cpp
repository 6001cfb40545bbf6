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

#include "hrnas/transformer.hpp"

#include <cmath>

#include "hrnas/init.hpp"
#include "hrnas/ops.hpp"

namespace hrnas {

std::string to_string(TokenMode mode) {
  return mode == TokenMode::kChannel ? "channel" : "spatial";
}

TokenMode token_mode_from_string(const std::string& s) {
  if (s == "channel") return TokenMode::kChannel;
  if (s == "spatial") return TokenMode::kSpatial;
  throw ConfigError("unknown token_mode '" + s + "' (expected channel or spatial)");
}

Tensor positional_map(int h, int w) {
  if (h < 1 || w < 1) throw ShapeError("positional_map: dimensions must be >= 1");
  std::vector<Real> v(2 * static_cast<std::size_t>(h) * w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      v[static_cast<std::size_t>(i) * w + j] = static_cast<Real>(i) / static_cast<Real>(h);
      v[static_cast<std::size_t>(h) * w + static_cast<std::size_t>(i) * w + j] =
          static_cast<Real>(j) / static_cast<Real>(w);
    }
  return Tensor::from({2, h, w}, std::move(v));
}

AttentionResult mhsa(const Tensor& query, const Tensor& key, const Tensor& value,
                     const AttentionWeights& weights, int d, const Tensor& ln_gamma,
                     const Tensor& ln_beta) {
  if (d <= 0) throw ConfigError("mhsa: hidden width d must be positive");
  if (query.rank() != 3 || key.rank() != 3 || value.rank() != 3 ||
      query.dim(2) != key.dim(2) || key.shape() != value.shape() ||
      query.dim(0) != key.dim(0)) {
    throw ShapeError("mhsa: incompatible token tensors " + shape_str(query.shape()) + ", " +
                     shape_str(key.shape()) + ", " + shape_str(value.shape()));
  }
  if (weights.wq.empty()) throw ConfigError("mhsa: no attention heads");
  const Real inv_sqrt_d = Real(1) / std::sqrt(static_cast<Real>(d));
  AttentionResult result;
  Tensor attended;
  for (std::size_t h = 0; h < weights.wq.size(); ++h) {
    Tensor q = ops::linear(query, weights.wq[h]);
    Tensor k = ops::linear(key, weights.wk[h]);
    Tensor v = ops::linear(value, weights.wv[h]);
    Tensor scores = ops::scale(ops::bmm(q, ops::transpose_last2(k)), inv_sqrt_d);
    Tensor att = ops::softmax_lastdim(scores);
    Tensor head_out = ops::linear(ops::bmm(att, v), weights.wo[h]);
    attended = attended.defined() ? ops::add(attended, head_out) : head_out;
    result.weights.push_back(att);
  }
  result.output = ops::layer_norm(ops::add(query, attended), ln_gamma, ln_beta);
  return result;
}

Tensor ffn(const Tensor& x, const TransformerStage& stage) {
  if (stage.w1.dim(1) != stage.w2.dim(0)) {
    throw ShapeError("ffn: inner widths differ " + shape_str(stage.w1.shape()) + " vs " +
                     shape_str(stage.w2.shape()));
  }
  Tensor hidden = ops::relu(ops::linear(x, stage.w1, stage.b1));
  Tensor y = ops::linear(hidden, stage.w2, stage.b2);
  return ops::layer_norm(ops::add(x, y), stage.ln2_gamma, stage.ln2_beta);
}

namespace {

TransformerStage make_stage(int T, int D, int d, int heads, int hidden, std::mt19937_64& rng) {
  (void)T;
  TransformerStage st;
  for (int h = 0; h < heads; ++h) {
    st.attn.wq.push_back(init::xavier({D, d}, D, d, rng));
    st.attn.wk.push_back(init::xavier({D, d}, D, d, rng));
    st.attn.wv.push_back(init::xavier({D, d}, D, d, rng));
    st.attn.wo.push_back(init::xavier({d, D}, d * heads, D, rng));
  }
  st.ln1_gamma = Tensor::full({D}, Real(1), true);
  st.ln1_beta = Tensor::zeros({D}, true);
  st.w1 = init::xavier({D, hidden}, D, hidden, rng);
  st.b1 = Tensor::zeros({hidden}, true);
  st.w2 = init::xavier({hidden, D}, hidden, D, rng);
  st.b2 = Tensor::zeros({D}, true);
  st.ln2_gamma = Tensor::full({D}, Real(1), true);
  st.ln2_beta = Tensor::zeros({D}, true);
  return st;
}

void visit_stage(const std::string& prefix, TransformerStage& st,
                 const Transformer::TensorVisitor& fn) {
  for (std::size_t h = 0; h < st.attn.wq.size(); ++h) {
    const std::string hp = prefix + "head" + std::to_string(h) + ".";
    fn(hp + "wq", st.attn.wq[h]);
    fn(hp + "wk", st.attn.wk[h]);
    fn(hp + "wv", st.attn.wv[h]);
    fn(hp + "wo", st.attn.wo[h]);
  }
  fn(prefix + "ln1.gamma", st.ln1_gamma);
  fn(prefix + "ln1.beta", st.ln1_beta);
  fn(prefix + "ffn.w1", st.w1);
  fn(prefix + "ffn.b1", st.b1);
  fn(prefix + "ffn.w2", st.w2);
  fn(prefix + "ffn.b2", st.b2);
  fn(prefix + "ln2.gamma", st.ln2_gamma);
  fn(prefix + "ln2.beta", st.ln2_beta);
}

// Drops feature index `i` of the token width D (spatial mode only).
void erase_feature(TransformerStage& st, int i) {
  for (std::size_t h = 0; h < st.attn.wq.size(); ++h) {
    st.attn.wq[h].erase_index(0, i);
    st.attn.wk[h].erase_index(0, i);
    st.attn.wv[h].erase_index(0, i);
    st.attn.wo[h].erase_index(1, i);
  }
  st.ln1_gamma.erase_index(0, i);
  st.ln1_beta.erase_index(0, i);
  st.w1.erase_index(0, i);
  st.w2.erase_index(1, i);
  st.b2.erase_index(0, i);
  st.ln2_gamma.erase_index(0, i);
  st.ln2_beta.erase_index(0, i);
}

}  // namespace

Transformer::Transformer(const TransformerConfig& config, int c_in, int c_out,
                         std::mt19937_64& rng)
    : config_(config), n_(config.n), c_in_(c_in), c_out_(c_out) {
  if (config.n < 0) throw ConfigError("transformer: n must be >= 0");
  if (config.s < 1) throw ConfigError("transformer: s must be >= 1");
  if (config.d < 1) throw ConfigError("transformer: d must be >= 1");
  if (config.heads < 1) throw ConfigError("transformer: heads must be >= 1");
  if (c_in < 1 || c_out < 1) throw ConfigError("transformer: channel counts must be >= 1");
  if (n_ == 0) return;
  const int T = token_count(), D = token_dim();
  ffn_hidden_ = 4 * D;
  proj_w_ = init::fan_in({n_, c_in + 2}, c_in + 2, rng);
  proj_bn_ = BatchNorm(n_);
  enc_ = make_stage(T, D, config.d, config.heads, ffn_hidden_, rng);
  dec_ = make_stage(T, D, config.d, config.heads, ffn_hidden_, rng);
  queries_ = init::uniform({T, D}, 1.0 / config.s, rng);
  inv_w_ = init::fan_in({c_out, n_}, n_, rng);
  inv_bn_ = BatchNorm(c_out);
}

int Transformer::token_count() const {
  return config_.token_mode == TokenMode::kChannel ? n_ : config_.s * config_.s;
}

int Transformer::token_dim() const {
  return config_.token_mode == TokenMode::kChannel ? config_.s * config_.s : n_;
}

Tensor Transformer::project(const Tensor& x, const ForwardMode& fm) {
  if (n_ == 0) throw StateError("transformer: project called with zero tokens");
  if (x.rank() != 4 || x.dim(1) != c_in_) {
    throw ShapeError("transformer: input " + shape_str(x.shape()) + " does not have " +
                     std::to_string(c_in_) + " channels");
  }
  const int N = x.dim(0), H = x.dim(2), W = x.dim(3), s = config_.s;
  Tensor pos = positional_map(H, W);
  Tensor pos_batched = Tensor::from({N, 2, H, W}, [&] {
    std::vector<Real> v;
    v.reserve(static_cast<std::size_t>(N) * pos.numel());
    for (int n = 0; n < N; ++n) v.insert(v.end(), pos.data().begin(), pos.data().end());
    return v;
  }());
  Tensor xc = ops::concat_channels({x, pos_batched});
  Tensor p = batch_norm(ops::conv2d_pointwise(xc, proj_w_), proj_bn_, fm);
  Tensor tokens = ops::reshape(ops::bilinear_resize(p, s, s), {N, n_, s * s});
  if (config_.token_mode == TokenMode::kSpatial) tokens = ops::transpose_last2(tokens);
  return tokens;
}

Tensor Transformer::encode(const Tensor& tokens) const {
  auto attended = mhsa(tokens, tokens, tokens, enc_.attn, config_.d, enc_.ln1_gamma,
                       enc_.ln1_beta);
  return ffn(attended.output, enc_);
}

Tensor Transformer::decode(const Tensor& encoded) const {
  if (n_ == 0 || encoded.rank() != 3 || encoded.dim(1) != queries_.dim(0) ||
      encoded.dim(2) != queries_.dim(1)) {
    throw ShapeError("transformer: decoder queries " +
                     (queries_.defined() ? shape_str(queries_.shape()) : std::string("[]")) +
                     " do not match encoded tokens " + shape_str(encoded.shape()));
  }
  Tensor q = ops::broadcast_leading(queries_, encoded.dim(0));
  auto attended = mhsa(q, encoded, encoded, dec_.attn, config_.d, dec_.ln1_gamma,
                       dec_.ln1_beta);
  return ffn(attended.output, dec_);
}

Tensor Transformer::inverse_project(const Tensor& tokens, int h_out, int w_out,
                                    const ForwardMode& fm) {
  if (h_out < 1 || w_out < 1) throw ShapeError("transformer: output size must be >= 1");
  if (n_ == 0) throw StateError("transformer: inverse_project called with zero tokens");
  Tensor t = config_.token_mode == TokenMode::kSpatial ? ops::transpose_last2(tokens) : tokens;
  const int N = t.dim(0), s = config_.s;
  if (t.dim(1) != n_ || t.dim(2) != s * s) {
    throw ShapeError("transformer: tokens " + shape_str(tokens.shape()) +
                     " do not match n=" + std::to_string(n_) + ", s=" + std::to_string(s));
  }
  Tensor maps = ops::bilinear_resize(ops::reshape(t, {N, n_, s, s}), h_out, w_out);
  return batch_norm(ops::conv2d_pointwise(maps, inv_w_), inv_bn_, fm);
}

Tensor Transformer::forward(const Tensor& x, int h_out, int w_out, const ForwardMode& fm) {
  if (n_ == 0) {
    const Shape out_shape{x.dim(0), c_out_, h_out, w_out};
    if (x.shape() == out_shape) return x;
    return Tensor::zeros(out_shape);
  }
  return inverse_project(decode(encode(project(x, fm))), h_out, w_out, fm);
}

void Transformer::clear_parameters() {
  proj_w_ = Tensor();
  proj_bn_ = BatchNorm();
  enc_ = TransformerStage();
  dec_ = TransformerStage();
  queries_ = Tensor();
  inv_w_ = Tensor();
  inv_bn_ = BatchNorm();
  ffn_hidden_ = 0;
}

void Transformer::prune_token(int index) {
  if (index < 0 || index >= n_) {
    throw std::out_of_range("transformer: token index " + std::to_string(index) +
                            " out of range for n=" + std::to_string(n_));
  }
  if (n_ == 1) {
    clear_parameters();
    n_ = 0;
    return;
  }
  proj_w_.erase_index(0, index);
  proj_bn_.erase_channel(index);
  inv_w_.erase_index(1, index);
  if (config_.token_mode == TokenMode::kChannel) {
    queries_.erase_index(0, index);
  } else {
    queries_.erase_index(1, index);
    erase_feature(enc_, index);
    erase_feature(dec_, index);
  }
  --n_;
}

void Transformer::visit_parameters(const std::string& prefix, const TensorVisitor& fn) {
  if (n_ == 0) return;
  fn(prefix + "proj.w", proj_w_);
  fn(prefix + "proj.bn.gamma", proj_bn_.gamma);
  fn(prefix + "proj.bn.beta", proj_bn_.beta);
  visit_stage(prefix + "enc.", enc_, fn);
  visit_stage(prefix + "dec.", dec_, fn);
  fn(prefix + "queries", queries_);
  fn(prefix + "inv.w", inv_w_);
  fn(prefix + "inv.bn.gamma", inv_bn_.gamma);
  fn(prefix + "inv.bn.beta", inv_bn_.beta);
}

void Transformer::visit_batch_norms(const std::string& prefix, const BnVisitor& fn) {
  if (n_ == 0) return;
  fn(prefix + "proj.bn", proj_bn_);
  fn(prefix + "inv.bn", inv_bn_);
}

}  // namespace hrnas
