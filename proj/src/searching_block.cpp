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

#include "hrnas/searching_block.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "hrnas/init.hpp"
#include "hrnas/ops.hpp"

namespace hrnas {

std::string to_string(UnitKind kind) {
  switch (kind) {
    case UnitKind::kConv3: return "conv3";
    case UnitKind::kConv5: return "conv5";
    case UnitKind::kConv7: return "conv7";
    case UnitKind::kToken: return "token";
  }
  return "?";
}

UnitKind unit_kind_from_string(const std::string& s) {
  if (s == "conv3") return UnitKind::kConv3;
  if (s == "conv5") return UnitKind::kConv5;
  if (s == "conv7") return UnitKind::kConv7;
  if (s == "token") return UnitKind::kToken;
  throw ConfigError("unknown unit kind '" + s + "'");
}

std::string to_string(BlockForm form) {
  switch (form) {
    case BlockForm::kActive: return "active";
    case BlockForm::kIdentity: return "identity";
    case BlockForm::kZero: return "zero";
  }
  return "?";
}

namespace {

int group_of(UnitKind kind) { return static_cast<int>(kind); }

}  // namespace

SearchingBlock::SearchingBlock(const BlockConfig& config, std::mt19937_64& rng)
    : config_(config) {
  if (config.c_in < 1 || config.c_out < 1) throw ConfigError("block: channel counts must be >= 1");
  if (config.expansion < 0) throw ConfigError("block: expansion must be >= 0");
  if (config.stride != 1 && config.stride != 2) throw ConfigError("block: stride must be 1 or 2");
  if (config.in_h < 1 || config.in_w < 1) throw ConfigError("block: input size must be >= 1");
  const int per_group = group_initial();
  for (auto& a : alive_) {
    a.resize(static_cast<std::size_t>(per_group));
    std::iota(a.begin(), a.end(), 0);
  }
  alive_tokens_.resize(static_cast<std::size_t>(std::max(config.transformer.n, 0)));
  std::iota(alive_tokens_.begin(), alive_tokens_.end(), 0);
  if (per_group > 0) {
    const int E = 3 * per_group;
    c0_w_ = init::he({E, config.c_in}, config.c_in, rng);
    c0_bn_ = BatchNorm(E);
    for (std::size_t g = 0; g < 3; ++g) {
      const int k = kMixKernels[g];
      dw_w_[g] = init::he({per_group, k, k}, k * k, rng);
      dw_bn_[g] = BatchNorm(per_group);
    }
    c4_w_ = init::fan_in({config.c_out, E}, E, rng);
    c4_bn_ = BatchNorm(config.c_out);
  }
  transformer_ = Transformer(config.transformer, config.c_in, config.c_out, rng);
}

int SearchingBlock::out_h() const { return ops::conv_out_size(config_.in_h, config_.stride); }
int SearchingBlock::out_w() const { return ops::conv_out_size(config_.in_w, config_.stride); }

int SearchingBlock::alive_conv() const {
  return alive_conv(0) + alive_conv(1) + alive_conv(2);
}

int SearchingBlock::group_offset(int group) const {
  int off = 0;
  for (int g = 0; g < group; ++g) off += alive_conv(g);
  return off;
}

std::optional<Tensor> SearchingBlock::mixconv(const Tensor& x, const ForwardMode& fm) {
  if (alive_conv() == 0) return std::nullopt;
  Tensor expanded = ops::relu(batch_norm(ops::conv2d_pointwise(x, c0_w_), c0_bn_, fm));
  std::vector<int> sizes;
  std::vector<int> groups;
  for (int g = 0; g < 3; ++g) {
    if (alive_conv(g) > 0) {
      sizes.push_back(alive_conv(g));
      groups.push_back(g);
    }
  }
  std::vector<Tensor> parts = sizes.size() == 1 ? std::vector<Tensor>{expanded}
                                                : ops::split_channels(expanded, sizes);
  std::vector<Tensor> mixed;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto g = static_cast<std::size_t>(groups[i]);
    mixed.push_back(ops::relu(
        batch_norm(ops::conv2d_depthwise(parts[i], dw_w_[g], config_.stride), dw_bn_[g], fm)));
  }
  Tensor cat = mixed.size() == 1 ? mixed.front() : ops::concat_channels(mixed);
  return batch_norm(ops::conv2d_pointwise(cat, c4_w_), c4_bn_, fm);
}

std::optional<Tensor> SearchingBlock::contribute(const Tensor& x, const ForwardMode& fm) {
  if (x.rank() != 4 || x.dim(1) != config_.c_in) {
    throw ShapeError("block: input " + shape_str(x.shape()) + " does not have " +
                     std::to_string(config_.c_in) + " channels");
  }
  const int ho = ops::conv_out_size(x.dim(2), config_.stride);
  const int wo = ops::conv_out_size(x.dim(3), config_.stride);
  std::optional<Tensor> mix = mixconv(x, fm);
  std::optional<Tensor> trans;
  if (transformer_.n() > 0) {
    trans = transformer_.forward(x, ho, wo, fm);
  } else if (x.shape() == Shape{x.dim(0), config_.c_out, ho, wo}) {
    trans = x;  // residual path
  }
  if (mix && trans) return ops::add(*mix, *trans);
  if (mix) return mix;
  return trans;
}

Tensor SearchingBlock::forward(const Tensor& x, const ForwardMode& fm) {
  auto out = contribute(x, fm);
  if (out) return *out;
  return Tensor::zeros({x.dim(0), config_.c_out, ops::conv_out_size(x.dim(2), config_.stride),
                        ops::conv_out_size(x.dim(3), config_.stride)});
}

TransformerGeometry SearchingBlock::transformer_geometry() const {
  const auto& tc = config_.transformer;
  TransformerGeometry g;
  g.n = transformer_.n();
  g.s = tc.s;
  g.d = tc.d;
  g.heads = tc.heads;
  g.token_mode = tc.token_mode;
  g.c_in = config_.c_in;
  g.c_out = config_.c_out;
  g.in_h = config_.in_h;
  g.in_w = config_.in_w;
  g.out_h = out_h();
  g.out_w = out_w();
  g.ffn_hidden = transformer_.ffn_hidden();
  return g;
}

bool SearchingBlock::is_alive(const UnitRef& ref) const {
  const auto& list = ref.kind == UnitKind::kToken ? alive_tokens_
                                                  : alive_[static_cast<std::size_t>(group_of(ref.kind))];
  return std::binary_search(list.begin(), list.end(), ref.index);
}

int SearchingBlock::position(const UnitRef& ref) const {
  const auto& list = ref.kind == UnitKind::kToken ? alive_tokens_
                                                  : alive_[static_cast<std::size_t>(group_of(ref.kind))];
  const int limit = ref.kind == UnitKind::kToken ? config_.transformer.n : group_initial();
  if (ref.index < 0 || ref.index >= limit) {
    throw std::out_of_range("block: unknown unit " + to_string(ref.kind) + "#" +
                            std::to_string(ref.index));
  }
  auto it = std::lower_bound(list.begin(), list.end(), ref.index);
  if (it == list.end() || *it != ref.index) {
    throw StateError("block: unit " + to_string(ref.kind) + "#" + std::to_string(ref.index) +
                     " was already pruned");
  }
  return static_cast<int>(it - list.begin());
}

Real SearchingBlock::alpha(const UnitRef& ref) const {
  const int pos = position(ref);
  if (ref.kind == UnitKind::kToken) {
    return transformer_.projector_bn().gamma.data()[static_cast<std::size_t>(pos)];
  }
  return dw_bn_[static_cast<std::size_t>(group_of(ref.kind))].gamma.data()[static_cast<std::size_t>(pos)];
}

Flops SearchingBlock::delta(const UnitRef& ref) const {
  position(ref);
  if (ref.kind == UnitKind::kToken) return token_unit_delta(transformer_geometry());
  return conv_unit_delta(kMixKernels[static_cast<std::size_t>(group_of(ref.kind))], out_h(), out_w());
}

std::vector<BlockUnit> SearchingBlock::enumerate_search_units() const {
  std::vector<BlockUnit> units;
  units.reserve(static_cast<std::size_t>(unit_count()));
  for (int g = 0; g < 3; ++g) {
    const Flops d = conv_unit_delta(kMixKernels[static_cast<std::size_t>(g)], out_h(), out_w());
    const auto& gamma = dw_bn_[static_cast<std::size_t>(g)].gamma;
    for (std::size_t p = 0; p < alive_[static_cast<std::size_t>(g)].size(); ++p) {
      units.push_back({{static_cast<UnitKind>(g), alive_[static_cast<std::size_t>(g)][p]},
                       gamma.data()[p], d});
    }
  }
  if (tokens() > 0) {
    const Flops d = token_unit_delta(transformer_geometry());
    const auto& gamma = transformer_.projector_bn().gamma;
    for (std::size_t p = 0; p < alive_tokens_.size(); ++p) {
      units.push_back({{UnitKind::kToken, alive_tokens_[p]}, gamma.data()[p], d});
    }
  }
  return units;
}

void SearchingBlock::prune_conv(int group, int pos) {
  const auto g = static_cast<std::size_t>(group);
  const int row = group_offset(group) + pos;
  if (alive_conv() == 1) {
    c0_w_ = Tensor();
    c0_bn_ = BatchNorm();
    c4_w_ = Tensor();
    c4_bn_ = BatchNorm();
  } else {
    c0_w_.erase_index(0, row);
    c0_bn_.erase_channel(row);
    c4_w_.erase_index(1, row);
  }
  if (alive_conv(group) == 1) {
    dw_w_[g] = Tensor();
    dw_bn_[g] = BatchNorm();
  } else {
    dw_w_[g].erase_index(0, pos);
    dw_bn_[g].erase_channel(pos);
  }
  alive_[g].erase(alive_[g].begin() + pos);
}

void SearchingBlock::prune_units(const std::vector<UnitRef>& units) {
  std::set<std::pair<int, int>> requested;
  for (const auto& u : units) {
    position(u);  // validates
    if (!requested.emplace(static_cast<int>(u.kind), u.index).second) {
      throw StateError("block: unit " + to_string(u.kind) + "#" + std::to_string(u.index) +
                       " listed twice");
    }
  }
  for (const auto& u : units) {
    const int pos = position(u);
    if (u.kind == UnitKind::kToken) {
      transformer_.prune_token(pos);
      alive_tokens_.erase(alive_tokens_.begin() + pos);
    } else {
      prune_conv(group_of(u.kind), pos);
    }
  }
}

BlockForm SearchingBlock::form() const {
  if (unit_count() > 0) return BlockForm::kActive;
  return (config_.stride == 1 && config_.c_in == config_.c_out) ? BlockForm::kIdentity
                                                                : BlockForm::kZero;
}

BlockForm SearchingBlock::degenerate_form() const {
  if (unit_count() > 0) {
    throw StateError("block: degenerate_form requested while " + std::to_string(unit_count()) +
                     " units remain");
  }
  return form();
}

void SearchingBlock::visit_parameters(const std::string& prefix, const TensorVisitor& fn) {
  if (alive_conv() > 0) {
    fn(prefix + "c0.w", c0_w_);
    fn(prefix + "c0.bn.gamma", c0_bn_.gamma);
    fn(prefix + "c0.bn.beta", c0_bn_.beta);
    for (std::size_t g = 0; g < 3; ++g) {
      if (alive_[g].empty()) continue;
      const std::string gp = prefix + "dw" + std::to_string(kMixKernels[g]) + ".";
      fn(gp + "w", dw_w_[g]);
      fn(gp + "bn.gamma", dw_bn_[g].gamma);
      fn(gp + "bn.beta", dw_bn_[g].beta);
    }
    fn(prefix + "c4.w", c4_w_);
    fn(prefix + "c4.bn.gamma", c4_bn_.gamma);
    fn(prefix + "c4.bn.beta", c4_bn_.beta);
  }
  transformer_.visit_parameters(prefix + "T.", fn);
}

void SearchingBlock::visit_batch_norms(const std::string& prefix, const BnVisitor& fn) {
  if (alive_conv() > 0) {
    fn(prefix + "c0.bn", c0_bn_);
    for (std::size_t g = 0; g < 3; ++g) {
      if (!alive_[g].empty()) fn(prefix + "dw" + std::to_string(kMixKernels[g]) + ".bn", dw_bn_[g]);
    }
    fn(prefix + "c4.bn", c4_bn_);
  }
  transformer_.visit_batch_norms(prefix + "T.", fn);
}

}  // namespace hrnas
