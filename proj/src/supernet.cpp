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

#include "hrnas/supernet.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "hrnas/init.hpp"
#include "hrnas/ops.hpp"

namespace hrnas {

std::string to_string(HeadKind kind) {
  return kind == HeadKind::kClassification ? "classification" : "dense";
}

HeadKind head_kind_from_string(const std::string& s) {
  if (s == "classification") return HeadKind::kClassification;
  if (s == "dense" || s == "segmentation") return HeadKind::kDense;
  throw ConfigError("unknown head kind '" + s + "' (expected classification or dense)");
}

SupernetConfig SupernetConfig::full() {
  SupernetConfig c;
  const std::vector<int> widths{18, 36, 72, 144};
  for (int branches : {1, 2, 3, 4, 4}) {
    ParallelModuleConfig m;
    m.widths.assign(widths.begin(), widths.begin() + branches);
    m.blocks.assign(static_cast<std::size_t>(branches), 2);
    c.modules.push_back(m);
  }
  c.transformer = TransformerConfig{8, 8, 64, 1, TokenMode::kChannel};
  return c;
}

SupernetConfig SupernetConfig::scaled() {
  SupernetConfig c;
  c.input_h = c.input_w = 24;
  c.stem_channels = 8;
  c.modules = {ParallelModuleConfig{{2}, {8}}, ParallelModuleConfig{{2, 2}, {8, 16}}};
  c.transformer = TransformerConfig{4, 4, 16, 1, TokenMode::kChannel};
  c.head = HeadKind::kDense;
  c.classes = 3;
  return c;
}

void SupernetConfig::validate() const {
  if (in_channels < 1 || stem_channels < 1) throw ConfigError("supernet: channel counts must be >= 1");
  if (input_h < 1 || input_w < 1) throw ConfigError("supernet: input size must be >= 1");
  if (max_branches < 1 || max_branches > 4) throw ConfigError("supernet: max_branches must be in [1, 4]");
  if (classes <= 0) throw ConfigError("supernet: class count must be positive");
  if (expansion < 0) throw ConfigError("supernet: expansion must be >= 0");
  if (modules.empty()) throw ConfigError("supernet: at least one parallel module is required");
  int prev = 0;
  for (std::size_t i = 0; i < modules.size(); ++i) {
    const auto& m = modules[i];
    const std::string where = "supernet: parallel module " + std::to_string(i + 1);
    if (m.widths.size() != m.blocks.size()) throw ConfigError(where + ": widths and blocks differ in length");
    const int b = m.branches();
    if (b < 1 || b > max_branches) throw ConfigError(where + ": branch count out of range");
    if (i == 0 && b != 1) throw ConfigError(where + ": the first module must have exactly one branch");
    if (i > 0 && (b < prev || b > prev + 1)) {
      throw ConfigError(where + ": branch count may only stay or grow by one (" +
                        std::to_string(prev) + " -> " + std::to_string(b) + ")");
    }
    for (int w : m.widths) if (w < 1) throw ConfigError(where + ": widths must be >= 1");
    for (int n : m.blocks) if (n < 0) throw ConfigError(where + ": block counts must be >= 0");
    prev = b;
  }
  if (modules[0].blocks[0] == 0 && modules[0].widths[0] != stem_channels) {
    throw ConfigError("supernet: stem width differs from the first branch but no block adapts it");
  }
}

Supernet::Supernet(const SupernetConfig& config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  const int sc = config_.stem_channels;
  stem_w1_ = init::he({sc, config_.in_channels, 3, 3}, config_.in_channels * 9, rng);
  stem_bn1_ = BatchNorm(sc);
  stem_w2_ = init::he({sc, sc, 3, 3}, sc * 9, rng);
  stem_bn2_ = BatchNorm(sc);

  auto make_block = [&](int c_in, int c_out, int stride, int src_branch) {
    BlockConfig bc;
    bc.c_in = c_in;
    bc.c_out = c_out;
    bc.stride = stride;
    bc.expansion = config_.expansion;
    auto [h, w] = branch_size(src_branch);
    bc.in_h = h;
    bc.in_w = w;
    bc.transformer = config_.transformer;
    return std::make_unique<SearchingBlock>(bc, rng);
  };

  for (std::size_t m = 0; m < config_.modules.size(); ++m) {
    const auto& mc = config_.modules[m];
    if (m > 0) {
      const auto& prev = config_.modules[m - 1];
      FusionModule fm;
      fm.m_in = prev.branches();
      fm.m_out = mc.branches();
      for (int to = 0; to < fm.m_out; ++to) {
        for (int from = to - 1; from <= to + 1; ++from) {
          if (from < 0 || from >= fm.m_in) continue;
          FusionEdge e;
          e.from = from;
          e.to = to;
          e.block = make_block(prev.widths[static_cast<std::size_t>(from)],
                               mc.widths[static_cast<std::size_t>(to)], from < to ? 2 : 1, from);
          fm.edges.push_back(std::move(e));
        }
      }
      fusion_.push_back(std::move(fm));
    }
    ParallelModule pm;
    for (int b = 0; b < mc.branches(); ++b) {
      std::vector<std::unique_ptr<SearchingBlock>> chain;
      const int width = mc.widths[static_cast<std::size_t>(b)];
      for (int j = 0; j < mc.blocks[static_cast<std::size_t>(b)]; ++j) {
        const int c_in = (m == 0 && j == 0) ? sc : width;
        chain.push_back(make_block(c_in, width, 1, b));
      }
      pm.branches.push_back(std::move(chain));
    }
    parallel_.push_back(std::move(pm));
  }

  const int hc = head_channels();
  if (config_.head == HeadKind::kDense) {
    head_w_ = init::fan_in({config_.classes, hc}, hc, rng);
  } else {
    head_w_ = init::fan_in({hc, config_.classes}, hc, rng);
  }
  head_b_ = Tensor::zeros({config_.classes}, true);
}

int Supernet::stem_out_h() const { return ops::conv_out_size(ops::conv_out_size(config_.input_h, 2), 2); }
int Supernet::stem_out_w() const { return ops::conv_out_size(ops::conv_out_size(config_.input_w, 2), 2); }

std::pair<int, int> Supernet::branch_size(int branch) const {
  int h = stem_out_h(), w = stem_out_w();
  for (int b = 0; b < branch; ++b) {
    h = ops::conv_out_size(h, 2);
    w = ops::conv_out_size(w, 2);
  }
  return {h, w};
}

int Supernet::head_channels() const {
  const auto& last = config_.modules.back().widths;
  return std::accumulate(last.begin(), last.end(), 0);
}

std::string Supernet::module_name(int flat_module) const {
  return (flat_module % 2 == 0 ? "P" : "F") + std::to_string(flat_module / 2 + 1);
}

Tensor Supernet::stem_forward(const Tensor& x, const ForwardMode& fm) {
  if (x.rank() != 4 || x.dim(1) != config_.in_channels) {
    throw ShapeError("supernet: input " + shape_str(x.shape()) + " does not have " +
                     std::to_string(config_.in_channels) + " channels");
  }
  Tensor y = ops::relu(batch_norm(ops::conv2d(x, stem_w1_, 2), stem_bn1_, fm));
  return ops::relu(batch_norm(ops::conv2d(y, stem_w2_, 2), stem_bn2_, fm));
}

std::vector<Tensor> Supernet::parallel_forward(int module, const std::vector<Tensor>& inputs,
                                               const ForwardMode& fm) {
  auto& pm = parallel_.at(static_cast<std::size_t>(module));
  if (inputs.size() != pm.branches.size()) {
    throw ShapeError("supernet: parallel module expects " + std::to_string(pm.branches.size()) +
                     " branches, got " + std::to_string(inputs.size()));
  }
  std::vector<Tensor> out;
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    Tensor h = inputs[b];
    for (auto& blk : pm.branches[b]) h = blk->forward(h, fm);
    out.push_back(h);
  }
  return out;
}

std::vector<Tensor> Supernet::fusion_forward(int fusion, const std::vector<Tensor>& inputs,
                                             const ForwardMode& fm) {
  auto& fmod = fusion_.at(static_cast<std::size_t>(fusion));
  if (static_cast<int>(inputs.size()) != fmod.m_in) {
    throw ShapeError("supernet: fusion module expects " + std::to_string(fmod.m_in) +
                     " branches, got " + std::to_string(inputs.size()));
  }
  const int N = inputs.front().dim(0);
  const auto& widths = config_.modules[static_cast<std::size_t>(fusion) + 1].widths;
  std::vector<Tensor> out;
  for (int to = 0; to < fmod.m_out; ++to) {
    auto [h, w] = branch_size(to);
    std::optional<Tensor> acc;
    for (auto& e : fmod.edges) {
      if (e.to != to) continue;
      auto c = e.block->contribute(inputs[static_cast<std::size_t>(e.from)], fm);
      if (!c) continue;
      Tensor v = *c;
      if (v.dim(2) != h || v.dim(3) != w) v = ops::bilinear_resize(v, h, w);
      acc = acc ? ops::add(*acc, v) : v;
    }
    out.push_back(acc ? *acc : Tensor::zeros({N, widths[static_cast<std::size_t>(to)], h, w}));
  }
  return out;
}

Tensor Supernet::head_forward(const std::vector<Tensor>& branches, const ForwardMode& fm) {
  (void)fm;
  if (branches.empty()) throw ShapeError("supernet: head needs at least one branch");
  const bool dense = config_.head == HeadKind::kDense;
  const Tensor& ref = dense ? branches.front() : branches.back();
  const int th = ref.dim(2), tw = ref.dim(3);
  std::vector<Tensor> aligned;
  for (const auto& b : branches) {
    aligned.push_back(b.dim(2) == th && b.dim(3) == tw ? b : ops::bilinear_resize(b, th, tw));
  }
  Tensor cat = aligned.size() == 1 ? aligned.front() : ops::concat_channels(aligned);
  if (dense) {
    Tensor logits = ops::conv2d_pointwise(cat, head_w_, head_b_);
    if (logits.dim(2) == config_.input_h && logits.dim(3) == config_.input_w) return logits;
    return ops::bilinear_resize(logits, config_.input_h, config_.input_w);
  }
  return ops::linear(ops::global_avg_pool(cat), head_w_, head_b_);
}

std::vector<Tensor> Supernet::features(const Tensor& x, const ForwardMode& fm) {
  std::vector<Tensor> branches{stem_forward(x, fm)};
  for (int m = 0; m < parallel_count(); ++m) {
    if (m > 0) branches = fusion_forward(m - 1, branches, fm);
    branches = parallel_forward(m, branches, fm);
  }
  return branches;
}

Tensor Supernet::forward(const Tensor& x, const ForwardMode& fm) {
  if (x.rank() == 4 && (x.dim(2) != config_.input_h || x.dim(3) != config_.input_w)) {
    throw ShapeError("supernet: input " + shape_str(x.shape()) + " does not match configured " +
                     std::to_string(config_.input_h) + "x" + std::to_string(config_.input_w));
  }
  return head_forward(features(x, fm), fm);
}

std::vector<BlockSlot> Supernet::blocks() const {
  std::vector<BlockSlot> slots;
  for (std::size_t m = 0; m < parallel_.size(); ++m) {
    if (m > 0) {
      const int flat = static_cast<int>(2 * m - 1);
      int idx = 0;
      for (const auto& e : fusion_[m - 1].edges) {
        slots.push_back({flat, idx++,
                         module_name(flat) + "." + std::to_string(e.from) + ">" + std::to_string(e.to),
                         e.block.get()});
      }
    }
    const int flat = static_cast<int>(2 * m);
    int idx = 0;
    for (std::size_t b = 0; b < parallel_[m].branches.size(); ++b) {
      for (std::size_t j = 0; j < parallel_[m].branches[b].size(); ++j) {
        slots.push_back({flat, idx++,
                         module_name(flat) + ".b" + std::to_string(b) + "." + std::to_string(j),
                         parallel_[m].branches[b][j].get()});
      }
    }
  }
  return slots;
}

SearchingBlock& Supernet::block(int module, int index) {
  for (auto& s : blocks()) {
    if (s.module == module && s.index == index) return *s.block;
  }
  throw std::out_of_range("supernet: no block " + std::to_string(index) + " in module " +
                          std::to_string(module));
}

Flops Supernet::stem_flops() const {
  const int h1 = ops::conv_out_size(config_.input_h, 2), w1 = ops::conv_out_size(config_.input_w, 2);
  return conv_flops(ConvKind::kDense, config_.in_channels, config_.stem_channels, 3, h1, w1) +
         conv_flops(ConvKind::kDense, config_.stem_channels, config_.stem_channels, 3,
                    stem_out_h(), stem_out_w());
}

Flops Supernet::head_flops() const {
  if (config_.head == HeadKind::kDense) {
    auto [h, w] = branch_size(0);
    return conv_flops(ConvKind::kPointwise, head_channels(), config_.classes, 1, h, w);
  }
  return static_cast<Flops>(head_channels()) * static_cast<Flops>(config_.classes);
}

void Supernet::visit_parameters(const TensorVisitor& fn) {
  fn("stem.conv1.w", stem_w1_);
  fn("stem.bn1.gamma", stem_bn1_.gamma);
  fn("stem.bn1.beta", stem_bn1_.beta);
  fn("stem.conv2.w", stem_w2_);
  fn("stem.bn2.gamma", stem_bn2_.gamma);
  fn("stem.bn2.beta", stem_bn2_.beta);
  for (auto& s : blocks()) s.block->visit_parameters(s.name + ".", fn);
  fn("head.w", head_w_);
  fn("head.b", head_b_);
}

void Supernet::visit_batch_norms(const BnVisitor& fn) {
  fn("stem.bn1", stem_bn1_);
  fn("stem.bn2", stem_bn2_);
  for (auto& s : blocks()) s.block->visit_batch_norms(s.name + ".", fn);
}

std::vector<Tensor> Supernet::parameters() {
  std::vector<Tensor> out;
  visit_parameters([&](const std::string&, Tensor& t) { out.push_back(t); });
  return out;
}

}  // namespace hrnas
