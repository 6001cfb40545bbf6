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

#include "hrnas/cost_model.hpp"

#include <iomanip>
#include <map>
#include "json.hpp"
#include <sstream>

#include "hrnas/ops.hpp"
#include "hrnas/supernet.hpp"

namespace hrnas {

namespace {

Flops u(int v) { return static_cast<Flops>(v < 0 ? 0 : v); }

}  // namespace

Flops conv_flops(ConvKind kind, int c_in, int c_out, int k, int h_out, int w_out) {
  const Flops hw = u(h_out) * u(w_out);
  switch (kind) {
    case ConvKind::kDepthwise: return u(c_out) * u(k) * u(k) * hw;
    case ConvKind::kPointwise: return u(c_in) * u(c_out) * hw;
    case ConvKind::kDense: return u(c_in) * u(c_out) * u(k) * u(k) * hw;
  }
  return 0;
}

TransformerFlops transformer_flops(const TransformerGeometry& g) {
  TransformerFlops f;
  if (g.n <= 0) return f;
  const Flops n = u(g.n), s2 = u(g.s) * u(g.s), d = u(g.d), heads = u(g.heads);
  const bool channel = g.token_mode == TokenMode::kChannel;
  const Flops T = channel ? n : s2;
  const Flops D = channel ? s2 : n;
  const Flops hidden = g.ffn_hidden > 0 ? u(g.ffn_hidden) : 4 * D;
  f.projector = conv_flops(ConvKind::kPointwise, g.c_in + 2, g.n, 1, g.in_h, g.in_w);
  f.inverse_projector = conv_flops(ConvKind::kPointwise, g.n, g.c_out, 1, g.out_h, g.out_w);
  f.attention_per_stage = heads * (4 * T * D * d + 2 * T * T * d);
  f.ffn_per_stage = 2 * T * D * hidden;
  return f;
}

Flops conv_unit_delta(int k, int h_out, int w_out) {
  return conv_flops(ConvKind::kDepthwise, 1, 1, k, h_out, w_out);
}

Flops token_unit_delta(const TransformerGeometry& g) {
  if (g.n <= 0) throw StateError("token_unit_delta: no tokens remain");
  TransformerGeometry below = g;
  below.n = g.n - 1;
  return transformer_flops(g).total() - transformer_flops(below).total();
}

BlockFlops block_flops_breakdown(const SearchingBlock& block, const std::string& name) {
  BlockFlops b;
  b.name = name;
  const auto& c = block.config();
  const int e = block.alive_conv();
  if (e > 0) {
    b.c0 = conv_flops(ConvKind::kPointwise, c.c_in, e, 1, c.in_h, c.in_w);
    for (int g = 0; g < 3; ++g) {
      b.depthwise += conv_flops(ConvKind::kDepthwise, 1, block.alive_conv(g),
                                kMixKernels[static_cast<std::size_t>(g)], block.out_h(), block.out_w());
    }
    b.c4 = conv_flops(ConvKind::kPointwise, e, c.c_out, 1, block.out_h(), block.out_w());
  }
  b.transformer = transformer_flops(block.transformer_geometry()).total();
  return b;
}

Flops block_flops(const SearchingBlock& block) { return block_flops_breakdown(block, "").total(); }

FlopsReport flops_report(const Supernet& net) {
  FlopsReport r;
  r.stem = net.stem_flops();
  r.head = net.head_flops();
  r.modules.push_back({"stem", r.stem});
  std::map<int, std::size_t> module_slot;
  for (const auto& slot : net.blocks()) {
    BlockFlops bf = block_flops_breakdown(*slot.block, slot.name);
    auto it = module_slot.find(slot.module);
    if (it == module_slot.end()) {
      it = module_slot.emplace(slot.module, r.modules.size()).first;
      r.modules.push_back({net.module_name(slot.module), 0});
    }
    r.modules[it->second].total += bf.total();
    r.blocks.push_back(bf);
    for (const auto& unit : slot.block->enumerate_search_units()) {
      r.deltas.push_back({slot.name, to_string(unit.ref.kind), unit.ref.index, unit.delta});
    }
  }
  r.modules.push_back({"head", r.head});
  for (const auto& m : r.modules) r.total += m.total;
  return r;
}

Flops brute_force_count(Supernet& net) {
  const auto& c = net.config();
  NoGradGuard no_grad;
  Tensor x = Tensor::zeros({1, c.in_channels, c.input_h, c.input_w});
  MacCounter counter;
  net.forward(x, ForwardMode::train_frozen());
  return counter.count();
}

std::string FlopsReport::to_table() const {
  std::ostringstream os;
  auto row = [&](const std::string& name, Flops v) {
    os << std::left << std::setw(24) << name << std::right << std::setw(16) << v << "\n";
  };
  os << std::left << std::setw(24) << "block" << std::right << std::setw(16) << "flops" << "\n";
  for (const auto& b : blocks) row(b.name, b.total());
  os << "\n";
  for (const auto& m : modules) row(m.name, m.total);
  os << "\n";
  row("total", total);
  return os.str();
}

std::string FlopsReport::to_json() const {
  nlohmann::json j;
  j["unit"] = "multiply-accumulate";
  j["total"] = total;
  j["stem"] = stem;
  j["head"] = head;
  j["modules"] = nlohmann::json::array();
  for (const auto& m : modules) j["modules"].push_back({{"name", m.name}, {"flops", m.total}});
  j["blocks"] = nlohmann::json::array();
  for (const auto& b : blocks) {
    j["blocks"].push_back({{"name", b.name},
                           {"c0", b.c0},
                           {"depthwise", b.depthwise},
                           {"c4", b.c4},
                           {"transformer", b.transformer},
                           {"total", b.total()}});
  }
  j["deltas"] = nlohmann::json::array();
  for (const auto& d : deltas) {
    j["deltas"].push_back({{"block", d.block}, {"kind", d.kind}, {"index", d.index}, {"delta", d.delta}});
  }
  return j.dump(2);
}

}  // namespace hrnas
