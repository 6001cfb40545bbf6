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

// Acceptance gate: one line per criterion, nonzero exit if any fails.
//
//   acceptance [--work-dir DIR] [--gradient-suite PATH] [--only N]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hrnas/cli.hpp"
#include "hrnas/config.hpp"
#include "hrnas/cost_model.hpp"
#include "hrnas/descriptor.hpp"
#include "hrnas/ops.hpp"
#include "hrnas/search.hpp"
#include "hrnas/supernet.hpp"

namespace fs = std::filesystem;
using namespace hrnas;

namespace {

// Pinned tolerances and thresholds.
constexpr double kGradSuiteSeconds = 120;
constexpr int kFlopsConfigs = 24;
constexpr Flops kTransformerCore = 802816;
constexpr int kInvarianceTrials = 50;
constexpr double kInvarianceTol = 1e-6;
constexpr double kFlopsRatioMax = 0.60;
constexpr double kPixelAccuracyMin = 0.90;
constexpr double kSearchSeconds = 15 * 60;
constexpr double kLambdaLow = 1e-4;
constexpr double kLambdaHigh = 4e-4;
constexpr double kRecalRelTol = 0.02;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string config_path() { return std::string(HRNAS_CONFIG_DIR) + "/scaled.json"; }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
  return m;
}

Tensor randn(const Shape& shape, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<Real>(g(rng));
  return Tensor::from(shape, std::move(v));
}

BlockConfig block_config(int c_in, int c_out, int stride, int hw, int n, int expansion) {
  BlockConfig c;
  c.c_in = c_in;
  c.c_out = c_out;
  c.stride = stride;
  c.expansion = expansion;
  c.in_h = c.in_w = hw;
  c.transformer = {n, 4, 8, 1, TokenMode::kChannel};
  return c;
}

// ---------------------------------------------------------------------------

Outcome gradients(const std::string& suite) {
  if (suite.empty() || !fs::exists(suite)) return {false, "gradient suite binary not found: " + suite};
  const auto t0 = std::chrono::steady_clock::now();
  const int rc = std::system(("\"" + suite + "\" --gtest_brief=1 > /dev/null 2>&1").c_str());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream os;
  os << "f64 suite (kernels + scaled supernet, 10 seeds, rel < 1e-3) exit " << rc << ", " << secs << " s";
  return {rc == 0 && secs < kGradSuiteSeconds, os.str()};
}

SupernetConfig random_config(std::mt19937_64& rng) {
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  SupernetConfig c;
  c.input_h = uni(8, 20);
  c.input_w = uni(8, 20);
  c.stem_channels = uni(2, 6);
  c.expansion = uni(0, 2);
  c.transformer = {uni(0, 3), uni(1, 4), uni(1, 6), uni(1, 2), uni(0, 1) ? TokenMode::kSpatial : TokenMode::kChannel};
  c.head = uni(0, 1) ? HeadKind::kDense : HeadKind::kClassification;
  c.classes = uni(2, 4);
  c.seed = static_cast<std::uint64_t>(uni(0, 1000));
  const int modules = uni(1, 3);
  int branches = 1;
  for (int m = 0; m < modules; ++m) {
    if (m > 0) branches = std::min(4, branches + uni(0, 1));
    ParallelModuleConfig pm;
    for (int b = 0; b < branches; ++b) {
      pm.widths.push_back(uni(2, 6));
      pm.blocks.push_back(uni(0, 2));
    }
    c.modules.push_back(pm);
  }
  if (c.modules[0].blocks[0] == 0) c.stem_channels = c.modules[0].widths[0];
  return c;
}

Outcome flops_oracle() {
  std::mt19937_64 rng(20);
  int states = 0, agree = 0;
  std::uniform_real_distribution<double> coin(0, 1);
  for (int t = 0; t < kFlopsConfigs; ++t) {
    Supernet net(random_config(rng));
    for (double fraction : {0.0, 0.3, 0.7, 1.0}) {
      for (auto& slot : net.blocks()) {
        std::vector<UnitRef> refs;
        for (const auto& u : slot.block->enumerate_search_units())
          if (coin(rng) < fraction) refs.push_back(u.ref);
        slot.block->prune_units(refs);
      }
      ++states;
      agree += flops_report(net).total == brute_force_count(net);
    }
  }
  TransformerGeometry g;
  g.n = g.s = 8;
  g.d = 64;
  g.c_in = g.c_out = 8;
  g.in_h = g.in_w = g.out_h = g.out_w = 8;
  const Flops core = transformer_flops(g).core();
  std::ostringstream os;
  os << agree << "/" << states << " states exact over " << kFlopsConfigs << " configs, core(8,8,64) = " << core;
  return {agree == states && core == kTransformerCore, os.str()};
}

Outcome zero_invariance() {
  std::mt19937_64 rng(30);
  std::uniform_int_distribution<int> pick_c(2, 5), pick_stride(1, 2), pick_n(0, 3), pick_hw(4, 9);
  double worst = 0;
  for (int trial = 0; trial < kInvarianceTrials; ++trial) {
    const int c_in = pick_c(rng), stride = pick_stride(rng), hw = pick_hw(rng);
    const int c_out = stride == 1 && trial % 2 == 0 ? c_in : pick_c(rng);
    SearchingBlock b(block_config(c_in, c_out, stride, hw, pick_n(rng), 1), rng);
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
    NoGradGuard ng;
    b.forward(x, ForwardMode::train());
    Tensor tr = b.forward(x, ForwardMode::train_frozen());
    Tensor ev = b.forward(x, ForwardMode::eval());
    b.prune_units({target});
    worst = std::max({worst, max_abs_diff(b.forward(x, ForwardMode::train_frozen()), tr),
                      max_abs_diff(b.forward(x, ForwardMode::eval()), ev)});
  }
  std::ostringstream os;
  os << kInvarianceTrials << " pairs, max |diff| = " << worst;
  return {worst < kInvarianceTol, os.str()};
}

Outcome degeneracy() {
  std::mt19937_64 rng(40);
  SearchingBlock b(block_config(6, 6, 1, 8, 4, 2), rng);
  std::vector<UnitRef> tokens;
  for (int t : b.alive_tokens()) tokens.push_back({UnitKind::kToken, t});
  b.prune_units(tokens);
  Tensor x = randn({2, 6, 8, 8}, rng);
  NoGradGuard ng;
  bool exact = true;
  for (ForwardMode fm : {ForwardMode::train_frozen(), ForwardMode::eval()}) {
    if (fm.mode == Mode::kEval) b.forward(x, ForwardMode::train());
    exact = exact && max_abs_diff(b.forward(x, fm), ops::add(*b.mixconv(x, fm), x)) == 0.0;
  }
  const Flops tf = block_flops_breakdown(b, "b").transformer;
  std::ostringstream os;
  os << "output == mixconv + x " << (exact ? "exactly" : "NOT exactly") << ", transformer FLOPs " << tf;
  return {exact && tf == 0, os.str()};
}

Outcome unit_accounting() {
  Supernet net(SupernetConfig::full());
  std::vector<int> branches;
  bool widths_ok = true;
  const std::vector<int> widths{18, 36, 72, 144};
  for (int m = 0; m < net.parallel_count(); ++m) {
    const auto& pm = net.parallel_module(m);
    branches.push_back(static_cast<int>(pm.branches.size()));
    for (std::size_t b = 0; b < pm.branches.size(); ++b)
      for (const auto& blk : pm.branches[b]) widths_ok = widths_ok && blk->c_out() == widths[b];
  }
  const int units = net.block(0, 1).unit_count();
  std::ostringstream os;
  os << net.parallel_count() << " parallel modules, branches";
  for (int b : branches) os << " " << b;
  os << ", widths " << (widths_ok ? "18/36/72/144" : "MISMATCH") << ", first-branch block units " << units;
  return {branches == std::vector<int>{1, 2, 3, 4, 4} && widths_ok && units == 3 * 4 * 18 + 8, os.str()};
}

struct SearchRun {
  RunConfig rc;
  ToyDataset data;
  SearchResult result;
  double seconds = 0;
};

SearchRun run_search(double lambda) {
  SearchRun r;
  r.rc = load_run_config(config_path());
  if (lambda > 0) r.rc.search.lambda = lambda;
  r.data = make_dataset(*r.rc.task);
  const auto t0 = std::chrono::steady_clock::now();
  r.result = search(r.rc.supernet, r.rc.search, r.data);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

Outcome desk_search(const SearchRun& r) {
  const SearchLog& log = r.result.log;
  bool monotone = true;
  Flops prev = r.result.initial_flops;
  for (const auto& p : log.prunes) {
    monotone = monotone && p.flops_before <= prev && p.flops_after <= p.flops_before;
    prev = p.flops_after;
  }
  prev = r.result.initial_flops;
  for (const auto& e : log.epochs) {
    monotone = monotone && e.total_flops <= prev;
    prev = e.total_flops;
  }
  const double ratio = static_cast<double>(r.result.final_flops) / static_cast<double>(r.result.initial_flops);
  const double acc = r.result.final_metrics.accuracy;
  std::ostringstream os;
  os << "lambda " << r.rc.search.lambda << ": " << log.prunes.size() << " prune events "
     << (monotone ? "non-increasing" : "INCREASING") << ", final/initial " << r.result.final_flops << "/"
     << r.result.initial_flops << " = " << ratio << " (max " << kFlopsRatioMax << "), pixel acc " << acc
     << " (min " << kPixelAccuracyMin << "), " << r.seconds << " s";
  return {monotone && ratio <= kFlopsRatioMax && acc >= kPixelAccuracyMin && r.seconds <= kSearchSeconds, os.str()};
}

Outcome lambda_monotone() {
  const SearchRun low = run_search(kLambdaLow);
  const SearchRun high = run_search(kLambdaHigh);
  std::ostringstream os;
  os << "final FLOPs lambda " << kLambdaHigh << " = " << high.result.final_flops << ", lambda " << kLambdaLow
     << " = " << low.result.final_flops << " (pixel acc " << high.result.final_metrics.accuracy << " / "
     << low.result.final_metrics.accuracy << ")";
  return {high.result.final_flops <= low.result.final_flops, os.str()};
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::uint32_t trailer_crc(const std::vector<std::uint8_t>& b) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4 && b.size() >= 4; ++i) v |= static_cast<std::uint32_t>(b[b.size() - 4 + i]) << (8 * i);
  return v;
}

Outcome determinism(const fs::path& work, SearchRun& reference) {
  std::ostringstream sink;
  auto run = [&](const std::string& name) {
    return cli::run({"hrnas", "search", "--config", config_path(), "--out", (work / name).string(), "--quiet"},
                    sink, sink);
  };
  const int a = run("det_a"), b = run("det_b");
  if (a != 0 || b != 0) return {false, "cmd_search exit codes " + std::to_string(a) + ", " + std::to_string(b)};
  const auto bytes_a = read_bytes(work / "det_a" / "descriptor.hrnas");
  const bool identical = !bytes_a.empty() && bytes_a == read_bytes(work / "det_b" / "descriptor.hrnas");

  ArchitectureDescriptor d =
      describe(*reference.result.net, reference.rc.search, &reference.result, to_json(*reference.rc.task));
  const fs::path file = work / "roundtrip.hrnas";
  export_descriptor(d, file.string());
  auto net = rebuild(import_descriptor(file.string()));
  std::vector<int> idx(reference.data.val.begin(), reference.data.val.begin() + 8);
  Tensor x = reference.data.batch(idx).images;
  NoGradGuard ng;
  Tensor ya = reference.result.net->forward(x, ForwardMode::eval());
  Tensor yb = net->forward(x, ForwardMode::eval());
  const bool bit_identical = std::equal(ya.data().begin(), ya.data().end(), yb.data().begin(), yb.data().end());
  std::ostringstream os;
  os << "two cmd_search runs " << (identical ? "byte-identical" : "DIFFER") << " (" << bytes_a.size()
     << " bytes, embedded crc " << std::hex << std::setw(8) << std::setfill('0') << trailer_crc(bytes_a) << std::dec
     << "), round-trip forward "
     << (bit_identical ? "bit-identical" : "DIFFERS");
  return {identical && bit_identical, os.str()};
}

Outcome positional() {
  int mismatches = 0, checked = 0;
  for (auto [h, w] : {std::pair{1, 1}, std::pair{2, 2}, std::pair{4, 2}, std::pair{8, 8}}) {
    Tensor p = positional_map(h, w);
    if (p.shape() != Shape{2, h, w}) return {false, "wrong shape for " + std::to_string(h) + "x" + std::to_string(w)};
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        checked += 2;
        mismatches += p.at({0, i, j}) != static_cast<Real>(i) / static_cast<Real>(h);
        mismatches += p.at({1, i, j}) != static_cast<Real>(j) / static_cast<Real>(w);
      }
  }
  std::ostringstream os;
  os << checked << " entries over (1,1) (2,2) (4,2) (8,8), " << mismatches << " mismatches";
  return {mismatches == 0, os.str()};
}

// Rebuilds the recalibration stream the search used, recalibrates on it and
// compares mean eval-mode loss with mean batch-statistics loss over it.
Outcome recalibration(SearchRun& r) {
  Supernet& net = *r.result.net;
  const SearchConfig& sc = r.rc.search;
  std::vector<Batch> stream;
  const std::size_t n = r.data.train.size();
  for (int b = 0; b < sc.recalibration_batches; ++b) {
    std::vector<int> idx;
    for (int i = 0; i < sc.recalibration_batch(); ++i)
      idx.push_back(r.data.train[(static_cast<std::size_t>(b) * sc.recalibration_batch() + i) % n]);
    stream.push_back(r.data.batch(idx));
  }
  recalibrate_bn(net, stream);
  double eval_loss = 0, train_loss = 0;
  NoGradGuard ng;
  for (const auto& b : stream) {
    eval_loss += task_loss(net.forward(b.images, ForwardMode::eval()), b.labels, net.config().head).item();
    train_loss += task_loss(net.forward(b.images, ForwardMode::train_frozen()), b.labels, net.config().head).item();
  }
  eval_loss /= static_cast<double>(stream.size());
  train_loss /= static_cast<double>(stream.size());
  const double rel = std::abs(eval_loss - train_loss) / std::abs(train_loss);
  std::ostringstream os;
  os << "pruned net (" << r.result.final_flops << " FLOPs), " << stream.size() << " batches of "
     << sc.recalibration_batch() << ", eval loss " << eval_loss << ", train-mode loss "
     << train_loss << ", rel " << rel << " (max " << kRecalRelTol << ")";
  return {rel <= kRecalRelTol, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "hrnas_acceptance";
  std::string suite = HRNAS_GRADIENT_SUITE;
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work-dir" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--gradient-suite" && i + 1 < argc) {
      suite = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::cerr << "usage: acceptance [--work-dir DIR] [--gradient-suite PATH] [--only N]\n";
      return 2;
    }
  }
  fs::remove_all(work);
  fs::create_directories(work);

  std::unique_ptr<SearchRun> reference;
  auto searched = [&]() -> SearchRun& {
    if (!reference) reference = std::make_unique<SearchRun>(run_search(0));
    return *reference;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", [&] { return gradients(suite); }},
      {"FLOPs oracle", flops_oracle},
      {"exact-zero pruning invariance", zero_invariance},
      {"degeneracy", degeneracy},
      {"unit accounting", unit_accounting},
      {"desk-scale search", [&] { return desk_search(searched()); }},
      {"lambda monotonicity", lambda_monotone},
      {"determinism and round-trip", [&] { return determinism(work, searched()); }},
      {"positional map", positional},
      {"BN recalibration", [&] { return recalibration(searched()); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (only != 0 && only != id) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << id << " " << criteria[i].first << ": " << o.detail << " ["
              << std::fixed << std::setprecision(1) << secs << " s]" << std::defaultfloat << std::setprecision(6)
              << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
