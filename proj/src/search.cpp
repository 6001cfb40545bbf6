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

#include "hrnas/search.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "hrnas/ops.hpp"
#include "json.hpp"

namespace hrnas {

void SearchConfig::validate() const {
  if (!(lambda > 0)) throw ConfigError("search: lambda must be > 0");
  if (!(epsilon > 0)) throw ConfigError("search: epsilon must be > 0");
  if (prune_period < 1) throw ConfigError("search: prune_period must be >= 1");
  if (epochs < 0) throw ConfigError("search: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("search: batch_size must be >= 1");
  if (!(lr > 0) || lr_min < 0 || lr_min > lr) throw ConfigError("search: need 0 <= lr_min <= lr, lr > 0");
  if (momentum < 0 || momentum >= 1) throw ConfigError("search: momentum must be in [0, 1)");
  if (weight_decay < 0) throw ConfigError("search: weight_decay must be >= 0");
  if (recalibration_batches < 1) throw ConfigError("search: recalibration_batches must be >= 1");
  if (recalibration_batch_size < 0) throw ConfigError("search: recalibration_batch_size must be >= 0");
}

std::string SearchUnitId::str() const {
  return std::to_string(module) + "/" + std::to_string(block) + "/" + to_string(kind) + "#" +
         std::to_string(index);
}

std::vector<SearchUnit> search_units(const Supernet& net) {
  std::vector<SearchUnit> units;
  for (const auto& slot : net.blocks()) {
    for (const auto& u : slot.block->enumerate_search_units()) {
      units.push_back({{slot.module, slot.index, u.ref.kind, u.ref.index}, slot.name, u.alpha, u.delta, true});
    }
  }
  return units;
}

int alive_unit_count(const Supernet& net) {
  int total = 0;
  for (const auto& slot : net.blocks()) total += slot.block->unit_count();
  return total;
}

std::vector<PenaltyTerm> penalty_terms(Supernet& net) {
  std::vector<PenaltyTerm> terms;
  for (const auto& slot : net.blocks()) {
    SearchingBlock& b = *slot.block;
    for (int g = 0; g < 3; ++g) {
      if (b.alive_conv(g) == 0) continue;
      const double d = static_cast<double>(
          conv_unit_delta(kMixKernels[static_cast<std::size_t>(g)], b.out_h(), b.out_w()));
      terms.push_back({b.group_bn(g).gamma, std::vector<double>(static_cast<std::size_t>(b.alive_conv(g)), d)});
    }
    if (b.tokens() > 0) {
      const double d = static_cast<double>(token_unit_delta(b.transformer_geometry()));
      terms.push_back({b.transformer().projector_bn().gamma,
                       std::vector<double>(static_cast<std::size_t>(b.tokens()), d)});
    }
  }
  return terms;
}

Tensor penalty(const std::vector<PenaltyTerm>& terms, double lambda) {
  Tensor acc;
  for (const auto& t : terms) {
    Tensor s = ops::weighted_abs_sum(t.alpha, t.delta);
    acc = acc.defined() ? ops::add(acc, s) : s;
  }
  if (!acc.defined()) return Tensor::zeros({1});
  return ops::scale(acc, static_cast<Real>(lambda));
}

Tensor task_loss(const Tensor& output, const std::vector<int>& labels, HeadKind head) {
  return head == HeadKind::kDense ? pixel_cross_entropy(output, labels) : cross_entropy(output, labels);
}

void Sgd::step(std::vector<Tensor>& params, double lr) const {
  for (auto& p : params) {
    if (!p.defined() || !p.has_grad()) continue;
    auto& v = p.optimizer_slot();
    if (v.size() != p.numel()) v.assign(p.numel(), Real(0));
    auto w = p.mutable_data();
    auto g = p.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = static_cast<Real>(momentum_) * v[i] + g[i] + static_cast<Real>(weight_decay_) * w[i];
      w[i] -= static_cast<Real>(lr) * v[i];
    }
  }
}

double cosine_lr(double base, double floor, int epoch, int epochs) {
  if (epochs <= 0) return base;
  const double pi = 3.14159265358979323846;
  return floor + 0.5 * (base - floor) * (1 + std::cos(pi * epoch / epochs));
}

EpochStats train_epoch(Supernet& net, const ToyDataset& data, const SearchConfig& config,
                       const Sgd& optimizer, int epoch, std::mt19937_64& rng) {
  if (data.train.empty()) throw ConfigError("train_epoch: empty train split");
  std::vector<int> order = data.train;
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  std::size_t steps = order.size() / bs;
  if (steps == 0) steps = 1;
  const double lr = cosine_lr(config.lr, config.lr_min, epoch, config.epochs);
  const auto terms = penalty_terms(net);
  std::vector<Tensor> params = net.parameters();
  const HeadKind head = net.config().head;

  EpochStats stats;
  stats.epoch = epoch + 1;
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t lo = s * bs, hi = std::min(order.size(), lo + bs);
    Batch b = data.batch(std::vector<int>(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                          order.begin() + static_cast<std::ptrdiff_t>(hi)));
    for (auto& p : params) p.zero_grad();
    Tensor out = net.forward(b.images, ForwardMode::train());
    Tensor lt = task_loss(out, b.labels, head);
    Tensor pen = penalty(terms, config.lambda);
    const double lv = lt.item(), pv = pen.item();
    if (!std::isfinite(lv) || !std::isfinite(pv)) {
      nlohmann::json snap{{"epoch", epoch + 1}, {"step", s}, {"task_loss", std::isfinite(lv) ? lv : -1.0},
                          {"task_loss_finite", std::isfinite(lv)}, {"penalty_finite", std::isfinite(pv)},
                          {"lr", lr}, {"alive_units", alive_unit_count(net)}};
      throw TrainingAborted("training aborted: non-finite loss at epoch " + std::to_string(epoch + 1) +
                                ", step " + std::to_string(s),
                            snap.dump());
    }
    backward(ops::add(lt, pen));
    optimizer.step(params, lr);
    stats.task_loss += lv;
    stats.penalty += pv;
  }
  stats.task_loss /= static_cast<double>(steps);
  stats.penalty /= static_cast<double>(steps);
  stats.total_flops = flops_report(net).total;
  stats.alive_units = alive_unit_count(net);
  return stats;
}

PruneReport prune_step(Supernet& net, double epsilon) {
  PruneReport report;
  report.flops_before = flops_report(net).total;
  for (const auto& slot : net.blocks()) {
    std::vector<UnitRef> doomed;
    for (const auto& u : slot.block->enumerate_search_units()) {
      if (std::abs(static_cast<double>(u.alpha)) < epsilon) {
        doomed.push_back(u.ref);
        report.removed.push_back({slot.module, slot.index, u.ref.kind, u.ref.index});
      }
    }
    if (!doomed.empty()) slot.block->prune_units(doomed);
  }
  report.flops_after = report.removed.empty() ? report.flops_before : flops_report(net).total;
  return report;
}

void recalibrate_bn(Supernet& net, const std::vector<Batch>& batches) {
  if (batches.empty()) throw ConfigError("recalibrate_bn: no batches");
  net.visit_batch_norms([](const std::string&, BatchNorm& bn) { bn.reset_for_recalibration(); });
  {
    NoGradGuard no_grad;
    for (const auto& b : batches) net.forward(b.images, ForwardMode::train());
  }
  net.visit_batch_norms([](const std::string&, BatchNorm& bn) { bn.update = StatsUpdate::kMomentum; });
}

void recalibrate_bn(Supernet& net, const ToyDataset& data, int batches, int batch_size) {
  if (batches < 1) throw ConfigError("recalibrate_bn: batches must be >= 1");
  if (batch_size < 1) throw ConfigError("recalibrate_bn: batch_size must be >= 1");
  if (data.train.empty()) throw ConfigError("recalibrate_bn: empty train split");
  std::vector<Batch> list;
  const std::size_t n = data.train.size();
  for (int b = 0; b < batches; ++b) {
    std::vector<int> idx;
    for (int i = 0; i < batch_size; ++i) {
      idx.push_back(data.train[(static_cast<std::size_t>(b) * batch_size + i) % n]);
    }
    list.push_back(data.batch(idx));
  }
  recalibrate_bn(net, list);
}

Metrics evaluate(Supernet& net, const ToyDataset& data, const std::vector<int>& indices, int batch_size) {
  if (indices.empty()) throw ConfigError("evaluate: empty split");
  NoGradGuard no_grad;
  ConfusionMatrix cm(data.classes);
  const HeadKind head = net.config().head;
  double loss = 0;
  std::size_t seen = 0;
  for (std::size_t lo = 0; lo < indices.size(); lo += static_cast<std::size_t>(batch_size)) {
    const std::size_t hi = std::min(indices.size(), lo + static_cast<std::size_t>(batch_size));
    Batch b = data.batch(std::vector<int>(indices.begin() + static_cast<std::ptrdiff_t>(lo),
                                          indices.begin() + static_cast<std::ptrdiff_t>(hi)));
    Tensor out = net.forward(b.images, ForwardMode::eval());
    loss += task_loss(out, b.labels, head).item() * static_cast<double>(hi - lo);
    seen += hi - lo;
    cm.add(out, b.labels);
  }
  Metrics m;
  m.loss = loss / static_cast<double>(seen);
  m.accuracy = cm.accuracy();
  if (head == HeadKind::kDense) m.mean_iou = cm.mean_iou();
  return m;
}

std::string SearchLog::to_csv() const {
  std::ostringstream os;
  os << "epoch,task_loss,penalty,total_flops,alive_units\n";
  os << std::setprecision(9);
  for (const auto& e : epochs) {
    os << e.epoch << "," << e.task_loss << "," << e.penalty << "," << e.total_flops << ","
       << e.alive_units << "\n";
  }
  return os.str();
}

namespace {

void check_task(const SupernetConfig& c, const ToyDataset& data) {
  const bool dense = c.head == HeadKind::kDense;
  if (dense != (data.kind == TaskKind::kSegmentation)) {
    throw ConfigError("search: head '" + to_string(c.head) + "' does not fit a " + to_string(data.kind) + " task");
  }
  if (c.classes != data.classes) throw ConfigError("search: supernet and task disagree on class count");
  if (c.input_h != data.hw || c.input_w != data.hw) throw ConfigError("search: supernet input size differs from task");
  if (c.in_channels != data.channels) throw ConfigError("search: supernet input channels differ from task");
}

}  // namespace

SearchResult search(const SupernetConfig& net_config, const SearchConfig& config, const ToyDataset& data,
                    const ProgressFn& progress) {
  config.validate();
  check_task(net_config, data);
  SearchResult result;
  result.net = std::make_unique<Supernet>(net_config);
  Supernet& net = *result.net;
  result.initial_flops = flops_report(net).total;
  std::mt19937_64 rng(config.seed);
  const Sgd sgd(config.momentum, config.weight_decay);
  bool calibrated = false;
  for (int e = 0; e < config.epochs; ++e) {
    EpochStats stats = train_epoch(net, data, config, sgd, e, rng);
    calibrated = false;
    if ((e + 1) % config.prune_period == 0) {
      PruneReport r = prune_step(net, config.epsilon);
      recalibrate_bn(net, data, config.recalibration_batches, config.recalibration_batch());
      calibrated = true;
      stats.total_flops = r.flops_after;
      stats.alive_units = alive_unit_count(net);
      result.log.prunes.push_back({e + 1, stats.task_loss, static_cast<int>(r.removed.size()),
                                   stats.alive_units, r.flops_before, r.flops_after});
    }
    result.log.epochs.push_back(stats);
    if (progress) progress(stats);
  }
  if (!calibrated) recalibrate_bn(net, data, config.recalibration_batches, config.recalibration_batch());
  result.final_flops = flops_report(net).total;
  result.final_metrics = evaluate(net, data, data.val.empty() ? data.train : data.val, config.batch_size);
  return result;
}

}  // namespace hrnas
