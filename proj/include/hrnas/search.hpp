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

#ifndef HRNAS_SEARCH_HPP_
#define HRNAS_SEARCH_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hrnas/supernet.hpp"
#include "hrnas/toytasks.hpp"

namespace hrnas {

struct SearchConfig {
  double lambda = 1e-4;
  double epsilon = 1e-3;
  int prune_period = 5;
  int epochs = 60;
  int batch_size = 16;
  double lr = 0.05;
  double lr_min = 0.0;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int recalibration_batches = 16;
  int recalibration_batch_size = 0;  // 0 reuses batch_size
  int recalibration_batch() const { return recalibration_batch_size > 0 ? recalibration_batch_size : batch_size; }
  std::uint64_t seed = 0;

  void validate() const;
};

struct SearchUnitId {
  int module = 0;  // flat module index (see BlockSlot)
  int block = 0;
  UnitKind kind = UnitKind::kConv3;
  int index = 0;
  bool operator==(const SearchUnitId&) const = default;
  std::string str() const;
};

struct SearchUnit {
  SearchUnitId id;
  std::string block_name;
  Real alpha = 0;
  Flops delta = 0;
  bool alive = true;
};

/// Registry of alive units across the network, in block order.
std::vector<SearchUnit> search_units(const Supernet& net);
int alive_unit_count(const Supernet& net);

/// One bound importance tensor (a BN scale) with the cost weight of each
/// of its entries.
struct PenaltyTerm {
  Tensor alpha;
  std::vector<double> delta;
};

/// Terms for every alive unit, with token weights taken at the current n'.
std::vector<PenaltyTerm> penalty_terms(Supernet& net);
/// lambda * sum_i delta_i * |alpha_i|.
Tensor penalty(const std::vector<PenaltyTerm>& terms, double lambda);

Tensor task_loss(const Tensor& output, const std::vector<int>& labels, HeadKind head);

/// SGD with heavy-ball momentum; the velocity lives in the tensor's
/// optimizer slot so that pruning keeps it aligned with the weights.
class Sgd {
 public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}
  void step(std::vector<Tensor>& params, double lr) const;

 private:
  double momentum_;
  double weight_decay_;
};

double cosine_lr(double base, double floor, int epoch, int epochs);

class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, std::string snapshot)
      : std::runtime_error(what), snapshot_(std::move(snapshot)) {}
  const std::string& snapshot() const { return snapshot_; }

 private:
  std::string snapshot_;
};

struct EpochStats {
  int epoch = 0;
  double task_loss = 0;
  double penalty = 0;
  Flops total_flops = 0;
  int alive_units = 0;
};

/// One pass over the shuffled train split on task loss plus penalty.
/// Throws TrainingAborted on a non-finite loss.
EpochStats train_epoch(Supernet& net, const ToyDataset& data, const SearchConfig& config,
                       const Sgd& optimizer, int epoch, std::mt19937_64& rng);

struct PruneReport {
  std::vector<SearchUnitId> removed;
  Flops flops_before = 0;
  Flops flops_after = 0;
};

/// Removes every alive unit with |alpha| < epsilon.
PruneReport prune_step(Supernet& net, double epsilon);

/// Re-estimates every BN's running statistics by cumulative averaging over
/// `batches` forward-only passes on the train split.
void recalibrate_bn(Supernet& net, const ToyDataset& data, int batches, int batch_size);
/// Same, over an explicit batch list.
void recalibrate_bn(Supernet& net, const std::vector<Batch>& batches);

struct Metrics {
  double loss = 0;
  double accuracy = 0;  // top-1, or pixel accuracy for dense heads
  double mean_iou = 0;  // dense heads only
};

/// Eval-mode metrics on the given split indices.
Metrics evaluate(Supernet& net, const ToyDataset& data, const std::vector<int>& indices,
                 int batch_size = 32);

struct PruneEvent {
  int epoch = 0;
  double task_loss = 0;
  int removed = 0;
  int alive_units = 0;
  Flops flops_before = 0;
  Flops flops_after = 0;
};

struct SearchLog {
  std::vector<EpochStats> epochs;
  std::vector<PruneEvent> prunes;
  std::string to_csv() const;
};

struct SearchResult {
  std::unique_ptr<Supernet> net;
  SearchLog log;
  Flops initial_flops = 0;
  Flops final_flops = 0;
  Metrics final_metrics;
};

using ProgressFn = std::function<void(const EpochStats&)>;

/// Train E epochs, prune, recalibrate, repeated until the epoch budget.
SearchResult search(const SupernetConfig& net_config, const SearchConfig& config,
                    const ToyDataset& data, const ProgressFn& progress = {});

}  // namespace hrnas

#endif  // HRNAS_SEARCH_HPP_
