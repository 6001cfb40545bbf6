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

#ifndef HRNAS_BATCH_NORM_HPP_
#define HRNAS_BATCH_NORM_HPP_

#include <cstdint>
#include <vector>

#include "hrnas/tensor.hpp"

namespace hrnas {

enum class Mode { kTrain, kEval };

/// How a forward pass treats normalization layers. In train mode batch
/// statistics normalize the input; `update_stats` controls whether the
/// running estimates absorb them.
struct ForwardMode {
  Mode mode = Mode::kTrain;
  bool update_stats = true;

  static ForwardMode train() { return {Mode::kTrain, true}; }
  static ForwardMode train_frozen() { return {Mode::kTrain, false}; }
  static ForwardMode eval() { return {Mode::kEval, false}; }
};

enum class StatsUpdate { kMomentum, kCumulative };

/// Per-channel batch normalization. gamma and beta are trainable leaves;
/// running statistics are plain state. Variances are population (biased)
/// variances in both the normalization and the running estimates.
struct BatchNorm {
  Tensor gamma;
  Tensor beta;
  std::vector<Real> running_mean;
  std::vector<Real> running_var;
  Real eps = Real(1e-5);
  Real momentum = Real(0.1);
  StatsUpdate update = StatsUpdate::kMomentum;
  std::int64_t batches_seen = 0;
  bool stats_ready = false;

  BatchNorm() = default;
  explicit BatchNorm(int channels, Real eps = Real(1e-5));

  int channels() const { return gamma.defined() ? gamma.dim(0) : 0; }

  // Marks running statistics as valid, e.g. for an eval-only layer.
  void init_running_stats(std::vector<Real> mean, std::vector<Real> var);
  // Zeroes the running estimates and switches to cumulative averaging.
  void reset_for_recalibration();
  void erase_channel(int index);
};

/// Normalizes an N x C x H x W (or N x C) tensor per channel.
/// Throws StateError in eval mode when no running statistics exist.
Tensor batch_norm(const Tensor& input, BatchNorm& state, const ForwardMode& mode);

}  // namespace hrnas

#endif  // HRNAS_BATCH_NORM_HPP_
