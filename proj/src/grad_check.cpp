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

#include "hrnas/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace hrnas {

namespace {

double eval_scalar(const std::function<Tensor()>& forward, std::uint64_t* fingerprint = nullptr) {
  NoGradGuard guard;
  KinkRecorder kinks;
  Tensor out = forward();
  if (!out.defined() || out.numel() != 1) {
    throw ShapeError("finite_difference_check: forward must return a scalar");
  }
  const double v = static_cast<double>(out.item());
  if (!std::isfinite(v)) throw StateError("finite_difference_check: non-finite forward value");
  if (fingerprint) *fingerprint = kinks.fingerprint();
  return v;
}

}  // namespace

GradCheckResult finite_difference_check(const std::function<Tensor()>& forward,
                                        std::vector<Tensor> params,
                                        const GradCheckOptions& options) {
  if (!(options.step > 0)) throw ConfigError("finite_difference_check: step must be > 0");
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    Tensor loss = forward();
    if (!std::isfinite(static_cast<double>(loss.item()))) {
      throw StateError("finite_difference_check: non-finite forward value");
    }
    backward(loss);
  }

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  GradCheckResult result;
  for (auto& p : params) {
    std::vector<Real> analytic(p.numel(), Real(0));
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (options.sample_fraction < 1.0 && coin(rng) >= options.sample_fraction) continue;
      const Real original = values[i];
      // Divide by the perturbation actually representable in Real.
      const Real hi = static_cast<Real>(static_cast<double>(original) + options.step);
      const Real lo = static_cast<Real>(static_cast<double>(original) - options.step);
      std::uint64_t fp_up = 0, fp_down = 0;
      values[i] = hi;
      const double up = eval_scalar(forward, &fp_up);
      values[i] = lo;
      const double down = eval_scalar(forward, &fp_down);
      values[i] = original;
      if (options.skip_kinks && fp_up != fp_down) {
        ++result.skipped_kinks;
        continue;
      }
      const double numeric = (up - down) / (static_cast<double>(hi) - static_cast<double>(lo));
      const double a = static_cast<double>(analytic[i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      result.max_rel_error = std::max(result.max_rel_error, std::abs(a - numeric) / denom);
      ++result.probed;
    }
  }
  return result;
}

double finite_difference_check(const std::function<Tensor()>& forward,
                               std::vector<Tensor> params, double step) {
  GradCheckOptions options;
  options.step = step;
  return finite_difference_check(forward, std::move(params), options).max_rel_error;
}

}  // namespace hrnas
