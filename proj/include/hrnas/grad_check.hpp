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

#ifndef HRNAS_GRAD_CHECK_HPP_
#define HRNAS_GRAD_CHECK_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include "hrnas/tensor.hpp"

namespace hrnas {

struct GradCheckOptions {
  double step = 1e-3;
  // Fraction of parameter entries probed; 1 probes every entry.
  double sample_fraction = 1.0;
  std::uint64_t seed = 0;
  // Denominator floor of the relative error, |a - n| / max(|a|, |n|, floor).
  double abs_floor = 1e-6;
  // Skip entries whose +/- step evaluations land on different linear
  // pieces of a relu or abs; the difference quotient then spans a kink.
  bool skip_kinks = false;
};

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t probed = 0;
  std::size_t skipped_kinks = 0;
};

/// Compares reverse-mode gradients of a scalar `forward` against central
/// differences accumulated in double precision. `forward` must be
/// deterministic and rebuild its graph on each call.
GradCheckResult finite_difference_check(const std::function<Tensor()>& forward,
                                        std::vector<Tensor> params,
                                        const GradCheckOptions& options = {});

/// Convenience overload returning only the worst relative error.
double finite_difference_check(const std::function<Tensor()>& forward,
                               std::vector<Tensor> params, double step);

}  // namespace hrnas

#endif  // HRNAS_GRAD_CHECK_HPP_
