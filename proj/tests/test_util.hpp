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

#ifndef HRNAS_TESTS_TEST_UTIL_HPP_
#define HRNAS_TESTS_TEST_UTIL_HPP_

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "hrnas/tensor.hpp"

namespace hrnas::testing {

inline Tensor randn(const Shape& shape, std::mt19937_64& rng, bool requires_grad = false, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<Real>(g(rng));
  return Tensor::from(shape, std::move(v), requires_grad);
}

inline Tensor uniform(const Shape& shape, std::mt19937_64& rng, double lo, double hi, bool requires_grad = false) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<Real>(u(rng));
  return Tensor::from(shape, std::move(v), requires_grad);
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
  }
  return m;
}

inline std::vector<Real> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace hrnas::testing

#endif  // HRNAS_TESTS_TEST_UTIL_HPP_
