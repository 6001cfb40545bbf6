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

#ifndef HRNAS_INIT_HPP_
#define HRNAS_INIT_HPP_

#include <cmath>
#include <random>

#include "hrnas/tensor.hpp"

namespace hrnas::init {

inline Tensor uniform(const Shape& shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<Real>(dist(rng));
  return Tensor::from(shape, std::move(v), true);
}

// Unit-variance-preserving uniform init for a layer with `fan_in` inputs.
inline Tensor fan_in(const Shape& shape, int fan_in, std::mt19937_64& rng) {
  return uniform(shape, std::sqrt(3.0 / fan_in), rng);
}

// He-style init for layers feeding a relu.
inline Tensor he(const Shape& shape, int fan_in, std::mt19937_64& rng) {
  return uniform(shape, std::sqrt(6.0 / fan_in), rng);
}

inline Tensor xavier(const Shape& shape, int fan_in, int fan_out, std::mt19937_64& rng) {
  return uniform(shape, std::sqrt(6.0 / (fan_in + fan_out)), rng);
}

}  // namespace hrnas::init

#endif  // HRNAS_INIT_HPP_
