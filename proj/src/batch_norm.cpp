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

#include "hrnas/batch_norm.hpp"

#include <cmath>

namespace hrnas {

BatchNorm::BatchNorm(int channels, Real eps_value)
    : gamma(Tensor::full({channels}, Real(1), true)),
      beta(Tensor::zeros({channels}, true)),
      running_mean(static_cast<std::size_t>(channels), Real(0)),
      running_var(static_cast<std::size_t>(channels), Real(1)),
      eps(eps_value) {}

void BatchNorm::init_running_stats(std::vector<Real> mean, std::vector<Real> var) {
  if (mean.size() != static_cast<std::size_t>(channels()) || var.size() != mean.size()) {
    throw ShapeError("BatchNorm: running statistics do not match channel count");
  }
  running_mean = std::move(mean);
  running_var = std::move(var);
  stats_ready = true;
}

void BatchNorm::reset_for_recalibration() {
  std::fill(running_mean.begin(), running_mean.end(), Real(0));
  std::fill(running_var.begin(), running_var.end(), Real(0));
  update = StatsUpdate::kCumulative;
  batches_seen = 0;
  stats_ready = false;
}

void BatchNorm::erase_channel(int index) {
  gamma.erase_index(0, index);
  beta.erase_index(0, index);
  running_mean.erase(running_mean.begin() + index);
  running_var.erase(running_var.begin() + index);
}

Tensor batch_norm(const Tensor& input, BatchNorm& state, const ForwardMode& fm) {
  if (!input.defined() || (input.rank() != 4 && input.rank() != 2)) {
    throw ShapeError("batch_norm: expected N x C x H x W or N x C input");
  }
  const int N = input.dim(0), C = input.dim(1);
  if (C != state.channels()) {
    throw ShapeError("batch_norm: input " + shape_str(input.shape()) + " has " +
                     std::to_string(C) + " channels, state has " +
                     std::to_string(state.channels()));
  }
  const std::size_t HW = input.rank() == 4
                             ? static_cast<std::size_t>(input.dim(2)) * input.dim(3)
                             : 1;
  const std::size_t M = static_cast<std::size_t>(N) * HW;
  const Real* x = input.data().data();
  const Real* g = state.gamma.data().data();
  const Real* b = state.beta.data().data();
  const bool training = fm.mode == Mode::kTrain;
  if (!training && !state.stats_ready) {
    throw StateError("batch_norm: eval mode requested before running statistics exist");
  }

  std::vector<Real> mean(static_cast<std::size_t>(C)), inv_std(static_cast<std::size_t>(C));
  if (training) {
    for (int c = 0; c < C; ++c) {
      Real acc = 0;
      for (int n = 0; n < N; ++n) {
        const Real* xp = x + (static_cast<std::size_t>(n) * C + c) * HW;
        for (std::size_t p = 0; p < HW; ++p) acc += xp[p];
      }
      const Real mu = acc / static_cast<Real>(M);
      Real var = 0;
      for (int n = 0; n < N; ++n) {
        const Real* xp = x + (static_cast<std::size_t>(n) * C + c) * HW;
        for (std::size_t p = 0; p < HW; ++p) var += (xp[p] - mu) * (xp[p] - mu);
      }
      var /= static_cast<Real>(M);
      mean[static_cast<std::size_t>(c)] = mu;
      inv_std[static_cast<std::size_t>(c)] = Real(1) / std::sqrt(var + state.eps);
      if (fm.update_stats) {
        auto& rm = state.running_mean[static_cast<std::size_t>(c)];
        auto& rv = state.running_var[static_cast<std::size_t>(c)];
        if (state.update == StatsUpdate::kCumulative) {
          const Real k = static_cast<Real>(state.batches_seen + 1);
          rm += (mu - rm) / k;
          rv += (var - rv) / k;
        } else if (!state.stats_ready) {
          rm = mu;
          rv = var;
        } else {
          rm = (1 - state.momentum) * rm + state.momentum * mu;
          rv = (1 - state.momentum) * rv + state.momentum * var;
        }
      }
    }
    if (fm.update_stats) {
      ++state.batches_seen;
      state.stats_ready = true;
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[static_cast<std::size_t>(c)] = state.running_mean[static_cast<std::size_t>(c)];
      inv_std[static_cast<std::size_t>(c)] =
          Real(1) / std::sqrt(state.running_var[static_cast<std::size_t>(c)] + state.eps);
    }
  }

  std::vector<Real> out(input.numel());
  std::vector<Real> xhat(input.numel());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const std::size_t off = (static_cast<std::size_t>(n) * C + c) * HW;
      const Real mu = mean[static_cast<std::size_t>(c)], is = inv_std[static_cast<std::size_t>(c)];
      for (std::size_t p = 0; p < HW; ++p) {
        const Real h = (x[off + p] - mu) * is;
        xhat[off + p] = h;
        out[off + p] = g[c] * h + b[c];
      }
    }

  return Tensor::make_op(
      input.shape(), std::move(out), {input, state.gamma, state.beta},
      [N, C, HW, M, training, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          detail::Node& self) {
        const Real* gy = self.grad.data();
        const Real* gamma = self.parents[1]->data.data();
        auto grad_ptr = [&](std::size_t i) -> Real* {
          auto* p = self.parents[i].get();
          return p->requires_grad ? p->ensure_grad().data() : nullptr;
        };
        Real* dx = grad_ptr(0);
        Real* dgamma = grad_ptr(1);
        Real* dbeta = grad_ptr(2);
        for (int c = 0; c < C; ++c) {
          Real sum_g = 0, sum_gh = 0;
          for (int n = 0; n < N; ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * HW;
            for (std::size_t p = 0; p < HW; ++p) {
              sum_g += gy[off + p];
              sum_gh += gy[off + p] * xhat[off + p];
            }
          }
          if (dgamma) dgamma[c] += sum_gh;
          if (dbeta) dbeta[c] += sum_g;
          if (!dx) continue;
          const Real gc = gamma[c], is = inv_std[static_cast<std::size_t>(c)];
          const Real inv_m = Real(1) / static_cast<Real>(M);
          for (int n = 0; n < N; ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * HW;
            for (std::size_t p = 0; p < HW; ++p) {
              if (training) {
                dx[off + p] += gc * is *
                               (gy[off + p] - inv_m * sum_g - xhat[off + p] * inv_m * sum_gh);
              } else {
                dx[off + p] += gc * is * gy[off + p];
              }
            }
          }
        }
      });
}

}  // namespace hrnas
