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

#ifndef HRNAS_OPS_HPP_
#define HRNAS_OPS_HPP_

#include <vector>

#include "hrnas/tensor.hpp"

// Differentiable kernels. Feature maps are N x C x H x W, row-major.
namespace hrnas::ops {

// Output spatial size of a same-padded convolution (padding k/2).
inline int conv_out_size(int in, int stride) { return (in + stride - 1) / stride; }

/// out[n,o,p] = sum_c weight[o,c] * in[n,c,p] + bias[o]. weight is C' x C.
Tensor conv2d_pointwise(const Tensor& input, const Tensor& weight,
                        const Tensor& bias = Tensor());

/// Per-channel k x k convolution with padding k/2. weight is C x k x k,
/// k odd in [1, 7], stride 1 or 2.
Tensor conv2d_depthwise(const Tensor& input, const Tensor& weight, int stride);

/// Dense k x k convolution with padding k/2; weight is C' x C x k x k.
Tensor conv2d(const Tensor& input, const Tensor& weight, int stride);

/// Bilinear resize with half-pixel centers:
/// src = (dst + 0.5) * in / out - 0.5, clamped to [0, in - 1].
Tensor bilinear_resize(const Tensor& input, int out_h, int out_w);

Tensor matmul(const Tensor& a, const Tensor& b);            // [m,k] x [k,n]
Tensor bmm(const Tensor& a, const Tensor& b);               // [B,m,k] x [B,k,n]
Tensor transpose_last2(const Tensor& x);                    // [..., m, n] -> [..., n, m]
/// x[..., in] * weight[in, out] + bias[out] (bias optional).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = Tensor());

Tensor softmax_lastdim(const Tensor& x);
Tensor relu(const Tensor& x);
/// Normalizes over the last dimension; gamma and beta have that length.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Real eps = Real(1e-5));

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, Real factor);
Tensor reshape(const Tensor& x, const Shape& shape);
/// Tiles x along a new leading axis: [d...] -> [count, d...].
Tensor broadcast_leading(const Tensor& x, int count);

Tensor concat_channels(const std::vector<Tensor>& parts);
std::vector<Tensor> split_channels(const Tensor& x, const std::vector<int>& sizes);

Tensor global_avg_pool(const Tensor& x);                    // N x C x H x W -> N x C
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// sum_i weights[i] * |x_i|; d/dx_i = weights[i] * sign(x_i), sign(0) = 0.
Tensor weighted_abs_sum(const Tensor& x, const std::vector<double>& weights);

}  // namespace hrnas::ops

#endif  // HRNAS_OPS_HPP_
