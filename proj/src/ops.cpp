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

#include "hrnas/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hrnas::ops {

namespace {

using detail::Node;
using std::size_t;

// Parent grad buffer, or nullptr when that parent needs no gradient.
Real* grad_of(Node& self, size_t i) {
  if (i >= self.parents.size()) return nullptr;
  Node* p = self.parents[i].get();
  if (p == nullptr || !p->requires_grad) return nullptr;
  return p->ensure_grad().data();
}

const Real* data_of(Node& self, size_t i) { return self.parents[i]->data.data(); }

void require_rank(const Tensor& t, int rank, const char* what) {
  if (!t.defined()) throw ShapeError(std::string(what) + ": undefined tensor");
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                     ", got " + shape_str(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

struct ResizeTap {
  int i0, i1;
  Real lambda;
};

std::vector<ResizeTap> resize_taps(int in, int out) {
  std::vector<ResizeTap> taps(static_cast<size_t>(out));
  const double scale_factor = static_cast<double>(in) / static_cast<double>(out);
  for (int d = 0; d < out; ++d) {
    double src = (d + 0.5) * scale_factor - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    int i0 = static_cast<int>(std::floor(src));
    int i1 = std::min(i0 + 1, in - 1);
    taps[static_cast<size_t>(d)] = {i0, i1, static_cast<Real>(src - i0)};
  }
  return taps;
}

}  // namespace

Tensor conv2d_pointwise(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 4, "conv2d_pointwise input");
  require_rank(weight, 2, "conv2d_pointwise weight");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int O = weight.dim(0);
  if (weight.dim(1) != C) {
    throw ShapeError("conv2d_pointwise: weight " + shape_str(weight.shape()) +
                     " does not match input " + shape_str(input.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != O)) {
    throw ShapeError("conv2d_pointwise: bias " + shape_str(bias.shape()) +
                     " does not match weight " + shape_str(weight.shape()));
  }
  const size_t HW = static_cast<size_t>(H) * static_cast<size_t>(W);
  std::vector<Real> out(static_cast<size_t>(N) * O * HW, Real(0));
  const Real* x = input.data().data();
  const Real* w = weight.data().data();
  for (int n = 0; n < N; ++n) {
    for (int o = 0; o < O; ++o) {
      Real* op = out.data() + (static_cast<size_t>(n) * O + o) * HW;
      if (bias.defined()) std::fill(op, op + HW, bias.data()[static_cast<size_t>(o)]);
      for (int c = 0; c < C; ++c) {
        const Real wv = w[static_cast<size_t>(o) * C + c];
        const Real* xp = x + (static_cast<size_t>(n) * C + c) * HW;
        for (size_t p = 0; p < HW; ++p) op[p] += wv * xp[p];
      }
    }
  }
  count_macs(static_cast<std::uint64_t>(N) * O * C * HW);
  return Tensor::make_op(
      {N, O, H, W}, std::move(out), {input, weight, bias},
      [N, C, O, HW](Node& self) {
        const Real* g = self.grad.data();
        const Real* xd = data_of(self, 0);
        const Real* wd = data_of(self, 1);
        if (Real* dx = grad_of(self, 0)) {
          for (int n = 0; n < N; ++n)
            for (int o = 0; o < O; ++o) {
              const Real* gp = g + (static_cast<size_t>(n) * O + o) * HW;
              for (int c = 0; c < C; ++c) {
                const Real wv = wd[static_cast<size_t>(o) * C + c];
                Real* dp = dx + (static_cast<size_t>(n) * C + c) * HW;
                for (size_t p = 0; p < HW; ++p) dp[p] += wv * gp[p];
              }
            }
        }
        if (Real* dw = grad_of(self, 1)) {
          for (int o = 0; o < O; ++o)
            for (int c = 0; c < C; ++c) {
              Real acc = 0;
              for (int n = 0; n < N; ++n) {
                const Real* gp = g + (static_cast<size_t>(n) * O + o) * HW;
                const Real* xp = xd + (static_cast<size_t>(n) * C + c) * HW;
                for (size_t p = 0; p < HW; ++p) acc += gp[p] * xp[p];
              }
              dw[static_cast<size_t>(o) * C + c] += acc;
            }
        }
        if (Real* db = grad_of(self, 2)) {
          for (int o = 0; o < O; ++o) {
            Real acc = 0;
            for (int n = 0; n < N; ++n) {
              const Real* gp = g + (static_cast<size_t>(n) * O + o) * HW;
              for (size_t p = 0; p < HW; ++p) acc += gp[p];
            }
            db[o] += acc;
          }
        }
      });
}

Tensor conv2d_depthwise(const Tensor& input, const Tensor& weight, int stride) {
  require_rank(input, 4, "conv2d_depthwise input");
  require_rank(weight, 3, "conv2d_depthwise weight");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int k = weight.dim(1);
  if (k != weight.dim(2) || k % 2 == 0 || k > 7) {
    throw ConfigError("conv2d_depthwise: unsupported kernel " + shape_str(weight.shape()));
  }
  if (stride != 1 && stride != 2) {
    throw ConfigError("conv2d_depthwise: unsupported stride " + std::to_string(stride));
  }
  if (weight.dim(0) != C) {
    throw ShapeError("conv2d_depthwise: weight " + shape_str(weight.shape()) +
                     " does not match input " + shape_str(input.shape()));
  }
  const int Ho = conv_out_size(H, stride), Wo = conv_out_size(W, stride);
  const int pad = k / 2;
  std::vector<Real> out(static_cast<size_t>(N) * C * Ho * Wo, Real(0));
  const Real* x = input.data().data();
  const Real* w = weight.data().data();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const Real* xp = x + (static_cast<size_t>(n) * C + c) * H * W;
      const Real* wp = w + static_cast<size_t>(c) * k * k;
      Real* op = out.data() + (static_cast<size_t>(n) * C + c) * Ho * Wo;
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow) {
          Real acc = 0;
          for (int kh = 0; kh < k; ++kh) {
            const int ih = oh * stride - pad + kh;
            if (ih < 0 || ih >= H) continue;
            for (int kw = 0; kw < k; ++kw) {
              const int iw = ow * stride - pad + kw;
              if (iw < 0 || iw >= W) continue;
              acc += wp[kh * k + kw] * xp[ih * W + iw];
            }
          }
          op[oh * Wo + ow] = acc;
        }
    }
  // Zero padding taps count as issued MACs: k*k per output element.
  count_macs(static_cast<std::uint64_t>(N) * C * Ho * Wo * k * k);
  return Tensor::make_op(
      {N, C, Ho, Wo}, std::move(out), {input, weight},
      [N, C, H, W, Ho, Wo, k, stride, pad](Node& self) {
        const Real* g = self.grad.data();
        const Real* xd = data_of(self, 0);
        const Real* wd = data_of(self, 1);
        Real* dx = grad_of(self, 0);
        Real* dw = grad_of(self, 1);
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c) {
            const size_t in_off = (static_cast<size_t>(n) * C + c) * H * W;
            const Real* gp = g + (static_cast<size_t>(n) * C + c) * Ho * Wo;
            const Real* wp = wd + static_cast<size_t>(c) * k * k;
            for (int oh = 0; oh < Ho; ++oh)
              for (int ow = 0; ow < Wo; ++ow) {
                const Real gv = gp[oh * Wo + ow];
                for (int kh = 0; kh < k; ++kh) {
                  const int ih = oh * stride - pad + kh;
                  if (ih < 0 || ih >= H) continue;
                  for (int kw = 0; kw < k; ++kw) {
                    const int iw = ow * stride - pad + kw;
                    if (iw < 0 || iw >= W) continue;
                    if (dx) dx[in_off + static_cast<size_t>(ih * W + iw)] += wp[kh * k + kw] * gv;
                    if (dw) dw[static_cast<size_t>(c) * k * k + static_cast<size_t>(kh * k + kw)] +=
                        xd[in_off + static_cast<size_t>(ih * W + iw)] * gv;
                  }
                }
              }
          }
      });
}

Tensor conv2d(const Tensor& input, const Tensor& weight, int stride) {
  require_rank(input, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int O = weight.dim(0), k = weight.dim(2);
  if (k != weight.dim(3) || k % 2 == 0 || k > 7) {
    throw ConfigError("conv2d: unsupported kernel " + shape_str(weight.shape()));
  }
  if (stride != 1 && stride != 2) {
    throw ConfigError("conv2d: unsupported stride " + std::to_string(stride));
  }
  if (weight.dim(1) != C) {
    throw ShapeError("conv2d: weight " + shape_str(weight.shape()) +
                     " does not match input " + shape_str(input.shape()));
  }
  const int Ho = conv_out_size(H, stride), Wo = conv_out_size(W, stride);
  const int pad = k / 2;
  std::vector<Real> out(static_cast<size_t>(N) * O * Ho * Wo, Real(0));
  const Real* x = input.data().data();
  const Real* w = weight.data().data();
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < O; ++o) {
      Real* op = out.data() + (static_cast<size_t>(n) * O + o) * Ho * Wo;
      for (int c = 0; c < C; ++c) {
        const Real* xp = x + (static_cast<size_t>(n) * C + c) * H * W;
        const Real* wp = w + (static_cast<size_t>(o) * C + c) * k * k;
        for (int oh = 0; oh < Ho; ++oh)
          for (int ow = 0; ow < Wo; ++ow) {
            Real acc = 0;
            for (int kh = 0; kh < k; ++kh) {
              const int ih = oh * stride - pad + kh;
              if (ih < 0 || ih >= H) continue;
              for (int kw = 0; kw < k; ++kw) {
                const int iw = ow * stride - pad + kw;
                if (iw < 0 || iw >= W) continue;
                acc += wp[kh * k + kw] * xp[ih * W + iw];
              }
            }
            op[oh * Wo + ow] += acc;
          }
      }
    }
  count_macs(static_cast<std::uint64_t>(N) * O * C * Ho * Wo * k * k);
  return Tensor::make_op(
      {N, O, Ho, Wo}, std::move(out), {input, weight},
      [N, C, H, W, O, Ho, Wo, k, stride, pad](Node& self) {
        const Real* g = self.grad.data();
        const Real* xd = data_of(self, 0);
        const Real* wd = data_of(self, 1);
        Real* dx = grad_of(self, 0);
        Real* dw = grad_of(self, 1);
        for (int n = 0; n < N; ++n)
          for (int o = 0; o < O; ++o) {
            const Real* gp = g + (static_cast<size_t>(n) * O + o) * Ho * Wo;
            for (int c = 0; c < C; ++c) {
              const size_t in_off = (static_cast<size_t>(n) * C + c) * H * W;
              const size_t w_off = (static_cast<size_t>(o) * C + c) * k * k;
              for (int oh = 0; oh < Ho; ++oh)
                for (int ow = 0; ow < Wo; ++ow) {
                  const Real gv = gp[oh * Wo + ow];
                  for (int kh = 0; kh < k; ++kh) {
                    const int ih = oh * stride - pad + kh;
                    if (ih < 0 || ih >= H) continue;
                    for (int kw = 0; kw < k; ++kw) {
                      const int iw = ow * stride - pad + kw;
                      if (iw < 0 || iw >= W) continue;
                      const size_t xi = in_off + static_cast<size_t>(ih * W + iw);
                      const size_t wi = w_off + static_cast<size_t>(kh * k + kw);
                      if (dx) dx[xi] += wd[wi] * gv;
                      if (dw) dw[wi] += xd[xi] * gv;
                    }
                  }
                }
            }
          }
      });
}

Tensor bilinear_resize(const Tensor& input, int out_h, int out_w) {
  require_rank(input, 4, "bilinear_resize input");
  if (out_h < 1 || out_w < 1) {
    throw ShapeError("bilinear_resize: output size must be >= 1, got " +
                     std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  auto rows = resize_taps(H, out_h);
  auto cols = resize_taps(W, out_w);
  const size_t planes = static_cast<size_t>(N) * C;
  std::vector<Real> out(planes * out_h * out_w);
  const Real* x = input.data().data();
  for (size_t pl = 0; pl < planes; ++pl) {
    const Real* xp = x + pl * H * W;
    Real* op = out.data() + pl * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      const auto& r = rows[static_cast<size_t>(oy)];
      for (int ox = 0; ox < out_w; ++ox) {
        const auto& c = cols[static_cast<size_t>(ox)];
        const Real top = (1 - c.lambda) * xp[r.i0 * W + c.i0] + c.lambda * xp[r.i0 * W + c.i1];
        const Real bot = (1 - c.lambda) * xp[r.i1 * W + c.i0] + c.lambda * xp[r.i1 * W + c.i1];
        op[oy * out_w + ox] = (1 - r.lambda) * top + r.lambda * bot;
      }
    }
  }
  return Tensor::make_op(
      {N, C, out_h, out_w}, std::move(out), {input},
      [planes, H, W, out_h, out_w, rows = std::move(rows), cols = std::move(cols)](Node& self) {
        Real* dx = grad_of(self, 0);
        if (!dx) return;
        const Real* g = self.grad.data();
        for (size_t pl = 0; pl < planes; ++pl) {
          Real* dp = dx + pl * H * W;
          const Real* gp = g + pl * out_h * out_w;
          for (int oy = 0; oy < out_h; ++oy) {
            const auto& r = rows[static_cast<size_t>(oy)];
            for (int ox = 0; ox < out_w; ++ox) {
              const auto& c = cols[static_cast<size_t>(ox)];
              const Real gv = gp[oy * out_w + ox];
              const Real gt = (1 - r.lambda) * gv, gb = r.lambda * gv;
              dp[r.i0 * W + c.i0] += (1 - c.lambda) * gt;
              dp[r.i0 * W + c.i1] += c.lambda * gt;
              dp[r.i1 * W + c.i0] += (1 - c.lambda) * gb;
              dp[r.i1 * W + c.i1] += c.lambda * gb;
            }
          }
        }
      });
}

namespace {

// c[m,n] += a[m,k] * b[k,n]
void gemm_acc(const Real* a, const Real* b, Real* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    Real* cr = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const Real av = a[static_cast<size_t>(i) * k + p];
      const Real* br = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

// da[m,k] += g[m,n] * b[k,n]^T ; db[k,n] += a[m,k]^T * g[m,n]
void gemm_backward(const Real* a, const Real* b, const Real* g, Real* da, Real* db,
                   int m, int k, int n) {
  if (da) {
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) {
        Real acc = 0;
        const Real* gr = g + static_cast<size_t>(i) * n;
        const Real* br = b + static_cast<size_t>(p) * n;
        for (int j = 0; j < n; ++j) acc += gr[j] * br[j];
        da[static_cast<size_t>(i) * k + p] += acc;
      }
  }
  if (db) {
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) {
        const Real av = a[static_cast<size_t>(i) * k + p];
        const Real* gr = g + static_cast<size_t>(i) * n;
        Real* dr = db + static_cast<size_t>(p) * n;
        for (int j = 0; j < n; ++j) dr[j] += av * gr[j];
      }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul lhs");
  require_rank(b, 2, "matmul rhs");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  std::vector<Real> out(static_cast<size_t>(m) * n, Real(0));
  gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  count_macs(static_cast<std::uint64_t>(m) * k * n);
  return Tensor::make_op({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    gemm_backward(data_of(self, 0), data_of(self, 1), self.grad.data(), grad_of(self, 0),
                  grad_of(self, 1), m, k, n);
  });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "bmm lhs");
  require_rank(b, 3, "bmm rhs");
  const int B = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  if (b.dim(0) != B || b.dim(1) != k) {
    throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  std::vector<Real> out(static_cast<size_t>(B) * m * n, Real(0));
  for (int i = 0; i < B; ++i) {
    gemm_acc(a.data().data() + static_cast<size_t>(i) * m * k,
             b.data().data() + static_cast<size_t>(i) * k * n,
             out.data() + static_cast<size_t>(i) * m * n, m, k, n);
  }
  count_macs(static_cast<std::uint64_t>(B) * m * k * n);
  return Tensor::make_op({B, m, n}, std::move(out), {a, b}, [B, m, k, n](Node& self) {
    Real* da = grad_of(self, 0);
    Real* db = grad_of(self, 1);
    for (int i = 0; i < B; ++i) {
      gemm_backward(data_of(self, 0) + static_cast<size_t>(i) * m * k,
                    data_of(self, 1) + static_cast<size_t>(i) * k * n,
                    self.grad.data() + static_cast<size_t>(i) * m * n,
                    da ? da + static_cast<size_t>(i) * m * k : nullptr,
                    db ? db + static_cast<size_t>(i) * k * n : nullptr, m, k, n);
    }
  });
}

Tensor transpose_last2(const Tensor& x) {
  if (!x.defined() || x.rank() < 2) throw ShapeError("transpose_last2: rank must be >= 2");
  Shape shape = x.shape();
  const int m = shape[shape.size() - 2], n = shape[shape.size() - 1];
  const size_t batch = x.numel() / (static_cast<size_t>(m) * n);
  std::swap(shape[shape.size() - 2], shape[shape.size() - 1]);
  std::vector<Real> out(x.numel());
  const Real* xd = x.data().data();
  for (size_t b = 0; b < batch; ++b)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        out[b * m * n + static_cast<size_t>(j) * m + i] = xd[b * m * n + static_cast<size_t>(i) * n + j];
  return Tensor::make_op(shape, std::move(out), {x}, [batch, m, n](Node& self) {
    Real* dx = grad_of(self, 0);
    if (!dx) return;
    const Real* g = self.grad.data();
    for (size_t b = 0; b < batch; ++b)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          dx[b * m * n + static_cast<size_t>(i) * n + j] += g[b * m * n + static_cast<size_t>(j) * m + i];
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (!x.defined() || x.rank() < 1) throw ShapeError("linear: undefined input");
  require_rank(weight, 2, "linear weight");
  const int in = x.shape().back();
  const int out_dim = weight.dim(1);
  if (weight.dim(0) != in) {
    throw ShapeError("linear: weight " + shape_str(weight.shape()) + " does not match input " +
                     shape_str(x.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_dim)) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                     shape_str(weight.shape()));
  }
  const int rows = static_cast<int>(x.numel() / static_cast<size_t>(in));
  Shape shape = x.shape();
  shape.back() = out_dim;
  std::vector<Real> out(static_cast<size_t>(rows) * out_dim, Real(0));
  if (bias.defined()) {
    for (int r = 0; r < rows; ++r)
      std::copy(bias.data().begin(), bias.data().end(), out.begin() + static_cast<std::ptrdiff_t>(r) * out_dim);
  }
  gemm_acc(x.data().data(), weight.data().data(), out.data(), rows, in, out_dim);
  count_macs(static_cast<std::uint64_t>(rows) * in * out_dim);
  return Tensor::make_op(shape, std::move(out), {x, weight, bias},
                         [rows, in, out_dim](Node& self) {
                           gemm_backward(data_of(self, 0), data_of(self, 1), self.grad.data(),
                                         grad_of(self, 0), grad_of(self, 1), rows, in, out_dim);
                           if (Real* db = grad_of(self, 2)) {
                             const Real* g = self.grad.data();
                             for (int r = 0; r < rows; ++r)
                               for (int j = 0; j < out_dim; ++j)
                                 db[j] += g[static_cast<size_t>(r) * out_dim + j];
                           }
                         });
}

Tensor softmax_lastdim(const Tensor& x) {
  if (!x.defined() || x.rank() < 1) throw ShapeError("softmax_lastdim: undefined input");
  const int D = x.shape().back();
  const size_t rows = x.numel() / static_cast<size_t>(D);
  std::vector<Real> out(x.numel());
  const Real* xd = x.data().data();
  for (size_t r = 0; r < rows; ++r) {
    const Real* xr = xd + r * D;
    Real* orow = out.data() + r * D;
    const Real mx = *std::max_element(xr, xr + D);
    Real total = 0;
    for (int j = 0; j < D; ++j) {
      orow[j] = std::exp(xr[j] - mx);
      total += orow[j];
    }
    for (int j = 0; j < D; ++j) orow[j] /= total;
  }
  return Tensor::make_op(x.shape(), std::move(out), {x}, [rows, D](Node& self) {
    Real* dx = grad_of(self, 0);
    if (!dx) return;
    const Real* y = self.data.data();
    const Real* g = self.grad.data();
    for (size_t r = 0; r < rows; ++r) {
      Real dot = 0;
      for (int j = 0; j < D; ++j) dot += g[r * D + j] * y[r * D + j];
      for (int j = 0; j < D; ++j) dx[r * D + j] += y[r * D + j] * (g[r * D + j] - dot);
    }
  });
}

Tensor relu(const Tensor& x) {
  std::vector<Real> out(x.numel());
  const Real* xd = x.data().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = xd[i] > Real(0) ? xd[i] : Real(0);
  record_kinks(xd, out.size());
  return Tensor::make_op(x.shape(), std::move(out), {x}, [](Node& self) {
    Real* dx = grad_of(self, 0);
    if (!dx) return;
    const Real* xd = data_of(self, 0);
    const Real* g = self.grad.data();
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (xd[i] > Real(0)) dx[i] += g[i];
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps) {
  if (!x.defined() || x.rank() < 1) throw ShapeError("layer_norm: undefined input");
  const int D = x.shape().back();
  require_rank(gamma, 1, "layer_norm gamma");
  require_rank(beta, 1, "layer_norm beta");
  if (gamma.dim(0) != D || beta.dim(0) != D) {
    throw ShapeError("layer_norm: affine parameters " + shape_str(gamma.shape()) +
                     " do not match input " + shape_str(x.shape()));
  }
  const size_t rows = x.numel() / static_cast<size_t>(D);
  std::vector<Real> out(x.numel());
  std::vector<Real> xhat(x.numel());
  std::vector<Real> inv_std(rows);
  const Real* xd = x.data().data();
  const Real* gd = gamma.data().data();
  const Real* bd = beta.data().data();
  for (size_t r = 0; r < rows; ++r) {
    const Real* xr = xd + r * D;
    Real mu = 0;
    for (int j = 0; j < D; ++j) mu += xr[j];
    mu /= static_cast<Real>(D);
    Real var = 0;
    for (int j = 0; j < D; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<Real>(D);
    const Real is = Real(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (int j = 0; j < D; ++j) {
      const Real h = (xr[j] - mu) * is;
      xhat[r * D + j] = h;
      out[r * D + j] = gd[j] * h + bd[j];
    }
  }
  return Tensor::make_op(
      x.shape(), std::move(out), {x, gamma, beta},
      [rows, D, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const Real* g = self.grad.data();
        const Real* gd = data_of(self, 1);
        Real* dx = grad_of(self, 0);
        Real* dg = grad_of(self, 1);
        Real* db = grad_of(self, 2);
        for (size_t r = 0; r < rows; ++r) {
          const Real* gr = g + r * D;
          const Real* hr = xhat.data() + r * D;
          if (dg)
            for (int j = 0; j < D; ++j) dg[j] += gr[j] * hr[j];
          if (db)
            for (int j = 0; j < D; ++j) db[j] += gr[j];
          if (dx) {
            Real sum_dh = 0, sum_dh_h = 0;
            for (int j = 0; j < D; ++j) {
              const Real dh = gr[j] * gd[j];
              sum_dh += dh;
              sum_dh_h += dh * hr[j];
            }
            const Real inv_d = Real(1) / static_cast<Real>(D);
            for (int j = 0; j < D; ++j) {
              const Real dh = gr[j] * gd[j];
              dx[r * D + j] += inv_std[r] * (dh - inv_d * sum_dh - hr[j] * inv_d * sum_dh_h);
            }
          }
        }
      });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<Real> out(a.numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return Tensor::make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const Real* g = self.grad.data();
    for (size_t p = 0; p < 2; ++p)
      if (Real* d = grad_of(self, p))
        for (size_t i = 0; i < self.grad.size(); ++i) d[i] += g[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<Real> out(a.numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor::make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const Real* g = self.grad.data();
    const Real* ad = data_of(self, 0);
    const Real* bd = data_of(self, 1);
    if (Real* da = grad_of(self, 0))
      for (size_t i = 0; i < self.grad.size(); ++i) da[i] += g[i] * bd[i];
    if (Real* db = grad_of(self, 1))
      for (size_t i = 0; i < self.grad.size(); ++i) db[i] += g[i] * ad[i];
  });
}

Tensor scale(const Tensor& x, Real factor) {
  std::vector<Real> out(x.numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
  return Tensor::make_op(x.shape(), std::move(out), {x}, [factor](Node& self) {
    if (Real* dx = grad_of(self, 0))
      for (size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i] * factor;
  });
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<Real> out(x.data().begin(), x.data().end());
  return Tensor::make_op(shape, std::move(out), {x}, [](Node& self) {
    if (Real* dx = grad_of(self, 0))
      for (size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i];
  });
}

Tensor broadcast_leading(const Tensor& x, int count) {
  if (count < 1) throw ShapeError("broadcast_leading: count must be >= 1");
  Shape shape;
  shape.reserve(x.shape().size() + 1);
  shape.push_back(count);
  shape.insert(shape.end(), x.shape().begin(), x.shape().end());
  const size_t n = x.numel();
  std::vector<Real> out(n * static_cast<size_t>(count));
  for (int c = 0; c < count; ++c)
    std::copy(x.data().begin(), x.data().end(), out.begin() + static_cast<std::ptrdiff_t>(c * n));
  return Tensor::make_op(shape, std::move(out), {x}, [n, count](Node& self) {
    Real* dx = grad_of(self, 0);
    if (!dx) return;
    for (int c = 0; c < count; ++c)
      for (size_t i = 0; i < n; ++i) dx[i] += self.grad[static_cast<size_t>(c) * n + i];
  });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Tensor& first = parts.front();
  if (first.rank() < 2) throw ShapeError("concat_channels: rank must be >= 2");
  const int N = first.dim(0);
  const size_t inner = first.numel() / (static_cast<size_t>(N) * first.dim(1));
  std::vector<int> channels;
  int total = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.rank() || p.dim(0) != N ||
        p.numel() / (static_cast<size_t>(N) * p.dim(1)) != inner ||
        !std::equal(p.shape().begin() + 2, p.shape().end(), first.shape().begin() + 2)) {
      throw ShapeError("concat_channels: incompatible shapes " + shape_str(first.shape()) +
                       " and " + shape_str(p.shape()));
    }
    channels.push_back(p.dim(1));
    total += p.dim(1);
  }
  Shape shape = first.shape();
  shape[1] = total;
  std::vector<Real> out(static_cast<size_t>(N) * total * inner);
  for (int n = 0; n < N; ++n) {
    size_t dst = static_cast<size_t>(n) * total * inner;
    for (size_t i = 0; i < parts.size(); ++i) {
      const size_t len = static_cast<size_t>(channels[i]) * inner;
      const Real* src = parts[i].data().data() + static_cast<size_t>(n) * len;
      std::copy(src, src + len, out.begin() + static_cast<std::ptrdiff_t>(dst));
      dst += len;
    }
  }
  return Tensor::make_op(shape, std::move(out), parts, [N, total, inner, channels](Node& self) {
    for (int n = 0; n < N; ++n) {
      size_t src = static_cast<size_t>(n) * total * inner;
      for (size_t i = 0; i < channels.size(); ++i) {
        const size_t len = static_cast<size_t>(channels[i]) * inner;
        if (Real* d = grad_of(self, i)) {
          Real* dp = d + static_cast<size_t>(n) * len;
          for (size_t j = 0; j < len; ++j) dp[j] += self.grad[src + j];
        }
        src += len;
      }
    }
  });
}

std::vector<Tensor> split_channels(const Tensor& x, const std::vector<int>& sizes) {
  if (x.rank() < 2) throw ShapeError("split_channels: rank must be >= 2");
  const int N = x.dim(0), C = x.dim(1);
  if (std::accumulate(sizes.begin(), sizes.end(), 0) != C ||
      std::any_of(sizes.begin(), sizes.end(), [](int s) { return s <= 0; })) {
    throw ShapeError("split_channels: sizes do not partition " + shape_str(x.shape()));
  }
  const size_t inner = x.numel() / (static_cast<size_t>(N) * C);
  std::vector<Tensor> result;
  int offset = 0;
  for (int s : sizes) {
    Shape shape = x.shape();
    shape[1] = s;
    std::vector<Real> out(static_cast<size_t>(N) * s * inner);
    for (int n = 0; n < N; ++n) {
      const Real* src = x.data().data() + (static_cast<size_t>(n) * C + offset) * inner;
      std::copy(src, src + static_cast<size_t>(s) * inner,
                out.begin() + static_cast<std::ptrdiff_t>(static_cast<size_t>(n) * s * inner));
    }
    result.push_back(Tensor::make_op(shape, std::move(out), {x},
                                     [N, C, s, offset, inner](Node& self) {
                                       Real* dx = grad_of(self, 0);
                                       if (!dx) return;
                                       for (int n = 0; n < N; ++n) {
                                         Real* dp = dx + (static_cast<size_t>(n) * C + offset) * inner;
                                         const Real* gp = self.grad.data() + static_cast<size_t>(n) * s * inner;
                                         for (size_t j = 0; j < static_cast<size_t>(s) * inner; ++j) dp[j] += gp[j];
                                       }
                                     }));
    offset += s;
  }
  return result;
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool input");
  const int N = x.dim(0), C = x.dim(1);
  const size_t HW = static_cast<size_t>(x.dim(2)) * x.dim(3);
  std::vector<Real> out(static_cast<size_t>(N) * C);
  for (size_t i = 0; i < out.size(); ++i) {
    Real acc = 0;
    for (size_t p = 0; p < HW; ++p) acc += x.data()[i * HW + p];
    out[i] = acc / static_cast<Real>(HW);
  }
  return Tensor::make_op({N, C}, std::move(out), {x}, [HW](Node& self) {
    Real* dx = grad_of(self, 0);
    if (!dx) return;
    const Real inv = Real(1) / static_cast<Real>(HW);
    for (size_t i = 0; i < self.grad.size(); ++i)
      for (size_t p = 0; p < HW; ++p) dx[i * HW + p] += self.grad[i] * inv;
  });
}

Tensor sum(const Tensor& x) {
  Real acc = 0;
  for (Real v : x.data()) acc += v;
  return Tensor::make_op({1}, {acc}, {x}, [](Node& self) {
    if (Real* dx = grad_of(self, 0)) {
      const size_t n = self.parents[0]->data.size();
      for (size_t i = 0; i < n; ++i) dx[i] += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), Real(1) / static_cast<Real>(x.numel()));
}

Tensor weighted_abs_sum(const Tensor& x, const std::vector<double>& weights) {
  if (weights.size() != x.numel()) {
    throw ShapeError("weighted_abs_sum: " + std::to_string(weights.size()) +
                     " weights for tensor " + shape_str(x.shape()));
  }
  double acc = 0;
  for (size_t i = 0; i < weights.size(); ++i) acc += weights[i] * std::abs(static_cast<double>(x.data()[i]));
  record_kinks(x.data().data(), x.numel());
  return Tensor::make_op({1}, {static_cast<Real>(acc)}, {x}, [weights](Node& self) {
    Real* dx = grad_of(self, 0);
    if (!dx) return;
    const Real* xd = data_of(self, 0);
    for (size_t i = 0; i < weights.size(); ++i) {
      const Real s = xd[i] > Real(0) ? Real(1) : (xd[i] < Real(0) ? Real(-1) : Real(0));
      dx[i] += self.grad[0] * static_cast<Real>(weights[i]) * s;
    }
  });
}

}  // namespace hrnas::ops
