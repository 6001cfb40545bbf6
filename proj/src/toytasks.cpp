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

#include "hrnas/toytasks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "json.hpp"

namespace hrnas {

namespace {

constexpr double kPi = 3.14159265358979323846;

void validate(int count, int hw, int classes, double noise, double val_fraction) {
  if (classes < 2) throw ConfigError("toytasks: classes must be >= 2");
  if (count < 1) throw ConfigError("toytasks: count must be >= 1");
  if (hw < 16) throw ConfigError("toytasks: hw must be >= 16");
  if (hw % 4 != 0) throw ConfigError("toytasks: hw must be divisible by 4");
  if (noise < 0) throw ConfigError("toytasks: noise must be >= 0");
  if (val_fraction < 0 || val_fraction >= 1) throw ConfigError("toytasks: val_fraction must be in [0, 1)");
}

void split(ToyDataset& d, int count, double val_fraction) {
  std::vector<int> order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(d.seed ^ 0x5bd1e995ULL);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::lround(val_fraction * count));
  d.val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  d.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(d.val.begin(), d.val.end());
  std::sort(d.train.begin(), d.train.end());
}

Real clamp01(double v) { return static_cast<Real>(std::clamp(v, 0.0, 1.0)); }

std::array<double, 3> palette(int c) {
  static const std::array<std::array<double, 3>, 4> base{{
      {0.10, 0.10, 0.10}, {0.90, 0.25, 0.20}, {0.20, 0.85, 0.30}, {0.25, 0.35, 0.95}}};
  if (c < 4) return base[static_cast<std::size_t>(c)];
  const double h = std::fmod(0.618033988749895 * c, 1.0) * 2 * kPi;
  return {0.55 + 0.4 * std::cos(h), 0.55 + 0.4 * std::cos(h + 2.094), 0.55 + 0.4 * std::cos(h + 4.189)};
}

// log(sum_k exp(get(k))), shifted by the row maximum.
template <typename Get>
double log_sum_exp(int K, Get get) {
  double m = get(0);
  for (int k = 1; k < K; ++k) m = std::max(m, get(k));
  double s = 0;
  for (int k = 0; k < K; ++k) s += std::exp(get(k) - m);
  return m + std::log(s);
}

Tensor softmax_xent(const Tensor& logits, const std::vector<int>& labels, int N, int K, int P) {
  if (labels.size() != static_cast<std::size_t>(N) * P) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     shape_str(logits.shape()));
  }
  for (int l : labels) {
    if (l < 0 || l >= K) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(l) + " outside [0, " +
                              std::to_string(K) + ")");
    }
  }
  const Real* x = logits.data().data();
  // Element (n, k, p) lives at (n * K + k) * P + p.
  auto idx = [K, P](int n, int k, int p) {
    return (static_cast<std::size_t>(n) * K + k) * P + p;
  };
  double total = 0;
  for (int n = 0; n < N; ++n)
    for (int p = 0; p < P; ++p) {
      const double lse = log_sum_exp(K, [&](int k) { return static_cast<double>(x[idx(n, k, p)]); });
      total += lse - x[idx(n, labels[static_cast<std::size_t>(n) * P + p], p)];
    }
  const double count = static_cast<double>(N) * P;
  return Tensor::make_op({1}, {static_cast<Real>(total / count)}, {logits},
                         [labels, N, K, P, count, idx](detail::Node& self) {
    detail::Node& in = *self.parents[0];
    if (!in.requires_grad) return;
    auto& dx = in.ensure_grad();
    const Real* xd = in.data.data();
    const double g = self.grad[0] / count;
    for (int n = 0; n < N; ++n)
      for (int p = 0; p < P; ++p) {
        const double lse = log_sum_exp(K, [&](int k) { return static_cast<double>(xd[idx(n, k, p)]); });
        const int y = labels[static_cast<std::size_t>(n) * P + p];
        for (int k = 0; k < K; ++k) {
          const double prob = std::exp(xd[idx(n, k, p)] - lse);
          dx[idx(n, k, p)] += static_cast<Real>(g * (prob - (k == y ? 1.0 : 0.0)));
        }
      }
  });
}

}  // namespace

std::string to_string(TaskKind kind) {
  return kind == TaskKind::kClassification ? "classification" : "segmentation";
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "classification") return TaskKind::kClassification;
  if (s == "segmentation") return TaskKind::kSegmentation;
  throw ConfigError("unknown task kind '" + s + "' (expected classification or segmentation)");
}

Batch ToyDataset::batch(const std::vector<int>& indices) const {
  const int N = static_cast<int>(indices.size());
  const std::size_t is = image_size(), ls = label_size();
  std::vector<Real> img;
  img.reserve(is * indices.size());
  Batch b;
  b.labels.reserve(ls * indices.size());
  for (int i : indices) {
    if (i < 0 || i >= count()) throw std::out_of_range("toytasks: sample index " + std::to_string(i));
    const auto off = static_cast<std::size_t>(i);
    img.insert(img.end(), images.begin() + static_cast<std::ptrdiff_t>(off * is),
               images.begin() + static_cast<std::ptrdiff_t>((off + 1) * is));
    b.labels.insert(b.labels.end(), labels.begin() + static_cast<std::ptrdiff_t>(off * ls),
                    labels.begin() + static_cast<std::ptrdiff_t>((off + 1) * ls));
  }
  b.images = Tensor::from({N, channels, hw, hw}, std::move(img));
  return b;
}

ToyDataset make_classification(std::uint64_t seed, int count, int hw, int classes, double noise,
                               double val_fraction) {
  validate(count, hw, classes, noise, val_fraction);
  ToyDataset d;
  d.kind = TaskKind::kClassification;
  d.seed = seed;
  d.classes = classes;
  d.hw = hw;
  d.images.resize(static_cast<std::size_t>(count) * d.image_size());
  d.labels.resize(static_cast<std::size_t>(count));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> jitter(-1, 1);
  const double sigma = hw / 8.0;
  const std::size_t plane = static_cast<std::size_t>(hw) * hw;
  for (int i = 0; i < count; ++i) {
    const int c = i % classes;
    d.labels[static_cast<std::size_t>(i)] = c;
    const double angle = 2 * kPi * c / classes;
    const double cy = hw / 2.0 + hw / 4.0 * std::sin(angle) + jitter(rng);
    const double cx = hw / 2.0 + hw / 4.0 * std::cos(angle) + jitter(rng);
    Real* img = d.images.data() + static_cast<std::size_t>(i) * d.image_size();
    for (int y = 0; y < hw; ++y)
      for (int x = 0; x < hw; ++x) {
        const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
        const double blob = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
        const double stripe = 0.5 + 0.5 * std::cos(2 * kPi * (c + 1) * (x + 0.5) / hw);
        const std::size_t p = static_cast<std::size_t>(y) * hw + x;
        img[p] = clamp01(blob + noise * gauss(rng));
        img[plane + p] = clamp01(stripe + noise * gauss(rng));
        img[2 * plane + p] = clamp01(0.25 + 0.5 * blob + noise * gauss(rng));
      }
  }
  split(d, count, val_fraction);
  return d;
}

ToyDataset make_segmentation(std::uint64_t seed, int count, int hw, int classes, double noise,
                             double val_fraction) {
  validate(count, hw, classes, noise, val_fraction);
  ToyDataset d;
  d.kind = TaskKind::kSegmentation;
  d.seed = seed;
  d.classes = classes;
  d.hw = hw;
  const std::size_t plane = static_cast<std::size_t>(hw) * hw;
  d.images.resize(static_cast<std::size_t>(count) * d.image_size());
  d.labels.resize(static_cast<std::size_t>(count) * plane);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> radius(hw / 6.0, hw / 4.0);
  std::vector<int> mask(plane);
  for (int i = 0; i < count; ++i) {
    do {
      std::fill(mask.begin(), mask.end(), 0);
      for (int c = 1; c < classes; ++c) {
        const double r = radius(rng);
        std::uniform_real_distribution<double> centre(r, hw - r);
        const double cy = centre(rng), cx = centre(rng);
        const int shape = (c - 1) % 3;
        for (int y = 0; y < hw; ++y)
          for (int x = 0; x < hw; ++x) {
            const double dy = std::abs(y + 0.5 - cy), dx = std::abs(x + 0.5 - cx);
            const bool inside = shape == 0   ? dx * dx + dy * dy <= r * r
                                : shape == 1 ? std::max(dx, dy) <= 0.8 * r
                                             : dx + dy <= 1.2 * r;
            if (inside) mask[static_cast<std::size_t>(y) * hw + x] = c;
          }
      }
    } while (std::find(mask.begin(), mask.end(), 0) == mask.end());
    Real* img = d.images.data() + static_cast<std::size_t>(i) * d.image_size();
    for (std::size_t p = 0; p < plane; ++p) {
      const auto color = palette(mask[p]);
      for (std::size_t ch = 0; ch < 3; ++ch) img[ch * plane + p] = clamp01(color[ch] + noise * gauss(rng));
    }
    std::copy(mask.begin(), mask.end(), d.labels.begin() + static_cast<std::ptrdiff_t>(i * plane));
  }
  split(d, count, val_fraction);
  return d;
}

ToyDataset make_dataset(const TaskSpec& spec) {
  return spec.kind == TaskKind::kClassification
             ? make_classification(spec.seed, spec.count, spec.hw, spec.classes, spec.noise, spec.val_fraction)
             : make_segmentation(spec.seed, spec.count, spec.hw, spec.classes, spec.noise, spec.val_fraction);
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (!logits.defined() || logits.rank() != 2) {
    throw ShapeError("cross_entropy: expected N x K logits, got " +
                     (logits.defined() ? shape_str(logits.shape()) : std::string("[]")));
  }
  return softmax_xent(logits, labels, logits.dim(0), logits.dim(1), 1);
}

Tensor pixel_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (!logits.defined() || logits.rank() != 4) {
    throw ShapeError("pixel_cross_entropy: expected N x K x H x W logits, got " +
                     (logits.defined() ? shape_str(logits.shape()) : std::string("[]")));
  }
  return softmax_xent(logits, labels, logits.dim(0), logits.dim(1), logits.dim(2) * logits.dim(3));
}

ConfusionMatrix::ConfusionMatrix(int classes)
    : classes_(classes), counts_(static_cast<std::size_t>(classes) * classes, 0) {
  if (classes < 1) throw ConfigError("ConfusionMatrix: classes must be >= 1");
}

void ConfusionMatrix::add(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 && logits.rank() != 4) throw ShapeError("ConfusionMatrix: bad logits rank");
  const int N = logits.dim(0), K = logits.dim(1);
  if (K != classes_) throw ShapeError("ConfusionMatrix: class count mismatch");
  const int P = logits.rank() == 4 ? logits.dim(2) * logits.dim(3) : 1;
  if (labels.size() != static_cast<std::size_t>(N) * P) throw ShapeError("ConfusionMatrix: label count mismatch");
  const Real* x = logits.data().data();
  for (int n = 0; n < N; ++n)
    for (int p = 0; p < P; ++p) {
      int best = 0;
      for (int k = 1; k < K; ++k) {
        if (x[(static_cast<std::size_t>(n) * K + k) * P + p] > x[(static_cast<std::size_t>(n) * K + best) * P + p]) best = k;
      }
      const int y = labels[static_cast<std::size_t>(n) * P + p];
      if (y < 0 || y >= K) throw std::out_of_range("ConfusionMatrix: label out of range");
      ++counts_[static_cast<std::size_t>(y) * K + best];
    }
}

std::uint64_t ConfusionMatrix::at(int truth, int predicted) const {
  return counts_.at(static_cast<std::size_t>(truth) * classes_ + predicted);
}

double ConfusionMatrix::accuracy() const {
  std::uint64_t hit = 0, all = 0;
  for (int k = 0; k < classes_; ++k) hit += at(k, k);
  for (auto c : counts_) all += c;
  return all == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(all);
}

double ConfusionMatrix::mean_iou() const {
  double total = 0;
  int present = 0;
  for (int k = 0; k < classes_; ++k) {
    std::uint64_t row = 0, col = 0;
    for (int j = 0; j < classes_; ++j) {
      row += at(k, j);
      col += at(j, k);
    }
    const std::uint64_t uni = row + col - at(k, k);
    if (uni == 0) continue;
    total += static_cast<double>(at(k, k)) / static_cast<double>(uni);
    ++present;
  }
  return present == 0 ? 0.0 : total / present;
}

void dump_dataset(const ToyDataset& data, const std::string& directory) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  {
    std::ofstream os(fs::path(directory) / "images.f32", std::ios::binary);
    for (Real v : data.images) {
      const float f = static_cast<float>(v);
      os.write(reinterpret_cast<const char*>(&f), sizeof f);
    }
  }
  {
    std::ofstream os(fs::path(directory) / "labels.i32", std::ios::binary);
    for (int v : data.labels) {
      const std::int32_t l = v;
      os.write(reinterpret_cast<const char*>(&l), sizeof l);
    }
  }
  nlohmann::json m;
  m["kind"] = to_string(data.kind);
  m["seed"] = data.seed;
  m["count"] = data.count();
  m["classes"] = data.classes;
  m["images"] = {{"file", "images.f32"}, {"dtype", "float32"}, {"shape", {data.count(), data.channels, data.hw, data.hw}}};
  m["labels"] = {{"file", "labels.i32"}, {"dtype", "int32"},
                 {"shape", data.kind == TaskKind::kClassification
                               ? nlohmann::json::array({data.count()})
                               : nlohmann::json::array({data.count(), data.hw, data.hw})}};
  m["train"] = data.train;
  m["val"] = data.val;
  std::ofstream(fs::path(directory) / "manifest.json") << m.dump(2) << "\n";
}

}  // namespace hrnas
