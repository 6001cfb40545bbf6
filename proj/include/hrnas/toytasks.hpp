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

#ifndef HRNAS_TOYTASKS_HPP_
#define HRNAS_TOYTASKS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "hrnas/tensor.hpp"

namespace hrnas {

enum class TaskKind { kClassification, kSegmentation };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& s);

struct TaskSpec {
  TaskKind kind = TaskKind::kSegmentation;
  std::uint64_t seed = 0;
  int count = 256;
  int hw = 24;
  int classes = 3;
  double noise = 0.05;
  double val_fraction = 0.25;
};

struct Batch {
  Tensor images;            // N x 3 x hw x hw
  std::vector<int> labels;  // N, or N * hw * hw for segmentation
};

/// Images live in [0, 1]. Labels are per image (classification) or per
/// pixel in row-major N x H x W order (segmentation).
struct ToyDataset {
  TaskKind kind = TaskKind::kClassification;
  std::uint64_t seed = 0;
  int classes = 0;
  int channels = 3;
  int hw = 0;
  std::vector<Real> images;
  std::vector<int> labels;
  std::vector<int> train;
  std::vector<int> val;

  int count() const { return hw == 0 ? 0 : static_cast<int>(images.size() / image_size()); }
  std::size_t image_size() const { return static_cast<std::size_t>(channels) * hw * hw; }
  std::size_t label_size() const {
    return kind == TaskKind::kClassification ? 1 : static_cast<std::size_t>(hw) * hw;
  }
  Batch batch(const std::vector<int>& indices) const;
};

/// Class c places a Gaussian blob at a class-specific position and vertical
/// stripes at frequency c + 1; labels cycle round-robin.
ToyDataset make_classification(std::uint64_t seed, int count, int hw, int classes,
                               double noise = 0.05, double val_fraction = 0.25);

/// classes - 1 shapes (disks, squares and diamonds in class-specific
/// colors) are composited over a dark background.
ToyDataset make_segmentation(std::uint64_t seed, int count, int hw, int classes,
                             double noise = 0.05, double val_fraction = 0.25);

ToyDataset make_dataset(const TaskSpec& spec);

/// Mean softmax cross-entropy of N x K logits.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);
/// Mean over all pixels of the per-pixel cross-entropy of N x K x H x W logits.
Tensor pixel_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

struct SegmentationMetrics {
  double pixel_accuracy = 0;
  double mean_iou = 0;
};

/// Accumulates predictions across batches.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes);
  /// Adds argmax predictions of N x K or N x K x H x W logits.
  void add(const Tensor& logits, const std::vector<int>& labels);
  double accuracy() const;
  /// Mean IoU over classes that occur in labels or predictions.
  double mean_iou() const;
  std::uint64_t at(int truth, int predicted) const;

 private:
  int classes_;
  std::vector<std::uint64_t> counts_;
};

/// Writes images.f32, labels.i32 (little-endian) and manifest.json.
void dump_dataset(const ToyDataset& data, const std::string& directory);

}  // namespace hrnas

#endif  // HRNAS_TOYTASKS_HPP_
