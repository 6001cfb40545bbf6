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

#ifndef HRNAS_TENSOR_HPP_
#define HRNAS_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hrnas {

// The library is compiled once per scalar type. The float build is the
// production artifact; the double build exists so gradient checks can run
// central differences without float round-off dominating the comparison.
#ifdef HRNAS_REAL_DOUBLE
using Real = double;
#else
using Real = float;
#endif

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;
  // Per-parameter optimizer state (momentum buffer); same length as data
  // when in use. Kept on the node so structural edits stay in sync.
  std::vector<Real> slot;
  std::uint64_t id = 0;

  std::vector<Real>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), Real(0));
    return grad;
  }
};

}  // namespace detail

/// Handle to a dense row-major tensor that may participate in a
/// reverse-mode differentiation graph. Copies share the same storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, Real value, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<Real> values,
                     bool requires_grad = false);

  // Creates an interior graph node. If no parent requires grad (or grad
  // recording is disabled) the parents and backward function are dropped.
  static Tensor make_op(const Shape& shape, std::vector<Real> values,
                        std::vector<Tensor> parents,
                        std::function<void(detail::Node&)> backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int axis) const;
  std::size_t numel() const { return node_->data.size(); }
  std::uint64_t id() const { return node_->id; }

  std::span<const Real> data() const { return node_->data; }
  std::span<Real> mutable_data() { return node_->data; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  bool is_leaf() const { return !node_->backward; }

  Real item() const;
  Real at(std::initializer_list<int> index) const;

  std::vector<Real>& optimizer_slot() { return node_->slot; }

  // Structural edit for leaf parameters: drops one slice along `axis`
  // from data, grad and optimizer slot alike.
  void erase_index(int axis, int index);

  // Deep copy without graph history.
  Tensor detach_clone() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Populates grad buffers of every leaf reachable from `loss`, which must
/// hold exactly one element. Interior graph nodes are released afterwards.
void backward(const Tensor& loss);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Counts multiply-accumulates issued by the MAC-bearing kernels (pointwise,
/// depthwise and dense convolutions, linear, matmul, bmm) while in scope.
/// Scopes nest; every active counter sees every MAC.
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;
  std::uint64_t count() const { return count_; }

 private:
  friend void count_macs(std::uint64_t);
  std::uint64_t count_ = 0;
  MacCounter* outer_ = nullptr;
};

void count_macs(std::uint64_t macs);

/// Fingerprints the branch taken at every piecewise-linear kink (relu, abs)
/// evaluated while in scope. Two passes with equal fingerprints ran on the
/// same linear piece.
class KinkRecorder {
 public:
  KinkRecorder();
  ~KinkRecorder();
  KinkRecorder(const KinkRecorder&) = delete;
  KinkRecorder& operator=(const KinkRecorder&) = delete;
  std::uint64_t fingerprint() const { return hash_; }

 private:
  friend void record_kinks(const Real*, std::size_t);
  std::uint64_t hash_ = 1469598103934665603ULL;
  KinkRecorder* outer_ = nullptr;
};

/// Records the sign of each value; a no-op unless a recorder is active.
void record_kinks(const Real* values, std::size_t n);

}  // namespace hrnas

#endif  // HRNAS_TENSOR_HPP_
