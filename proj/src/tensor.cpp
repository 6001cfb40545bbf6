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

#include "hrnas/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace hrnas {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool t_grad_enabled = true;
thread_local MacCounter* t_counter = nullptr;
thread_local KinkRecorder* t_kinks = nullptr;

std::shared_ptr<detail::Node> new_node(const Shape& shape,
                                       std::vector<Real> values) {
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " +
                                 shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = shape;
  n->data = std::move(values);
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return n;
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, Real(0), requires_grad);
}

Tensor Tensor::full(const Shape& shape, Real value, bool requires_grad) {
  Tensor t(new_node(shape, std::vector<Real>(shape_numel(shape), value)));
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(const Shape& shape, std::vector<Real> values,
                    bool requires_grad) {
  Tensor t(new_node(shape, std::move(values)));
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::make_op(const Shape& shape, std::vector<Real> values,
                       std::vector<Tensor> parents,
                       std::function<void(detail::Node&)> backward_fn) {
  Tensor t(new_node(shape, std::move(values)));
  if (!t_grad_enabled) return t;
  bool any = std::any_of(parents.begin(), parents.end(), [](const Tensor& p) {
    return p.defined() && p.requires_grad();
  });
  if (!any) return t;
  t.node_->requires_grad = true;
  t.node_->parents.reserve(parents.size());
  for (auto& p : parents) t.node_->parents.push_back(p.node_);
  t.node_->backward = std::move(backward_fn);
  return t;
}

int Tensor::dim(int axis) const {
  int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(shape()));
  }
  return node_->shape[static_cast<std::size_t>(axis)];
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), Real(0));
}

Real Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() requires a single element, shape is " +
                     shape_str(shape()));
  }
  return node_->data[0];
}

Real Tensor::at(std::initializer_list<int> index) const {
  if (index.size() != node_->shape.size()) {
    throw ShapeError("index rank mismatch for " + shape_str(shape()));
  }
  std::size_t off = 0;
  std::size_t i = 0;
  for (int v : index) {
    int d = node_->shape[i++];
    if (v < 0 || v >= d) throw ShapeError("index out of range");
    off = off * static_cast<std::size_t>(d) + static_cast<std::size_t>(v);
  }
  return node_->data[off];
}

void Tensor::erase_index(int axis, int index) {
  if (!is_leaf()) throw StateError("erase_index is only valid on leaf tensors");
  Shape& shape = node_->shape;
  const int r = rank();
  if (axis < 0 || axis >= r) throw ShapeError("erase axis out of range");
  const int extent = shape[static_cast<std::size_t>(axis)];
  if (index < 0 || index >= extent) throw ShapeError("erase index out of range");
  if (extent == 1) {
    throw ShapeError("cannot erase the last slice of " + shape_str(shape) +
                     "; drop the tensor instead");
  }
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (int a = 0; a < axis; ++a) outer *= static_cast<std::size_t>(shape[static_cast<std::size_t>(a)]);
  for (int a = axis + 1; a < r; ++a) inner *= static_cast<std::size_t>(shape[static_cast<std::size_t>(a)]);
  auto drop = [&](std::vector<Real>& v) {
    if (v.empty()) return;
    std::vector<Real> out;
    out.reserve(v.size() - outer * inner);
    for (std::size_t o = 0; o < outer; ++o) {
      for (int e = 0; e < extent; ++e) {
        if (e == index) continue;
        auto base = v.begin() + static_cast<std::ptrdiff_t>((o * static_cast<std::size_t>(extent) + static_cast<std::size_t>(e)) * inner);
        out.insert(out.end(), base, base + static_cast<std::ptrdiff_t>(inner));
      }
    }
    v = std::move(out);
  };
  drop(node_->data);
  drop(node_->grad);
  drop(node_->slot);
  shape[static_cast<std::size_t>(axis)] = extent - 1;
}

Tensor Tensor::detach_clone() const {
  Tensor t(new_node(node_->shape, node_->data));
  t.node_->requires_grad = node_->requires_grad && is_leaf();
  return t;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward requires a scalar loss, got " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, child] = stack.back();
    if (child < node->parents.size()) {
      detail::Node* p = node->parents[child++].get();
      if (p != nullptr && p->requires_grad && !seen.contains(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad()[0] += Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (!n->backward) continue;
    n->ensure_grad();
    n->backward(*n);
  }
  // Interior nodes are single-use; release the graph.
  for (detail::Node* n : order) {
    if (n->backward) {
      n->backward = nullptr;
      n->parents.clear();
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

MacCounter::MacCounter() : outer_(t_counter) { t_counter = this; }
MacCounter::~MacCounter() { t_counter = outer_; }

void count_macs(std::uint64_t macs) {
  for (MacCounter* c = t_counter; c != nullptr; c = c->outer_) c->count_ += macs;
}

KinkRecorder::KinkRecorder() : outer_(t_kinks) { t_kinks = this; }
KinkRecorder::~KinkRecorder() { t_kinks = outer_; }

void record_kinks(const Real* values, std::size_t n) {
  for (KinkRecorder* r = t_kinks; r != nullptr; r = r->outer_) {
    std::uint64_t h = r->hash_;
    for (std::size_t i = 0; i < n; ++i) h = (h ^ (values[i] > Real(0) ? 0x9dU : 0x35U)) * 1099511628211ULL;
    r->hash_ = h;
  }
}

}  // namespace hrnas
