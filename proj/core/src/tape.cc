// Copyright 2026 The avtrack Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "avtrack/tape.h"

#include <atomic>

namespace avtrack {
namespace {

thread_local Tape* g_current = nullptr;
std::atomic<uint64_t> g_created{0};
std::atomic<uint64_t> g_recorded{0};

}  // namespace

Tape::Tape() { g_created.fetch_add(1, std::memory_order_relaxed); }

Tape::~Tape() {
  // Outputs outlive the tape when callers keep them; unlink so they are not
  // mistaken for live nodes.
  for (Node& n : nodes_) {
    if (n.output.defined() && n.output.impl()->tape == this) {
      n.output.impl()->tape = nullptr;
      n.output.impl()->node = -1;
    }
  }
  if (g_current == this) g_current = nullptr;
}

int64_t Tape::record(std::string kind, std::vector<Tensor> inputs, Tensor output,
                     std::function<void()> vjp) {
  if (consumed_) throw Error("cannot record on a tape after backward");
  const int64_t id = static_cast<int64_t>(nodes_.size());
  output.impl()->tape = this;
  output.impl()->node = id;
  output.impl()->requires_grad = true;
  nodes_.push_back(Node{std::move(kind), std::move(inputs), std::move(output), std::move(vjp)});
  g_recorded.fetch_add(1, std::memory_order_relaxed);
  return id;
}

void Tape::backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1) {
    throw ShapeError("backward requires a scalar root, got shape " +
                     (root.defined() ? shape_str(root.shape()) : std::string("<null>")));
  }
  if (root.impl()->tape != this) throw Error("backward root was not recorded on this tape");
  if (consumed_) throw Error("tape already consumed by a previous backward");
  consumed_ = true;

  Tensor r = root;
  dispatch(r.dtype(), [&]<typename T>() { r.grad_data<T>()[0] += T(1); });
  for (int64_t i = root.impl()->node; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.output.has_grad()) continue;
    n.vjp();
  }
}

Tape* Tape::current() { return g_current; }
uint64_t Tape::total_created() { return g_created.load(); }
uint64_t Tape::total_recorded() { return g_recorded.load(); }

TapeScope::TapeScope(Tape& tape) : previous_(g_current) { g_current = &tape; }
TapeScope::~TapeScope() { g_current = previous_; }

NoGradGuard::NoGradGuard() : previous_(g_current) { g_current = nullptr; }
NoGradGuard::~NoGradGuard() { g_current = previous_; }

double value_and_grad(const std::function<Tensor()>& fn) {
  Tape tape;
  Tensor root;
  {
    TapeScope scope(tape);
    root = fn();
  }
  if (!root.requires_grad() || root.impl()->tape != &tape) {
    // Nothing differentiable was touched; gradients stay empty.
    return root.item();
  }
  tape.backward(root);
  return root.item();
}

}  // namespace avtrack
