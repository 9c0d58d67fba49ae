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

#ifndef AVTRACK_TAPE_H_
#define AVTRACK_TAPE_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "avtrack/tensor.h"

namespace avtrack {

// Ordered record of primitive applications on one thread. Recording only
// happens while a tape is installed as the thread's current tape (see
// TapeScope) and some input requires a gradient.
class Tape {
 public:
  struct Node {
    std::string kind;
    std::vector<Tensor> inputs;
    Tensor output;
    // Reads output.grad and accumulates into the inputs that require grad.
    std::function<void()> vjp;
  };

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  int64_t record(std::string kind, std::vector<Tensor> inputs, Tensor output,
                 std::function<void()> vjp);

  // Reverse sweep from a scalar root recorded on this tape. Each node is
  // visited once; a tape supports a single backward.
  void backward(const Tensor& root);

  size_t size() const { return nodes_.size(); }
  const Node& node(size_t i) const { return nodes_[i]; }

  // Current tape of the calling thread, or nullptr.
  static Tape* current();

  // Process-wide instrumentation: number of tapes ever constructed and
  // number of primitive applications ever recorded.
  static uint64_t total_created();
  static uint64_t total_recorded();

 private:
  friend class TapeScope;
  friend class NoGradGuard;
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Installs `tape` as the current tape for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording on the calling thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* previous_;
};

// Convenience: records `fn()` on a fresh tape and backpropagates from the
// returned scalar. Returns the scalar value.
double value_and_grad(const std::function<Tensor()>& fn);

}  // namespace avtrack

#endif  // AVTRACK_TAPE_H_
