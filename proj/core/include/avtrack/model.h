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

#ifndef AVTRACK_MODEL_H_
#define AVTRACK_MODEL_H_

#include <cstdint>
#include <memory>

#include "avtrack/backbone.h"
#include "avtrack/head.h"
#include "avtrack/mi.h"
#include "avtrack/params.h"

namespace avtrack {

inline constexpr int64_t kDefaultCriticHidden = 64;

// Backbone, head and view-invariance critic over one parameter store.
// Copies share parameter storage.
struct TrackerModel {
  BackboneConfig cfg;
  int64_t head_channels = 0;
  int64_t critic_hidden = kDefaultCriticHidden;
  std::shared_ptr<ParamStore> store;
  BackboneParams backbone;
  HeadParams head;
  Critic vir_critic;

  DType dtype() const { return backbone.patch_weight.dtype(); }

  // head_channels defaults to d.
  static TrackerModel create(const BackboneConfig& cfg, uint64_t seed, DType dtype,
                             int64_t head_channels = 0,
                             int64_t critic_hidden = kDefaultCriticHidden);
};

// Parameter prefixes inside the store.
inline constexpr const char* kBackbonePrefix = "backbone.";
inline constexpr const char* kHeadPrefix = "head.";
inline constexpr const char* kCriticPrefix = "vir_critic";

}  // namespace avtrack

#endif  // AVTRACK_MODEL_H_
