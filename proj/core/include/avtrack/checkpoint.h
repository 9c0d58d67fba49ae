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

// Binary model checkpoints.
//
// Layout, all integers little-endian:
//   "AVTK" | u32 version | u64 metadata length | metadata (UTF-8 JSON) | payload
// The metadata holds the run config and a tensor table of
// {name, dtype, shape, offset, bytes, trainable}; offsets are absolute file
// positions, strictly increasing. The payload is raw little-endian buffers.

#ifndef AVTRACK_CHECKPOINT_H_
#define AVTRACK_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "avtrack/config.h"
#include "avtrack/model.h"

namespace avtrack {

inline constexpr char kCheckpointMagic[4] = {'A', 'V', 'T', 'K'};
inline constexpr uint32_t kCheckpointVersion = 1;

struct TensorRecord {
  std::string name;
  DType dtype = DType::kF32;
  Shape shape;
  uint64_t offset = 0;
  uint64_t bytes = 0;
  bool trainable = true;
};

struct CheckpointInfo {
  uint32_t version = 0;
  uint64_t file_size = 0;
  Config config;
  std::vector<TensorRecord> tensors;
  std::string metadata;  // raw JSON text
};

// Builds the model described by cfg (backbone, head_channels, critic_hidden,
// dtype); parameter values come from cfg.seed.
TrackerModel model_from_config(const Config& cfg);

void save_checkpoint(const TrackerModel& model, const Config& cfg,
                     const std::filesystem::path& path);

// Header and metadata only; validates the tensor table against the file
// length.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

struct LoadedCheckpoint {
  Config config;
  TrackerModel model;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace avtrack

#endif  // AVTRACK_CHECKPOINT_H_
