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

// Run configuration: `key = value` files with flag overrides.

#ifndef AVTRACK_CONFIG_H_
#define AVTRACK_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "avtrack/backbone.h"
#include "avtrack/distill.h"
#include "avtrack/head.h"
#include "avtrack/optim.h"
#include "avtrack/train.h"

namespace avtrack {

struct Config {
  std::string profile = "desk";
  BackboneConfig backbone = BackboneConfig::desk();
  int64_t head_channels = 0;  // 0: same as d
  int64_t critic_hidden = kDefaultCriticHidden;
  DType dtype = DType::kF32;

  LossWeights weights;
  double tau = kDefaultTau;
  AdamWOptions adam;
  int64_t batch = 8;
  int64_t steps = 300;
  uint64_t seed = 0;
  SamplerOptions sampler;

  MdMode md_mode = MdMode::kJsd;
  int64_t student_blocks = 0;  // 0: half the teacher depth
  bool distill_spar = true;
  bool distill_vir = false;
  std::string force_gates = "none";

  std::vector<std::string> train_data;  // sequence directories
  std::vector<std::string> eval_data;
  std::vector<std::string> teachers;    // checkpoint paths

  // Profile defaults: "desk" (lr 2e-3, batch 8) or "paper" (lr 4e-5, batch 32).
  static Config for_profile(const std::string& profile);

  // Throws Error naming the offending key.
  void validate() const;

  // Every key with its canonical text value, in a stable order.
  std::vector<std::pair<std::string, std::string>> to_pairs() const;

  bool operator==(const Config& other) const { return to_pairs() == other.to_pairs(); }
};

// All recognised keys, in canonical order.
const std::vector<std::string>& config_keys();

// Sets one key from text. Throws Error naming the key for unknown keys and
// unparsable values.
void set_config_value(Config& cfg, const std::string& key, const std::string& value);

// Parses `key = value` lines ('#' starts a comment). A `profile` key, in the
// file or the overrides, selects the base defaults; the remaining keys apply
// in order, file first, then overrides. Errors carry the path and line.
Config parse_config_text(const std::string& text, const std::string& source,
                         const std::vector<std::pair<std::string, std::string>>& overrides = {});
Config parse_config(const std::filesystem::path& path,
                    const std::vector<std::pair<std::string, std::string>>& overrides = {});
// Defaults plus overrides only.
Config config_from_overrides(const std::vector<std::pair<std::string, std::string>>& overrides);

std::string format_config(const Config& cfg);
void save_config(const Config& cfg, const std::filesystem::path& path);

}  // namespace avtrack

#endif  // AVTRACK_CONFIG_H_
