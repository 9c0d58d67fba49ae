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

// Small models and sequences shared by the training-level tests.

#ifndef AVTRACK_TESTS_MODEL_FIXTURES_H_
#define AVTRACK_TESTS_MODEL_FIXTURES_H_

#include <string>
#include <vector>

#include "avtrack/data.h"
#include "avtrack/model.h"

namespace avtrack::testing {

// 4 blocks of width 16 on 16x16 / 32x32 crops: 4 + 16 tokens.
inline BackboneConfig tiny_config() {
  BackboneConfig c;
  c.N = 4;
  c.n_f = 2;
  c.d = 16;
  c.heads = 2;
  c.mlp_ratio = 2.0;
  c.P = 8;
  c.H_z = c.W_z = 16;
  c.H_x = c.W_x = 32;
  return c;
}

inline TrackerModel tiny_model(uint64_t seed, DType dtype = DType::kF64) {
  return TrackerModel::create(tiny_config(), seed, dtype, 16, 8);
}

inline std::vector<SequenceDataset> small_sequences(int count, uint64_t first_seed,
                                                    int64_t length = 12) {
  std::vector<SequenceDataset> out;
  for (int i = 0; i < count; ++i) {
    GenConfig g;
    g.seed = first_seed + static_cast<uint64_t>(i);
    g.width = g.height = 64;
    g.length = length;
    g.target_w = g.target_h = 12;
    g.name = "seq" + std::to_string(i);
    out.push_back(gen_sequence(g));
  }
  return out;
}

// Bitwise snapshot of every store entry.
inline std::vector<std::vector<double>> snapshot(const ParamStore& store) {
  std::vector<std::vector<double>> out;
  for (const auto& e : store.entries()) out.push_back(e.tensor.to_vector());
  return out;
}

}  // namespace avtrack::testing

#endif  // AVTRACK_TESTS_MODEL_FIXTURES_H_
