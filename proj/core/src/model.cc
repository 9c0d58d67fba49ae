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

#include "avtrack/model.h"

namespace avtrack {

TrackerModel TrackerModel::create(const BackboneConfig& cfg, uint64_t seed, DType dtype,
                                  int64_t head_channels, int64_t critic_hidden) {
  cfg.validate();
  TrackerModel m;
  m.cfg = cfg;
  m.head_channels = head_channels > 0 ? head_channels : cfg.d;
  m.critic_hidden = critic_hidden;
  m.store = std::make_shared<ParamStore>();
  Rng rng(seed);
  Rng backbone_rng = rng.fork(1), head_rng = rng.fork(2), critic_rng = rng.fork(3);
  m.backbone = init_backbone(cfg, *m.store, kBackbonePrefix, backbone_rng, dtype);
  m.head = init_head(*m.store, kHeadPrefix, cfg.d, m.head_channels, head_rng, dtype);
  m.vir_critic = Critic::create(*m.store, kCriticPrefix, cfg.d, critic_hidden, critic_rng, dtype);
  return m;
}

}  // namespace avtrack
