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

// Training batches, the tracker objective and the distillation objective.

#ifndef AVTRACK_TRAIN_H_
#define AVTRACK_TRAIN_H_

#include <cstdint>
#include <functional>
#include <vector>

#include "avtrack/data.h"
#include "avtrack/distill.h"
#include "avtrack/head.h"
#include "avtrack/model.h"
#include "avtrack/optim.h"

namespace avtrack {

struct SamplerOptions {
  int64_t max_gap = 8;          // template/search frame distance
  double center_jitter = 0.18;  // max search-center shift, fraction of crop side
  double scale_jitter = 0.15;   // log-uniform crop side jitter
  double search_factor = 4.0;
  double template_factor = 2.0;
};

struct TrainBatch {
  Tensor Z;                // [B, 3, H_z, W_z]
  Tensor X;                // [B, 3, H_x, W_x]
  std::vector<Box> boxes;  // target in normalized search-crop coordinates
};

// Draws template/search crop pairs from a fixed set of sequences.
class PairSampler {
 public:
  PairSampler(const std::vector<SequenceDataset>* sequences, const BackboneConfig& cfg,
              SamplerOptions options, uint64_t seed);

  TrainBatch next(int64_t batch, DType dtype);

 private:
  const std::vector<SequenceDataset>* sequences_;
  BackboneConfig cfg_;
  SamplerOptions opt_;
  Rng rng_;
};

struct LossTerms {
  Tensor total;
  Tensor pred, cls, iou, l1;
  Tensor spar, vir, md;
};

struct ObjectiveOptions {
  LossWeights weights;
  bool use_spar = true;
  bool use_vir = true;
  GateOverride gates;
};

// L_overall on one batch; recorded onto the current tape, if any.
LossTerms tracker_objective(const TrackerModel& model, const TrainBatch& batch,
                            const GtBatch& gt, const ObjectiveOptions& options, uint64_t seed);

struct StepLog {
  int64_t step = 0;
  double total = 0, pred = 0, cls = 0, iou = 0, l1 = 0, spar = 0, vir = 0, md = 0;
  double mean_prob = 0.0;
  double lr = 0.0;
};

struct TrainOptions {
  int64_t steps = 300;
  int64_t batch = 8;
  uint64_t seed = 0;
  AdamWOptions adam;
  ObjectiveOptions objective;
  SamplerOptions sampler;
  std::function<void(const StepLog&)> on_step;
};

// Optimizes every trainable parameter of `model` in place.
std::vector<StepLog> train_tracker(TrackerModel& model,
                                   const std::vector<SequenceDataset>& sequences,
                                   const TrainOptions& options);

// Frozen teachers sharing token geometry.
struct TeacherEnsemble {
  std::vector<TrackerModel> teachers;

  // Aggregated final tokens, [B, K, d]. Evaluated without a tape. With
  // threads > 1 the teacher forwards run concurrently.
  Tensor features(const Tensor& Z, const Tensor& X, int threads = 1) const;
};

struct DistillOptions {
  ObjectiveOptions objective;  // use_vir defaults off for students
  MdMode mode = MdMode::kJsd;
  double tau = kDefaultTau;
  int threads = 1;
};

DistillOptions default_distill_options();

// L_pred + eta * L_MD + gamma * L_spar (+ optional view invariance) for
// the student; gradients reach only the student and `critic`.
LossTerms distill_objective(const TrackerModel& student, const TeacherEnsemble& ensemble,
                            const Critic& critic, const TrainBatch& batch, const GtBatch& gt,
                            const DistillOptions& options, uint64_t seed);

// One optimizer step on the student and critic.
StepLog distill_step(const TrainBatch& batch, const TeacherEnsemble& ensemble,
                     TrackerModel& student, const Critic& critic, AdamW& optimizer,
                     const DistillOptions& options, uint64_t seed);

struct DistillRunOptions {
  int64_t steps = 300;
  int64_t batch = 8;
  uint64_t seed = 0;
  AdamWOptions adam;
  DistillOptions distill = default_distill_options();
  SamplerOptions sampler;
  std::function<void(const StepLog&)> on_step;
};

// Trains `student` (and a fresh distillation critic) against the ensemble.
std::vector<StepLog> distill_student(TrackerModel& student, const TeacherEnsemble& ensemble,
                                     const std::vector<SequenceDataset>& sequences,
                                     const DistillRunOptions& options);

}  // namespace avtrack

#endif  // AVTRACK_TRAIN_H_
