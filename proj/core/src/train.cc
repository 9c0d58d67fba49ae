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

#include "avtrack/train.h"

#include <algorithm>
#include <cmath>
#include <future>

#include "avtrack/ops.h"
#include "avtrack/tape.h"

namespace avtrack {
namespace {

double value_or_zero(const Tensor& t) { return t.defined() ? t.item() : 0.0; }

double mean_probability(const ActivationTrace& trace) {
  if (trace.size() == 0) return 0.0;
  double s = 0.0;
  const int64_t B = trace.batch();
  for (size_t j = 0; j < trace.size(); ++j)
    for (int64_t b = 0; b < B; ++b) s += trace.prob(j, b);
  return s / static_cast<double>(trace.size() * B);
}

// Clips a normalized box to the unit square, keeping a minimal extent.
Box clip_unit(const Box& b) {
  double x0 = std::clamp(b.cx - 0.5 * b.w, 0.0, 1.0), x1 = std::clamp(b.cx + 0.5 * b.w, 0.0, 1.0);
  double y0 = std::clamp(b.cy - 0.5 * b.h, 0.0, 1.0), y1 = std::clamp(b.cy + 0.5 * b.h, 0.0, 1.0);
  constexpr double kMin = 1e-3;
  if (x1 - x0 < kMin) x0 = std::max(0.0, x1 - kMin), x1 = x0 + kMin;
  if (y1 - y0 < kMin) y0 = std::max(0.0, y1 - kMin), y1 = y0 + kMin;
  return {0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0};
}

Tensor boxes_tensor(const std::vector<Box>& boxes, DType dtype) {
  std::vector<double> v;
  v.reserve(boxes.size() * 4);
  for (const Box& b : boxes) {
    const Box c = clip_unit(b);
    v.insert(v.end(), {c.cx, c.cy, c.w, c.h});
  }
  return Tensor::from_vector({static_cast<int64_t>(boxes.size()), 4}, v, dtype);
}

// Head predictions and L_pred for one forward pass.
struct Forward {
  BackboneOutput out;
  PredLoss pred;
};

Forward student_forward(const TrackerModel& model, const TrainBatch& batch, const GtBatch& gt,
                        const ObjectiveOptions& options) {
  Forward f;
  f.out = backbone_forward(batch.Z, batch.X, model.backbone, model.cfg, Mode::kTrain,
                           options.gates);
  const HeadMaps maps = head_forward(f.out.state.search_tokens(), model.cfg.search_grid_h(),
                                     model.cfg.search_grid_w(), model.head, true);
  f.pred = pred_loss(maps, gt, options.weights);
  return f;
}

Tensor view_invariance(const TrackerModel& model, const TokenState& state,
                       const TrainBatch& batch, uint64_t seed) {
  const BackboneConfig& cfg = model.cfg;
  Tensor roi = roi_token_interp(state.search_tokens(), cfg.search_grid_h(), cfg.search_grid_w(),
                                boxes_tensor(batch.boxes, model.dtype()), cfg.H_z / cfg.P,
                                cfg.W_z / cfg.P);
  return vir_loss(state.template_tokens(), roi, model.vir_critic, seed);
}

LossTerms tracker_objective_traced(const TrackerModel& model, const TrainBatch& batch,
                                   const GtBatch& gt, const ObjectiveOptions& options,
                                   uint64_t seed, ActivationTrace* trace) {
  Forward f = student_forward(model, batch, gt, options);
  LossTerms t;
  t.pred = f.pred.total;
  t.cls = f.pred.cls;
  t.iou = f.pred.iou;
  t.l1 = f.pred.l1;
  if (options.use_spar && f.out.trace.size() > 0)
    t.spar = sparsity_loss(f.out.trace, model.cfg.zeta);
  if (options.use_vir) t.vir = view_invariance(model, f.out.state, batch, seed);
  t.total = overall_loss(t.pred, t.spar, t.vir, options.weights);
  if (trace != nullptr) *trace = std::move(f.out.trace);
  return t;
}

StepLog make_log(const LossTerms& t, const ActivationTrace& trace) {
  StepLog log;
  log.total = value_or_zero(t.total);
  log.pred = value_or_zero(t.pred);
  log.cls = value_or_zero(t.cls);
  log.iou = value_or_zero(t.iou);
  log.l1 = value_or_zero(t.l1);
  log.spar = value_or_zero(t.spar);
  log.vir = value_or_zero(t.vir);
  log.md = value_or_zero(t.md);
  log.mean_prob = mean_probability(trace);
  return log;
}

}  // namespace

PairSampler::PairSampler(const std::vector<SequenceDataset>* sequences, const BackboneConfig& cfg,
                         SamplerOptions options, uint64_t seed)
    : sequences_(sequences), cfg_(cfg), opt_(options), rng_(seed) {
  if (sequences_ == nullptr || sequences_->empty()) throw Error("PairSampler: no sequences");
  for (const auto& s : *sequences_) {
    if (s.frames.empty() || s.frames.size() != s.boxes.size())
      throw Error("PairSampler: sequence '" + s.name + "' has no usable frames");
  }
}

TrainBatch PairSampler::next(int64_t batch, DType dtype) {
  if (batch < 1) throw Error("PairSampler: batch must be positive");
  std::vector<Tensor> zs, xs;
  TrainBatch out;
  for (int64_t i = 0; i < batch; ++i) {
    const SequenceDataset& seq = (*sequences_)[rng_.below(sequences_->size())];
    const int64_t n = static_cast<int64_t>(seq.size());
    const int64_t t = static_cast<int64_t>(rng_.below(static_cast<uint64_t>(n)));
    const int64_t lo = std::max<int64_t>(0, t - opt_.max_gap);
    const int64_t hi = std::min<int64_t>(n - 1, t + opt_.max_gap);
    const int64_t s = lo + static_cast<int64_t>(rng_.below(static_cast<uint64_t>(hi - lo + 1)));

    const Rect& zb = seq.boxes[t];
    zs.push_back(crop_patch(seq.frames[t], zb.cx(), zb.cy(),
                            opt_.template_factor * std::sqrt(zb.w * zb.h), cfg_.H_z, dtype));

    const Rect& xb = seq.boxes[s];
    const double side = opt_.search_factor * std::sqrt(xb.w * xb.h) *
                        std::exp(rng_.uniform(-opt_.scale_jitter, opt_.scale_jitter));
    const double cx = xb.cx() + rng_.uniform(-opt_.center_jitter, opt_.center_jitter) * side;
    const double cy = xb.cy() + rng_.uniform(-opt_.center_jitter, opt_.center_jitter) * side;
    xs.push_back(crop_patch(seq.frames[s], cx, cy, side, cfg_.H_x, dtype));
    out.boxes.push_back({(xb.cx() - cx) / side + 0.5, (xb.cy() - cy) / side + 0.5, xb.w / side,
                         xb.h / side});
  }
  out.Z = concat(zs, 0);
  out.X = concat(xs, 0);
  return out;
}

LossTerms tracker_objective(const TrackerModel& model, const TrainBatch& batch,
                            const GtBatch& gt, const ObjectiveOptions& options, uint64_t seed) {
  return tracker_objective_traced(model, batch, gt, options, seed, nullptr);
}

std::vector<StepLog> train_tracker(TrackerModel& model,
                                   const std::vector<SequenceDataset>& sequences,
                                   const TrainOptions& options) {
  AdamWOptions adam = options.adam;
  if (adam.total_steps == 0) adam.total_steps = options.steps;
  AdamW optimizer(model.store->trainable(), adam);
  PairSampler sampler(&sequences, model.cfg, options.sampler, options.seed);
  Rng seeds(options.seed ^ 0x5EEDULL);
  std::vector<StepLog> logs;
  for (int64_t step = 0; step < options.steps; ++step) {
    TrainBatch batch = sampler.next(options.batch, model.dtype());
    GtBatch gt = make_gt_batch(batch.boxes, model.cfg.search_grid_h(), model.cfg.search_grid_w(),
                               model.dtype());
    const uint64_t seed = seeds.next_u64();
    optimizer.zero_grad();
    LossTerms terms;
    ActivationTrace trace;
    {
      Tape tape;
      TapeScope scope(tape);
      terms = tracker_objective_traced(model, batch, gt, options.objective, seed, &trace);
      tape.backward(terms.total);
    }
    StepLog log = make_log(terms, trace);
    log.step = step;
    log.lr = optimizer.current_lr();
    optimizer.step();
    if (options.on_step) options.on_step(log);
    logs.push_back(log);
  }
  return logs;
}

Tensor TeacherEnsemble::features(const Tensor& Z, const Tensor& X, int threads) const {
  if (teachers.empty()) throw Error("TeacherEnsemble: no teachers");
  auto run = [&](size_t i) {
    NoGradGuard guard;
    const TrackerModel& t = teachers[i];
    return backbone_forward(Z, X, t.backbone, t.cfg, Mode::kInfer).state.tokens;
  };
  std::vector<Tensor> feats(teachers.size());
  if (threads > 1 && teachers.size() > 1) {
    std::vector<std::future<Tensor>> jobs;
    size_t next = 0;
    while (next < teachers.size()) {
      jobs.clear();
      const size_t first = next;
      for (int k = 0; k < threads && next < teachers.size(); ++k, ++next)
        jobs.push_back(std::async(std::launch::async, run, next));
      for (size_t k = 0; k < jobs.size(); ++k) feats[first + k] = jobs[k].get();
    }
  } else {
    for (size_t i = 0; i < teachers.size(); ++i) feats[i] = run(i);
  }
  NoGradGuard guard;
  return aggregate_features(feats);
}

DistillOptions default_distill_options() {
  DistillOptions o;
  o.objective.use_vir = false;
  return o;
}

namespace {

LossTerms distill_objective_traced(const TrackerModel& student, const TeacherEnsemble& ensemble,
                                   const Critic& critic, const TrainBatch& batch,
                                   const GtBatch& gt, const DistillOptions& options,
                                   uint64_t seed, ActivationTrace* trace) {
  const Tensor teacher = ensemble.features(batch.Z, batch.X, options.threads);
  Tensor teacher_soft;
  {
    NoGradGuard guard;
    teacher_soft = soften(teacher, options.tau);
  }
  Forward f = student_forward(student, batch, gt, options.objective);
  LossTerms t;
  t.pred = f.pred.total;
  t.cls = f.pred.cls;
  t.iou = f.pred.iou;
  t.l1 = f.pred.l1;
  t.md = md_loss(teacher_soft, soften(f.out.state.tokens, options.tau), critic, seed,
                 options.mode);
  if (options.objective.use_spar && f.out.trace.size() > 0)
    t.spar = sparsity_loss(f.out.trace, student.cfg.zeta);
  if (options.objective.use_vir) t.vir = view_invariance(student, f.out.state, batch, seed);
  t.total = add(overall_loss(t.pred, t.spar, t.vir, options.objective.weights),
                scale(t.md, options.objective.weights.eta));
  if (trace != nullptr) *trace = std::move(f.out.trace);
  return t;
}

}  // namespace

LossTerms distill_objective(const TrackerModel& student, const TeacherEnsemble& ensemble,
                            const Critic& critic, const TrainBatch& batch, const GtBatch& gt,
                            const DistillOptions& options, uint64_t seed) {
  return distill_objective_traced(student, ensemble, critic, batch, gt, options, seed, nullptr);
}

StepLog distill_step(const TrainBatch& batch, const TeacherEnsemble& ensemble,
                     TrackerModel& student, const Critic& critic, AdamW& optimizer,
                     const DistillOptions& options, uint64_t seed) {
  GtBatch gt = make_gt_batch(batch.boxes, student.cfg.search_grid_h(),
                             student.cfg.search_grid_w(), student.dtype());
  optimizer.zero_grad();
  LossTerms terms;
  ActivationTrace trace;
  {
    Tape tape;
    TapeScope scope(tape);
    terms = distill_objective_traced(student, ensemble, critic, batch, gt, options, seed, &trace);
    tape.backward(terms.total);
  }
  StepLog log = make_log(terms, trace);
  log.lr = optimizer.current_lr();
  optimizer.step();
  return log;
}

std::vector<StepLog> distill_student(TrackerModel& student, const TeacherEnsemble& ensemble,
                                     const std::vector<SequenceDataset>& sequences,
                                     const DistillRunOptions& options) {
  for (const TrackerModel& t : ensemble.teachers) {
    if (t.cfg.K() != student.cfg.K() || t.cfg.d != student.cfg.d)
      throw Error("distill_student: teacher and student token shapes differ");
  }
  ParamStore critic_store;
  Rng critic_rng(options.seed ^ 0xC41CULL);
  const Critic critic = Critic::create(critic_store, "md_critic", student.cfg.d,
                                       student.critic_hidden, critic_rng, student.dtype());
  std::vector<Tensor> params = student.store->trainable();
  for (const Tensor& p : critic_store.trainable()) params.push_back(p);
  AdamWOptions adam = options.adam;
  if (adam.total_steps == 0) adam.total_steps = options.steps;
  AdamW optimizer(params, adam);

  PairSampler sampler(&sequences, student.cfg, options.sampler, options.seed);
  Rng seeds(options.seed ^ 0x5EEDULL);
  std::vector<StepLog> logs;
  for (int64_t step = 0; step < options.steps; ++step) {
    TrainBatch batch = sampler.next(options.batch, student.dtype());
    StepLog log =
        distill_step(batch, ensemble, student, critic, optimizer, options.distill, seeds.next_u64());
    log.step = step;
    if (options.on_step) options.on_step(log);
    logs.push_back(log);
  }
  return logs;
}

}  // namespace avtrack
