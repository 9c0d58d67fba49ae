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

#include "avtrack/tracker.h"

#include <sstream>

#include "avtrack/mi.h"
#include "avtrack/ops.h"
#include "avtrack/tape.h"
#include "avtrack/train.h"
#include "gtest/gtest.h"
#include "model_fixtures.h"
#include "test_util.h"

namespace avtrack {
namespace {

SequenceDataset static_sequence(uint64_t seed, int64_t length) {
  GenConfig g;
  g.seed = seed;
  g.length = length;
  g.motion = g.rotation = g.scale = g.shear = 0.0;
  g.occluder_prob = 0.0;
  return gen_sequence(g);
}

TEST(InitTrackTest, KeepsTheGivenBox) {
  const TrackerModel m = testing::tiny_model(1);
  const SequenceDataset s = testing::small_sequences(1, 3)[0];
  const TrackState st = init_track(s.frames[0], s.boxes[0], m);
  EXPECT_EQ(st.current_box, s.boxes[0]);
  EXPECT_EQ(st.frame_index, 0);
  EXPECT_EQ(st.template_patch.shape(), (Shape{1, 3, 16, 16}));
}

TEST(InitTrackTest, TemplateIsTwiceTheContext) {
  const TrackerModel m = testing::tiny_model(1);
  const SequenceDataset s = testing::small_sequences(1, 3)[0];
  const Rect& b = s.boxes[0];
  const TrackState st = init_track(s.frames[0], b, m);
  const Tensor expect =
      crop_patch(s.frames[0], b.cx(), b.cy(), 2.0 * std::sqrt(b.w * b.h), 16, m.dtype());
  EXPECT_EQ(st.template_patch.to_vector(), expect.to_vector());
}

TEST(InitTrackTest, EdgeCropPadsWithFrameMean) {
  const TrackerModel m = testing::tiny_model(1);
  const SequenceDataset s = testing::small_sequences(1, 3)[0];
  const Image& f = s.frames[0];
  double mean[3] = {0, 0, 0};
  for (int64_t y = 0; y < f.height; ++y)
    for (int64_t x = 0; x < f.width; ++x)
      for (int c = 0; c < 3; ++c) mean[c] += f.pixel(x, y)[c];
  for (double& v : mean) v /= 255.0 * static_cast<double>(f.width * f.height);
  // An 8x8 box at the origin: template side 16, the top-left quarter is
  // outside the frame.
  const TrackState st = init_track(f, Rect{0, 0, 8, 8}, m);
  for (int c = 0; c < 3; ++c)
    EXPECT_NEAR(st.template_patch.at((c * 16 + 0) * 16 + 0), mean[c], 1e-12);
}

TEST(InitTrackTest, Deterministic) {
  const TrackerModel m = testing::tiny_model(1);
  const SequenceDataset s = testing::small_sequences(1, 4)[0];
  const TrackState a = init_track(s.frames[0], s.boxes[0], m);
  const TrackState b = init_track(s.frames[0], s.boxes[0], m);
  EXPECT_EQ(a.template_patch.to_vector(), b.template_patch.to_vector());
}

TEST(InitTrackTest, DegenerateBoxRejected) {
  const TrackerModel m = testing::tiny_model(1);
  const SequenceDataset s = testing::small_sequences(1, 4)[0];
  EXPECT_THROW(init_track(s.frames[0], Rect{5, 5, 0, 4}, m), Error);
  EXPECT_THROW(init_track(s.frames[0], Rect{5, 5, 4, -1}, m), Error);
}

TEST(TrackStepTest, ActiveBlocksIsPrefixPlusGateSum) {
  const TrackerModel m = testing::tiny_model(2);
  const SequenceDataset s = testing::small_sequences(1, 5)[0];
  for (const GateOverride& g : {GateOverride::none(), GateOverride::all_on(),
                                GateOverride::all_off(), GateOverride::from_mask({false, true})}) {
    TrackerOptions opt;
    opt.gates = g;
    TrackState st = init_track(s.frames[0], s.boxes[0], m, opt);
    for (size_t i = 1; i < 4; ++i) {
      const FrameResult r = track_step(st, s.frames[i], m, opt);
      int64_t gates = 0;
      for (size_t b = 0; b < r.trace.size(); ++b) gates += r.trace.gate(b);
      EXPECT_EQ(r.active_blocks, m.cfg.n_f + gates);
      EXPECT_EQ(r.frame, static_cast<int64_t>(i));
      EXPECT_EQ(st.current_box, r.box);
    }
  }
}

TEST(TrackStepTest, BoxStaysInsideFrame) {
  const TrackerModel m = testing::tiny_model(3);
  const SequenceDataset s = testing::small_sequences(1, 6)[0];
  for (const FrameResult& r : track_sequence(s, m)) {
    EXPECT_GE(r.box.cx(), 0.0);
    EXPECT_LE(r.box.cx(), 64.0);
    EXPECT_GE(r.box.w, 1.0);
    EXPECT_LE(r.box.h, 64.0);
  }
}

TEST(TrackStepTest, NeverRecordsOrEstimates) {
  const TrackerModel m = testing::tiny_model(4);
  const SequenceDataset s = testing::small_sequences(1, 7)[0];
  // The counters are live.
  const uint64_t mi_before_probe = mi_invocations();
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor a = testing::random_tensor({4, 2, 16}, 1);
    a.set_requires_grad(true);
    vir_loss(a, a, m.vir_critic, 1);
    EXPECT_GT(tape.size(), 0u);
  }
  EXPECT_GT(mi_invocations(), mi_before_probe);

  TrackState st = init_track(s.frames[0], s.boxes[0], m);
  const uint64_t tapes = Tape::total_created(), recorded = Tape::total_recorded();
  const uint64_t mi = mi_invocations();
  for (size_t i = 1; i < s.size(); ++i) track_step(st, s.frames[i], m);
  // Also with a tape installed by the caller.
  Tape outer;
  const uint64_t tapes_with_outer = Tape::total_created();
  {
    TapeScope scope(outer);
    TrackState again = init_track(s.frames[0], s.boxes[0], m);
    for (size_t i = 1; i < s.size(); ++i) track_step(again, s.frames[i], m);
  }
  EXPECT_EQ(outer.size(), 0u);
  EXPECT_EQ(tapes_with_outer, tapes + 1);
  EXPECT_EQ(Tape::total_created(), tapes_with_outer);
  EXPECT_EQ(Tape::total_recorded(), recorded);
  EXPECT_EQ(mi_invocations(), mi);
}

TEST(TrackSequenceTest, FirstRecordIsInitialization) {
  const TrackerModel m = testing::tiny_model(5);
  const SequenceDataset s = testing::small_sequences(1, 8)[0];
  const auto r = track_sequence(s, m);
  ASSERT_EQ(r.size(), s.size());
  EXPECT_EQ(r[0].frame, 0);
  EXPECT_EQ(r[0].box, s.boxes[0]);
  EXPECT_EQ(r.back().frame, static_cast<int64_t>(s.size()) - 1);
}

TEST(FrameRecordTest, Format) {
  EXPECT_EQ(frame_record_header(), "frame,x,y,w,h,score,active_blocks,ms");
  FrameResult r;
  r.frame = 3;
  r.box = Rect{1.5, 2.0, 10.25, 4.0};
  r.score = 0.75;
  r.active_blocks = 5;
  r.millis = 1.5;
  EXPECT_EQ(format_frame_record(r), "3,1.500,2.000,10.250,4.000,0.750000,5,1.5000");
  std::istringstream in(format_frame_record(r));
  std::string field;
  int n = 0;
  while (std::getline(in, field, ',')) ++n;
  EXPECT_EQ(n, 8);
}

// Desk model trained on one static-target sequence.
class OverfitTrackerTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    seq_ = new SequenceDataset(static_sequence(21, 20));
    model_ = new TrackerModel(TrackerModel::create(BackboneConfig::desk(), 7, DType::kF32));
    TrainOptions o;
    o.steps = 300;
    o.adam.lr = 2e-3;
    o.seed = 3;
    train_tracker(*model_, {*seq_}, o);
  }
  static void TearDownTestSuite() {
    delete seq_;
    delete model_;
  }
  static SequenceDataset* seq_;
  static TrackerModel* model_;
};

SequenceDataset* OverfitTrackerTest::seq_ = nullptr;
TrackerModel* OverfitTrackerTest::model_ = nullptr;

TEST_F(OverfitTrackerTest, CenterErrorWithinTwoPixels) {
  ASSERT_EQ(model_->cfg.H_x, 64);
  const auto r = track_sequence(*seq_, *model_);
  for (size_t i = 0; i < r.size(); ++i)
    EXPECT_LE(center_error(r[i].box, seq_->boxes[i]), 2.0) << "frame " << i;
}

TEST_F(OverfitTrackerTest, InitFrameWithinOneCell) {
  TrackState st = init_track(seq_->frames[0], seq_->boxes[0], *model_);
  const FrameResult r = track_step(st, seq_->frames[0], *model_);
  const double side = context_side(seq_->boxes[0], kSearchFactor);
  const double cell = side / static_cast<double>(model_->cfg.search_grid_w());
  EXPECT_LE(std::abs(r.box.cx() - seq_->boxes[0].cx()), cell);
  EXPECT_LE(std::abs(r.box.cy() - seq_->boxes[0].cy()), cell);
}

}  // namespace
}  // namespace avtrack
