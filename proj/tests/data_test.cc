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

#include "avtrack/data.h"

#include <fstream>
#include <sstream>

#include "gtest/gtest.h"
#include "test_util.h"

namespace avtrack {
namespace {

using testing::TempDir;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

GenConfig small_cfg(uint64_t seed) {
  GenConfig g;
  g.seed = seed;
  g.width = 80;
  g.height = 64;
  g.length = 15;
  return g;
}

TEST(GenSequenceTest, DeterministicUnderSeed) {
  GenConfig g = small_cfg(9);
  g.occluder_prob = 0.3;
  g.shape = TargetShape::kEllipse;
  SequenceDataset a = gen_sequence(g), b = gen_sequence(g);
  EXPECT_TRUE(a == b);
  g.seed = 10;
  EXPECT_FALSE(gen_sequence(g) == a);
}

TEST(GenSequenceTest, StaticConfigurationHoldsBoxConstant) {
  GenConfig g = small_cfg(3);
  g.motion = g.rotation = g.scale = g.shear = 0.0;
  SequenceDataset s = gen_sequence(g);
  ASSERT_EQ(s.size(), 15u);
  for (const Rect& r : s.boxes) EXPECT_EQ(r, s.boxes[0]);
  // Outer integer bounds of a 16 px target.
  EXPECT_GE(s.boxes[0].w, 16.0);
  EXPECT_LE(s.boxes[0].w, 17.0);
  EXPECT_GE(s.boxes[0].h, 16.0);
  EXPECT_LE(s.boxes[0].h, 17.0);
}

TEST(GenSequenceTest, BoxesIntersectFrame) {
  for (uint64_t seed = 0; seed < 30; ++seed) {
    GenConfig g = small_cfg(seed);
    g.length = 60;
    g.motion = 4.0;
    g.shape = seed % 2 ? TargetShape::kEllipse : TargetShape::kRectangle;
    SequenceDataset s = gen_sequence(g);
    ASSERT_EQ(s.frames.size(), s.boxes.size());
    for (const Rect& r : s.boxes) {
      const double ix = std::min(r.x + r.w, 80.0) - std::max(r.x, 0.0);
      const double iy = std::min(r.y + r.h, 64.0) - std::max(r.y, 0.0);
      EXPECT_GT(ix, 0.0);
      EXPECT_GT(iy, 0.0);
      EXPECT_EQ(r.x, std::floor(r.x));
      EXPECT_EQ(r.w, std::floor(r.w));
    }
    for (const Image& f : s.frames) {
      EXPECT_EQ(f.width, 80);
      EXPECT_EQ(f.height, 64);
    }
  }
}

TEST(GenSequenceTest, Rejections) {
  GenConfig g = small_cfg(1);
  g.target_w = g.target_h = 60;
  EXPECT_THROW(gen_sequence(g), Error);
  g = small_cfg(1);
  g.length = 1;
  EXPECT_THROW(gen_sequence(g), Error);
  g = small_cfg(1);
  g.motion = std::nan("");
  EXPECT_THROW(gen_sequence(g), Error);
}

TEST(PpmTest, RedTwoByTwoBytes) {
  TempDir dir("ppm");
  Image img(2, 2);
  for (int64_t y = 0; y < 2; ++y)
    for (int64_t x = 0; x < 2; ++x) img.pixel(x, y)[0] = 255;
  write_ppm(img, dir.path() / "red.ppm");
  std::string expect = "P6\n2 2\n255\n";
  for (int i = 0; i < 4; ++i) expect += std::string("\xff\x00\x00", 3);
  const std::string bytes = slurp(dir.path() / "red.ppm");
  EXPECT_EQ(bytes.size(), 11u + 12u);
  EXPECT_EQ(bytes, expect);
}

TEST(PpmTest, RoundTrip) {
  TempDir dir("ppm_rt");
  SequenceDataset s = gen_sequence(small_cfg(4));
  write_ppm(s.frames[3], dir.path() / "f.ppm");
  EXPECT_TRUE(read_ppm(dir.path() / "f.ppm") == s.frames[3]);
}

TEST(PpmTest, AcceptsHeaderComments) {
  TempDir dir("ppm_c");
  spit(dir.path() / "c.ppm", std::string("P6\n# made by hand\n1 1\n255\n") + "abc");
  Image img = read_ppm(dir.path() / "c.ppm");
  EXPECT_EQ(img.width, 1);
  EXPECT_EQ(img.pixel(0, 0)[2], 'c');
}

TEST(PpmTest, MalformedHeadersNameTheFile) {
  TempDir dir("ppm_bad");
  spit(dir.path() / "a.ppm", "P3\n1 1\n255\n000");
  EXPECT_NE(error_of([&] { read_ppm(dir.path() / "a.ppm"); }).find("a.ppm"), std::string::npos);
  spit(dir.path() / "b.ppm", "P6\n1 1\n65535\n000000");
  EXPECT_NE(error_of([&] { read_ppm(dir.path() / "b.ppm"); }).find("b.ppm"), std::string::npos);
  spit(dir.path() / "c.ppm", "P6\n2 2\n255\nabc");
  EXPECT_NE(error_of([&] { read_ppm(dir.path() / "c.ppm"); }).find("c.ppm"), std::string::npos);
  EXPECT_NE(error_of([&] { read_ppm(dir.path() / "missing.ppm"); }).find("missing.ppm"),
            std::string::npos);
}

TEST(SequenceIoTest, RoundTripIsBitwise) {
  TempDir dir("seq");
  SequenceDataset s = gen_sequence(small_cfg(5));
  write_sequence(s, dir.path());
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "frame_000000.ppm"));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "frame_000014.ppm"));
  SequenceDataset r = read_sequence(dir.path());
  EXPECT_EQ(r.frames, s.frames);
  EXPECT_EQ(r.boxes, s.boxes);
}

TEST(SequenceIoTest, GroundTruthFormat) {
  TempDir dir("seq_gt");
  SequenceDataset s = gen_sequence(small_cfg(6));
  write_sequence(s, dir.path());
  std::istringstream gt(slurp(dir.path() / "groundtruth_rect.txt"));
  std::string line;
  size_t n = 0;
  while (std::getline(gt, line)) {
    const Rect& r = s.boxes[n++];
    EXPECT_EQ(line, std::to_string(static_cast<int64_t>(r.x)) + "," +
                        std::to_string(static_cast<int64_t>(r.y)) + "," +
                        std::to_string(static_cast<int64_t>(r.w)) + "," +
                        std::to_string(static_cast<int64_t>(r.h)));
  }
  EXPECT_EQ(n, s.size());
}

TEST(SequenceIoTest, ThreeFieldLineNamesTheLine) {
  TempDir dir("seq_bad");
  SequenceDataset s = gen_sequence(small_cfg(7));
  write_sequence(s, dir.path());
  std::string gt = slurp(dir.path() / "groundtruth_rect.txt");
  std::istringstream in(gt);
  std::string out, line;
  int n = 0;
  while (std::getline(in, line)) out += (++n == 3 ? std::string("1,2,3") : line) + "\n";
  spit(dir.path() / "groundtruth_rect.txt", out);
  const std::string err = error_of([&] { read_sequence(dir.path()); });
  EXPECT_NE(err.find("groundtruth_rect.txt:3"), std::string::npos) << err;
}

TEST(SequenceIoTest, CountMismatchRejected) {
  TempDir dir("seq_count");
  SequenceDataset s = gen_sequence(small_cfg(8));
  write_sequence(s, dir.path());
  std::filesystem::remove(dir.path() / "frame_000014.ppm");
  const std::string err = error_of([&] { read_sequence(dir.path()); });
  EXPECT_NE(err.find("groundtruth_rect.txt"), std::string::npos) << err;
}

TEST(CropTest, AlignedCropCopiesPixels) {
  SequenceDataset s = gen_sequence(small_cfg(2));
  const Image& f = s.frames[0];
  // Side 16 at 16 samples starting at pixel (20, 10).
  Tensor c = crop_patch(f, 28.0, 18.0, 16.0, 16, DType::kF64);
  for (int ch = 0; ch < 3; ++ch)
    for (int64_t i = 0; i < 16; ++i)
      for (int64_t j = 0; j < 16; ++j)
        EXPECT_EQ(c.at((ch * 16 + i) * 16 + j), f.pixel(20 + j, 10 + i)[ch] / 255.0);
}

TEST(CropTest, OutsidePixelsUseFrameMean) {
  SequenceDataset s = gen_sequence(small_cfg(2));
  const Image& f = s.frames[0];
  double mean[3] = {0, 0, 0};
  for (int64_t y = 0; y < f.height; ++y)
    for (int64_t x = 0; x < f.width; ++x)
      for (int ch = 0; ch < 3; ++ch) mean[ch] += f.pixel(x, y)[ch];
  for (double& m : mean) m /= 255.0 * static_cast<double>(f.width * f.height);
  // Crop centered at the top-left corner: the upper-left quadrant is outside.
  Tensor c = crop_patch(f, 0.0, 0.0, 16.0, 16, DType::kF64);
  for (int ch = 0; ch < 3; ++ch) {
    for (int64_t i = 0; i < 7; ++i) {
      for (int64_t j = 0; j < 7; ++j) EXPECT_NEAR(c.at((ch * 16 + i) * 16 + j), mean[ch], 1e-12);
    }
    EXPECT_EQ(c.at((ch * 16 + 8) * 16 + 8), f.pixel(0, 0)[ch] / 255.0);
  }
}

TEST(CropTest, Rejections) {
  Image f(4, 4);
  EXPECT_THROW(crop_patch(f, 2, 2, 0.0, 4, DType::kF32), Error);
  EXPECT_THROW(crop_patch(f, 2, 2, 4.0, 0, DType::kF32), Error);
}

}  // namespace
}  // namespace avtrack
