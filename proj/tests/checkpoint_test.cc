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

#include "avtrack/checkpoint.h"

#include <cstring>
#include <fstream>
#include <sstream>

#include "avtrack/eval.h"
#include "gtest/gtest.h"
#include "model_fixtures.h"
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

Config tiny_run_config(DType dtype) {
  Config c;
  c.backbone = testing::tiny_config();
  c.head_channels = 16;
  c.critic_hidden = 8;
  c.dtype = dtype;
  c.seed = 3;
  return c;
}

// Random non-initial values in every entry, including buffers.
void scramble(TrackerModel& m, uint64_t seed) {
  Rng rng(seed);
  for (const auto& e : m.store->entries()) {
    Tensor t = e.tensor;
    dispatch(t.dtype(), [&]<typename T>() {
      for (T& v : t.mutable_data<T>()) v = static_cast<T>(rng.uniform(-2.0, 2.0));
    });
  }
}

class CheckpointTest : public ::testing::TestWithParam<DType> {};

TEST_P(CheckpointTest, RoundTripIsBitwise) {
  TempDir dir("ckpt");
  Config c = tiny_run_config(GetParam());
  c.steps = 17;
  c.weights.eta = 0.25;
  TrackerModel m = model_from_config(c);
  scramble(m, 9);
  save_checkpoint(m, c, dir.path() / "m.ckpt");
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "m.ckpt.tmp"));
  const LoadedCheckpoint r = load_checkpoint(dir.path() / "m.ckpt");
  EXPECT_TRUE(r.config == c);
  ASSERT_EQ(r.model.store->entries().size(), m.store->entries().size());
  for (size_t i = 0; i < m.store->entries().size(); ++i) {
    const auto& a = m.store->entries()[i];
    const auto& b = r.model.store->entries()[i];
    EXPECT_EQ(a.name, b.name);
    EXPECT_EQ(a.trainable, b.trainable);
    EXPECT_EQ(a.tensor.dtype(), b.tensor.dtype());
    const size_t bytes = a.tensor.numel() * (a.tensor.dtype() == DType::kF32 ? 4 : 8);
    const void* pa = a.tensor.dtype() == DType::kF32 ? static_cast<const void*>(a.tensor.data<float>().data())
                                                     : a.tensor.data<double>().data();
    const void* pb = b.tensor.dtype() == DType::kF32 ? static_cast<const void*>(b.tensor.data<float>().data())
                                                     : b.tensor.data<double>().data();
    EXPECT_EQ(std::memcmp(pa, pb, bytes), 0) << a.name;
  }
  // Saving the loaded model reproduces the file.
  save_checkpoint(r.model, r.config, dir.path() / "again.ckpt");
  EXPECT_EQ(slurp(dir.path() / "m.ckpt"), slurp(dir.path() / "again.ckpt"));
}

INSTANTIATE_TEST_SUITE_P(DTypes, CheckpointTest, ::testing::Values(DType::kF32, DType::kF64),
                         [](const auto& info) { return std::string(dtype_name(info.param)); });

TEST(CheckpointLayoutTest, HeaderAndTable) {
  TempDir dir("ckpt_layout");
  const Config c = tiny_run_config(DType::kF32);
  const TrackerModel m = model_from_config(c);
  save_checkpoint(m, c, dir.path() / "m.ckpt");
  const std::string bytes = slurp(dir.path() / "m.ckpt");
  ASSERT_GE(bytes.size(), 16u);
  EXPECT_EQ(bytes.substr(0, 4), "AVTK");
  EXPECT_EQ(bytes.substr(4, 4), std::string("\x01\x00\x00\x00", 4));
  uint64_t meta_len = 0;
  for (int i = 0; i < 8; ++i)
    meta_len |= static_cast<uint64_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);

  const CheckpointInfo info = read_checkpoint_info(dir.path() / "m.ckpt");
  EXPECT_EQ(info.version, 1u);
  EXPECT_EQ(info.metadata.size(), meta_len);
  EXPECT_EQ(info.metadata, bytes.substr(16, meta_len));
  EXPECT_EQ(info.file_size, bytes.size());
  ASSERT_EQ(info.tensors.size(), m.store->entries().size());
  uint64_t cursor = 16 + meta_len;
  for (size_t i = 0; i < info.tensors.size(); ++i) {
    const TensorRecord& r = info.tensors[i];
    EXPECT_EQ(r.name, m.store->entries()[i].name);
    EXPECT_EQ(r.offset, cursor);
    EXPECT_EQ(r.bytes, 4 * m.store->entries()[i].tensor.numel());
    // First value, little-endian.
    float v;
    std::memcpy(&v, bytes.data() + r.offset, 4);
    EXPECT_EQ(v, m.store->entries()[i].tensor.data<float>()[0]) << r.name;
    cursor += r.bytes;
  }
  EXPECT_EQ(cursor, bytes.size());
  const ParamCounts counts = count_params(info.config.backbone, true, info.config.head_channels);
  int64_t listed = 0;
  for (const TensorRecord& r : info.tensors)
    if (r.trainable && r.name.rfind(kCriticPrefix, 0) != 0) listed += r.bytes / 4;
  EXPECT_EQ(listed, counts.max);
}

class CorruptCheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const Config c = tiny_run_config(DType::kF32);
    save_checkpoint(model_from_config(c), c, dir_.path() / "good.ckpt");
    good_ = slurp(dir_.path() / "good.ckpt");
  }
  std::string load_error(const std::string& bytes) {
    spit(dir_.path() / "bad.ckpt", bytes);
    const std::string info = error_of([&] { read_checkpoint_info(dir_.path() / "bad.ckpt"); });
    const std::string load = error_of([&] { load_checkpoint(dir_.path() / "bad.ckpt"); });
    EXPECT_EQ(info, load);
    return load;
  }
  TempDir dir_{"ckpt_bad"};
  std::string good_;
};

TEST_F(CorruptCheckpointTest, WrongMagic) {
  std::string b = good_;
  b.replace(0, 4, "XXXX");
  const std::string err = load_error(b);
  EXPECT_NE(err.find("not a checkpoint"), std::string::npos) << err;
  EXPECT_NE(load_error("AV").find("not a checkpoint"), std::string::npos);
}

TEST_F(CorruptCheckpointTest, VersionAhead) {
  std::string b = good_;
  b[4] = 2;
  const std::string err = load_error(b);
  EXPECT_NE(err.find("version 2"), std::string::npos) << err;
}

TEST_F(CorruptCheckpointTest, TruncatedPayload) {
  const std::string err = load_error(good_.substr(0, good_.size() - 5));
  EXPECT_NE(err.find("offset"), std::string::npos) << err;
  EXPECT_NE(err.find("exceeds file size"), std::string::npos) << err;
}

TEST_F(CorruptCheckpointTest, MetadataLengthBeyondFile) {
  std::string b = good_;
  b[15] = 0x7f;
  const std::string err = load_error(b);
  EXPECT_NE(err.find("metadata length"), std::string::npos) << err;
}

TEST_F(CorruptCheckpointTest, TableValidatedBeforeReading) {
  // Point the last tensor past the end without changing the metadata size.
  const CheckpointInfo info = read_checkpoint_info(dir_.path() / "good.ckpt");
  const TensorRecord& last = info.tensors.back();
  const std::string from = "\"offset\":" + std::to_string(last.offset);
  std::string to = "\"offset\":" + std::to_string(info.file_size + 1);
  ASSERT_EQ(to.size(), from.size());
  std::string b = good_;
  b.replace(b.find(from), from.size(), to);
  const std::string err = load_error(b);
  EXPECT_NE(err.find(last.name), std::string::npos) << err;
  EXPECT_NE(err.find("exceeds file size"), std::string::npos) << err;
}

TEST_F(CorruptCheckpointTest, OverlappingOffsets) {
  const CheckpointInfo info = read_checkpoint_info(dir_.path() / "good.ckpt");
  const std::string from = "\"offset\":" + std::to_string(info.tensors[1].offset);
  const std::string to = "\"offset\":" + std::to_string(info.tensors[0].offset);
  ASSERT_EQ(to.size(), from.size());
  std::string b = good_;
  b.replace(b.find(from), from.size(), to);
  EXPECT_NE(load_error(b).find("overlaps"), std::string::npos);
}

TEST_F(CorruptCheckpointTest, EveryParameterNamedOnce) {
  const CheckpointInfo info = read_checkpoint_info(dir_.path() / "good.ckpt");
  const std::string second = "\"name\":\"" + info.tensors[1].name + "\"";
  // Same length names let the file layout stay valid.
  std::string renamed = second;
  renamed.replace(renamed.size() - 2, 1, "#");
  std::string b = good_;
  b.replace(b.find(second), second.size(), renamed);
  spit(dir_.path() / "renamed.ckpt", b);
  EXPECT_NE(error_of([&] { load_checkpoint(dir_.path() / "renamed.ckpt"); }).find("unexpected tensor"),
            std::string::npos);
  b = good_;
  const std::string pos_x = "\"name\":\"backbone.pos_x\"";
  b.replace(b.find(pos_x), pos_x.size(), "\"name\":\"backbone.pos_z\"");
  spit(dir_.path() / "twice.ckpt", b);
  const std::string err = error_of([&] { load_checkpoint(dir_.path() / "twice.ckpt"); });
  EXPECT_NE(err.find("listed twice"), std::string::npos) << err;
}

TEST(CheckpointTest, MissingFileNamed) {
  EXPECT_NE(error_of([] { load_checkpoint("/nonexistent/m.ckpt"); }).find("/nonexistent/m.ckpt"),
            std::string::npos);
}

}  // namespace
}  // namespace avtrack
