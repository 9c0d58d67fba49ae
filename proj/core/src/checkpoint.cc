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

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace avtrack {
namespace {

using nlohmann::json;

constexpr uint64_t kHeaderBytes = 4 + 4 + 8;

template <typename T>
void put_le(std::string& out, T v) {
  for (size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const unsigned char* p) {
  T v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

// Raw little-endian bytes of a tensor's values.
std::string tensor_bytes(const Tensor& t) {
  return dispatch(t.dtype(), [&]<typename T>() {
    const auto d = t.data<T>();
    std::string out(d.size() * sizeof(T), '\0');
    std::memcpy(out.data(), d.data(), out.size());
    if constexpr (std::endian::native == std::endian::big) {
      for (size_t i = 0; i < out.size(); i += sizeof(T))
        std::reverse(out.begin() + i, out.begin() + i + sizeof(T));
    }
    return out;
  });
}

void fill_tensor(Tensor& t, const char* bytes) {
  dispatch(t.dtype(), [&]<typename T>() {
    auto d = t.mutable_data<T>();
    std::memcpy(d.data(), bytes, d.size() * sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      auto* raw = reinterpret_cast<char*>(d.data());
      for (size_t i = 0; i < d.size() * sizeof(T); i += sizeof(T))
        std::reverse(raw + i, raw + i + sizeof(T));
    }
  });
}

uint64_t element_size(DType dt) { return dt == DType::kF32 ? 4 : 8; }

uint64_t element_count(const Shape& s) {
  uint64_t n = 1;
  for (int64_t v : s) {
    if (v < 0) throw Error("checkpoint: negative dimension in tensor table");
    n *= static_cast<uint64_t>(v);
  }
  return n;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

CheckpointInfo parse_info(const std::string& data, const std::string& path) {
  const auto fail = [&](const std::string& msg) -> Error {
    return Error("checkpoint '" + path + "': " + msg);
  };
  if (data.size() < 4 || std::memcmp(data.data(), kCheckpointMagic, 4) != 0)
    throw fail("not a checkpoint (bad magic)");
  if (data.size() < kHeaderBytes) throw fail("truncated header");
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  CheckpointInfo info;
  info.version = get_le<uint32_t>(p + 4);
  if (info.version == 0 || info.version > kCheckpointVersion)
    throw fail("unsupported format version " + std::to_string(info.version) +
               " (reader supports up to " + std::to_string(kCheckpointVersion) + ")");
  const uint64_t meta_len = get_le<uint64_t>(p + 8);
  info.file_size = data.size();
  if (meta_len > info.file_size - kHeaderBytes)
    throw fail("metadata length " + std::to_string(meta_len) + " exceeds file size");
  info.metadata = data.substr(kHeaderBytes, meta_len);

  json meta;
  try {
    meta = json::parse(info.metadata);
  } catch (const json::exception& e) {
    throw fail(std::string("malformed metadata: ") + e.what());
  }
  try {
    Config cfg = Config::for_profile(meta.at("config").at("profile").get<std::string>());
    for (const auto& [k, v] : meta.at("config").items()) {
      if (k != "profile") set_config_value(cfg, k, v.get<std::string>());
    }
    cfg.validate();
    info.config = cfg;

    uint64_t cursor = kHeaderBytes + meta_len;
    for (const auto& e : meta.at("tensors")) {
      TensorRecord r;
      r.name = e.at("name").get<std::string>();
      r.dtype = parse_dtype(e.at("dtype").get<std::string>());
      r.shape = e.at("shape").get<Shape>();
      r.offset = e.at("offset").get<uint64_t>();
      r.bytes = e.at("bytes").get<uint64_t>();
      r.trainable = e.at("trainable").get<bool>();
      if (r.bytes != element_count(r.shape) * element_size(r.dtype))
        throw fail("tensor '" + r.name + "' byte count does not match its shape");
      if (r.offset < cursor)
        throw fail("tensor '" + r.name + "' offset " + std::to_string(r.offset) +
                   " overlaps preceding data");
      if (r.offset > info.file_size || r.bytes > info.file_size - r.offset)
        throw fail("tensor '" + r.name + "' offset " + std::to_string(r.offset) + " + " +
                   std::to_string(r.bytes) + " bytes exceeds file size " +
                   std::to_string(info.file_size));
      cursor = r.offset + std::max<uint64_t>(r.bytes, 1);
      info.tensors.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw fail(std::string("malformed metadata: ") + e.what());
  }
  return info;
}

}  // namespace

TrackerModel model_from_config(const Config& cfg) {
  return TrackerModel::create(cfg.backbone, cfg.seed, cfg.dtype, cfg.head_channels,
                              cfg.critic_hidden);
}

void save_checkpoint(const TrackerModel& model, const Config& cfg,
                     const std::filesystem::path& path) {
  Config c = cfg;
  c.backbone = model.cfg;
  c.head_channels = model.head_channels;
  c.critic_hidden = model.critic_hidden;
  c.dtype = model.dtype();

  json config = json::object();
  for (const auto& [k, v] : c.to_pairs()) config[k] = v;

  // Offsets depend on the metadata length, which depends on the offsets'
  // digits; iterate until the layout is stable.
  std::vector<std::string> payloads;
  for (const auto& e : model.store->entries()) payloads.push_back(tensor_bytes(e.tensor));
  std::string meta_text;
  uint64_t meta_len = 0;
  for (int iter = 0; iter < 8; ++iter) {
    json tensors = json::array();
    uint64_t offset = kHeaderBytes + meta_len;
    const auto& entries = model.store->entries();
    for (size_t i = 0; i < entries.size(); ++i) {
      tensors.push_back({{"name", entries[i].name},
                         {"dtype", dtype_name(entries[i].tensor.dtype())},
                         {"shape", entries[i].tensor.shape()},
                         {"offset", offset},
                         {"bytes", payloads[i].size()},
                         {"trainable", entries[i].trainable}});
      offset += payloads[i].size();
    }
    json meta = {{"config", config}, {"tensors", tensors}};
    meta_text = meta.dump();
    if (meta_text.size() == meta_len) break;
    meta_len = meta_text.size();
  }
  if (meta_text.size() != meta_len) throw Error("save_checkpoint: metadata layout did not settle");

  std::string out(kCheckpointMagic, 4);
  put_le<uint32_t>(out, kCheckpointVersion);
  put_le<uint64_t>(out, meta_len);
  out += meta_text;
  for (const auto& p : payloads) out += p;

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write checkpoint '" + path.string() + "'");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error("failed writing checkpoint '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  return parse_info(read_file(path), path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  CheckpointInfo info = parse_info(data, path.string());
  LoadedCheckpoint out{info.config, model_from_config(info.config)};

  std::set<std::string> seen;
  for (const TensorRecord& r : info.tensors) {
    if (!seen.insert(r.name).second)
      throw Error("checkpoint '" + path.string() + "': tensor '" + r.name + "' listed twice");
    if (!out.model.store->contains(r.name))
      throw Error("checkpoint '" + path.string() + "': unexpected tensor '" + r.name + "'");
    Tensor t = out.model.store->get(r.name);
    if (t.shape() != r.shape || t.dtype() != r.dtype)
      throw Error("checkpoint '" + path.string() + "': tensor '" + r.name +
                  "' shape or dtype differs from the model config");
    fill_tensor(t, data.data() + r.offset);
  }
  for (const auto& e : out.model.store->entries()) {
    if (!seen.count(e.name))
      throw Error("checkpoint '" + path.string() + "': missing tensor '" + e.name + "'");
  }
  return out;
}

}  // namespace avtrack
