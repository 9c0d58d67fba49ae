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

#include "avtrack/config.h"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace avtrack {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct BadValue {
  std::string what;
};

int64_t to_int(const std::string& v) {
  int64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw BadValue{"expected an integer"};
  return out;
}

uint64_t to_uint(const std::string& v) {
  uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || v[0] == '-' || ec != std::errc() || p != v.data() + v.size())
    throw BadValue{"expected a non-negative integer"};
  return out;
}

double to_double(const std::string& v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw BadValue{"expected a number"};
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw BadValue{"expected true or false"};
}

std::vector<std::string> to_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, r.ptr);
}
std::string fmt(int64_t x) { return std::to_string(x); }
std::string fmt(uint64_t x) { return std::to_string(x); }
std::string fmt(bool x) { return x ? "true" : "false"; }
std::string fmt(const std::vector<std::string>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

double positive(double x) {
  if (!(x > 0.0)) throw BadValue{"must be positive"};
  return x;
}
double non_negative(double x) {
  if (!(x >= 0.0)) throw BadValue{"must be non-negative"};
  return x;
}
int64_t positive(int64_t x) {
  if (x < 1) throw BadValue{"must be positive"};
  return x;
}

struct Key {
  std::string name;
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&)> set;
};

#define AVTRACK_KEY(name, expr, parse) \
  Key { name, [](const Config& c) { return fmt(c.expr); }, \
        [](Config& c, const std::string& v) { c.expr = parse(v); } }

const std::vector<Key>& key_table() {
  static const std::vector<Key> keys = {
      {"profile", [](const Config& c) { return c.profile; },
       [](Config& c, const std::string& v) {
         if (v != "desk" && v != "paper") throw BadValue{"expected desk or paper"};
         c.profile = v;
       }},
      AVTRACK_KEY("blocks", backbone.N, [](auto& v) { return positive(to_int(v)); }),
      AVTRACK_KEY("fixed_blocks", backbone.n_f, [](auto& v) { return positive(to_int(v)); }),
      AVTRACK_KEY("embed_dim", backbone.d, [](auto& v) { return positive(to_int(v)); }),
      AVTRACK_KEY("heads", backbone.heads, [](auto& v) { return positive(to_int(v)); }),
      AVTRACK_KEY("mlp_ratio", backbone.mlp_ratio, [](auto& v) { return positive(to_double(v)); }),
      AVTRACK_KEY("patch", backbone.P, [](auto& v) { return positive(to_int(v)); }),
      AVTRACK_KEY("template_h", backbone.H_z, [](auto& v) { return positive(to_int(v)); }),
      AVTRACK_KEY("template_w", backbone.W_z, [](auto& v) { return positive(to_int(v)); }),
      AVTRACK_KEY("search_h", backbone.H_x, [](auto& v) { return positive(to_int(v)); }),
      AVTRACK_KEY("search_w", backbone.W_x, [](auto& v) { return positive(to_int(v)); }),
      AVTRACK_KEY("beta", backbone.beta,
                  [](auto& v) {
                    const double b = to_double(v);
                    if (!(b > 0.5 && b < 1.0)) throw BadValue{"beta must lie in (0.5, 1)"};
                    return b;
                  }),
      AVTRACK_KEY("zeta", backbone.zeta,
                  [](auto& v) {
                    const double z = to_double(v);
                    if (!(z >= 0.0 && z <= 1.0)) throw BadValue{"zeta must lie in [0, 1]"};
                    return z;
                  }),
      AVTRACK_KEY("head_channels", head_channels, [](auto& v) { return to_int(v); }),
      AVTRACK_KEY("critic_hidden", critic_hidden, [](auto& v) { return positive(to_int(v)); }),
      {"dtype", [](const Config& c) { return std::string(dtype_name(c.dtype)); },
       [](Config& c, const std::string& v) {
         try {
           c.dtype = parse_dtype(v);
         } catch (const Error&) {
           throw BadValue{"expected f32 or f64"};
         }
       }},
      AVTRACK_KEY("gamma", weights.gamma, [](auto& v) { return non_negative(to_double(v)); }),
      AVTRACK_KEY("kappa", weights.kappa, [](auto& v) { return non_negative(to_double(v)); }),
      AVTRACK_KEY("eta", weights.eta, [](auto& v) { return non_negative(to_double(v)); }),
      AVTRACK_KEY("lambda_iou", weights.lambda_iou,
                  [](auto& v) { return non_negative(to_double(v)); }),
      AVTRACK_KEY("lambda_l1", weights.lambda_l1, [](auto& v) { return non_negative(to_double(v)); }),
      AVTRACK_KEY("tau", tau, [](auto& v) { return positive(to_double(v)); }),
      AVTRACK_KEY("lr", adam.lr, [](auto& v) { return positive(to_double(v)); }),
      AVTRACK_KEY("weight_decay", adam.weight_decay,
                  [](auto& v) { return non_negative(to_double(v)); }),
      AVTRACK_KEY("lr_decay_at", adam.decay_at, [](auto& v) { return non_negative(to_double(v)); }),
      AVTRACK_KEY("lr_decay_factor", adam.decay_factor,
                  [](auto& v) { return positive(to_double(v)); }),
      AVTRACK_KEY("batch", batch, [](auto& v) { return positive(to_int(v)); }),
      AVTRACK_KEY("steps", steps,
                  [](auto& v) {
                    const int64_t s = to_int(v);
                    if (s < 0) throw BadValue{"must be non-negative"};
                    return s;
                  }),
      AVTRACK_KEY("seed", seed, to_uint),
      AVTRACK_KEY("max_gap", sampler.max_gap,
                  [](auto& v) {
                    const int64_t g = to_int(v);
                    if (g < 0) throw BadValue{"must be non-negative"};
                    return g;
                  }),
      AVTRACK_KEY("center_jitter", sampler.center_jitter,
                  [](auto& v) { return non_negative(to_double(v)); }),
      AVTRACK_KEY("scale_jitter", sampler.scale_jitter,
                  [](auto& v) { return non_negative(to_double(v)); }),
      AVTRACK_KEY("search_factor", sampler.search_factor,
                  [](auto& v) { return positive(to_double(v)); }),
      AVTRACK_KEY("template_factor", sampler.template_factor,
                  [](auto& v) { return positive(to_double(v)); }),
      {"md_mode", [](const Config& c) { return std::string(md_mode_name(c.md_mode)); },
       [](Config& c, const std::string& v) {
         try {
           c.md_mode = parse_md_mode(v);
         } catch (const Error&) {
           throw BadValue{"expected jsd or mse"};
         }
       }},
      AVTRACK_KEY("student_blocks", student_blocks,
                  [](auto& v) {
                    const int64_t s = to_int(v);
                    if (s < 0) throw BadValue{"must be non-negative"};
                    return s;
                  }),
      AVTRACK_KEY("distill_spar", distill_spar, to_bool),
      AVTRACK_KEY("distill_vir", distill_vir, to_bool),
      {"force_gates", [](const Config& c) { return c.force_gates; },
       [](Config& c, const std::string& v) {
         try {
           GateOverride::parse(v);
         } catch (const Error&) {
           throw BadValue{"expected none, all-on or all-off"};
         }
         c.force_gates = v;
       }},
      AVTRACK_KEY("train_data", train_data, to_list),
      AVTRACK_KEY("eval_data", eval_data, to_list),
      AVTRACK_KEY("teachers", teachers, to_list),
  };
  return keys;
}

#undef AVTRACK_KEY

const Key* find_key(const std::string& name) {
  for (const Key& k : key_table())
    if (k.name == name) return &k;
  return nullptr;
}

struct Line {
  std::string key, value;
  int line = 0;
};

std::vector<Line> split_lines(const std::string& text, const std::string& source) {
  std::vector<Line> out;
  std::stringstream ss(text);
  std::string raw;
  int n = 0;
  while (std::getline(ss, raw)) {
    ++n;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw Error(source + ":" + std::to_string(n) + ": expected 'key = value'");
    out.push_back({trim(body.substr(0, eq)), trim(body.substr(eq + 1)), n});
  }
  return out;
}

void apply(Config& cfg, const std::string& key, const std::string& value,
           const std::string& where) {
  const Key* k = find_key(key);
  if (k == nullptr) throw Error(where + "unknown key '" + key + "'");
  try {
    k->set(cfg, value);
  } catch (const BadValue& e) {
    throw Error(where + "invalid value '" + value + "' for key '" + key + "': " + e.what);
  }
}

Config build(const std::vector<Line>& lines, const std::string& source,
             const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::string profile = "desk";
  for (const Line& l : lines)
    if (l.key == "profile") profile = l.value;
  for (const auto& [k, v] : overrides)
    if (k == "profile") profile = v;
  if (profile != "desk" && profile != "paper")
    throw Error("invalid value '" + profile + "' for key 'profile': expected desk or paper");
  Config cfg = Config::for_profile(profile);
  for (const Line& l : lines) {
    if (l.key == "profile") continue;
    apply(cfg, l.key, l.value, source + ":" + std::to_string(l.line) + ": ");
  }
  for (const auto& [k, v] : overrides) {
    if (k == "profile") continue;
    apply(cfg, k, v, "--" + k + ": ");
  }
  cfg.validate();
  return cfg;
}

}  // namespace

Config Config::for_profile(const std::string& profile) {
  Config c;
  if (profile == "desk") {
    c.adam.lr = 2e-3;
    c.batch = 8;
  } else if (profile == "paper") {
    c.profile = "paper";
    c.backbone = BackboneConfig::paper();
    c.adam.lr = 4e-5;
    c.batch = 32;
  } else {
    throw Error("unknown profile '" + profile + "' (expected desk or paper)");
  }
  return c;
}

void Config::validate() const {
  try {
    backbone.validate();
  } catch (const Error& e) {
    throw Error(std::string("config: ") + e.what() +
                " (keys blocks, fixed_blocks, embed_dim, heads, patch, template_*, search_*)");
  }
  const int64_t c = head_channels > 0 ? head_channels : backbone.d;
  if (c % 8 != 0) throw Error("config: head_channels must be a multiple of 8");
  if (student_blocks == 1 || student_blocks > backbone.N)
    throw Error("config: student_blocks must be 0 or lie in [2, blocks]");
}

std::vector<std::pair<std::string, std::string>> Config::to_pairs() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Key& k : key_table()) out.emplace_back(k.name, k.get(*this));
  return out;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const Key& k : key_table()) n.push_back(k.name);
    return n;
  }();
  return names;
}

void set_config_value(Config& cfg, const std::string& key, const std::string& value) {
  apply(cfg, key, value, "");
}

Config parse_config_text(const std::string& text, const std::string& source,
                         const std::vector<std::pair<std::string, std::string>>& overrides) {
  return build(split_lines(text, source), source, overrides);
}

Config parse_config(const std::filesystem::path& path,
                    const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string(), overrides);
}

Config config_from_overrides(const std::vector<std::pair<std::string, std::string>>& overrides) {
  return build({}, "", overrides);
}

std::string format_config(const Config& cfg) {
  std::string out;
  for (const auto& [k, v] : cfg.to_pairs()) out += k + " = " + v + "\n";
  return out;
}

void save_config(const Config& cfg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write config file '" + path.string() + "'");
  out << format_config(cfg);
  if (!out) throw Error("failed writing config file '" + path.string() + "'");
}

}  // namespace avtrack
