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

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "avtrack/rng.h"

namespace avtrack {

std::array<double, 3> channel_means(const Image& img) {
  std::array<double, 3> m{0.0, 0.0, 0.0};
  const int64_t n = img.width * img.height;
  for (int64_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) m[c] += img.rgb[i * 3 + c];
  for (double& v : m) v /= 255.0 * static_cast<double>(std::max<int64_t>(n, 1));
  return m;
}

Tensor crop_patch(const Image& img, double cx, double cy, double side, int64_t out, DType dtype) {
  if (!(side > 0.0) || out < 1) throw Error("crop_patch: crop side and size must be positive");
  const std::array<double, 3> fill = channel_means(img);
  const int64_t W = img.width, H = img.height;
  std::vector<double> v(3 * out * out);
  const double step = side / static_cast<double>(out);
  const double x0 = cx - 0.5 * side, y0 = cy - 0.5 * side;
  auto tap = [&](int64_t x, int64_t y, int c) {
    if (x < 0 || y < 0 || x >= W || y >= H) return fill[c];
    return img.rgb[(y * W + x) * 3 + c] / 255.0;
  };
  for (int64_t i = 0; i < out; ++i) {
    const double sy = y0 + (static_cast<double>(i) + 0.5) * step - 0.5;
    const double fy = std::floor(sy);
    const double wy = sy - fy;
    const int64_t iy = static_cast<int64_t>(fy);
    for (int64_t j = 0; j < out; ++j) {
      const double sx = x0 + (static_cast<double>(j) + 0.5) * step - 0.5;
      const double fx = std::floor(sx);
      const double wx = sx - fx;
      const int64_t ix = static_cast<int64_t>(fx);
      for (int c = 0; c < 3; ++c) {
        const double top = (1 - wx) * tap(ix, iy, c) + wx * tap(ix + 1, iy, c);
        const double bot = (1 - wx) * tap(ix, iy + 1, c) + wx * tap(ix + 1, iy + 1, c);
        v[(c * out + i) * out + j] = (1 - wy) * top + wy * bot;
      }
    }
  }
  return Tensor::from_vector({1, 3, out, out}, v, dtype);
}

void GenConfig::validate() const {
  auto finite = [](double x) { return std::isfinite(x); };
  if (length < 2) throw Error("gen_sequence: length must be at least 2");
  if (width < 1 || height < 1) throw Error("gen_sequence: frame dims must be positive");
  for (double x : {target_w, target_h, motion, rotation, scale, shear, texture_scale,
                   occluder_prob}) {
    if (!finite(x)) throw Error("gen_sequence: non-finite range");
  }
  if (!(target_w > 0.0) || !(target_h > 0.0)) throw Error("gen_sequence: target size must be positive");
  if (motion < 0 || rotation < 0 || scale < 0 || scale >= 1 || shear < 0 || occluder_prob < 0 ||
      occluder_prob > 1 || !(texture_scale > 0)) {
    throw Error("gen_sequence: ranges must be non-negative (scale < 1, occluder_prob <= 1)");
  }
  const double reach = std::hypot(target_w, target_h) * (1.0 + scale) * (1.0 + shear);
  if (reach >= static_cast<double>(std::min(width, height))) {
    throw Error("gen_sequence: target larger than frame");
  }
}

namespace {

// HSV with h in [0, 1) to RGB in [0, 1].
std::array<double, 3> hsv(double h, double s, double v) {
  const double k = h * 6.0;
  const int sector = static_cast<int>(k) % 6;
  const double f = k - std::floor(k);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

uint8_t to_byte(double x) {
  return static_cast<uint8_t>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0));
}

// Smoothed bounded walk: stays within [-range, range].
double walk(double prev, double range, Rng& rng) {
  return 0.8 * prev + 0.2 * rng.uniform(-range, range);
}

}  // namespace

SequenceDataset gen_sequence(const GenConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 0x5EED);
  const int64_t W = cfg.width, H = cfg.height;

  // Muted value-noise background on a coarse lattice.
  const int64_t gw = static_cast<int64_t>(std::ceil(W / cfg.texture_scale)) + 2;
  const int64_t gh = static_cast<int64_t>(std::ceil(H / cfg.texture_scale)) + 2;
  std::vector<std::array<double, 3>> lattice(gw * gh);
  const double base = rng.uniform(0.3, 0.6);
  for (auto& c : lattice) {
    const double lum = base + rng.uniform(-0.15, 0.15);
    for (double& ch : c) ch = lum + rng.uniform(-0.04, 0.04);
  }
  Image background(W, H);
  for (int64_t y = 0; y < H; ++y) {
    const double gy = y / cfg.texture_scale;
    const int64_t iy = static_cast<int64_t>(gy);
    const double fy = gy - static_cast<double>(iy);
    for (int64_t x = 0; x < W; ++x) {
      const double gx = x / cfg.texture_scale;
      const int64_t ix = static_cast<int64_t>(gx);
      const double fx = gx - static_cast<double>(ix);
      for (int c = 0; c < 3; ++c) {
        const double top = (1 - fx) * lattice[iy * gw + ix][c] + fx * lattice[iy * gw + ix + 1][c];
        const double bot =
            (1 - fx) * lattice[(iy + 1) * gw + ix][c] + fx * lattice[(iy + 1) * gw + ix + 1][c];
        background.pixel(x, y)[c] = to_byte((1 - fy) * top + fy * bot);
      }
    }
  }

  // Saturated target with a darker stripe so orientation and scale are visible.
  const std::array<double, 3> color = hsv(rng.uniform(), 0.85, 0.95);
  const std::array<double, 3> stripe = {color[0] * 0.35, color[1] * 0.35, color[2] * 0.35};

  const double margin = 0.5 * std::hypot(cfg.target_w, cfg.target_h) * (1.0 + cfg.scale) *
                        (1.0 + cfg.shear) + 1.0;
  double px = rng.uniform(margin, W - margin), py = rng.uniform(margin, H - margin);
  double vx = 0.0, vy = 0.0, rot = 0.0, scl = 0.0, shr = 0.0;

  SequenceDataset ds;
  ds.name = cfg.name;
  for (int64_t t = 0; t < cfg.length; ++t) {
    if (t > 0) {
      vx = 0.9 * vx + rng.uniform(-cfg.motion, cfg.motion);
      vy = 0.9 * vy + rng.uniform(-cfg.motion, cfg.motion);
      px += vx;
      py += vy;
      if (px < margin || px > W - margin) {
        vx = -vx;
        px = std::clamp(px, margin, W - margin);
      }
      if (py < margin || py > H - margin) {
        vy = -vy;
        py = std::clamp(py, margin, H - margin);
      }
    }
    rot = walk(rot, cfg.rotation, rng);
    scl = walk(scl, cfg.scale, rng);
    shr = walk(shr, cfg.shear, rng);
    const bool occlude = rng.uniform() < cfg.occluder_prob;
    const double occ_dx = rng.uniform(-0.5, 0.5), occ_dy = rng.uniform(-0.5, 0.5);

    // Forward map A = R(rot) * Shear(shr) * (1 + scl); inverse per pixel.
    const double s = 1.0 + scl, cr = std::cos(rot), sr = std::sin(rot);
    const double a00 = s * cr, a01 = s * (cr * shr - sr), a10 = s * sr, a11 = s * (sr * shr + cr);
    const double det = a00 * a11 - a01 * a10;
    const double hw = 0.5 * cfg.target_w, hh = 0.5 * cfg.target_h;

    // Axis-aligned extents of the transformed shape.
    double ex, ey;
    if (cfg.shape == TargetShape::kRectangle) {
      ex = std::abs(a00) * hw + std::abs(a01) * hh;
      ey = std::abs(a10) * hw + std::abs(a11) * hh;
    } else {
      ex = std::hypot(a00 * hw, a01 * hh);
      ey = std::hypot(a10 * hw, a11 * hh);
    }

    Image frame = background;
    const int64_t x_lo = std::max<int64_t>(0, static_cast<int64_t>(std::floor(px - ex)));
    const int64_t x_hi = std::min<int64_t>(W - 1, static_cast<int64_t>(std::ceil(px + ex)));
    const int64_t y_lo = std::max<int64_t>(0, static_cast<int64_t>(std::floor(py - ey)));
    const int64_t y_hi = std::min<int64_t>(H - 1, static_cast<int64_t>(std::ceil(py + ey)));
    for (int64_t y = y_lo; y <= y_hi; ++y) {
      for (int64_t x = x_lo; x <= x_hi; ++x) {
        const double dx = x + 0.5 - px, dy = y + 0.5 - py;
        const double lx = (a11 * dx - a01 * dy) / det;
        const double ly = (-a10 * dx + a00 * dy) / det;
        const bool inside = cfg.shape == TargetShape::kRectangle
                                ? std::abs(lx) <= hw && std::abs(ly) <= hh
                                : (lx * lx) / (hw * hw) + (ly * ly) / (hh * hh) <= 1.0;
        if (!inside) continue;
        const bool in_stripe = std::abs(ly) < 0.2 * hh || (lx > 0.4 * hw && lx < 0.7 * hw);
        const auto& c = in_stripe ? stripe : color;
        for (int k = 0; k < 3; ++k) frame.pixel(x, y)[k] = to_byte(c[k]);
      }
    }
    if (occlude) {
      const double ocx = px + occ_dx * ex * 2.0, ocy = py + occ_dy * ey * 2.0;
      const int64_t ox0 = std::max<int64_t>(0, static_cast<int64_t>(ocx - 0.4 * ex));
      const int64_t ox1 = std::min<int64_t>(W - 1, static_cast<int64_t>(ocx + 0.4 * ex));
      const int64_t oy0 = std::max<int64_t>(0, static_cast<int64_t>(ocy - 0.4 * ey));
      const int64_t oy1 = std::min<int64_t>(H - 1, static_cast<int64_t>(ocy + 0.4 * ey));
      for (int64_t y = oy0; y <= oy1; ++y)
        for (int64_t x = ox0; x <= ox1; ++x)
          for (int k = 0; k < 3; ++k) frame.pixel(x, y)[k] = to_byte(base);
    }

    const double bx0 = std::clamp(std::floor(px - ex), 0.0, static_cast<double>(W - 1));
    const double by0 = std::clamp(std::floor(py - ey), 0.0, static_cast<double>(H - 1));
    const double bx1 = std::clamp(std::ceil(px + ex), bx0 + 1.0, static_cast<double>(W));
    const double by1 = std::clamp(std::ceil(py + ey), by0 + 1.0, static_cast<double>(H));
    ds.frames.push_back(std::move(frame));
    ds.boxes.push_back(Rect{bx0, by0, bx1 - bx0, by1 - by0});
  }
  return ds;
}

void write_ppm(const Image& img, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.rgb.data()),
          static_cast<std::streamsize>(img.rgb.size()));
  if (!f) throw Error("failed writing " + path.string());
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  int line = 1;
  auto fail = [&](const std::string& msg) -> Error {
    return Error(path.string() + ":" + std::to_string(line) + ": " + msg);
  };
  // Header tokens separated by whitespace, with '#' comments.
  auto token = [&]() {
    std::string tok;
    int c;
    while ((c = f.get()) != EOF) {
      if (c == '#') {
        while ((c = f.get()) != EOF && c != '\n') {
        }
        ++line;
        continue;
      }
      if (std::isspace(c)) {
        if (c == '\n') ++line;
        if (!tok.empty()) return tok;
        continue;
      }
      tok.push_back(static_cast<char>(c));
    }
    return tok;
  };
  if (token() != "P6") throw fail("not a binary PPM (expected magic P6)");
  auto number = [&](const char* what) {
    const std::string tok = token();
    if (tok.empty() || !std::all_of(tok.begin(), tok.end(), ::isdigit) || tok.size() > 9) {
      throw fail(std::string("malformed ") + what + " '" + tok + "'");
    }
    return std::stoll(tok);
  };
  const int64_t w = number("width"), h = number("height"), maxval = number("maxval");
  if (w < 1 || h < 1) throw fail("non-positive image size");
  if (maxval != 255) throw fail("unsupported maxval " + std::to_string(maxval));
  Image img(w, h);
  f.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (f.gcount() != static_cast<std::streamsize>(img.rgb.size())) {
    throw Error(path.string() + ": truncated pixel data");
  }
  return img;
}

void write_sequence(const SequenceDataset& ds, const std::filesystem::path& dir) {
  if (ds.frames.size() != ds.boxes.size()) throw Error("write_sequence: frame/box count mismatch");
  std::filesystem::create_directories(dir);
  for (size_t i = 0; i < ds.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06zu.ppm", i);
    write_ppm(ds.frames[i], dir / name);
  }
  std::ofstream gt(dir / "groundtruth_rect.txt");
  if (!gt) throw Error("cannot write " + (dir / "groundtruth_rect.txt").string());
  for (const Rect& r : ds.boxes) {
    gt << std::llround(r.x) << ',' << std::llround(r.y) << ',' << std::llround(r.w) << ','
       << std::llround(r.h) << '\n';
  }
}

SequenceDataset read_sequence(const std::filesystem::path& dir) {
  const std::filesystem::path gt_path = dir / "groundtruth_rect.txt";
  std::ifstream gt(gt_path);
  if (!gt) throw Error("cannot open " + gt_path.string());
  SequenceDataset ds;
  ds.name = dir.filename().string();
  if (ds.name.empty()) ds.name = dir.parent_path().filename().string();
  std::string text;
  int line = 0;
  while (std::getline(gt, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(text);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    auto bad = [&](const std::string& msg) {
      return Error(gt_path.string() + ":" + std::to_string(line) + ": " + msg);
    };
    if (fields.size() != 4) {
      throw bad("expected 4 comma-separated integers, got " + std::to_string(fields.size()) +
                " fields");
    }
    std::array<long long, 4> v{};
    for (int k = 0; k < 4; ++k) {
      size_t used = 0;
      try {
        v[k] = std::stoll(fields[k], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != fields[k].size()) throw bad("malformed integer '" + fields[k] + "'");
    }
    if (v[2] <= 0 || v[3] <= 0) throw bad("box size must be positive");
    ds.boxes.push_back(Rect{static_cast<double>(v[0]), static_cast<double>(v[1]),
                            static_cast<double>(v[2]), static_cast<double>(v[3])});
  }
  for (size_t i = 0;; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06zu.ppm", i);
    if (!std::filesystem::exists(dir / name)) break;
    ds.frames.push_back(read_ppm(dir / name));
  }
  if (ds.frames.size() != ds.boxes.size()) {
    throw Error(gt_path.string() + ": " + std::to_string(ds.boxes.size()) +
                " box lines for " + std::to_string(ds.frames.size()) + " frames");
  }
  return ds;
}

}  // namespace avtrack
