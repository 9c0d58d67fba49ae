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

#include "cli.h"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "avtrack/checkpoint.h"
#include "avtrack/config.h"
#include "avtrack/distill.h"
#include "avtrack/eval.h"
#include "avtrack/train.h"

namespace avtrack::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

// Writes to --out when given, stdout otherwise.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
      if (!*file_) throw Error("cannot write '" + path + "'");
      stream_ = file_.get();
    }
  }
  std::ostream& operator*() { return *stream_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
};

// Flags that map onto config keys.
struct ConfigFlags {
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<int64_t> steps;
  std::optional<int64_t> student_blocks;
  std::string profile, md_mode, force_gates, teachers;
  std::vector<std::string> set;

  Config resolve() const {
    std::vector<std::pair<std::string, std::string>> ov;
    if (!profile.empty()) ov.emplace_back("profile", profile);
    for (const std::string& kv : set) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
      ov.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) ov.emplace_back("seed", std::to_string(*seed));
    if (steps) ov.emplace_back("steps", std::to_string(*steps));
    if (student_blocks) ov.emplace_back("student_blocks", std::to_string(*student_blocks));
    if (!md_mode.empty()) ov.emplace_back("md_mode", md_mode);
    if (!force_gates.empty()) ov.emplace_back("force_gates", force_gates);
    if (!teachers.empty()) ov.emplace_back("teachers", teachers);
    return config.empty() ? config_from_overrides(ov) : parse_config(config, ov);
  }
};

void add_config(CLI::App* app, ConfigFlags& f) {
  app->add_option("--config", f.config, "key = value configuration file");
  app->add_option("--seed", f.seed, "random seed");
  app->add_option("--profile", f.profile, "base defaults")
      ->check(CLI::IsMember({"desk", "paper"}));
  app->add_option("--set", f.set, "extra config override, key=value (repeatable)");
}

void add_steps(CLI::App* app, ConfigFlags& f) {
  app->add_option("--steps", f.steps, "optimizer steps")->check(CLI::NonNegativeNumber);
}

void add_gates(CLI::App* app, ConfigFlags& f) {
  app->add_option("--force-gates", f.force_gates, "override adaptive gates")
      ->check(CLI::IsMember({"none", "all-on", "all-off"}));
}

GateOverride gates_of(const Config& cfg) { return GateOverride::parse(cfg.force_gates); }

std::string step_log_header() { return "step,total,pred,cls,iou,l1,spar,vir,md,mean_prob,lr"; }

std::string format_step_log(const StepLog& l) {
  char buf[320];
  std::snprintf(buf, sizeof(buf), "%lld,%.8g,%.8g,%.8g,%.8g,%.8g,%.8g,%.8g,%.8g,%.6f,%.6g",
                static_cast<long long>(l.step), l.total, l.pred, l.cls, l.iou, l.l1, l.spar,
                l.vir, l.md, l.mean_prob, l.lr);
  return buf;
}

// Step-log CSV, optional.
class StepLogWriter {
 public:
  explicit StepLogWriter(const std::string& path) {
    if (path.empty()) return;
    file_.open(path, std::ios::binary | std::ios::trunc);
    if (!file_) throw Error("cannot write '" + path + "'");
    file_ << step_log_header() << "\n";
  }
  void operator()(const StepLog& l) {
    if (file_.is_open()) file_ << format_step_log(l) << "\n";
  }

 private:
  std::ofstream file_;
};

SamplerOptions sampler_of(const Config& cfg) { return cfg.sampler; }

TrackerOptions tracker_options_of(const Config& cfg) {
  TrackerOptions t;
  t.search_factor = cfg.sampler.search_factor;
  t.template_factor = cfg.sampler.template_factor;
  t.gates = gates_of(cfg);
  return t;
}

// ---- gen-data --------------------------------------------------------------

struct GenDataArgs {
  uint64_t seed = 0;
  std::string out;
  int64_t count = 4, length = 40, width = 128, height = 128;
  double target = 16.0, motion = 1.5, occluders = 0.0;
  std::string shape = "rectangle";
};

int gen_data(const GenDataArgs& a, std::ostream& out) {
  std::vector<GenConfig> cfgs;
  for (int64_t i = 0; i < a.count; ++i) {
    GenConfig g;
    g.seed = a.seed + static_cast<uint64_t>(i);
    g.length = a.length;
    g.width = a.width;
    g.height = a.height;
    g.target_w = g.target_h = a.target;
    g.motion = a.motion;
    g.occluder_prob = a.occluders;
    g.shape = a.shape == "ellipse" ? TargetShape::kEllipse : TargetShape::kRectangle;
    char name[32];
    std::snprintf(name, sizeof(name), "seq_%03lld", static_cast<long long>(i));
    g.name = name;
    g.validate();
    cfgs.push_back(g);
  }
  fs::create_directories(a.out);
  std::atomic<size_t> next{0};
  std::vector<std::string> errors(cfgs.size());
  auto work = [&] {
    for (size_t i; (i = next.fetch_add(1)) < cfgs.size();) {
      try {
        write_sequence(gen_sequence(cfgs[i]), fs::path(a.out) / cfgs[i].name);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int workers = std::min<int>(worker_count(), static_cast<int>(cfgs.size()));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (const std::string& e : errors)
    if (!e.empty()) throw Error(e);
  out << "wrote " << cfgs.size() << " sequences to " << a.out << "\n";
  return 0;
}

// ---- train / distill -------------------------------------------------------

struct TrainArgs {
  ConfigFlags cfg;
  std::string out, data, log;
};

std::vector<std::string> data_paths(const std::string& flag, const std::vector<std::string>& cfg,
                                    const char* key) {
  std::vector<std::string> paths = flag.empty() ? cfg : split_commas(flag);
  if (paths.empty())
    throw Error(std::string("no data: pass --data or set '") + key + "' in the config");
  return paths;
}

int train(const TrainArgs& a, std::ostream& out) {
  Config cfg = a.cfg.resolve();
  cfg.train_data = data_paths(a.data, cfg.train_data, "train_data");
  const std::vector<SequenceDataset> seqs = load_sequences(cfg.train_data);
  TrackerModel model = model_from_config(cfg);

  TrainOptions opt;
  opt.steps = cfg.steps;
  opt.batch = cfg.batch;
  opt.seed = cfg.seed;
  opt.adam = cfg.adam;
  opt.objective.weights = cfg.weights;
  opt.objective.gates = gates_of(cfg);
  opt.sampler = sampler_of(cfg);
  StepLogWriter log(a.log);
  opt.on_step = [&](const StepLog& l) { log(l); };
  const std::vector<StepLog> logs = train_tracker(model, seqs, opt);
  save_checkpoint(model, cfg, a.out);
  out << "trained " << logs.size() << " steps on " << seqs.size() << " sequences";
  if (!logs.empty()) out << ", final loss " << fixed(logs.back().total);
  out << "; wrote " << a.out << "\n";
  return 0;
}

int distill(const TrainArgs& a, std::ostream& out) {
  Config cfg = a.cfg.resolve();
  if (cfg.teachers.empty())
    throw Error("no teachers: pass --teachers or set 'teachers' in the config");
  cfg.train_data = data_paths(a.data, cfg.train_data, "train_data");
  const std::vector<SequenceDataset> seqs = load_sequences(cfg.train_data);

  TeacherEnsemble ensemble;
  for (const std::string& path : cfg.teachers) {
    LoadedCheckpoint t = load_checkpoint(path);
    t.model.store->set_frozen(true);
    ensemble.teachers.push_back(t.model);
  }
  const TrackerModel& first = ensemble.teachers.front();
  const BackboneConfig student_cfg =
      build_student(first.cfg, cfg.student_blocks > 0 ? std::optional<int64_t>(cfg.student_blocks)
                                                      : std::nullopt);
  TrackerModel student = TrackerModel::create(student_cfg, cfg.seed, first.dtype(),
                                              first.head_channels, first.critic_hidden);

  DistillRunOptions opt;
  opt.steps = cfg.steps;
  opt.batch = cfg.batch;
  opt.seed = cfg.seed;
  opt.adam = cfg.adam;
  opt.distill = default_distill_options();
  opt.distill.objective.weights = cfg.weights;
  opt.distill.objective.use_spar = cfg.distill_spar;
  opt.distill.objective.use_vir = cfg.distill_vir;
  opt.distill.objective.gates = gates_of(cfg);
  opt.distill.mode = cfg.md_mode;
  opt.distill.tau = cfg.tau;
  opt.distill.threads = worker_count();
  opt.sampler = sampler_of(cfg);
  StepLogWriter log(a.log);
  opt.on_step = [&](const StepLog& l) { log(l); };
  const std::vector<StepLog> logs = distill_student(student, ensemble, seqs, opt);
  save_checkpoint(student, cfg, a.out);
  out << "distilled a " << student_cfg.N << "-block student from " << ensemble.teachers.size()
      << " teacher(s) over " << logs.size() << " steps (" << md_mode_name(cfg.md_mode) << ")";
  if (!logs.empty()) out << ", final loss " << fixed(logs.back().total);
  out << "; wrote " << a.out << "\n";
  return 0;
}

// ---- track / eval ----------------------------------------------------------

struct TrackArgs {
  ConfigFlags cfg;  // only --force-gates
  std::string checkpoint, data, out, records;
  bool no_hanning = false;
  bool as_json = false;
};

TrackerOptions tracker_options(const LoadedCheckpoint& ck, const TrackArgs& a) {
  TrackerOptions t = tracker_options_of(ck.config);
  if (!a.cfg.force_gates.empty()) t.gates = GateOverride::parse(a.cfg.force_gates);
  t.hanning = !a.no_hanning;
  return t;
}

int track(const TrackArgs& a, std::ostream& out) {
  const LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
  const std::vector<SequenceDataset> seqs = load_sequences({a.data});
  if (seqs.size() != 1) throw Error("track: '" + a.data + "' holds " +
                                    std::to_string(seqs.size()) + " sequences; pass exactly one");
  const auto results = track_sequence(seqs[0], ck.model, tracker_options(ck, a));
  Sink sink(a.out, out);
  *sink << frame_record_header() << "\n";
  for (const FrameResult& r : results) *sink << format_frame_record(r) << "\n";
  return 0;
}

struct SeqScore {
  std::string name;
  std::vector<Rect> pred, gt;
};

int eval(const TrackArgs& a, std::ostream& out) {
  if (a.checkpoint.empty() == a.records.empty())
    throw Error("eval: pass exactly one of --checkpoint or --records");
  std::vector<SeqScore> scores;
  const std::vector<SequenceDataset> seqs = load_sequences(split_commas(a.data));
  if (!a.records.empty()) {
    if (seqs.size() != 1) throw Error("eval: --records pairs with exactly one sequence");
    const auto records = read_frame_records(a.records);
    if (records.size() != seqs[0].size()) {
      throw Error("eval: '" + a.records + "' has " + std::to_string(records.size()) +
                  " records for " + std::to_string(seqs[0].size()) + " frames");
    }
    SeqScore s{seqs[0].name, {}, seqs[0].boxes};
    for (const FrameResult& r : records) s.pred.push_back(r.box);
    scores.push_back(std::move(s));
  } else {
    const LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
    const TrackerOptions opt = tracker_options(ck, a);
    for (const SequenceDataset& ds : seqs) {
      SeqScore s{ds.name, {}, ds.boxes};
      for (const FrameResult& r : track_sequence(ds, ck.model, opt)) s.pred.push_back(r.box);
      scores.push_back(std::move(s));
    }
  }
  SeqScore all{"all", {}, {}};
  for (const SeqScore& s : scores) {
    all.pred.insert(all.pred.end(), s.pred.begin(), s.pred.end());
    all.gt.insert(all.gt.end(), s.gt.begin(), s.gt.end());
  }
  scores.push_back(std::move(all));

  Sink sink(a.out, out);
  if (a.as_json) {
    json rows = json::array();
    for (const SeqScore& s : scores) {
      rows.push_back({{"sequence", s.name},
                      {"frames", s.gt.size()},
                      {"precision_20", precision_at(s.pred, s.gt, 20.0)},
                      {"precision_5", precision_at(s.pred, s.gt, 5.0)},
                      {"success_auc", success_auc(s.pred, s.gt)},
                      {"precision_curve", precision_curve(s.pred, s.gt)},
                      {"success_curve", success_curve(s.pred, s.gt)}});
    }
    *sink << rows.dump(2) << "\n";
    return 0;
  }
  *sink << "sequence,frames,precision_20,precision_5,success_auc\n";
  for (const SeqScore& s : scores) {
    *sink << s.name << "," << s.gt.size() << "," << fixed(precision_at(s.pred, s.gt, 20.0)) << ","
          << fixed(precision_at(s.pred, s.gt, 5.0)) << "," << fixed(success_auc(s.pred, s.gt))
          << "\n";
  }
  return 0;
}

// ---- bench -----------------------------------------------------------------

struct BenchArgs {
  ConfigFlags cfg;
  std::string checkpoint, data, out, convention = "mac";
  int64_t frames = 200, warmup = 10;
  bool as_json = false;
};

int bench(const BenchArgs& a, std::ostream& out) {
  Config cfg = a.cfg.resolve();
  TrackerModel model = model_from_config(cfg);
  if (!a.checkpoint.empty()) {
    LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
    const std::string gates = cfg.force_gates;
    cfg = ck.config;
    if (!a.cfg.force_gates.empty()) cfg.force_gates = gates;
    model = ck.model;
  }
  SequenceDataset ds;
  if (!a.data.empty()) {
    const auto seqs = load_sequences({a.data});
    if (seqs.size() != 1) throw Error("bench: pass exactly one sequence to --data");
    ds = seqs[0];
  } else {
    GenConfig g;
    g.seed = cfg.seed;
    g.length = a.frames + a.warmup + 1;
    ds = gen_sequence(g);
  }
  const FlopConvention conv =
      a.convention == "twice-mac" ? FlopConvention::kTwiceMac : FlopConvention::kMac;
  const CostReport cost = count_flops(model.cfg, model.head_channels, conv);
  const FpsReport fps = bench_fps(model, ds, a.warmup, tracker_options_of(cfg));

  Sink sink(a.out, out);
  if (a.as_json) {
    json j = {{"profile", cfg.profile},
              {"gates", cfg.force_gates},
              {"frames", fps.frames},
              {"mean_fps", fps.mean_fps},
              {"p50_ms", fps.p50_ms},
              {"p99_ms", fps.p99_ms},
              {"params_min", cost.params_min},
              {"params_max", cost.params_max},
              {"flops_min", cost.flops_min},
              {"flops_max", cost.flops_max},
              {"flops_per_block", cost.flops_per_block},
              {"flops_embed", cost.flops_embed},
              {"flops_am", cost.flops_am},
              {"flops_norm", cost.flops_norm},
              {"flops_head", cost.flops_head},
              {"convention", a.convention}};
    *sink << j.dump(2) << "\n";
    return 0;
  }
  *sink << "profile,gates,frames,mean_fps,p50_ms,p99_ms,params_min,params_max,flops_min,"
           "flops_max,flops_per_block,convention\n";
  *sink << cfg.profile << "," << cfg.force_gates << "," << fps.frames << ","
        << fixed(fps.mean_fps, 3) << "," << fixed(fps.p50_ms, 4) << "," << fixed(fps.p99_ms, 4)
        << "," << cost.params_min << "," << cost.params_max << "," << fixed(cost.flops_min, 0)
        << "," << fixed(cost.flops_max, 0) << "," << fixed(cost.flops_per_block, 0) << ","
        << a.convention << "\n";
  return 0;
}

// ---- inspect ---------------------------------------------------------------

int inspect(const std::string& path, bool as_json, std::ostream& out) {
  const CheckpointInfo info = read_checkpoint_info(path);
  const ParamCounts counts =
      count_params(info.config.backbone, true, info.config.head_channels);
  int64_t stored = 0, critic = 0, buffers = 0;
  for (const TensorRecord& r : info.tensors) {
    int64_t n = 1;
    for (int64_t v : r.shape) n *= v;
    if (!r.trainable) {
      buffers += n;
    } else if (r.name.rfind(kCriticPrefix, 0) == 0) {
      critic += n;
    } else {
      stored += n;
    }
  }
  if (as_json) {
    json j = json::parse(info.metadata);
    j["format_version"] = info.version;
    j["file_size"] = info.file_size;
    j["params_min"] = counts.min;
    j["params_max"] = counts.max;
    j["params_stored"] = stored;
    j["critic_params"] = critic;
    j["buffer_values"] = buffers;
    out << j.dump(2) << "\n";
    return 0;
  }
  out << "file: " << path << "\n";
  out << "format_version: " << info.version << "\n";
  out << "file_size: " << info.file_size << "\n";
  out << "config:\n";
  for (const auto& [k, v] : info.config.to_pairs()) out << "  " << k << " = " << v << "\n";
  out << "tensors: " << info.tensors.size() << "\n";
  for (const TensorRecord& r : info.tensors) {
    out << "  " << r.name << " " << dtype_name(r.dtype) << " " << shape_str(r.shape)
        << " offset=" << r.offset << " bytes=" << r.bytes << (r.trainable ? "" : " buffer")
        << "\n";
  }
  out << "params_min: " << counts.min << "\n";
  out << "params_max: " << counts.max << "\n";
  out << "params_stored: " << stored << "\n";
  out << "critic_params: " << critic << "\n";
  out << "buffer_values: " << buffers << "\n";
  return 0;
}

}  // namespace

int worker_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("AVTRACK_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (*end != '\0' || cap < 1)
      throw Error(std::string("AVTRACK_THREADS must be a positive integer, got '") + env + "'");
    n = std::min<long>(n, cap);
  }
  return n;
}

std::vector<SequenceDataset> load_sequences(const std::vector<std::string>& paths) {
  std::vector<SequenceDataset> out;
  for (const std::string& p : paths) {
    if (!fs::is_directory(p)) throw Error("no such sequence directory '" + p + "'");
    if (fs::exists(fs::path(p) / "groundtruth_rect.txt")) {
      out.push_back(read_sequence(p));
      continue;
    }
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(p)) {
      if (e.is_directory() && fs::exists(e.path() / "groundtruth_rect.txt"))
        dirs.push_back(e.path());
    }
    if (dirs.empty()) throw Error("no sequences under '" + p + "'");
    std::sort(dirs.begin(), dirs.end());
    for (const fs::path& d : dirs) out.push_back(read_sequence(d));
  }
  return out;
}

std::vector<FrameResult> read_frame_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open records '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != frame_record_header())
    throw Error(path.string() + ":1: expected header '" + frame_record_header() + "'");
  std::vector<FrameResult> out;
  int n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string item; std::getline(ss, item, ',');) f.push_back(item);
    if (f.size() != 8)
      throw Error(path.string() + ":" + std::to_string(n) + ": expected 8 fields, got " +
                  std::to_string(f.size()));
    try {
      FrameResult r;
      r.frame = std::stoll(f[0]);
      r.box = Rect{std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4])};
      r.score = std::stod(f[5]);
      r.active_blocks = std::stoll(f[6]);
      r.millis = std::stod(f[7]);
      out.push_back(r);
    } catch (const std::logic_error&) {
      throw Error(path.string() + ":" + std::to_string(n) + ": malformed number");
    }
  }
  return out;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive ViT tracker: data, training, distillation, tracking and evaluation",
               "avtrack"};
  app.require_subcommand(1, 1);
  app.failure_message(CLI::FailureMessage::help);

  GenDataArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "write seeded synthetic sequences");
  gen_cmd->add_option("--seed", gen.seed, "seed of the first sequence");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--count", gen.count, "number of sequences")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--length", gen.length, "frames per sequence");
  gen_cmd->add_option("--width", gen.width, "frame width");
  gen_cmd->add_option("--height", gen.height, "frame height");
  gen_cmd->add_option("--target", gen.target, "target side in pixels");
  gen_cmd->add_option("--motion", gen.motion, "motion amplitude in pixels");
  gen_cmd->add_option("--occluders", gen.occluders, "per-frame occluder probability");
  gen_cmd->add_option("--shape", gen.shape, "target shape")
      ->check(CLI::IsMember({"rectangle", "ellipse"}));

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "train a tracker and write a checkpoint");
  add_config(train_cmd, tr.cfg);
  add_steps(train_cmd, tr.cfg);
  add_gates(train_cmd, tr.cfg);
  train_cmd->add_option("--out", tr.out, "checkpoint path")->required();
  train_cmd->add_option("--data", tr.data, "sequence directories, comma-separated");
  train_cmd->add_option("--log", tr.log, "per-step CSV log");

  TrainArgs ds;
  CLI::App* distill_cmd =
      app.add_subcommand("distill", "distill a student from frozen teacher checkpoints");
  add_config(distill_cmd, ds.cfg);
  add_steps(distill_cmd, ds.cfg);
  add_gates(distill_cmd, ds.cfg);
  distill_cmd->add_option("--teachers", ds.cfg.teachers, "teacher checkpoints, comma-separated");
  distill_cmd->add_option("--student-blocks", ds.cfg.student_blocks, "student depth");
  distill_cmd->add_option("--md-mode", ds.cfg.md_mode, "distillation objective")
      ->check(CLI::IsMember({"jsd", "mse"}));
  distill_cmd->add_option("--out", ds.out, "checkpoint path")->required();
  distill_cmd->add_option("--data", ds.data, "sequence directories, comma-separated");
  distill_cmd->add_option("--log", ds.log, "per-step CSV log");

  TrackArgs tk;
  CLI::App* track_cmd = app.add_subcommand("track", "track one sequence, write per-frame records");
  track_cmd->add_option("--checkpoint", tk.checkpoint, "model checkpoint")->required();
  track_cmd->add_option("--data", tk.data, "sequence directory")->required();
  track_cmd->add_option("--out", tk.out, "records CSV (stdout when omitted)");
  track_cmd->add_flag("--no-hanning", tk.no_hanning, "skip the window penalty");
  add_gates(track_cmd, tk.cfg);

  TrackArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "precision and success of tracked sequences");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "track with this checkpoint");
  eval_cmd->add_option("--records", ev.records, "score existing records instead");
  eval_cmd->add_option("--data", ev.data, "sequence directories, comma-separated")->required();
  eval_cmd->add_option("--out", ev.out, "report path (stdout when omitted)");
  eval_cmd->add_flag("--json", ev.as_json, "JSON report with curves");
  eval_cmd->add_flag("--no-hanning", ev.no_hanning, "skip the window penalty");
  add_gates(eval_cmd, ev.cfg);

  BenchArgs bn;
  CLI::App* bench_cmd = app.add_subcommand("bench", "throughput and cost accounting");
  add_config(bench_cmd, bn.cfg);
  add_gates(bench_cmd, bn.cfg);
  bench_cmd->add_option("--checkpoint", bn.checkpoint, "model checkpoint (random init otherwise)");
  bench_cmd->add_option("--data", bn.data, "sequence directory (generated otherwise)");
  bench_cmd->add_option("--frames", bn.frames, "timed frames of the generated sequence")
      ->check(CLI::PositiveNumber);
  bench_cmd->add_option("--warmup", bn.warmup, "untimed frames")->check(CLI::NonNegativeNumber);
  bench_cmd->add_option("--convention", bn.convention, "operation counting")
      ->check(CLI::IsMember({"mac", "twice-mac"}));
  bench_cmd->add_option("--out", bn.out, "report path (stdout when omitted)");
  bench_cmd->add_flag("--json", bn.as_json, "JSON report with itemized counts");

  std::string inspect_path;
  bool inspect_json = false;
  CLI::App* inspect_cmd = app.add_subcommand("inspect", "print checkpoint metadata");
  inspect_cmd->add_option("checkpoint", inspect_path, "checkpoint path")->required();
  inspect_cmd->add_flag("--json", inspect_json, "JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (gen_cmd->parsed()) return gen_data(gen, out);
    if (train_cmd->parsed()) return train(tr, out);
    if (distill_cmd->parsed()) return distill(ds, out);
    if (track_cmd->parsed()) return track(tk, out);
    if (eval_cmd->parsed()) return eval(ev, out);
    if (bench_cmd->parsed()) return bench(bn, out);
    if (inspect_cmd->parsed()) return inspect(inspect_path, inspect_json, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace avtrack::cli
