#pragma once

// Command implementations behind the `npsnet` tool. Each takes a plain
// options struct, writes its files, and reports progress to `log`.

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "npsnet/app/dataset.hpp"
#include "npsnet/app/evaluate.hpp"
#include "npsnet/app/train.hpp"
#include "npsnet/core/checkpoint.hpp"
#include "npsnet/core/macs.hpp"
#include "npsnet/pipeline/fixture.hpp"

namespace npsnet {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- config

inline ModelConfig preset_config(const std::string& name) {
  if (name == "default") return ModelConfig{};
  if (name == "fixture") return ModelConfig::fixture();
  if (name == "reference") return ModelConfig::reference_width();
  throw UsageError("unknown preset '" + name + "' (expected default, fixture or reference)");
}

inline ModelConfig load_config_file(const fs::path& path, ModelConfig base) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j, std::move(base));
}

struct ConfigArgs {
  std::string preset = "default";
  std::optional<fs::path> file;
  std::optional<std::uint64_t> seed;
  bool no_ufm = false, no_inter = false;
  std::optional<std::string> branches;  // comma list of high,low,channel or "none"
  std::optional<std::size_t> steps;
};

inline BranchMask parse_branches(const std::string& text) {
  BranchMask m{false, false, false};
  if (text == "none" || text.empty()) return m;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item == "high")
      m.high = true;
    else if (item == "low")
      m.low = true;
    else if (item == "channel")
      m.channel = true;
    else
      throw UsageError("unknown UFM branch '" + item + "' (expected high, low, channel or none)");
  }
  return m;
}

inline ModelConfig resolve_config(const ConfigArgs& a) {
  ModelConfig c = preset_config(a.preset);
  if (a.file) c = load_config_file(*a.file, c);
  if (a.seed) c.train.seed = *a.seed;
  if (a.no_ufm) c.ablation.no_ufm = true;
  if (a.no_inter) c.ablation.no_inter = true;
  if (a.branches) c.ablation.branches = parse_branches(*a.branches);
  if (a.steps) {
    c.train.steps = *a.steps;
    c.train.epochs = 0;
  }
  c.validate();
  return c;
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { detail::write_file_bytes(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------- synth / ingest / render / manifest

inline DatasetManifest cmd_synth(const fs::path& out, const SynthSpec& spec, std::ostream& log) {
  const DatasetManifest m = synth_fixture(out, spec);
  log << "wrote " << m.videos.size() << " synthetic video(s) with " << spec.frames << " frames each to " << out.string()
      << "\n";
  return m;
}

struct IngestArgs {
  fs::path gaze;
  fs::path out;
  IngestConfig cfg;
};

inline IngestResult cmd_ingest(const IngestArgs& a, std::ostream& log) {
  const IngestResult r = ingest_gaze(read_gaze_csv(a.gaze), a.cfg);
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  write_fixation_csv(a.out, r.frames);
  log << "ingested " << r.samples << " samples into " << r.frames.size() << " frames; dropped " << r.dropped
      << " out-of-bounds sample(s)\n";
  return r;
}

struct RenderArgs {
  fs::path fixations;
  fs::path out;
  std::size_t height = 0, width = 0;
  std::size_t source_height = 0, source_width = 0;  // 0: same as the map
  RenderConfig render;
  std::optional<std::int64_t> frame;
};

inline std::size_t cmd_render(const RenderArgs& a, std::ostream& log) {
  if (a.height == 0 || a.width == 0) throw UsageError("render needs --height and --width");
  const auto frames = read_fixation_csv(a.fixations);
  std::vector<PredictedFrame> maps;
  std::size_t empty = 0;
  for (const auto& [f, set] : frames) {
    if (a.frame && f != *a.frame) continue;
    const std::size_t sh = a.source_height ? a.source_height : a.height, sw = a.source_width ? a.source_width : a.width;
    const auto r = render_saliency(rescale_fixations(set, sh, sw, a.height, a.width), a.height, a.width, a.render);
    if (r.empty) {
      ++empty;
      log << "warning: frame " << f << " has no in-bounds fixations; wrote a zero map\n";
    }
    maps.push_back({a.out / frame_stem(static_cast<std::size_t>(f)), r.map});
  }
  if (a.frame && maps.empty()) throw InputError("frame " + std::to_string(*a.frame) + " has no fixations in " + a.fixations.string());
  write_predictions(maps);
  log << "rendered " << maps.size() << " map(s) to " << a.out.string() << (empty ? " (" + std::to_string(empty) + " empty)" : "")
      << "\n";
  return maps.size();
}

struct ManifestArgs {
  fs::path root;
  fs::path out;  // empty: <root>/manifest.json
  std::uint64_t seed = 0;
  double sigma = 0;
  double fps = 30;
};

inline DatasetManifest cmd_manifest(const ManifestArgs& a, std::ostream& log) {
  const DatasetManifest m = build_manifest(a.root, a.seed, a.sigma, a.fps);
  write_manifest(a.out.empty() ? a.root / "manifest.json" : a.out, m);
  for (const auto& d : known_domains())
    log << d << ": " << m.count(d, Split::Train) << " train / " << m.count(d, Split::Test) << " test\n";
  return m;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  fs::path manifest;
  fs::path out;
  ModelConfig config;
  std::optional<Split> split = Split::Train;
  bool verbose = true;
};

inline TrainOutcome cmd_train(const TrainArgs& a, std::ostream& log) {
  const DatasetManifest m = read_manifest(a.manifest);
  ClipLoader loader(m, manifest_root(m, a.manifest), a.config, a.split);
  ParamStore<float> store(a.config.train.seed);
  NPSNet<float> net = NPSNet<float>::create(store, a.config);
  TrainHooks hooks;
  const std::size_t every = std::max<std::size_t>(1, a.config.train.steps / 10);
  if (a.verbose)
    hooks.on_step = [&](std::size_t step, double loss) {
      if (step == 1 || step % every == 0) log << "step " << step << " loss " << loss << "\n";
    };
  const TrainOutcome o = train_model(net, store, loader, hooks);
  fs::create_directories(a.out);
  save_checkpoint(a.out / "checkpoint.bin", store);
  write_json(a.out / "config.json", to_json(a.config));
  write_json(a.out / "run_record.json", run_record(a.config, o));
  detail::write_file_bytes(a.out / "loss_curve.csv", format_loss_curve(o.losses));
  log << "trained " << o.steps << " steps on " << o.samples << " sample(s); final loss " << (o.losses.empty() ? 0.0 : o.losses.back())
      << ", final KLD " << o.final_kld << "; " << o.param_count << " parameters\n";
  return o;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  fs::path checkpoint;
  std::optional<fs::path> config_file;  // default: config.json next to the checkpoint
  std::optional<ModelConfig> config;    // takes precedence when set
  fs::path out;
  // Manifest mode.
  std::optional<fs::path> manifest;
  std::optional<Split> split = Split::Test;
  // Single-clip mode.
  std::optional<fs::path> clip;
  std::vector<std::size_t> frames;
  double fps = 30;
};

inline ModelConfig predict_config(const PredictArgs& a) {
  if (a.config) return *a.config;
  const fs::path p = a.config_file ? *a.config_file : a.checkpoint.parent_path() / "config.json";
  if (!fs::is_regular_file(p)) throw UsageError("no model config: pass --config or keep config.json next to the checkpoint");
  ModelConfig c = load_config_file(p, ModelConfig{});
  c.validate();
  return c;
}

inline std::size_t cmd_predict(const PredictArgs& a, std::ostream& log) {
  if (!fs::is_regular_file(a.checkpoint)) throw IoError("checkpoint " + a.checkpoint.string() + " does not exist");
  if (a.manifest.has_value() == a.clip.has_value()) throw UsageError("predict needs exactly one of --manifest or --clip");
  const ModelConfig cfg = predict_config(a);
  ParamStore<float> store(cfg.train.seed);
  NPSNet<float> net = NPSNet<float>::create(store, cfg);
  load_into(store, read_checkpoint(a.checkpoint));
  std::vector<PredictedFrame> maps;
  if (a.manifest) {
    const DatasetManifest m = read_manifest(*a.manifest);
    ClipLoader loader(m, manifest_root(m, *a.manifest), cfg, a.split);
    maps = predict_manifest(net, loader, a.out);
  } else {
    if (a.frames.empty()) throw UsageError("--clip needs at least one --frame index");
    for (std::size_t f : a.frames)
      maps.push_back({a.out / frame_stem(f), to_map(net(ClipLoader::load_clip_dir(*a.clip, f, cfg, a.fps)))});
  }
  write_predictions(maps);
  log << "wrote " << maps.size() << " prediction(s) to " << a.out.string() << "\n";
  return maps.size();
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  fs::path manifest;
  fs::path predictions;
  fs::path out;
  ModelConfig config;
  EvalOptions options;
};

inline EvalReport cmd_eval(const EvalArgs& a, std::ostream& log) {
  const DatasetManifest m = read_manifest(a.manifest);
  const EvalReport r = evaluate_predictions(m, manifest_root(m, a.manifest), a.predictions, a.config, a.options);
  fs::create_directories(a.out);
  const std::string table = format_report_table(r);
  detail::write_file_bytes(a.out / "report.txt", table);
  write_json(a.out / "report.json", to_json(r));
  log << table;
  return r;
}

// ---------------------------------------------------------------- params

struct ParamsReport {
  std::size_t count = 0;
  double millions = 0;
  std::uint64_t macs = 0;
  std::vector<std::pair<std::string, std::uint64_t>> per_layer;
  std::optional<std::size_t> reference_width_count;
};

// Analytic MACs of one forward pass, from a zero clip.
inline MacCounter count_forward_macs(const ModelConfig& cfg) {
  ParamStore<float> store(cfg.train.seed);
  NPSNet<float> net = NPSNet<float>::create(store, cfg);
  for (auto& p : store.params()) p.tensor.set_requires_grad(false);
  MacCounter counter;
  MacCounterScope scope(counter);
  const Tensor<float> frames(Shape{cfg.k, 3, cfg.frame_height, cfg.frame_width}, 0.0f);
  const Tensor<float> audio(Shape{std::max(cfg.audio_samples(), net.audio().min_samples())}, 0.0f);
  net(frames, audio);
  return counter;
}

inline std::size_t reference_width_param_count() {
  ParamStore<float> shapes(0, false);
  NPSNet<float>::create(shapes, ModelConfig::reference_width());
  return shapes.count();
}

struct ParamsArgs {
  std::optional<fs::path> checkpoint;
  ModelConfig config;
  bool reference_width = false;
  bool macs = true;
  std::optional<fs::path> out;  // params.json
};

inline ParamsReport cmd_params(const ParamsArgs& a, std::ostream& log) {
  ParamsReport r;
  if (a.checkpoint) {
    for (const auto& e : read_checkpoint(*a.checkpoint)) r.count += numel(e.shape);
  } else {
    ParamStore<float> shapes(a.config.train.seed, false);
    NPSNet<float>::create(shapes, a.config);
    r.count = shapes.count();
  }
  r.millions = params_in_millions(r.count);
  if (a.macs) {
    const MacCounter c = count_forward_macs(a.config);
    r.macs = c.total();
    r.per_layer = c.entries();
  }
  if (a.reference_width) r.reference_width_count = reference_width_param_count();

  log << "parameters: " << r.count << " (" << r.millions << " M)\n";
  if (a.macs) {
    char buf[160];
    for (const auto& [name, macs] : r.per_layer) {
      std::snprintf(buf, sizeof buf, "  %-40s %14llu MACs\n", name.c_str(), static_cast<unsigned long long>(macs));
      log << buf;
    }
    std::snprintf(buf, sizeof buf, "total: %llu MACs = %.3f GFLOPs (2 FLOPs per MAC)\n", static_cast<unsigned long long>(r.macs),
                  2.0 * static_cast<double>(r.macs) / 1e9);
    log << buf;
  }
  if (r.reference_width_count)
    log << "reference-width configuration: " << *r.reference_width_count << " parameters ("
        << params_in_millions(*r.reference_width_count) << " M; reference figure 122.5 M)\n";
  if (a.out) {
    nlohmann::json j{{"param_count", r.count}, {"param_count_m", r.millions}, {"macs", r.macs}, {"flops", 2 * r.macs}};
    j["per_layer"] = nlohmann::json::array();
    for (const auto& [name, macs] : r.per_layer) j["per_layer"].push_back({{"name", name}, {"macs", macs}});
    if (r.reference_width_count) j["reference_width_param_count"] = *r.reference_width_count;
    write_json(*a.out, j);
  }
  return r;
}

}  // namespace npsnet
