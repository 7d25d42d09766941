#pragma once

// Batch prediction and metric evaluation over a manifest.
//
// Prediction files: <pred>/<video id>/<frame:05>.npsm (raw f32) and .pgm.
// Evaluation renders ground truth at the prediction extents, scores every
// target frame with fixations, averages per video and per domain, and
// weights domains by frame count. Frames are scored in parallel; results
// are reduced in (video, frame) order so reports do not depend on timing.

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "npsnet/app/dataset.hpp"
#include "npsnet/eval/metrics.hpp"
#include "npsnet/io/map_io.hpp"

namespace npsnet {

inline std::string frame_stem(std::size_t f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu", f);
  return buf;
}

inline std::filesystem::path prediction_path(const std::filesystem::path& dir, const std::string& video_id, std::size_t frame) {
  return dir / video_id / (frame_stem(frame) + ".npsm");
}

inline SaliencyMap to_map(const Tensor<float>& t) {
  return SaliencyMap(t.shape().at(0), t.shape().at(1), std::vector<double>(t.values().begin(), t.values().end()));
}

struct PredictedFrame {
  std::filesystem::path stem;  // without extension
  SaliencyMap map;
};

// Writes .npsm and .pgm for every frame. Called only once all maps exist.
inline void write_predictions(const std::vector<PredictedFrame>& frames) {
  for (const auto& f : frames) {
    std::filesystem::create_directories(f.stem.parent_path());
    write_map_raw(f.stem.string() + ".npsm", f.map);
    write_map_pgm(f.stem.string() + ".pgm", f.map);
  }
}

inline std::vector<PredictedFrame> predict_manifest(const NPSNet<float>& net, ClipLoader& loader,
                                                    const std::filesystem::path& out_dir) {
  std::vector<PredictedFrame> out;
  for (const auto& r : loader.samples()) {
    const ClipSample s = loader.load(r);
    out.push_back({out_dir / s.video_id / frame_stem(s.frame), to_map(net(s.input))});
  }
  if (out.empty()) throw InputError("nothing to predict: no target frame has k frames of history and fixations");
  return out;
}

// ---------------------------------------------------------------- evaluation

struct EvalOptions {
  std::optional<Split> split = Split::Test;
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  bool allow_partial = false;
  std::size_t threads = 0;  // 0: hardware concurrency
};

struct VideoScore {
  std::string id, domain;
  std::size_t frames = 0;
  MetricValues values;
};

struct EvalReport {
  std::vector<VideoScore> videos;
  std::vector<DomainResult> domains;  // cartoon, game (only those present)
  MetricValues average;
  std::size_t frames = 0;
  std::size_t skipped = 0;  // target frames with no usable fixations
  std::vector<std::string> missing;
  std::string split;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
};

inline std::uint64_t frame_seed(std::uint64_t seed, const std::string& video, std::size_t frame) {
  return mix_seed(seed, fnv1a64(video + "#" + std::to_string(frame)));
}

inline EvalReport evaluate_predictions(const DatasetManifest& manifest, const std::filesystem::path& root,
                                       const std::filesystem::path& pred_dir, const ModelConfig& cfg, const EvalOptions& opt) {
  ClipLoader loader(manifest, root, cfg, opt.split);
  const auto& videos = loader.videos();
  if (videos.empty()) throw InputError("no videos in the requested split");
  const std::size_t H = cfg.frame_height, W = cfg.frame_width;

  struct Job {
    std::size_t video, frame;
    FixationSet fix;
    SaliencyMap gt;
    std::filesystem::path pred;
  };
  std::vector<Job> jobs;
  std::vector<std::vector<FixationSet>> per_video_fix(videos.size());
  EvalReport rep;
  rep.split = opt.split ? to_string(*opt.split) : "all";
  rep.trials = opt.trials;
  rep.seed = opt.seed;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    for (const auto& [f, set] : loader.fixations(v)) {
      (void)set;
      per_video_fix[v].push_back(loader.model_fixations(v, static_cast<std::size_t>(f)));
    }
    for (std::size_t f = cfg.k - 1; f < videos[v]->frames; ++f) {
      FixationSet fix = loader.model_fixations(v, f);
      if (fix.points.empty()) {
        ++rep.skipped;
        continue;
      }
      const auto pred = prediction_path(pred_dir, videos[v]->id, f);
      if (!std::filesystem::is_regular_file(pred)) {
        rep.missing.push_back(videos[v]->id + " frame " + std::to_string(f));
        continue;
      }
      jobs.push_back({v, f, std::move(fix), loader.ground_truth(v, f), pred});
    }
  }
  if (!rep.missing.empty() && !opt.allow_partial) {
    std::string msg = std::to_string(rep.missing.size()) + " prediction(s) missing under " + pred_dir.string() + ":";
    for (std::size_t i = 0; i < rep.missing.size() && i < 50; ++i) msg += "\n  - " + rep.missing[i];
    if (rep.missing.size() > 50) msg += "\n  ...";
    throw InputError(msg + "\n(pass --allow-partial to score the frames that exist)");
  }
  if (jobs.empty()) throw InputError("no frames to evaluate");

  // Negatives for video v: fixations of every other video in the split.
  std::vector<std::vector<FixationSet>> pools(videos.size());
  for (std::size_t v = 0; v < videos.size(); ++v)
    for (std::size_t u = 0; u < videos.size(); ++u)
      if (u != v) pools[v].insert(pools[v].end(), per_video_fix[u].begin(), per_video_fix[u].end());
  for (std::size_t v = 0; v < videos.size(); ++v)
    if (pools[v].empty()) pools[v] = per_video_fix[v];  // single-video split: fall back to the video's own frames

  std::vector<std::optional<MetricValues>> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        const Job& j = jobs[i];
        const SaliencyMap pred = read_map(j.pred);
        if (pred.height != H || pred.width != W)
          throw DimensionError(j.pred.string() + ": map is " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                               ", expected " + std::to_string(H) + "x" + std::to_string(W));
        results[i] = evaluate_frame(pred, j.gt, j.fix, pools[j.video], opt.trials,
                                    frame_seed(opt.seed, videos[j.video]->id, j.frame));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::size_t n_threads = opt.threads ? opt.threads : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min(n_threads, jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::map<std::size_t, MetricAccumulator> by_video;
  std::map<std::string, MetricAccumulator> by_domain;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!results[i]) {
      ++rep.skipped;
      continue;
    }
    by_video[jobs[i].video].add(*results[i]);
    by_domain[videos[jobs[i].video]->domain].add(*results[i]);
    ++rep.frames;
  }
  for (const auto& [v, acc] : by_video) rep.videos.push_back({videos[v]->id, videos[v]->domain, acc.frames, acc.mean()});
  for (const auto& d : known_domains())
    if (by_domain.count(d)) rep.domains.push_back({d, by_domain[d].frames, by_domain[d].mean()});
  rep.average = aggregate(rep.domains);
  return rep;
}

inline nlohmann::json to_json(const MetricValues& m) {
  return {{"auc_j", m.auc_j}, {"sim", m.sim}, {"s_auc", m.s_auc}, {"cc", m.cc}, {"nss", m.nss}};
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["split"] = r.split;
  j["trials"] = r.trials;
  j["seed"] = r.seed;
  j["frames"] = r.frames;
  j["skipped_frames"] = r.skipped;
  j["missing"] = r.missing;
  j["domains"] = nlohmann::json::object();
  for (const auto& d : r.domains) {
    auto m = to_json(d.values);
    m["frames"] = d.frames;
    j["domains"][d.domain] = m;
  }
  j["average"] = to_json(r.average);
  j["average"]["frames"] = r.frames;
  j["videos"] = nlohmann::json::array();
  for (const auto& v : r.videos) {
    auto m = to_json(v.values);
    m["id"] = v.id;
    m["domain"] = v.domain;
    m["frames"] = v.frames;
    j["videos"].push_back(m);
  }
  return j;
}

// Plain-text table: AUC-J, SIM, s-AUC, CC, NSS, frames.
inline std::string format_report_table(const EvalReport& r) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-10s %8s %8s %8s %8s %8s %8s\n", "Domain", "AUC-J", "SIM", "s-AUC", "CC", "NSS", "Frames");
  out << buf;
  auto row = [&](const std::string& name, const MetricValues& m, std::size_t frames) {
    std::snprintf(buf, sizeof buf, "%-10s %8.4f %8.4f %8.4f %8.4f %8.4f %8zu\n", name.c_str(), m.auc_j, m.sim, m.s_auc, m.cc,
                  m.nss, frames);
    out << buf;
  };
  for (const auto& d : r.domains) row(d.domain, d.values, d.frames);
  row("average", r.average, r.frames);
  if (r.skipped) out << "skipped frames (no fixations): " << r.skipped << "\n";
  if (!r.missing.empty()) out << "missing predictions: " << r.missing.size() << "\n";
  return out.str();
}

}  // namespace npsnet
