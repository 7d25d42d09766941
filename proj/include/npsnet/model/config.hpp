#pragma once

// Model and training configuration, serialized as a JSON document with a
// "schema_version" field. Encoder channel plans are given at reference width
// and multiplied by `width_multiplier`; see resolved_*() for the rounding rule.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "npsnet/core/ops.hpp"
#include "npsnet/model/ufm.hpp"

namespace npsnet {

inline constexpr int kConfigSchemaVersion = 1;

struct AudioConfig {
  std::size_t sample_rate = 16000;
  // SoundNet-style 7-block conv1d plan at reference width.
  std::vector<std::size_t> channels{16, 32, 64, 128, 256, 512, 1024};
  std::vector<std::size_t> kernels{9, 7, 7, 5, 5, 3, 3};
  std::vector<std::size_t> strides{2, 2, 2, 2, 2, 2, 2};
  std::size_t ufm_after_block = 5;  // 1-based
  std::size_t ufm_heads = 1;
  std::size_t ufm_kernel = 3;
};

struct VideoConfig {
  Extent3 patch{2, 4, 4};
  std::vector<std::size_t> dims{96, 192, 384, 768};  // per stage, reference width
  std::vector<std::size_t> depths{2, 2, 6, 2};
  std::vector<std::size_t> heads{3, 6, 12, 24};
  Extent3 window{8, 7, 7};
  std::size_t mlp_ratio = 4;
  std::size_t ufm_after_stage = 3;  // 1-based
  std::size_t ufm_heads = 1;
  Extent3 ufm_kernel{3, 3, 3};
};

struct FusionConfig {
  std::size_t d_o = 64;
  std::size_t heads = 4;
  std::size_t blocks = 2;
  std::size_t mlp_ratio = 2;
  std::size_t ufm_heads = 1;
  std::size_t ufm_kernel = 3;
  std::size_t lattice_h = 7, lattice_w = 12;  // tile each token is broadcast over
  std::size_t conv_kernel = 3;
  std::size_t channels = 32;       // C_f
  Extent3 target{4, 7, 12};        // (T_f, H_f, W_f)
};

struct DecoderLayerSpec {
  std::size_t channels = 1;
  std::size_t kernel = 3;
  std::size_t divisor = 1;  // layer output extents = ceil(frame / divisor)
};

struct DecoderConfig {
  std::array<DecoderLayerSpec, 6> layers{{{32, 3, 16}, {32, 3, 8}, {16, 3, 4}, {16, 3, 2}, {8, 3, 1}, {1, 3, 1}}};
  std::size_t deep_after = 2;     // 1-based layer index receiving the deep tap
  std::size_t shallow_after = 4;  // 1-based layer index receiving the shallow tap
};

struct Ablation {
  bool no_ufm = false;
  bool no_inter = false;
  BranchMask branches;
};

struct TrainConfig {
  std::uint64_t seed = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch = 8;
  std::size_t steps = 200;
  std::size_t epochs = 0;  // 0: run for `steps` optimizer steps
  double kld_eps = 1e-8;
  std::size_t prefetch = 2;
};

struct ModelConfig {
  std::size_t frame_height = 224;
  std::size_t frame_width = 384;
  std::size_t fps = 30;
  std::size_t k = 16;
  double width_multiplier = 0.125;
  AudioConfig audio;
  VideoConfig video;
  FusionConfig fusion;
  DecoderConfig decoder;
  Ablation ablation;
  TrainConfig train;

  // Channel widths after applying the multiplier: max(m, m*round(base*mult/m))
  // where m is the divisibility the consumer needs (attention heads).
  static std::size_t scale_width(std::size_t base, double mult, std::size_t multiple) {
    const double units = std::round(static_cast<double>(base) * mult / static_cast<double>(multiple));
    return std::max<std::size_t>(multiple, static_cast<std::size_t>(units) * multiple);
  }

  std::vector<std::size_t> resolved_audio_channels() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < audio.channels.size(); ++i) {
      const bool hosts_ufm = i + 1 == audio.ufm_after_block;
      out.push_back(scale_width(audio.channels[i], width_multiplier, hosts_ufm ? std::max<std::size_t>(1, audio.ufm_heads) : 1));
    }
    return out;
  }

  std::vector<std::size_t> resolved_video_dims() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < video.dims.size(); ++i) {
      std::size_t m = std::max<std::size_t>(1, i < video.heads.size() ? video.heads[i] : 1);
      if (i + 1 == video.ufm_after_stage) m = std::lcm(m, std::max<std::size_t>(1, video.ufm_heads));
      out.push_back(scale_width(video.dims[i], width_multiplier, m));
    }
    return out;
  }

  std::size_t d_a() const { return resolved_audio_channels().back(); }
  std::size_t d_v() const { return resolved_video_dims().back(); }

  // Samples of audio covering k frames at the configured rate.
  std::size_t audio_samples() const {
    return static_cast<std::size_t>(std::llround(static_cast<double>(k) * static_cast<double>(audio.sample_rate) /
                                                  static_cast<double>(fps)));
  }

  std::size_t audio_downsampling() const {
    std::size_t f = 1;
    for (auto s : audio.strides) f *= s;
    return f;
  }

  // Itemized validation; empty when the configuration is consistent.
  std::vector<std::string> problems() const {
    std::vector<std::string> p;
    auto need = [&](bool ok, const std::string& msg) {
      if (!ok) p.push_back(msg);
    };
    need(frame_height > 0 && frame_width > 0, "frame extents must be positive");
    need(k >= 1, "k must be >= 1");
    need(fps > 0, "fps must be positive");
    need(width_multiplier > 0, "width_multiplier must be positive");
    need(audio.channels.size() == 7 && audio.kernels.size() == 7 && audio.strides.size() == 7,
         "audio encoder needs exactly 7 blocks (channels, kernels, strides)");
    need(audio.ufm_after_block >= 1 && audio.ufm_after_block <= audio.channels.size(), "audio.ufm_after_block out of range");
    for (auto s : audio.strides) need(s >= 1, "audio strides must be >= 1");
    for (auto kk : audio.kernels) need(kk % 2 == 1, "audio kernels must be odd");
    need(audio.ufm_kernel % 2 == 1, "audio.ufm_kernel must be odd");
    need(audio.sample_rate > 0, "audio.sample_rate must be positive");
    const std::size_t stages = video.dims.size();
    need(stages >= 1, "video needs at least one stage");
    need(video.depths.size() == stages && video.heads.size() == stages, "video dims/depths/heads lengths differ");
    need(video.ufm_after_stage >= 1 && video.ufm_after_stage <= stages, "video.ufm_after_stage out of range");
    need(video.patch.t > 0 && video.patch.h > 0 && video.patch.w > 0, "video.patch extents must be positive");
    if (video.patch.t > 0 && video.patch.h > 0 && video.patch.w > 0) {
      need(k % video.patch.t == 0, "k=" + std::to_string(k) + " must be divisible by patch t=" + std::to_string(video.patch.t));
      need(frame_height % video.patch.h == 0,
           "frame_height=" + std::to_string(frame_height) + " must be divisible by patch h=" + std::to_string(video.patch.h));
      need(frame_width % video.patch.w == 0,
           "frame_width=" + std::to_string(frame_width) + " must be divisible by patch w=" + std::to_string(video.patch.w));
    }
    need(video.window.t > 0 && video.window.h > 0 && video.window.w > 0, "video.window extents must be positive");
    need(video.ufm_kernel.t % 2 == 1 && video.ufm_kernel.h % 2 == 1 && video.ufm_kernel.w % 2 == 1,
         "video.ufm_kernel extents must be odd");
    for (std::size_t h : video.heads) need(h >= 1, "video heads must be >= 1");
    need(fusion.heads >= 1 && fusion.d_o % fusion.heads == 0,
         "fusion.d_o=" + std::to_string(fusion.d_o) + " must be divisible by fusion.heads=" + std::to_string(fusion.heads));
    need(fusion.ufm_heads >= 1 && fusion.d_o % fusion.ufm_heads == 0, "fusion.d_o must be divisible by fusion.ufm_heads");
    need(fusion.ufm_kernel % 2 == 1 && fusion.conv_kernel % 2 == 1, "fusion kernels must be odd");
    need(fusion.target.t >= 1 && fusion.target.h >= 1 && fusion.target.w >= 1, "fusion.target extents must be >= 1");
    need(fusion.target.t <= k, "fusion.target.t=" + std::to_string(fusion.target.t) + " exceeds the k=" + std::to_string(k) +
                                   " affinity tokens");
    need(fusion.target.h <= fusion.lattice_h && fusion.target.w <= fusion.lattice_w,
         "fusion.target spatial extents exceed the token lattice tile");
    for (std::size_t i = 0; i < 6; ++i) {
      const auto& l = decoder.layers[i];
      need(l.kernel % 2 == 1, "decoder layer " + std::to_string(i + 1) + " kernel must be odd");
      need(l.divisor >= 1, "decoder layer " + std::to_string(i + 1) + " divisor must be >= 1");
      need(l.channels >= 1, "decoder layer " + std::to_string(i + 1) + " needs channels >= 1");
    }
    need(decoder.layers[5].channels == 1, "decoder layer 6 must output 1 channel");
    need(decoder.layers[5].divisor == 1, "decoder layer 6 must run at frame resolution (divisor 1)");
    need(decoder.deep_after >= 1 && decoder.deep_after <= 5, "decoder.deep_after must name a middle layer (1..5)");
    need(decoder.shallow_after >= 1 && decoder.shallow_after <= 5, "decoder.shallow_after must name a middle layer (1..5)");
    need(train.lr > 0, "train.lr must be positive");
    need(train.batch >= 1, "train.batch must be >= 1");
    need(train.kld_eps > 0, "train.kld_eps must be positive");
    need(train.prefetch >= 1, "train.prefetch must be >= 1");
    return p;
  }

  void validate() const {
    const auto p = problems();
    if (p.empty()) return;
    std::string msg = "invalid configuration:";
    for (const auto& s : p) msg += "\n  - " + s;
    throw ConfigError(msg);
  }

  // Desk-scale preset used by the synthetic fixture: k=16, 32x56 frames.
  static ModelConfig fixture() {
    ModelConfig c;
    c.frame_height = 32;
    c.frame_width = 56;
    c.k = 16;
    c.width_multiplier = 1.0;
    c.audio.sample_rate = 8000;
    c.audio.channels = {4, 8, 8, 8, 8, 16, 16};
    c.audio.kernels = {9, 7, 5, 5, 3, 3, 3};
    c.video.patch = {2, 4, 4};
    c.video.dims = {8, 16, 16, 16};
    c.video.depths = {1, 1, 1, 1};
    c.video.heads = {1, 2, 2, 2};
    c.video.window = {8, 4, 4};
    c.video.mlp_ratio = 2;
    c.video.ufm_heads = 2;
    c.fusion.d_o = 16;
    c.fusion.heads = 2;
    c.fusion.blocks = 1;
    c.fusion.ufm_heads = 2;
    c.fusion.lattice_h = 2;
    c.fusion.lattice_w = 4;
    c.fusion.channels = 8;
    c.fusion.target = {2, 2, 4};
    c.decoder.layers = {{{8, 3, 16}, {8, 3, 8}, {8, 3, 4}, {8, 3, 2}, {4, 3, 1}, {1, 3, 1}}};
    c.train.batch = 1;
    c.train.steps = 500;
    return c;
  }

  // Reference widths (multiplier 1) with the larger fusion/decoder used for
  // parameter-count comparisons. Not meant to be trained on a CPU.
  static ModelConfig reference_width() {
    ModelConfig c;
    c.width_multiplier = 1.0;
    c.fusion.d_o = 768;
    c.fusion.heads = 12;
    c.fusion.blocks = 12;
    c.fusion.mlp_ratio = 4;
    c.fusion.ufm_heads = 12;
    c.fusion.channels = 512;
    c.decoder.layers = {{{512, 3, 16}, {256, 3, 8}, {128, 3, 4}, {64, 3, 2}, {32, 3, 1}, {1, 3, 1}}};
    return c;
  }
};

// ---------------------------------------------------------------- JSON

inline nlohmann::json to_json_value(const Extent3& e) { return nlohmann::json::array({e.t, e.h, e.w}); }

inline Extent3 extent_from_json(const nlohmann::json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(key + " must be a 3-element array [t,h,w]");
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>()};
}

inline nlohmann::json to_json(const ModelConfig& c) {
  using nlohmann::json;
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["frame_height"] = c.frame_height;
  j["frame_width"] = c.frame_width;
  j["fps"] = c.fps;
  j["k"] = c.k;
  j["width_multiplier"] = c.width_multiplier;
  j["audio"] = {{"sample_rate", c.audio.sample_rate},     {"channels", c.audio.channels},
                {"kernels", c.audio.kernels},             {"strides", c.audio.strides},
                {"ufm_after_block", c.audio.ufm_after_block}, {"ufm_heads", c.audio.ufm_heads},
                {"ufm_kernel", c.audio.ufm_kernel}};
  j["video"] = {{"patch", to_json_value(c.video.patch)},
                {"dims", c.video.dims},
                {"depths", c.video.depths},
                {"heads", c.video.heads},
                {"window", to_json_value(c.video.window)},
                {"mlp_ratio", c.video.mlp_ratio},
                {"ufm_after_stage", c.video.ufm_after_stage},
                {"ufm_heads", c.video.ufm_heads},
                {"ufm_kernel", to_json_value(c.video.ufm_kernel)}};
  j["fusion"] = {{"d_o", c.fusion.d_o},
                 {"heads", c.fusion.heads},
                 {"blocks", c.fusion.blocks},
                 {"mlp_ratio", c.fusion.mlp_ratio},
                 {"ufm_heads", c.fusion.ufm_heads},
                 {"ufm_kernel", c.fusion.ufm_kernel},
                 {"lattice_h", c.fusion.lattice_h},
                 {"lattice_w", c.fusion.lattice_w},
                 {"conv_kernel", c.fusion.conv_kernel},
                 {"channels", c.fusion.channels},
                 {"target", to_json_value(c.fusion.target)}};
  json layers = json::array();
  for (const auto& l : c.decoder.layers)
    layers.push_back({{"channels", l.channels}, {"kernel", l.kernel}, {"divisor", l.divisor}});
  j["decoder"] = {{"layers", layers}, {"deep_after", c.decoder.deep_after}, {"shallow_after", c.decoder.shallow_after}};
  json mask = json::array();
  if (c.ablation.branches.high) mask.push_back("high");
  if (c.ablation.branches.low) mask.push_back("low");
  if (c.ablation.branches.channel) mask.push_back("channel");
  j["ablation"] = {{"no_ufm", c.ablation.no_ufm}, {"no_inter", c.ablation.no_inter}, {"branch_mask", mask}};
  j["train"] = {{"seed", c.train.seed},   {"lr", c.train.lr},         {"beta1", c.train.beta1},
                {"beta2", c.train.beta2}, {"adam_eps", c.train.adam_eps}, {"batch", c.train.batch},
                {"steps", c.train.steps}, {"epochs", c.train.epochs}, {"kld_eps", c.train.kld_eps},
                {"prefetch", c.train.prefetch}};
  return j;
}

// Missing keys keep their defaults, so a partial document overrides only
// what it names.
inline ModelConfig config_from_json(const nlohmann::json& j, ModelConfig c = {}) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  if (j.contains("schema_version") && j["schema_version"].get<int>() != kConfigSchemaVersion)
    throw ConfigError("unsupported config schema_version " + j["schema_version"].dump());
  try {
    auto get = [](const nlohmann::json& o, const char* key, auto& field) {
      if (o.contains(key)) field = o[key].get<std::decay_t<decltype(field)>>();
    };
    get(j, "frame_height", c.frame_height);
    get(j, "frame_width", c.frame_width);
    get(j, "fps", c.fps);
    get(j, "k", c.k);
    get(j, "width_multiplier", c.width_multiplier);
    if (j.contains("audio")) {
      const auto& a = j["audio"];
      get(a, "sample_rate", c.audio.sample_rate);
      get(a, "channels", c.audio.channels);
      get(a, "kernels", c.audio.kernels);
      get(a, "strides", c.audio.strides);
      get(a, "ufm_after_block", c.audio.ufm_after_block);
      get(a, "ufm_heads", c.audio.ufm_heads);
      get(a, "ufm_kernel", c.audio.ufm_kernel);
    }
    if (j.contains("video")) {
      const auto& v = j["video"];
      if (v.contains("patch")) c.video.patch = extent_from_json(v["patch"], "video.patch");
      get(v, "dims", c.video.dims);
      get(v, "depths", c.video.depths);
      get(v, "heads", c.video.heads);
      if (v.contains("window")) c.video.window = extent_from_json(v["window"], "video.window");
      get(v, "mlp_ratio", c.video.mlp_ratio);
      get(v, "ufm_after_stage", c.video.ufm_after_stage);
      get(v, "ufm_heads", c.video.ufm_heads);
      if (v.contains("ufm_kernel")) c.video.ufm_kernel = extent_from_json(v["ufm_kernel"], "video.ufm_kernel");
    }
    if (j.contains("fusion")) {
      const auto& f = j["fusion"];
      get(f, "d_o", c.fusion.d_o);
      get(f, "heads", c.fusion.heads);
      get(f, "blocks", c.fusion.blocks);
      get(f, "mlp_ratio", c.fusion.mlp_ratio);
      get(f, "ufm_heads", c.fusion.ufm_heads);
      get(f, "ufm_kernel", c.fusion.ufm_kernel);
      get(f, "lattice_h", c.fusion.lattice_h);
      get(f, "lattice_w", c.fusion.lattice_w);
      get(f, "conv_kernel", c.fusion.conv_kernel);
      get(f, "channels", c.fusion.channels);
      if (f.contains("target")) c.fusion.target = extent_from_json(f["target"], "fusion.target");
    }
    if (j.contains("decoder")) {
      const auto& d = j["decoder"];
      if (d.contains("layers")) {
        if (!d["layers"].is_array() || d["layers"].size() != 6)
          throw ConfigError("decoder.layers must list exactly 6 layers");
        for (std::size_t i = 0; i < 6; ++i) {
          const auto& l = d["layers"][i];
          get(l, "channels", c.decoder.layers[i].channels);
          get(l, "kernel", c.decoder.layers[i].kernel);
          get(l, "divisor", c.decoder.layers[i].divisor);
        }
      }
      get(d, "deep_after", c.decoder.deep_after);
      get(d, "shallow_after", c.decoder.shallow_after);
    }
    if (j.contains("ablation")) {
      const auto& a = j["ablation"];
      get(a, "no_ufm", c.ablation.no_ufm);
      get(a, "no_inter", c.ablation.no_inter);
      if (a.contains("branch_mask")) {
        BranchMask m{false, false, false};
        for (const auto& b : a["branch_mask"]) {
          const auto s = b.get<std::string>();
          if (s == "high")
            m.high = true;
          else if (s == "low")
            m.low = true;
          else if (s == "channel")
            m.channel = true;
          else
            throw ConfigError("unknown UFM branch '" + s + "' (expected high, low, channel)");
        }
        c.ablation.branches = m;
      }
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      get(t, "seed", c.train.seed);
      get(t, "lr", c.train.lr);
      get(t, "beta1", c.train.beta1);
      get(t, "beta2", c.train.beta2);
      get(t, "adam_eps", c.train.adam_eps);
      get(t, "batch", c.train.batch);
      get(t, "steps", c.train.steps);
      get(t, "epochs", c.train.epochs);
      get(t, "kld_eps", c.train.kld_eps);
      get(t, "prefetch", c.train.prefetch);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.what());
  }
  return c;
}

}  // namespace npsnet
