#pragma once

// Full audio-visual saliency network.
//
//   audio  -> Hanning window -> AudioNet            -> h_a [k, d_a]
//   frames -> VideoNet                              -> h_v [k, d_v], taps
//   A = bilinear(h_a, h_v) + MCA(h_v, h_a)          (or Linear(h_v) with no_inter)
//   A -> fusion UFM (1-D over k) -> FusionEncoder   -> [C_f, T_f, H_f, W_f]
//   Decoder(features, taps)                         -> [H, W] in (0, 1)

#include <optional>
#include <string>
#include <vector>

#include "npsnet/model/config.hpp"
#include "npsnet/model/encoders.hpp"
#include "npsnet/model/fusion.hpp"
#include "npsnet/model/head.hpp"
#include "npsnet/model/ufm.hpp"

namespace npsnet {

// One training/inference clip: k RGB frames in [0, 1] and the matching audio.
struct ClipInput {
  Tensor<float> frames;  // [k, 3, H, W]
  Waveform audio;
};

template <class T>
class NPSNet {
 public:
  NPSNet() = default;

  static NPSNet create(ParamStore<T>& store, const ModelConfig& cfg) {
    cfg.validate();
    NPSNet m;
    m.cfg_ = cfg;
    m.audio_ = AudioNet<T>::create(store, cfg);
    m.video_ = VideoNet<T>::create(store, cfg);
    const std::size_t d_a = m.audio_.d_a(), d_v = m.video_.d_v(), d_o = cfg.fusion.d_o;
    if (cfg.ablation.no_inter) {
      m.video_proj_ = nn::Linear<T>::create(store, "fusion.video_proj", d_v, d_o);
    } else {
      m.bilinear_ = BilinearParams<T>::create(store, "fusion.bilinear", d_a, d_o, d_v);
      m.mca_ = nn::MultiHeadAttention<T>::create(store, "fusion.mca", d_v, d_a, d_o, d_o, cfg.fusion.heads);
    }
    if (!cfg.ablation.no_ufm) {
      UfmConfig u;
      u.d_model = d_o;
      u.heads = cfg.fusion.ufm_heads;
      u.kernel = {cfg.fusion.ufm_kernel};
      u.spatial_rank = 1;
      u.branches = cfg.ablation.branches;
      m.fusion_ufm_ = Ufm<T>::create(store, "ufm.fusion", u);
    }
    m.fusion_ = FusionEncoder<T>::create(store, cfg.fusion);
    m.decoder_ = Decoder<T>::create(store, cfg, m.video_.dims().front(), m.video_.dims().back());
    return m;
  }

  const ModelConfig& config() const { return cfg_; }
  const AudioNet<T>& audio() const { return audio_; }
  const VideoNet<T>& video() const { return video_; }
  const FusionEncoder<T>& fusion() const { return fusion_; }
  const Decoder<T>& decoder() const { return decoder_; }

  // Interaction stage: [k, d_o].
  Tensor<T> affinity(const Tensor<T>& h_a, const Tensor<T>& h_v) const {
    if (video_proj_) return (*video_proj_)(h_v);
    return fuse_affinity(bilinear_affinity(h_a, h_v, *bilinear_), (*mca_)(h_v, h_a));
  }

  // Pre-logistic saliency [H, W].
  Tensor<T> logits(const Tensor<T>& frames, const Tensor<T>& windowed_audio) const {
    if (frames.rank() != 4 || frames.shape()[0] != cfg_.k || frames.shape()[2] != cfg_.frame_height ||
        frames.shape()[3] != cfg_.frame_width)
      throw DimensionError("clip frames must be [" + std::to_string(cfg_.k) + ",3," + std::to_string(cfg_.frame_height) + "," +
                           std::to_string(cfg_.frame_width) + "], got " + to_string(frames.shape()));
    Tensor<T> h_a = audio_(windowed_audio);
    auto [h_v, taps] = video_(frames);
    Tensor<T> a = affinity(h_a, h_v);
    if (fusion_ufm_) a = (*fusion_ufm_)(TokenMap<T>{a, {cfg_.k}}).tokens;
    return decoder_.logits(fusion_(a), taps);
  }

  Tensor<T> operator()(const Tensor<T>& frames, const Tensor<T>& windowed_audio) const {
    return sigmoid(logits(frames, windowed_audio));
  }

  // Convenience entry: windows the waveform and converts precision.
  Tensor<T> operator()(const ClipInput& clip) const { return (*this)(frames_tensor(clip), audio_tensor(clip.audio)); }

  Tensor<T> frames_tensor(const ClipInput& clip) const {
    const auto v = clip.frames.values();
    return Tensor<T>(clip.frames.shape(), std::vector<T>(v.begin(), v.end()));
  }

  Tensor<T> audio_tensor(const Waveform& w) const {
    if (w.sample_rate != cfg_.audio.sample_rate)
      throw InputError("waveform sample rate " + std::to_string(w.sample_rate) + " differs from the configured " +
                       std::to_string(cfg_.audio.sample_rate));
    const Waveform win = hanning_window(w);
    const Shape shape{win.samples.size()};
    return Tensor<T>(shape, std::vector<T>(win.samples.begin(), win.samples.end()));
  }

 private:
  ModelConfig cfg_;
  AudioNet<T> audio_;
  VideoNet<T> video_;
  std::optional<BilinearParams<T>> bilinear_;
  std::optional<nn::MultiHeadAttention<T>> mca_;
  std::optional<nn::Linear<T>> video_proj_;
  std::optional<Ufm<T>> fusion_ufm_;
  FusionEncoder<T> fusion_;
  Decoder<T> decoder_;
};

}  // namespace npsnet
