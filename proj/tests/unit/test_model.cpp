#include <gtest/gtest.h>

#include <cmath>

#include "npsnet/model/npsnet.hpp"
#include "support/gradcheck.hpp"

using namespace npsnet;
using npsnet::testing::random_tensor;

namespace {

struct Clip {
  Tensor<float> frames;
  Tensor<float> audio;
};

Clip random_clip(const NPSNet<float>& net, std::uint64_t seed) {
  const auto& c = net.config();
  Rng rng(seed);
  std::vector<float> f(c.k * 3 * c.frame_height * c.frame_width);
  for (auto& v : f) v = static_cast<float>(rng.uniform());
  Waveform w;
  w.sample_rate = c.audio.sample_rate;
  w.samples.resize(c.audio_samples());
  for (auto& v : w.samples) v = rng.uniform(-1, 1);
  return {Tensor<float>(Shape{c.k, 3, c.frame_height, c.frame_width}, f), net.audio_tensor(w)};
}

}  // namespace

TEST(Model, FixtureForwardProducesUnitIntervalMap) {
  ParamStore<float> store(7);
  auto net = NPSNet<float>::create(store, ModelConfig::fixture());
  auto clip = random_clip(net, 1);
  auto map = net(clip.frames, clip.audio);
  ASSERT_EQ(map.shape(), (Shape{32, 56}));
  for (float v : map.values()) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
}

TEST(Model, BackwardReachesEveryParameter) {
  ParamStore<float> store(7);
  auto net = NPSNet<float>::create(store, ModelConfig::fixture());
  auto clip = random_clip(net, 2);
  for (auto& p : store.params()) p.tensor.set_requires_grad(true);
  Tape<float> tape;
  TapeScope<float> scope(tape);
  auto map = net(clip.frames, clip.audio);
  Rng rng(3);
  std::vector<float> q(map.numel());
  for (auto& v : q) v = static_cast<float>(rng.uniform());
  auto loss = kld_loss(map, Tensor<float>(map.shape(), q));
  tape.backward(loss);
  for (auto& p : store.params()) EXPECT_TRUE(p.tensor.has_grad()) << p.name;
}
