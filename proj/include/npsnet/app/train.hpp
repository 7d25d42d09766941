#pragma once

// Mini-batch KLD training with a loader thread running ahead of the
// optimizer through a bounded queue. The sample order is fixed by the seed
// (one seeded shuffle per epoch), so runs are reproducible bit for bit.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <sstream>
#include <thread>
#include <vector>

#include <json.hpp>

#include "npsnet/app/dataset.hpp"
#include "npsnet/app/queue.hpp"
#include "npsnet/core/adam.hpp"
#include "npsnet/core/checkpoint.hpp"
#include "npsnet/model/npsnet.hpp"

namespace npsnet {

struct TrainOutcome {
  std::vector<double> losses;  // mean batch loss per optimizer step
  double final_kld = 0;        // mean KLD over the training samples after the last step
  std::size_t param_count = 0;
  std::size_t samples = 0;
  std::size_t steps = 0;
  std::size_t prefetch_high_water = 0;
  double wall_seconds = 0;
};

struct TrainHooks {
  std::function<void(std::size_t step, double loss)> on_step;
};

// Sample order for `steps` batches of size `batch`.
inline std::vector<std::vector<SampleRef>> batch_schedule(const std::vector<SampleRef>& samples, std::size_t batch,
                                                          std::size_t steps, std::uint64_t seed) {
  std::vector<std::vector<SampleRef>> out;
  std::vector<SampleRef> order;
  std::size_t pos = 0, epoch = 0;
  for (std::size_t s = 0; s < steps; ++s) {
    std::vector<SampleRef> b;
    while (b.size() < batch) {
      if (pos == order.size()) {
        order = samples;
        Rng rng = named_rng(seed, "epoch/" + std::to_string(epoch++));
        rng.shuffle(order.begin(), order.end());
        pos = 0;
      }
      b.push_back(order[pos++]);
    }
    out.push_back(std::move(b));
  }
  return out;
}

inline std::size_t total_steps(const TrainConfig& t, std::size_t samples) {
  if (t.epochs == 0) return t.steps;
  return t.epochs * ((samples + t.batch - 1) / t.batch);
}

// Trains `net` in place. The loader must outlive the call.
inline TrainOutcome train_model(NPSNet<float>& net, ParamStore<float>& store, ClipLoader& loader, const TrainHooks& hooks = {}) {
  const ModelConfig& cfg = net.config();
  const auto start = std::chrono::steady_clock::now();
  const auto refs = loader.samples();
  if (refs.empty()) throw InputError("no training samples: every video needs >= k frames and fixations on its target frames");
  TrainOutcome out;
  out.samples = refs.size();
  out.steps = total_steps(cfg.train, refs.size());
  out.param_count = store.count();
  const auto schedule = batch_schedule(refs, cfg.train.batch, out.steps, cfg.train.seed);

  BoundedQueue<std::vector<ClipSample>> queue(cfg.train.prefetch);
  std::thread producer([&] {
    try {
      for (const auto& b : schedule) {
        std::vector<ClipSample> batch;
        for (const auto& r : b) batch.push_back(loader.load(r));
        if (!queue.push(std::move(batch))) return;
      }
      queue.close();
    } catch (...) {
      queue.fail(std::current_exception());
    }
  });
  struct Joiner {
    std::thread& t;
    BoundedQueue<std::vector<ClipSample>>& q;
    ~Joiner() {
      q.cancel();
      if (t.joinable()) t.join();
    }
  } joiner{producer, queue};

  Adam<float> opt(store, AdamConfig{cfg.train.lr, cfg.train.beta1, cfg.train.beta2, cfg.train.adam_eps});
  for (std::size_t step = 1; step <= out.steps; ++step) {
    auto batch = queue.pop();
    if (!batch) throw Error("training data ended early at step " + std::to_string(step));
    store.zero_grad();
    double batch_loss = 0;
    for (const auto& s : *batch) {
      Tape<float> tape;
      TapeScope<float> scope(tape);
      const Tensor<float> pred = net(s.input);
      const Tensor<float> gt(Shape{s.gt.height, s.gt.width}, std::vector<float>(s.gt.values.begin(), s.gt.values.end()));
      const Tensor<float> loss = kld_loss(pred, gt, cfg.train.kld_eps);
      const double v = loss.item();
      if (!std::isfinite(v))
        throw NumericError("non-finite loss at step " + std::to_string(step) + " (video " + s.video_id + ", frame " +
                           std::to_string(s.frame) + ")");
      batch_loss += v;
      tape.backward(scale(loss, 1.0f / static_cast<float>(batch->size())));
    }
    opt.step();
    batch_loss /= static_cast<double>(batch->size());
    out.losses.push_back(batch_loss);
    if (hooks.on_step) hooks.on_step(step, batch_loss);
  }
  producer.join();  // it has handed over every batch; the loader is ours again
  out.prefetch_high_water = queue.high_water();

  double kld_sum = 0;
  for (const auto& r : refs) {
    const ClipSample s = loader.load(r);
    const Tensor<float> pred = net(s.input);
    kld_sum += kld(SaliencyMap(s.gt.height, s.gt.width, std::vector<double>(pred.values().begin(), pred.values().end())), s.gt,
                   cfg.train.kld_eps);
  }
  out.final_kld = kld_sum / static_cast<double>(refs.size());
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

inline std::string format_loss_curve(const std::vector<double>& losses) {
  std::ostringstream out;
  out << "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", i + 1, losses[i]);
    out << buf;
  }
  return out.str();
}

inline double params_in_millions(std::size_t n) { return std::round(static_cast<double>(n) / 1e5) / 10.0; }

inline nlohmann::json run_record(const ModelConfig& cfg, const TrainOutcome& o) {
  return {{"schema_version", 1},
          {"config", to_json(cfg)},
          {"steps", o.steps},
          {"samples", o.samples},
          {"losses", o.losses},
          {"wall_seconds", o.wall_seconds},
          {"param_count", o.param_count},
          {"param_count_m", params_in_millions(o.param_count)},
          {"prefetch_high_water", o.prefetch_high_water},
          {"final", {{"loss", o.losses.empty() ? 0.0 : o.losses.back()}, {"kld", o.final_kld}}}};
}

}  // namespace npsnet
