#pragma once

// Fixation-based saliency metrics.
//
// Fixations enter every metric as the set of distinct fixated pixels, so
// several observers landing on one pixel count once. Threshold comparisons
// use P >= tau throughout.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "npsnet/core/errors.hpp"
#include "npsnet/core/random.hpp"
#include "npsnet/types.hpp"

namespace npsnet {

namespace detail {

inline void require_same_extents(const SaliencyMap& p, const SaliencyMap& q, const char* metric) {
  if (!p.same_extents(q))
    throw DimensionError(std::string(metric) + ": map extents differ (" + std::to_string(p.height) + "x" +
                         std::to_string(p.width) + " vs " + std::to_string(q.height) + "x" + std::to_string(q.width) + ")");
}

// Exact test; a variance computed in floating point is rarely zero.
inline bool is_constant(const SaliencyMap& p) {
  const auto [lo, hi] = std::minmax_element(p.values.begin(), p.values.end());
  return lo == p.values.end() || *lo == *hi;
}

inline std::vector<std::size_t> fixated_pixels(const SaliencyMap& p, const FixationSet& f) {
  return f.clipped(p.height, p.width).pixels(p.width);
}

}  // namespace detail

// Mean z-score of P at the fixated pixels. Constant P scores 0.
inline std::optional<double> nss(const SaliencyMap& p, const FixationSet& f) {
  const auto px = detail::fixated_pixels(p, f);
  if (px.empty()) return std::nullopt;
  if (detail::is_constant(p)) return 0.0;
  const double n = static_cast<double>(p.size());
  double mean = 0;
  for (double v : p.values) mean += v;
  mean /= n;
  double var = 0;
  for (double v : p.values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  if (sd == 0) return 0.0;
  double acc = 0;
  for (auto i : px) acc += (p.values[i] - mean) / sd;
  return acc / static_cast<double>(px.size());
}

// Pearson correlation over pixels. A constant input scores 0.
inline double cc(const SaliencyMap& p, const SaliencyMap& q) {
  detail::require_same_extents(p, q, "cc");
  if (detail::is_constant(p) || detail::is_constant(q)) return 0.0;
  const double n = static_cast<double>(p.size());
  double mp = 0, mq = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    mp += p.values[i];
    mq += q.values[i];
  }
  mp /= n;
  mq /= n;
  double spq = 0, spp = 0, sqq = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = p.values[i] - mp, b = q.values[i] - mq;
    spq += a * b;
    spp += a * a;
    sqq += b * b;
  }
  if (spp == 0 || sqq == 0) return 0.0;
  return std::clamp(spq / std::sqrt(spp * sqq), -1.0, 1.0);
}

// Histogram intersection of the sum-normalized maps.
inline double sim(const SaliencyMap& p, const SaliencyMap& q) {
  detail::require_same_extents(p, q, "sim");
  double sp = 0, sq = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    sp += p.values[i];
    sq += q.values[i];
  }
  if (!(sp > 0) || !(sq > 0)) throw InputError("sim: map has zero total mass");
  double acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::min(p.values[i] / sp, q.values[i] / sq);
  return acc;
}

// Thresholds are the saliency values at fixated pixels. nullopt when there
// are no fixations or no non-fixated pixels.
inline std::optional<double> auc_judd(const SaliencyMap& p, const FixationSet& f) {
  const auto px = detail::fixated_pixels(p, f);
  const std::size_t n_pos = px.size(), n_pix = p.size();
  if (n_pos == 0 || n_pos == n_pix) return std::nullopt;
  std::vector<double> pos;
  for (auto i : px) pos.push_back(p.values[i]);
  std::sort(pos.begin(), pos.end(), std::greater<>());
  std::vector<double> all = p.values;
  std::sort(all.begin(), all.end(), std::greater<>());

  // Walk thresholds from high to low; both lists are sorted descending.
  double area = 0, prev_fpr = 0, prev_tpr = 0;
  std::size_t above_all = 0, above_pos = 0;
  for (std::size_t i = 0; i < n_pos;) {
    const double tau = pos[i];
    while (above_pos < n_pos && pos[above_pos] >= tau) ++above_pos;
    while (above_all < n_pix && all[above_all] >= tau) ++above_all;
    i = above_pos;
    const double tpr = static_cast<double>(above_pos) / static_cast<double>(n_pos);
    const double fpr = static_cast<double>(above_all - above_pos) / static_cast<double>(n_pix - n_pos);
    area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2;
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  area += (1 - prev_fpr) * (1 + prev_tpr) / 2;
  return area;
}

// Draws one negative pixel per positive, with replacement, from the pool's
// fixations that fall inside the map and off the positive pixels.
inline std::vector<std::size_t> sample_negatives(const SaliencyMap& p, const std::vector<std::size_t>& positives,
                                                 const std::vector<FixationSet>& pool, Rng& rng) {
  std::vector<std::size_t> candidates;
  for (const auto& set : pool)
    for (std::size_t i : set.clipped(p.height, p.width).pixels(p.width))
      if (!std::binary_search(positives.begin(), positives.end(), i)) candidates.push_back(i);
  if (candidates.empty()) throw InputError("s_auc: shuffle pool holds no usable negative fixations");
  std::vector<std::size_t> out(positives.size());
  for (auto& o : out) o = candidates[rng.below(candidates.size())];
  return out;
}

// Area under the ROC curve with thresholds at every distinct value; equals
// the probability that a positive outranks a negative, ties counted half.
inline double roc_auc(std::vector<double> pos, std::vector<double> neg) {
  if (pos.empty() || neg.empty()) throw UsageError("roc_auc needs positives and negatives");
  std::sort(neg.begin(), neg.end());
  double wins = 0;
  for (double v : pos) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), v);
    const auto hi = std::upper_bound(lo, neg.end(), v);
    wins += static_cast<double>(lo - neg.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

// Shuffled AUC: negatives come from other videos' fixations, which share the
// viewing center bias, so a pure center prior scores near 0.5.
inline std::optional<double> s_auc(const SaliencyMap& p, const FixationSet& f, const std::vector<FixationSet>& pool,
                                   std::size_t trials, std::uint64_t seed) {
  if (trials == 0) throw ConfigError("s_auc: trials must be >= 1");
  if (pool.empty()) throw InputError("s_auc: shuffle pool is empty");
  const auto px = detail::fixated_pixels(p, f);
  if (px.empty()) return std::nullopt;
  std::vector<double> pos;
  for (auto i : px) pos.push_back(p.values[i]);
  Rng rng(seed);
  double acc = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<double> neg;
    for (auto i : sample_negatives(p, px, pool, rng)) neg.push_back(p.values[i]);
    acc += roc_auc(pos, neg);
  }
  return acc / static_cast<double>(trials);
}

// ---------------------------------------------------------------- aggregation

struct MetricValues {
  double auc_j = 0, sim = 0, s_auc = 0, cc = 0, nss = 0;
};

// Running frame-weighted mean.
struct MetricAccumulator {
  MetricValues sum;
  std::size_t frames = 0;

  void add(const MetricValues& v, std::size_t weight = 1) {
    const double w = static_cast<double>(weight);
    sum.auc_j += w * v.auc_j;
    sum.sim += w * v.sim;
    sum.s_auc += w * v.s_auc;
    sum.cc += w * v.cc;
    sum.nss += w * v.nss;
    frames += weight;
  }

  MetricValues mean() const {
    if (frames == 0) return {};
    const double n = static_cast<double>(frames);
    return {sum.auc_j / n, sum.sim / n, sum.s_auc / n, sum.cc / n, sum.nss / n};
  }
};

struct DomainResult {
  std::string domain;
  std::size_t frames = 0;
  MetricValues values;
};

// Frame-count-weighted mean across domains.
inline MetricValues aggregate(const std::vector<DomainResult>& parts) {
  MetricAccumulator acc;
  for (const auto& d : parts) acc.add(d.values, d.frames);
  if (acc.frames == 0) throw InputError("aggregate: no frames to weight");
  return acc.mean();
}

// All five metrics for one frame; nullopt when the frame has no usable
// fixations. `gt` is the rendered ground-truth map.
inline std::optional<MetricValues> evaluate_frame(const SaliencyMap& pred, const SaliencyMap& gt, const FixationSet& f,
                                                  const std::vector<FixationSet>& pool, std::size_t trials,
                                                  std::uint64_t seed) {
  detail::require_same_extents(pred, gt, "evaluate_frame");
  const auto aj = auc_judd(pred, f);
  if (!aj) return std::nullopt;
  const auto sa = s_auc(pred, f, pool, trials, seed);
  return MetricValues{*aj, sim(pred, gt), *sa, cc(pred, gt), *nss(pred, f)};
}

}  // namespace npsnet
