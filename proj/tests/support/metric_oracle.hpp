#pragma once

// Brute-force reference metrics. Written for clarity rather than speed:
// threshold sweeps and pairwise comparisons are enumerated directly, in long
// double, so they share no code path with the library versions.

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "npsnet/eval/metrics.hpp"

namespace npsnet::testing {

using Real = long double;

inline std::set<std::size_t> oracle_fixated(std::size_t h, std::size_t w, const FixationSet& f) {
  std::set<std::size_t> out;
  for (const auto& p : f.points)
    if (p.x >= 0 && p.y >= 0 && static_cast<std::size_t>(p.x) < w && static_cast<std::size_t>(p.y) < h)
      out.insert(static_cast<std::size_t>(p.y) * w + static_cast<std::size_t>(p.x));
  return out;
}

// A map with a single distinct value has no spread; z-scores and
// correlations are defined as 0 for it.
inline bool oracle_constant(const SaliencyMap& p) { return std::set<double>(p.values.begin(), p.values.end()).size() <= 1; }

inline Real oracle_nss(const SaliencyMap& p, const FixationSet& f) {
  const auto fix = oracle_fixated(p.height, p.width, f);
  if (oracle_constant(p)) return 0;
  Real mean = 0;
  for (double v : p.values) mean += v;
  mean /= static_cast<Real>(p.values.size());
  Real ss = 0;
  for (double v : p.values) ss += (v - mean) * (v - mean);
  const Real sd = std::sqrt(ss / static_cast<Real>(p.values.size()));
  if (sd == 0) return 0;
  Real acc = 0;
  for (auto i : fix) acc += (p.values[i] - mean) / sd;
  return acc / static_cast<Real>(fix.size());
}

inline Real oracle_cc(const SaliencyMap& p, const SaliencyMap& q) {
  if (oracle_constant(p) || oracle_constant(q)) return 0;
  const Real n = static_cast<Real>(p.values.size());
  Real sp = 0, sq = 0, spp = 0, sqq = 0, spq = 0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const Real a = p.values[i], b = q.values[i];
    sp += a;
    sq += b;
    spp += a * a;
    sqq += b * b;
    spq += a * b;
  }
  const Real cov = spq / n - (sp / n) * (sq / n);
  const Real vp = spp / n - (sp / n) * (sp / n), vq = sqq / n - (sq / n) * (sq / n);
  if (vp <= 0 || vq <= 0) return 0;
  return cov / std::sqrt(vp * vq);
}

inline Real oracle_sim(const SaliencyMap& p, const SaliencyMap& q) {
  Real sp = 0, sq = 0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    sp += p.values[i];
    sq += q.values[i];
  }
  Real acc = 0;
  for (std::size_t i = 0; i < p.values.size(); ++i) acc += std::min(p.values[i] / sp, q.values[i] / sq);
  return acc;
}

// ROC points at each distinct fixated value, from (0,0) to (1,1), trapezoids.
inline Real oracle_auc_judd(const SaliencyMap& p, const FixationSet& f) {
  const auto fix = oracle_fixated(p.height, p.width, f);
  std::set<double, std::greater<>> thresholds;
  for (auto i : fix) thresholds.insert(p.values[i]);
  std::vector<std::pair<Real, Real>> roc{{0, 0}};
  const Real n_pos = static_cast<Real>(fix.size()), n_neg = static_cast<Real>(p.values.size() - fix.size());
  for (double tau : thresholds) {
    Real tp = 0, fp = 0;
    for (std::size_t i = 0; i < p.values.size(); ++i)
      if (p.values[i] >= tau) (fix.count(i) ? tp : fp) += 1;
    roc.push_back({fp / n_neg, tp / n_pos});
  }
  roc.push_back({1, 1});
  Real area = 0;
  for (std::size_t i = 1; i < roc.size(); ++i)
    area += (roc[i].first - roc[i - 1].first) * (roc[i].second + roc[i - 1].second) / 2;
  return area;
}

// Probability that a positive outranks a negative, ties half, all pairs.
inline Real oracle_pairwise_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  Real wins = 0;
  for (double a : pos)
    for (double b : neg) wins += a > b ? 1 : (a == b ? 0.5L : 0);
  return wins / (static_cast<Real>(pos.size()) * static_cast<Real>(neg.size()));
}

// Same sampling protocol as the library: candidates are the pool's distinct
// in-bounds pixels per set, in pool order, minus positives; one uniform draw
// per positive per trial from Rng(seed).
inline Real oracle_s_auc(const SaliencyMap& p, const FixationSet& f, const std::vector<FixationSet>& pool,
                         std::size_t trials, std::uint64_t seed) {
  const auto fix = oracle_fixated(p.height, p.width, f);
  std::vector<std::size_t> candidates;
  for (const auto& set : pool)
    for (auto i : oracle_fixated(p.height, p.width, set))
      if (!fix.count(i)) candidates.push_back(i);
  std::vector<double> pos;
  for (auto i : fix) pos.push_back(p.values[i]);
  Rng rng(seed);
  Real acc = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<double> neg;
    for (std::size_t j = 0; j < fix.size(); ++j) neg.push_back(p.values[candidates[rng.below(candidates.size())]]);
    acc += oracle_pairwise_auc(pos, neg);
  }
  return acc / static_cast<Real>(trials);
}

struct OracleReport {
  std::size_t cases = 0;
  double max_error = 0;
  std::vector<std::string> failures;
};

namespace detail {

inline SaliencyMap random_map(Rng& rng, std::size_t h, std::size_t w) {
  SaliencyMap m(h, w, 0.0);
  const bool quantized = rng.below(3) == 0;  // many ties
  for (auto& v : m.values) v = quantized ? static_cast<double>(rng.below(4)) / 3.0 : rng.uniform();
  if (rng.below(10) == 0) m.values[rng.below(m.values.size())] += 5.0;  // an outlier
  m.values[rng.below(m.values.size())] += 1.0 / 3.0;                     // positive mass
  return m;
}

inline FixationSet random_fixations(Rng& rng, std::size_t h, std::size_t w, std::size_t max_points) {
  FixationSet f;
  const std::size_t n = 1 + rng.below(max_points);
  for (std::size_t i = 0; i < n; ++i) {
    // Mostly in bounds, some duplicates and some outside the map.
    const auto x = static_cast<std::int64_t>(rng.below(w + 2)) - 1, y = static_cast<std::int64_t>(rng.below(h + 2)) - 1;
    f.points.push_back({x, y, static_cast<std::int64_t>(rng.below(5))});
  }
  f.points.push_back({static_cast<std::int64_t>(rng.below(w)), static_cast<std::int64_t>(rng.below(h)), 0});
  return f;
}

}  // namespace detail

struct OracleCaseShape {
  std::size_t min_side = 1, max_side = 10;
  bool square = false;
  std::size_t max_fixations = 0;  // 0: up to one per pixel
};

// 3x3 and 4x4 maps with at most three fixations.
inline constexpr OracleCaseShape kSmallOracleCases{3, 4, true, 3};

// Compares every library metric against the oracle on `cases` random maps.
inline OracleReport run_metric_oracle_cases(std::size_t cases, std::uint64_t seed, double tol = 1e-9,
                                            OracleCaseShape shape = {}) {
  OracleReport rep;
  Rng rng(seed);
  auto check = [&](std::size_t c, const char* metric, double got, Real want) {
    const double err = std::fabs(got - static_cast<double>(want));
    rep.max_error = std::max(rep.max_error, err);
    if (!(err <= tol))
      rep.failures.push_back("case " + std::to_string(c) + " " + metric + ": " + std::to_string(got) + " vs oracle " +
                             std::to_string(static_cast<double>(want)));
  };
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t span = shape.max_side - shape.min_side + 1;
    const std::size_t h = shape.min_side + rng.below(span);
    const std::size_t w = shape.square ? h : std::max<std::size_t>(2, shape.min_side + rng.below(span));
    const SaliencyMap p = detail::random_map(rng, h, w), q = detail::random_map(rng, h, w);
    const FixationSet f = detail::random_fixations(rng, h, w, shape.max_fixations ? shape.max_fixations - 1 : h * w);
    std::vector<FixationSet> pool;
    const std::size_t pool_sets = 1 + rng.below(4);
    for (std::size_t i = 0; i < pool_sets; ++i) pool.push_back(detail::random_fixations(rng, h, w, 2 * h * w));
    // Guarantee at least one usable negative.
    for (std::size_t i = 0; i < h * w; ++i)
      if (!oracle_fixated(h, w, f).count(i)) {
        pool.back().points.push_back({static_cast<std::int64_t>(i % w), static_cast<std::int64_t>(i / w), 9});
        break;
      }
    const std::size_t trials = 1 + rng.below(5);
    const std::uint64_t s = rng.next_u64();

    check(c, "nss", nss(p, f).value_or(NAN), oracle_nss(p, f));
    check(c, "cc", cc(p, q), oracle_cc(p, q));
    check(c, "sim", sim(p, q), oracle_sim(p, q));
    const bool has_negatives = oracle_fixated(h, w, f).size() < h * w;
    const auto aj = auc_judd(p, f);
    if (has_negatives)
      check(c, "auc_judd", aj.value_or(NAN), oracle_auc_judd(p, f));
    else if (aj)
      rep.failures.push_back("case " + std::to_string(c) + " auc_judd: value without negatives");
    if (has_negatives) check(c, "s_auc", s_auc(p, f, pool, trials, s).value_or(NAN), oracle_s_auc(p, f, pool, trials, s));
    ++rep.cases;
  }
  return rep;
}

}  // namespace npsnet::testing
