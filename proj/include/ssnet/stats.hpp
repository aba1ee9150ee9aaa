#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "ssnet/volume.hpp"

namespace ssnet {

// 2|A n B| / (|A| + |B|); two empty masks agree perfectly (1.0).
inline double dsc(const Mask& a, const Mask& b) {
  require_same_dims(a, b, "dsc");
  std::size_t inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const bool x = a.data[i] != 0, y = b.data[i] != 0;
    inter += x && y;
    na += x;
    nb += y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

inline std::size_t voxel_count(const Mask& m) {
  return static_cast<std::size_t>(std::count_if(m.data.begin(), m.data.end(), [](auto v) { return v != 0; }));
}

inline double volume_cc(const Mask& m) {
  return static_cast<double>(voxel_count(m)) * m.voxel_mm3() / 1000.0;
}

struct Summary {
  double mean = 0, median = 0, std = 0, min = 0, max = 0;
  std::size_t n = 0;
};

// Sample standard deviation (n - 1); zero for a single value.
inline Summary summarize(std::span<const double> xs) {
  Summary s;
  s.n = xs.size();
  if (xs.empty()) return s;
  std::vector<double> v(xs.begin(), xs.end());
  std::sort(v.begin(), v.end());
  s.min = v.front();
  s.max = v.back();
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  const std::size_t h = v.size() / 2;
  s.median = v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
  if (v.size() > 1) {
    double ss = 0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

class TooFewPairsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct WilcoxonResult {
  double w = 0;       // min(W+, W-)
  double w_plus = 0;  // rank sum of positive differences (x - y)
  double p = 1;       // two-sided
  int n = 0;          // pairs after discarding zero differences
  bool exact = false;
};

// Largest n, after zero removal, that uses the exact null distribution.
inline constexpr int kWilcoxonExactMax = 12;

namespace detail {

// Signed ranks of the non-zero differences; ties share the mean rank.
inline std::vector<std::pair<double, bool>> signed_ranks(std::span<const double> x, std::span<const double> y) {
  std::vector<std::pair<double, bool>> d;  // (|diff|, positive)
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - y[i];
    if (diff != 0.0) d.push_back({std::abs(diff), diff > 0});
  }
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return d[a].first < d[b].first; });
  std::vector<std::pair<double, bool>> ranked(d.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && d[order[j + 1]].first == d[order[i]].first) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranked[order[k]] = {rank, d[order[k]].second};
    i = j + 1;
  }
  return ranked;
}

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace detail

// Two-sided Wilcoxon signed-rank test on paired samples. Zero differences are
// discarded. For n <= 12 the p-value is exact: the null distribution of W+
// over all 2^n sign assignments is counted by dynamic programming on doubled
// ranks (mean ranks of ties are half-integers). Larger n uses the normal
// approximation with tie and continuity corrections.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("wilcoxon: samples must be paired");
  const auto ranked = detail::signed_ranks(x, y);
  const int n = static_cast<int>(ranked.size());
  if (n < 5) throw TooFewPairsError("wilcoxon: need >= 5 non-zero differences, have " + std::to_string(n));
  WilcoxonResult r;
  r.n = n;
  double total = 0;
  for (const auto& [rank, pos] : ranked) {
    total += rank;
    if (pos) r.w_plus += rank;
  }
  r.w = std::min(r.w_plus, total - r.w_plus);

  if (n <= kWilcoxonExactMax) {
    r.exact = true;
    std::vector<int> doubled(n);
    int sum2 = 0;
    for (int i = 0; i < n; ++i) {
      doubled[i] = static_cast<int>(std::lround(2.0 * ranked[i].first));
      sum2 += doubled[i];
    }
    // counts[s] = number of sign vectors whose doubled W+ equals s.
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(sum2) + 1, 0);
    counts[0] = 1;
    for (int d : doubled)
      for (int s = sum2; s >= d; --s) counts[s] += counts[s - d];
    const int w2 = static_cast<int>(std::lround(2.0 * r.w));
    std::uint64_t extreme = 0;
    for (int s = 0; s <= sum2; ++s)
      if (std::min(s, sum2 - s) <= w2) extreme += counts[s];
    r.p = static_cast<double>(extreme) / std::ldexp(1.0, n);
    return r;
  }

  const double nd = n;
  const double mean = nd * (nd + 1) / 4.0;
  double tie = 0;
  std::vector<double> ranks;
  for (const auto& [rank, pos] : ranked) ranks.push_back(rank);
  std::sort(ranks.begin(), ranks.end());
  for (std::size_t i = 0; i < ranks.size();) {
    std::size_t j = i;
    while (j < ranks.size() && ranks[j] == ranks[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie += t * t * t - t;
    i = j;
  }
  const double var = nd * (nd + 1) * (2 * nd + 1) / 24.0 - tie / 48.0;
  const double dev = std::max(std::abs(r.w_plus - mean) - 0.5, 0.0);
  r.p = var > 0 ? std::min(1.0, 2.0 * detail::normal_sf(dev / std::sqrt(var))) : 1.0;
  return r;
}

}  // namespace ssnet
