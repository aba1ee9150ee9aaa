#include <gtest/gtest.h>

#include "ssnet/morphology.hpp"
#include "ssnet/stats.hpp"
#include "support/oracles.hpp"

using namespace ssnet;

namespace {

Mask random_mask(int n, double p, std::uint64_t seed) {
  Rng rng(seed);
  Mask m(Dims{n, n, n}, {2, 2, 2});
  for (auto& v : m.data) v = rng.uniform() < p ? 1 : 0;
  return m;
}

bool subset(const Mask& a, const Mask& b) {
  for (std::size_t i = 0; i < a.data.size(); ++i)
    if (a.data[i] && !b.data[i]) return false;
  return true;
}

}  // namespace

TEST(Morphology, ElementOffsets) {
  EXPECT_EQ(element_offsets(StructuringElement::Cross6, 1).size(), 7u);
  EXPECT_EQ(element_offsets(StructuringElement::Cube26, 1).size(), 27u);
  EXPECT_EQ(element_offsets(StructuringElement::Cross6, 2).size(), 25u);
  EXPECT_EQ(element_offsets(StructuringElement::Cube26, 2).size(), 125u);
}

TEST(Morphology, MatchesSetOracle) {
  std::uint64_t seed = 10;
  for (bool cross : {true, false})
    for (int r : {1, 2})
      for (double p : {0.3, 0.7}) {
        const Mask m = random_mask(9, p, seed++);
        const auto e = cross ? StructuringElement::Cross6 : StructuringElement::Cube26;
        const auto B = oracle::ball(cross, r);
        const auto X = oracle::to_set(m);
        EXPECT_EQ(dilate(m, e, r).data, oracle::to_mask(oracle::dilate(X, B), m).data);
        EXPECT_EQ(erode(m, e, r).data, oracle::to_mask(oracle::erode(X, B), m).data);
        EXPECT_EQ(open_mask(m, e, r).data, oracle::to_mask(oracle::dilate(oracle::erode(X, B), B), m).data);
        EXPECT_EQ(close_mask(m, e, r).data, oracle::to_mask(oracle::erode(oracle::dilate(X, B), B), m).data);
      }
}

TEST(Morphology, FusionMatchesSetOracle) {
  const Mask a = random_mask(10, 0.35, 1), b = random_mask(10, 0.35, 2), c = random_mask(10, 0.35, 3);
  for (bool cross : {true, false})
    for (auto [ro, rc] : {std::pair{1, 1}, std::pair{0, 2}, std::pair{2, 0}, std::pair{0, 0}}) {
      FusionConfig cfg;
      cfg.element = cross ? StructuringElement::Cross6 : StructuringElement::Cube26;
      cfg.open_radius = ro;
      cfg.close_radius = rc;
      EXPECT_EQ(fuse_views(a, b, c, cfg).data, oracle::fuse(a, b, c, cross, ro, rc).data)
          << cross << " " << ro << " " << rc;
    }
  FusionConfig bad;
  bad.open_radius = -1;
  EXPECT_THROW(fuse_views(a, b, c, bad), std::invalid_argument);
  EXPECT_THROW(union_masks(a, b, random_mask(9, 0.5, 4)), std::invalid_argument);
}

TEST(Morphology, OrderingAndIdempotence) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Mask m = random_mask(10, 0.5, 100 + seed);
    for (auto e : {StructuringElement::Cross6, StructuringElement::Cube26}) {
      const Mask o = open_mask(m, e, 1), c = close_mask(m, e, 1);
      EXPECT_TRUE(subset(o, m));
      EXPECT_TRUE(subset(m, c));
      EXPECT_EQ(open_mask(o, e, 1), o);
      EXPECT_EQ(close_mask(c, e, 1), c);
      EXPECT_TRUE(subset(erode(m, e, 1), m));
      EXPECT_TRUE(subset(m, dilate(m, e, 1)));
    }
  }
}

TEST(Morphology, ClosingFillsAOneVoxelHole) {
  Mask m(Dims{11, 11, 11});
  for (int z = 3; z < 8; ++z)
    for (int y = 3; y < 8; ++y)
      for (int x = 3; x < 8; ++x) m.at(z, y, x) = 1;
  m.at(5, 5, 5) = 0;
  const Mask c = close_mask(m, StructuringElement::Cross6, 1);
  EXPECT_EQ(c.at(5, 5, 5), 1);
  EXPECT_EQ(voxel_count(c), 125u);
  // Opening leaves the holed cube standing; a lone voxel goes away.
  Mask speck = m;
  speck.at(0, 0, 0) = 1;
  const Mask o = open_mask(speck, StructuringElement::Cross6, 1);
  EXPECT_EQ(o.at(0, 0, 0), 0);
  EXPECT_EQ(o.at(3, 4, 4), 1);
  EXPECT_EQ(close_mask(m, StructuringElement::Cross6, 0), m);
}

TEST(Morphology, HoledCubeThroughTheFullFusion) {
  // Opening runs first, so a 5^3 cube loses its rim (and the face centres
  // next to the hole) before the closing fills the hole; the output is not
  // the solid cube.
  Mask m(Dims{9, 9, 9});
  for (int z = 2; z < 7; ++z)
    for (int y = 2; y < 7; ++y)
      for (int x = 2; x < 7; ++x) m.at(z, y, x) = 1;
  m.at(4, 4, 4) = 0;
  const Mask out = fuse_views(m, m, m, FusionConfig{});
  EXPECT_EQ(out.data, oracle::fuse(m, m, m, true, 1, 1).data);
  EXPECT_EQ(out.at(4, 4, 4), 1);
  EXPECT_EQ(out.at(2, 2, 2), 0);
  EXPECT_EQ(out.at(2, 2, 4), 0);
  EXPECT_LT(voxel_count(out), 125u);
}

TEST(Morphology, ObjectsOnTheBorderSurviveClosing) {
  // The background outside the grid is empty, so closing never erodes edges.
  Mask m(Dims{6, 6, 6});
  for (auto& v : m.data) v = 1;
  EXPECT_EQ(close_mask(m, StructuringElement::Cube26, 2), m);
  EXPECT_EQ(voxel_count(open_mask(m, StructuringElement::Cube26, 1)), m.data.size());
}

TEST(Metrics, DiceAndVolume) {
  Mask a(Dims{2, 2, 2}, {2, 2, 2}), b(Dims{2, 2, 2}, {2, 2, 2});
  EXPECT_DOUBLE_EQ(dsc(a, b), 1.0);  // both empty
  a.data = {1, 1, 1, 1, 0, 0, 0, 0};
  EXPECT_DOUBLE_EQ(dsc(a, b), 0.0);
  b.data = {0, 0, 1, 1, 1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(dsc(a, b), 0.5);
  EXPECT_DOUBLE_EQ(dsc(a, b), dsc(b, a));
  EXPECT_DOUBLE_EQ(dsc(a, a), 1.0);
  EXPECT_DOUBLE_EQ(volume_cc(a), 4 * 8 / 1000.0);
  EXPECT_THROW(dsc(a, Mask(Dims{2, 2, 3})), std::invalid_argument);
}

TEST(Metrics, Summary) {
  const std::vector<double> v{0.9, 0.5, 0.7, 0.8};
  const Summary s = summarize(v);
  EXPECT_EQ(s.n, 4u);
  EXPECT_DOUBLE_EQ(s.mean, 0.725);
  EXPECT_DOUBLE_EQ(s.median, 0.75);
  EXPECT_DOUBLE_EQ(s.min, 0.5);
  EXPECT_DOUBLE_EQ(s.max, 0.9);
  EXPECT_NEAR(s.std, std::sqrt((0.0306250 + 0.0506250 + 0.000625 + 0.005625) / 3), 1e-12);
  const std::vector<double> one{0.42};
  EXPECT_DOUBLE_EQ(summarize(one).median, 0.42);
  EXPECT_DOUBLE_EQ(summarize(one).std, 0.0);
  EXPECT_EQ(summarize(std::vector<double>{}).n, 0u);
}

TEST(Wilcoxon, AllPositiveShiftOfEight) {
  const std::vector<double> x{1.5, 2.5, 3, 4.25, 5, 6, 7.5, 8}, y(8, 0.0);
  const auto r = wilcoxon_signed_rank(x, y);
  EXPECT_TRUE(r.exact);
  EXPECT_EQ(r.n, 8);
  EXPECT_DOUBLE_EQ(r.w, 0.0);
  EXPECT_DOUBLE_EQ(r.w_plus, 36.0);
  EXPECT_DOUBLE_EQ(r.p, 2.0 / 256.0);
}

TEST(Wilcoxon, ExactMatchesEnumerationOracle) {
  Rng rng(55);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 5 + static_cast<int>(rng.below(8));  // 5..12
    std::vector<double> x(n + 2), y(n + 2);
    for (int i = 0; i < n + 2; ++i) {
      // Coarse values force ties and some zero differences.
      x[i] = static_cast<double>(rng.below(6));
      y[i] = static_cast<double>(rng.below(6));
    }
    const auto o = oracle::wilcoxon_enumerate(x, y);
    if (o.n < 5) {
      EXPECT_THROW(wilcoxon_signed_rank(x, y), TooFewPairsError);
      continue;
    }
    if (o.n > kWilcoxonExactMax) continue;
    const auto r = wilcoxon_signed_rank(x, y);
    EXPECT_EQ(r.n, o.n);
    EXPECT_DOUBLE_EQ(r.w, o.w);
    EXPECT_DOUBLE_EQ(r.w_plus, o.w_plus);
    EXPECT_NEAR(r.p, o.p, 1e-12) << "trial " << trial;
  }
  // Tabulated: signed ranks with ties, W = 6 of n = 10.
  const std::vector<double> a{3, -1, 4, -1.5, 5, 9, -2, 6, 5, 3.5}, z(10, 0.0);
  EXPECT_NEAR(wilcoxon_signed_rank(a, z).p, 0.02734375, 1e-12);
}

TEST(Wilcoxon, DegenerateInputs) {
  const std::vector<double> x{0.8, 0.7, 0.9, 0.85, 0.75, 0.6};
  EXPECT_THROW(wilcoxon_signed_rank(x, x), TooFewPairsError);
  std::vector<double> y = x;
  y[0] += 0.1;
  y[1] += 0.1;
  EXPECT_THROW(wilcoxon_signed_rank(x, y), TooFewPairsError);
  EXPECT_THROW(wilcoxon_signed_rank(x, std::vector<double>{1, 2}), std::invalid_argument);
}

TEST(Wilcoxon, NormalApproximationAboveTwelvePairs) {
  // Reference from a standard statistics package (normal approximation with
  // tie and continuity corrections, zero differences dropped).
  const std::vector<double> x{91, 88, 93, 85, 90, 87, 92, 89, 94, 86, 95, 84, 90, 91, 83, 96};
  const std::vector<double> y{89, 87, 90, 86, 86, 85, 93, 84, 90, 86, 91, 85, 87, 88, 84, 90};
  const auto r = wilcoxon_signed_rank(x, y);
  EXPECT_FALSE(r.exact);
  EXPECT_EQ(r.n, 15);
  EXPECT_DOUBLE_EQ(r.w, 12.0);
  EXPECT_NEAR(r.p, 0.006652997520811857, 1e-9);
  // Heavy ties make the approximation coarse, but the 0.01 decision agrees.
  EXPECT_LT(oracle::wilcoxon_enumerate(x, y).p, 0.01);
  EXPECT_LT(r.p, 0.01);
}
