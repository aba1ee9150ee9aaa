#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "ssnet/phantom.hpp"
#include "ssnet/stats.hpp"

using namespace ssnet;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

double mask_cc(const Mask& m) {
  std::size_t n = 0;
  for (auto v : m.data) n += v != 0;
  return static_cast<double>(n) * m.voxel_mm3() / 1000.0;
}

PhantomConfig feasible(double cc, std::uint64_t seed) {
  PhantomConfig c;
  c.target_volume_cc = cc;
  c.seed = seed;
  const double sp = std::max(4.0, min_feasible_spacing(c) * 1.001);
  c.spacing_mm = {sp, sp, sp};
  return c;
}

double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2 * kPi); }
double Phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST(Phantom, UndeformedShapeIsASphere) {
  PhantomConfig c;
  c.deformation = 0;
  c.anisotropy = 0;
  c.distractor_count = 0;
  c.target_volume_cc = 1000;
  const SpleenShape s = draw_spleen_shape(c);
  EXPECT_NEAR(s.unit_volume(), 4.0 * kPi / 3.0, 1e-9);
  const double r = std::cbrt(1000e3 * 3 / (4 * kPi));
  EXPECT_NEAR(s.radius_mm, r, 1e-6);
  const PhantomScan scan = generate_phantom(c);
  EXPECT_NEAR(mask_cc(scan.mask), 1000.0, 1000.0 * 0.02);
}

TEST(Phantom, VoxelVolumeMatchesAnalyticVolume) {
  std::uint64_t seed = 1;
  for (double cc : {kMinSpleenCc, 900.0, kMeanSpleenCc, 3500.0, kMaxSpleenCc}) {
    const PhantomConfig c = feasible(cc, seed++);
    const PhantomScan scan = generate_phantom(c);
    EXPECT_DOUBLE_EQ(scan.analytic_volume_cc, cc);
    EXPECT_NEAR(mask_cc(scan.mask), cc, 0.05 * cc) << "target " << cc;
    EXPECT_NEAR(volume_cc(scan.mask), mask_cc(scan.mask), 1e-9);
  }
}

TEST(Phantom, SpleenKeepsFaceMargin) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const PhantomScan scan = generate_phantom(feasible(kMaxSpleenCc, seed));
    const int n = scan.mask.dims.z;
    for (int z = 0; z < n; ++z)
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
          if (scan.mask.at(z, y, x)) {
            for (int v : {z, y, x}) {
              EXPECT_GE(v, kFaceMargin);
              EXPECT_LE(v, n - 1 - kFaceMargin);
            }
          }
  }
}

TEST(Phantom, DeterministicPerSeed) {
  const PhantomConfig c = feasible(1500, 77);
  const PhantomScan a = generate_phantom(c), b = generate_phantom(c);
  EXPECT_EQ(a.volume, b.volume);
  EXPECT_EQ(a.mask, b.mask);
  PhantomConfig d = c;
  d.seed = 78;
  EXPECT_NE(generate_phantom(d).mask, a.mask);
  // Texture settings do not move the geometry.
  PhantomConfig quiet = c;
  quiet.noise_sigma = 0;
  quiet.bias_strength = 0;
  quiet.distractor_count = 0;
  EXPECT_EQ(generate_phantom(quiet).mask, a.mask);
}

TEST(Phantom, ContrastModes) {
  PhantomConfig c = feasible(2000, 5);
  c.noise_sigma = 0;
  c.bias_strength = 0;
  c.distractor_count = 0;
  for (Contrast mode : {Contrast::T1, Contrast::T2}) {
    c.contrast_mode = mode;
    const PhantomScan s = generate_phantom(c);
    EXPECT_EQ(s.volume.contrast, mode);
    EXPECT_EQ(s.mask.contrast, mode);
    const float spleen = mode == Contrast::T2 ? 0.8f : 0.2f;
    for (std::size_t i = 0; i < s.volume.data.size(); ++i)
      EXPECT_FLOAT_EQ(s.volume.data[i], s.mask.data[i] ? spleen : 0.5f);
  }
}

TEST(Phantom, NoiseAndBiasHaveRequestedScale) {
  PhantomConfig c = feasible(2000, 9);
  c.distractor_count = 0;
  c.bias_strength = 0;
  c.noise_sigma = 0.1;
  const PhantomScan s = generate_phantom(c);
  double sum = 0, ss = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < s.volume.data.size(); ++i)
    if (!s.mask.data[i]) {
      const double d = s.volume.data[i] - 0.5;
      sum += d;
      ss += d * d;
      ++n;
    }
  EXPECT_NEAR(sum / n, 0.0, 0.002);
  EXPECT_NEAR(std::sqrt(ss / n), 0.1 * 0.3, 0.002);

  c.noise_sigma = 0;
  c.bias_strength = 0.2;
  const PhantomScan b = generate_phantom(c);
  double lo = 1e9, hi = -1e9;
  for (std::size_t i = 0; i < b.volume.data.size(); ++i) {
    const double g = b.volume.data[i] / (b.mask.data[i] ? 0.8 : 0.5);
    lo = std::min(lo, g);
    hi = std::max(hi, g);
  }
  EXPECT_LE(hi, 1.2 + 1e-6);
  EXPECT_GE(lo, 0.8 - 1e-6);
  EXPECT_NEAR(std::max(hi - 1, 1 - lo), 0.2, 1e-6);
}

TEST(Phantom, DistractorsStayOffTheSpleen) {
  PhantomConfig c = feasible(1200, 11);
  c.noise_sigma = 0;
  c.bias_strength = 0;
  c.distractor_count = 6;
  const PhantomScan s = generate_phantom(c);
  std::size_t blob = 0;
  for (std::size_t i = 0; i < s.volume.data.size(); ++i) {
    if (s.mask.data[i]) {
      EXPECT_FLOAT_EQ(s.volume.data[i], 0.8f);
    } else if (s.volume.data[i] != 0.5f) {
      ++blob;
    }
  }
  EXPECT_GT(blob, 0u);
}

TEST(Phantom, RejectsInvalidConfigs) {
  PhantomConfig c;
  c.target_volume_cc = 100;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.allow_any_volume = true;
  EXPECT_NO_THROW(c.validate());
  c = {};
  c.deformation = 0.3;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.contrast_mode = Contrast::Unknown;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.spacing_mm = {1, 1, 1};  // 262 cc grid
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.target_volume_cc = kMaxSpleenCc;
  c.spacing_mm = {4, 4, 4};
  EXPECT_THROW(generate_phantom(c), GeometryError);
}

TEST(Cohort, ModeSplitAndIds) {
  EXPECT_EQ(t1_count(45, {}), 24);
  EXPECT_EQ(t1_count(8, {}), 4);
  EXPECT_EQ(t1_count(4, {}), 2);
  EXPECT_EQ(t1_count(5, {1, 0}), 5);
  EXPECT_THROW(t1_count(5, {0, 0}), std::invalid_argument);

  const Manifest m = sample_cohort(8, 4, {}, 123);
  ASSERT_EQ(m.entries.size(), 12u);
  EXPECT_EQ(m.split("train").size(), 8u);
  EXPECT_EQ(m.split("test").size(), 4u);
  EXPECT_EQ(m.entries[0].id, "scan-000");
  EXPECT_EQ(m.entries[11].id, "scan-011");
  int t1 = 0;
  for (const auto* e : m.split("train")) t1 += e->config.contrast_mode == Contrast::T1;
  EXPECT_EQ(t1, 4);
  for (const auto& e : m.entries) {
    EXPECT_GE(e.config.target_volume_cc, kMinSpleenCc);
    EXPECT_LE(e.config.target_volume_cc, kMaxSpleenCc);
    EXPECT_GE(e.config.spacing_mm[0], 4.0);
    EXPECT_GE(e.config.spacing_mm[0], min_feasible_spacing(e.config));
  }
  EXPECT_THROW(sample_cohort(0, 1, {}, 1), std::invalid_argument);
}

TEST(Cohort, VolumeDistributionIsClippedNormal) {
  // E[clamp(X, a, b)] for X ~ N(mu, sigma), in closed form.
  const double mu = kMeanSpleenCc, sd = kStdSpleenCc, a = kMinSpleenCc, b = kMaxSpleenCc;
  const double al = (a - mu) / sd, be = (b - mu) / sd;
  const double expect = mu * (Phi(be) - Phi(al)) - sd * (phi(be) - phi(al)) + a * Phi(al) + b * (1 - Phi(be));
  Rng rng(2024);
  const int n = 200000;
  double s = 0, lo = 1e9, hi = 0;
  int at_min = 0;
  for (int i = 0; i < n; ++i) {
    const double v = sample_volume_cc(rng);
    s += v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    at_min += v == a;
  }
  EXPECT_NEAR(s / n, expect, 4 * sd / std::sqrt(n));
  EXPECT_EQ(lo, a);
  EXPECT_LE(hi, b);
  EXPECT_NEAR(static_cast<double>(at_min) / n, Phi(al), 0.005);
}

TEST(Cohort, WriteAndReadBack) {
  const fs::path dir = fs::temp_directory_path() / "ssnet_cohort_rt";
  fs::remove_all(dir);
  const Manifest m = sample_cohort(2, 1, {}, 7);
  write_cohort(m, dir);
  const Manifest back = read_manifest(dir / "manifest.json");
  ASSERT_EQ(back.entries.size(), 3u);
  EXPECT_EQ(manifest_to_json(back), manifest_to_json(m));
  for (const auto& e : back.entries) {
    const Mask mk = read_mask(dir / e.mask_path);
    const Volume v = read_volume(dir / e.volume_path);
    EXPECT_EQ(mk.dims, (Dims{64, 64, 64}));
    EXPECT_EQ(v.contrast, e.config.contrast_mode);
    EXPECT_EQ(mk, generate_phantom(e.config).mask);
  }
  auto j = manifest_to_json(m);
  j["scans"][0]["split"] = "validation";
  EXPECT_THROW(manifest_from_json(j), std::invalid_argument);
}
