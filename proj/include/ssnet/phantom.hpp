#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssnet/mvol.hpp"
#include "ssnet/tensor.hpp"
#include "ssnet/volume.hpp"

namespace ssnet {

inline constexpr double kMinSpleenCc = 368.0;
inline constexpr double kMaxSpleenCc = 5670.0;
inline constexpr double kMeanSpleenCc = 1881.0;
inline constexpr double kStdSpleenCc = 1219.0;
inline constexpr int kFaceMargin = 2;

struct PhantomConfig {
  int grid_size = 64;
  std::array<double, 3> spacing_mm{4.0, 4.0, 4.0};
  double target_volume_cc = kMeanSpleenCc;
  Contrast contrast_mode = Contrast::T2;
  double bias_strength = 0.2;
  double noise_sigma = 0.05;  // fraction of the spleen/background contrast
  int distractor_count = 3;
  double deformation = 0.15;  // peak radial perturbation, fraction of radius
  double anisotropy = 0.2;    // semi-axis ratios drawn from exp([-a, a])
  std::uint64_t seed = 0;
  bool allow_any_volume = false;

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("PhantomConfig: " + m); };
    if (grid_size < 8) fail("grid_size must be >= 8");
    for (double s : spacing_mm)
      if (!(s > 0)) fail("spacing must be positive");
    if (!(target_volume_cc > 0)) fail("target_volume_cc must be positive");
    if (!allow_any_volume && (target_volume_cc < kMinSpleenCc || target_volume_cc > kMaxSpleenCc))
      fail("target_volume_cc " + std::to_string(target_volume_cc) + " outside [368, 5670]");
    if (contrast_mode == Contrast::Unknown) fail("contrast_mode must be T1 or T2");
    if (bias_strength < 0 || bias_strength > 1) fail("bias_strength must be in [0, 1]");
    if (noise_sigma < 0) fail("noise_sigma must be >= 0");
    if (distractor_count < 0) fail("distractor_count must be >= 0");
    if (deformation < 0 || deformation > 0.15) fail("deformation must be in [0, 0.15]");
    if (anisotropy < 0 || anisotropy > 0.5) fail("anisotropy must be in [0, 0.5]");
    const double grid_cc = std::pow(grid_size, 3) * spacing_mm[0] * spacing_mm[1] * spacing_mm[2] / 1000.0;
    if (grid_cc <= target_volume_cc) fail("grid volume does not exceed target volume");
  }
};

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Deformed ellipsoid: a point p (mm, relative to the centre) is inside when
// |u| <= radius * f(u / |u|), u = p / axis_ratio, with
// f(d) = 1 + sum_j amp_j * sin(freq_j . d + phase_j).
struct SpleenShape {
  std::array<double, 3> axis_ratio{1, 1, 1};  // (z, y, x), product 1
  std::array<std::array<double, 3>, 3> freq{};
  std::array<double, 3> amp{};
  std::array<double, 3> phase{};
  double radius_mm = 0;

  [[nodiscard]] double radial(const std::array<double, 3>& d) const {
    double f = 1.0;
    for (int j = 0; j < 3; ++j)
      f += amp[j] * std::sin(freq[j][0] * d[0] + freq[j][1] * d[1] + freq[j][2] * d[2] + phase[j]);
    return f;
  }

  [[nodiscard]] double max_radial() const {
    return 1.0 + std::abs(amp[0]) + std::abs(amp[1]) + std::abs(amp[2]);
  }

  // (1/3) * integral of f^3 over the unit sphere; volume = radius^3 * this.
  [[nodiscard]] double unit_volume() const {
    constexpr int nt = 256, np = 512;
    constexpr double pi = 3.14159265358979323846;
    double sum = 0;
    for (int i = 0; i < nt; ++i) {
      const double mu = -1.0 + (i + 0.5) * 2.0 / nt;  // cos(theta), uniform in mu
      const double st = std::sqrt(1.0 - mu * mu);
      for (int k = 0; k < np; ++k) {
        const double ph = (k + 0.5) * 2.0 * pi / np;
        const double f = radial({mu, st * std::sin(ph), st * std::cos(ph)});
        sum += f * f * f;
      }
    }
    return sum * (2.0 / nt) * (2.0 * pi / np) / 3.0;
  }

  [[nodiscard]] bool contains(const std::array<double, 3>& p_mm) const {
    const std::array<double, 3> u{p_mm[0] / axis_ratio[0], p_mm[1] / axis_ratio[1],
                                  p_mm[2] / axis_ratio[2]};
    const double rho = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    if (rho == 0.0) return true;
    return rho <= radius_mm * radial({u[0] / rho, u[1] / rho, u[2] / rho});
  }

  // Upper bound on |p_a| over the surface, per axis, in mm.
  [[nodiscard]] double extent_mm(int axis) const { return radius_mm * axis_ratio[axis] * max_radial(); }
};

// Draws the shape from the config seed; radius is set so the enclosed volume
// equals target_volume_cc after deformation.
inline SpleenShape draw_spleen_shape(const PhantomConfig& cfg) {
  Rng rng(cfg.seed);
  SpleenShape s;
  double log_sum = 0;
  std::array<double, 3> logs{};
  for (int a = 0; a < 3; ++a) {
    logs[a] = rng.uniform(-cfg.anisotropy, cfg.anisotropy);
    log_sum += logs[a];
  }
  for (int a = 0; a < 3; ++a) s.axis_ratio[a] = std::exp(logs[a] - log_sum / 3.0);
  std::array<double, 3> w{};
  double wsum = 0;
  for (int j = 0; j < 3; ++j) {
    // Random direction with magnitude in [1.5, 3]: at most ~1.5 oscillations across the organ.
    std::array<double, 3> dir{rng.normal(), rng.normal(), rng.normal()};
    const double norm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]) + 1e-12;
    const double mag = rng.uniform(1.5, 3.0);
    for (int a = 0; a < 3; ++a) s.freq[j][a] = dir[a] / norm * mag;
    s.phase[j] = rng.uniform(0.0, 6.283185307179586);
    w[j] = rng.uniform(0.2, 1.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    wsum += std::abs(w[j]);
  }
  for (int j = 0; j < 3; ++j) s.amp[j] = cfg.deformation * w[j] / wsum;
  s.radius_mm = std::cbrt(cfg.target_volume_cc * 1000.0 / s.unit_volume());
  return s;
}

// Smallest isotropic spacing at which the drawn spleen fits with the face margin.
inline double min_feasible_spacing(const PhantomConfig& cfg) {
  const SpleenShape s = draw_spleen_shape(cfg);
  const double avail = cfg.grid_size - 1 - 2.0 * kFaceMargin;
  double sp = 0;
  for (int a = 0; a < 3; ++a) sp = std::max(sp, 2.0 * s.extent_mm(a) / avail);
  return sp;
}

struct PhantomScan {
  Volume volume;
  Mask mask;
  double analytic_volume_cc = 0;
  PhantomConfig config;
};

inline constexpr double kBackgroundLevel = 0.5;
inline constexpr double kSpleenContrast = 0.3;

inline PhantomScan generate_phantom(const PhantomConfig& cfg) {
  cfg.validate();
  const int n = cfg.grid_size;
  const SpleenShape shape = draw_spleen_shape(cfg);
  // Geometry and texture use independent streams so the mask does not depend
  // on noise settings.
  Rng rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);

  std::array<double, 3> centre{};
  for (int a = 0; a < 3; ++a) {
    const double ext = shape.extent_mm(a) / cfg.spacing_mm[a];
    const double slack = (n - 1 - 2.0 * kFaceMargin) - 2.0 * ext;
    if (slack < 0)
      throw GeometryError("spleen of " + std::to_string(cfg.target_volume_cc) + " cc does not fit a " +
                          std::to_string(n) + "^3 grid at this spacing (needs >= " +
                          std::to_string(min_feasible_spacing(cfg)) + " mm)");
    centre[a] = kFaceMargin + ext + rng.uniform() * slack;
  }

  const Dims dims{n, n, n};
  PhantomScan scan;
  scan.config = cfg;
  scan.analytic_volume_cc = cfg.target_volume_cc;
  scan.mask = Mask(dims, cfg.spacing_mm, 0, cfg.contrast_mode);
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const std::array<double, 3> p{(z - centre[0]) * cfg.spacing_mm[0], (y - centre[1]) * cfg.spacing_mm[1],
                                      (x - centre[2]) * cfg.spacing_mm[2]};
        scan.mask.at(z, y, x) = shape.contains(p) ? 1 : 0;
      }

  const double sign = cfg.contrast_mode == Contrast::T2 ? 1.0 : -1.0;
  const double spleen_level = kBackgroundLevel + sign * kSpleenContrast;
  std::vector<double> clean(dims.count(), kBackgroundLevel);
  for (std::size_t i = 0; i < clean.size(); ++i)
    if (scan.mask.data[i]) clean[i] = spleen_level;

  // Distractor blobs: spheres that keep one voxel of clearance from the spleen.
  for (int d = 0; d < cfg.distractor_count; ++d) {
    const double r = rng.uniform(2.0, 4.0);
    const bool same_polarity = rng.uniform() < 0.5;
    const double level = kBackgroundLevel + (same_polarity ? sign : -sign) * kSpleenContrast;
    const int ri = static_cast<int>(std::ceil(r)) + 1;
    for (int attempt = 0; attempt < 200; ++attempt) {
      std::array<int, 3> c{};
      for (int a = 0; a < 3; ++a) c[a] = ri + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - 2 * ri)));
      bool clear = true;
      for (int dz = -ri; dz <= ri && clear; ++dz)
        for (int dy = -ri; dy <= ri && clear; ++dy)
          for (int dx = -ri; dx <= ri; ++dx) {
            if (dz * dz + dy * dy + dx * dx > (r + 1) * (r + 1)) continue;
            if (scan.mask.at(c[0] + dz, c[1] + dy, c[2] + dx)) {
              clear = false;
              break;
            }
          }
      if (!clear) continue;
      for (int dz = -ri; dz <= ri; ++dz)
        for (int dy = -ri; dy <= ri; ++dy)
          for (int dx = -ri; dx <= ri; ++dx)
            if (dz * dz + dy * dy + dx * dx <= r * r) clean[scan.mask.index(c[0] + dz, c[1] + dy, c[2] + dx)] = level;
      break;
    }
  }

  // Multiplicative bias field from a random polynomial of degree <= 2,
  // normalised so its peak deviation is exactly bias_strength.
  std::array<double, 9> coef{};
  for (auto& c : coef) c = rng.normal();
  std::vector<double> q(dims.count());
  double qmax = 0;
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double u = 2.0 * z / (n - 1) - 1, v = 2.0 * y / (n - 1) - 1, w = 2.0 * x / (n - 1) - 1;
        const double val = coef[0] * u + coef[1] * v + coef[2] * w + coef[3] * u * u + coef[4] * v * v +
                           coef[5] * w * w + coef[6] * u * v + coef[7] * u * w + coef[8] * v * w;
        q[scan.mask.index(z, y, x)] = val;
        qmax = std::max(qmax, std::abs(val));
      }

  scan.volume = Volume(dims, cfg.spacing_mm, 0.0f, cfg.contrast_mode);
  const double noise_std = cfg.noise_sigma * kSpleenContrast;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double bias = qmax > 0 ? 1.0 + cfg.bias_strength * q[i] / qmax : 1.0;
    double v = clean[i] * bias;
    if (noise_std > 0) v += noise_std * rng.normal();
    scan.volume.data[i] = static_cast<float>(v);
  }
  return scan;
}

// ---------------------------------------------------------------------------
// Cohorts

struct ModeSplit {
  double t1 = 24;
  double t2 = 21;
};

struct CohortEntry {
  std::string id;
  std::string split;  // "train" | "test"
  PhantomConfig config;
  std::string volume_path;  // relative to the manifest directory
  std::string mask_path;
  double analytic_volume_cc = 0;
};

struct Manifest {
  std::uint64_t seed = 0;
  int grid_size = 64;
  std::vector<CohortEntry> entries;

  [[nodiscard]] std::vector<const CohortEntry*> split(const std::string& name) const {
    std::vector<const CohortEntry*> out;
    for (const auto& e : entries)
      if (e.split == name) out.push_back(&e);
    return out;
  }
};

inline double sample_volume_cc(Rng& rng) {
  return std::clamp(kMeanSpleenCc + kStdSpleenCc * rng.normal(), kMinSpleenCc, kMaxSpleenCc);
}

inline int t1_count(int n, const ModeSplit& split) {
  if (split.t1 < 0 || split.t2 < 0 || split.t1 + split.t2 <= 0)
    throw std::invalid_argument("mode split weights must be non-negative and not both zero");
  return static_cast<int>(std::lround(n * split.t1 / (split.t1 + split.t2)));
}

// Draws per-scan configs: clipped-normal volumes, contrast modes per split,
// and an isotropic spacing no smaller than the template's that fits the spleen.
inline Manifest sample_cohort(int n_train, int n_test, ModeSplit mode_split, std::uint64_t seed,
                              PhantomConfig base = {}) {
  if (n_train < 1 || n_test < 1) throw std::invalid_argument("n_train and n_test must be >= 1");
  Rng rng(seed);
  Manifest m;
  m.seed = seed;
  m.grid_size = base.grid_size;
  int index = 0;
  for (const std::string split : {"train", "test"}) {
    const int count = split == "train" ? n_train : n_test;
    std::vector<Contrast> modes(count, Contrast::T2);
    const int t1 = t1_count(count, mode_split);
    for (int i = 0; i < t1; ++i) modes[i] = Contrast::T1;
    rng.shuffle(modes);
    for (int i = 0; i < count; ++i) {
      CohortEntry e;
      char buf[32];
      std::snprintf(buf, sizeof buf, "scan-%03d", index++);
      e.id = buf;
      e.split = split;
      e.config = base;
      e.config.contrast_mode = modes[i];
      e.config.target_volume_cc = sample_volume_cc(rng);
      e.config.seed = rng.next();
      const double need = min_feasible_spacing(e.config) * 1.001;
      const double sp = std::max(base.spacing_mm[0], need);
      e.config.spacing_mm = {sp, sp, sp};
      e.analytic_volume_cc = e.config.target_volume_cc;
      e.volume_path = e.id + "_volume.mvol";
      e.mask_path = e.id + "_mask.mvol";
      m.entries.push_back(std::move(e));
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const PhantomConfig& c) {
  j = nlohmann::json{{"grid_size", c.grid_size},
                     {"spacing_mm", c.spacing_mm},
                     {"target_volume_cc", c.target_volume_cc},
                     {"contrast_mode", to_string(c.contrast_mode)},
                     {"bias_strength", c.bias_strength},
                     {"noise_sigma", c.noise_sigma},
                     {"distractor_count", c.distractor_count},
                     {"deformation", c.deformation},
                     {"anisotropy", c.anisotropy},
                     {"seed", c.seed},
                     {"allow_any_volume", c.allow_any_volume}};
}

inline void from_json(const nlohmann::json& j, PhantomConfig& c) {
  PhantomConfig d;
  c.grid_size = j.value("grid_size", d.grid_size);
  c.spacing_mm = j.value("spacing_mm", d.spacing_mm);
  c.target_volume_cc = j.value("target_volume_cc", d.target_volume_cc);
  c.contrast_mode = contrast_from_string(j.value("contrast_mode", to_string(d.contrast_mode)));
  c.bias_strength = j.value("bias_strength", d.bias_strength);
  c.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  c.distractor_count = j.value("distractor_count", d.distractor_count);
  c.deformation = j.value("deformation", d.deformation);
  c.anisotropy = j.value("anisotropy", d.anisotropy);
  c.seed = j.value("seed", d.seed);
  c.allow_any_volume = j.value("allow_any_volume", d.allow_any_volume);
}

inline nlohmann::json manifest_to_json(const Manifest& m) {
  nlohmann::json scans = nlohmann::json::array();
  for (const auto& e : m.entries) {
    scans.push_back({{"id", e.id},
                     {"split", e.split},
                     {"volume", e.volume_path},
                     {"mask", e.mask_path},
                     {"analytic_volume_cc", e.analytic_volume_cc},
                     {"config", e.config}});
  }
  return {{"format", "ssnet-manifest-1"}, {"seed", m.seed}, {"grid_size", m.grid_size}, {"scans", scans}};
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  m.seed = j.value("seed", std::uint64_t{0});
  m.grid_size = j.value("grid_size", 64);
  for (const auto& s : j.at("scans")) {
    CohortEntry e;
    e.id = s.at("id").get<std::string>();
    e.split = s.at("split").get<std::string>();
    if (e.split != "train" && e.split != "test")
      throw std::invalid_argument("manifest entry " + e.id + " has unknown split '" + e.split + "'");
    e.volume_path = s.at("volume").get<std::string>();
    e.mask_path = s.at("mask").get<std::string>();
    e.analytic_volume_cc = s.value("analytic_volume_cc", 0.0);
    if (s.contains("config")) e.config = s.at("config").get<PhantomConfig>();
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest " + path.string());
  return manifest_from_json(nlohmann::json::parse(f));
}

inline void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

// Generates every scan of the manifest into dir and writes manifest.json.
inline void write_cohort(const Manifest& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& e : m.entries) {
    const PhantomScan scan = generate_phantom(e.config);
    write_mvol(scan.volume, dir / e.volume_path);
    write_mvol(scan.mask, dir / e.mask_path);
  }
  write_json_file(manifest_to_json(m), dir / "manifest.json");
}

}  // namespace ssnet
