#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace ssnet {

enum class Contrast { T1, T2, Unknown };

inline std::string to_string(Contrast c) {
  switch (c) {
    case Contrast::T1: return "t1";
    case Contrast::T2: return "t2";
    default: return "unknown";
  }
}

inline Contrast contrast_from_string(const std::string& s) {
  if (s == "t1") return Contrast::T1;
  if (s == "t2") return Contrast::T2;
  if (s == "unknown") return Contrast::Unknown;
  throw std::invalid_argument("unknown contrast tag '" + s + "'");
}

struct Dims {
  int z = 0, y = 0, x = 0;
  [[nodiscard]] std::size_t count() const { return static_cast<std::size_t>(z) * y * x; }
  [[nodiscard]] bool cubic() const { return z == y && y == x; }
  friend bool operator==(const Dims&, const Dims&) = default;
  [[nodiscard]] std::string str() const {
    return std::to_string(z) + "x" + std::to_string(y) + "x" + std::to_string(x);
  }
};

// 3-D grid in (z, y, x) row-major order with per-axis spacing in mm.
template <typename V>
struct Grid3 {
  Dims dims;
  std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
  Contrast contrast = Contrast::Unknown;
  std::vector<V> data;

  Grid3() = default;
  explicit Grid3(Dims d, std::array<double, 3> spacing = {1.0, 1.0, 1.0}, V fill = V{},
                 Contrast c = Contrast::Unknown)
      : dims(d), spacing_mm(spacing), contrast(c), data(d.count(), fill) {
    if (d.z < 1 || d.y < 1 || d.x < 1) throw std::invalid_argument("grid dims must be >= 1");
    for (double s : spacing)
      if (!(s > 0.0)) throw std::invalid_argument("grid spacing must be > 0");
  }

  [[nodiscard]] std::size_t index(int z, int y, int x) const {
    return (static_cast<std::size_t>(z) * dims.y + y) * dims.x + x;
  }
  V& at(int z, int y, int x) { return data[index(z, y, x)]; }
  const V& at(int z, int y, int x) const { return data[index(z, y, x)]; }
  [[nodiscard]] double voxel_mm3() const { return spacing_mm[0] * spacing_mm[1] * spacing_mm[2]; }

  friend bool operator==(const Grid3&, const Grid3&) = default;
};

using Volume = Grid3<float>;
using Mask = Grid3<std::uint8_t>;

template <typename V>
struct Image2D {
  int rows = 0, cols = 0;
  std::vector<V> data;

  Image2D() = default;
  Image2D(int r, int c, V fill = V{}) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}
  V& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  const V& at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  friend bool operator==(const Image2D&, const Image2D&) = default;
};

// Slice orientation. For a cubic grid of side n:
//   axial    slice k = {z = k}, image (row, col) = (y, x)
//   coronal  slice k = {y = k}, image (row, col) = (z, x)
//   sagittal slice k = {x = k}, image (row, col) = (z, y)
enum class ViewAxis { Axial, Coronal, Sagittal };

inline constexpr std::array<ViewAxis, 3> kAllViews{ViewAxis::Axial, ViewAxis::Coronal,
                                                   ViewAxis::Sagittal};

inline std::string to_string(ViewAxis v) {
  switch (v) {
    case ViewAxis::Axial: return "axial";
    case ViewAxis::Coronal: return "coronal";
    default: return "sagittal";
  }
}

inline ViewAxis view_from_string(const std::string& s) {
  if (s == "axial") return ViewAxis::Axial;
  if (s == "coronal") return ViewAxis::Coronal;
  if (s == "sagittal") return ViewAxis::Sagittal;
  throw std::invalid_argument("unknown view '" + s + "'");
}

namespace detail {
// (z, y, x) of image pixel (r, c) in slice k.
inline std::array<int, 3> view_voxel(ViewAxis v, int k, int r, int c) {
  switch (v) {
    case ViewAxis::Axial: return {k, r, c};
    case ViewAxis::Coronal: return {r, k, c};
    default: return {r, c, k};
  }
}
}  // namespace detail

template <typename V>
std::vector<Image2D<V>> extract_slices(const Grid3<V>& g, ViewAxis view) {
  if (!g.dims.cubic())
    throw std::invalid_argument("extract_slices requires a cubic volume, got " + g.dims.str());
  const int n = g.dims.z;
  std::vector<Image2D<V>> out(n, Image2D<V>(n, n));
  for (int k = 0; k < n; ++k)
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        const auto [z, y, x] = detail::view_voxel(view, k, r, c);
        out[k].at(r, c) = g.at(z, y, x);
      }
  return out;
}

template <typename V>
Grid3<V> assemble_grid(const std::vector<Image2D<V>>& slices, ViewAxis view,
                       std::array<double, 3> spacing = {1.0, 1.0, 1.0}) {
  const int n = static_cast<int>(slices.size());
  if (n < 1) throw std::invalid_argument("assemble_volume: no slices");
  for (const auto& s : slices)
    if (s.rows != n || s.cols != n)
      throw std::invalid_argument("assemble_volume: expected " + std::to_string(n) + " slices of " +
                                  std::to_string(n) + "x" + std::to_string(n));
  Grid3<V> g(Dims{n, n, n}, spacing);
  for (int k = 0; k < n; ++k)
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        const auto [z, y, x] = detail::view_voxel(view, k, r, c);
        g.at(z, y, x) = slices[k].at(r, c);
      }
  return g;
}

// Re-assembles binary label slices into a mask.
inline Mask assemble_volume(const std::vector<Image2D<std::uint8_t>>& slices, ViewAxis view,
                            std::array<double, 3> spacing = {1.0, 1.0, 1.0}) {
  for (const auto& s : slices)
    for (auto v : s.data)
      if (v > 1) throw std::invalid_argument("assemble_volume: label slices must be binary");
  return assemble_grid(slices, view, spacing);
}

enum class Interpolation { Trilinear, Nearest };

// Resamples onto an n^3 grid covering the same physical extent. Output voxel
// centres map to continuous input index (o + 0.5) * dim / n - 0.5, clamped to
// the edge voxels.
template <typename V>
Grid3<V> resample_cubic(const Grid3<V>& in, int n, Interpolation interp) {
  if (n < 2) throw std::invalid_argument("resample_cubic: n must be >= 2");
  if constexpr (std::is_floating_point_v<V>) {
    for (V v : in.data)
      if (!std::isfinite(v)) throw std::invalid_argument("resample_cubic: non-finite input value");
  }
  const std::array<int, 3> dim{in.dims.z, in.dims.y, in.dims.x};
  std::array<double, 3> spacing{};
  for (int a = 0; a < 3; ++a) spacing[a] = in.spacing_mm[a] * dim[a] / n;
  Grid3<V> out(Dims{n, n, n}, spacing, V{}, in.contrast);

  // Per-axis lookup: lower index, upper index, weight of the upper sample.
  struct Tap {
    int lo, hi;
    double w;
  };
  std::array<std::vector<Tap>, 3> taps;
  for (int a = 0; a < 3; ++a) {
    taps[a].resize(n);
    for (int o = 0; o < n; ++o) {
      double pos = (o + 0.5) * dim[a] / static_cast<double>(n) - 0.5;
      pos = std::clamp(pos, 0.0, static_cast<double>(dim[a] - 1));
      if (interp == Interpolation::Nearest) {
        const int i = std::min(static_cast<int>(std::floor(pos + 0.5)), dim[a] - 1);
        taps[a][o] = {i, i, 0.0};
      } else {
        const int lo = static_cast<int>(std::floor(pos));
        const int hi = std::min(lo + 1, dim[a] - 1);
        taps[a][o] = {lo, hi, pos - lo};
      }
    }
  }
  for (int z = 0; z < n; ++z) {
    const Tap tz = taps[0][z];
    for (int y = 0; y < n; ++y) {
      const Tap ty = taps[1][y];
      for (int x = 0; x < n; ++x) {
        const Tap tx = taps[2][x];
        if (interp == Interpolation::Nearest) {
          out.at(z, y, x) = in.at(tz.lo, ty.lo, tx.lo);
          continue;
        }
        auto s = [&](int zz, int yy, int xx) { return static_cast<double>(in.at(zz, yy, xx)); };
        const double c00 = s(tz.lo, ty.lo, tx.lo) * (1 - tx.w) + s(tz.lo, ty.lo, tx.hi) * tx.w;
        const double c01 = s(tz.lo, ty.hi, tx.lo) * (1 - tx.w) + s(tz.lo, ty.hi, tx.hi) * tx.w;
        const double c10 = s(tz.hi, ty.lo, tx.lo) * (1 - tx.w) + s(tz.hi, ty.lo, tx.hi) * tx.w;
        const double c11 = s(tz.hi, ty.hi, tx.lo) * (1 - tx.w) + s(tz.hi, ty.hi, tx.hi) * tx.w;
        const double c0 = c00 * (1 - ty.w) + c01 * ty.w;
        const double c1 = c10 * (1 - ty.w) + c11 * ty.w;
        out.at(z, y, x) = static_cast<V>(c0 * (1 - tz.w) + c1 * tz.w);
      }
    }
  }
  return out;
}

template <typename V>
void require_same_dims(const Grid3<V>& a, const Grid3<V>& b, const char* what) {
  if (!(a.dims == b.dims))
    throw std::invalid_argument(std::string(what) + ": dims " + a.dims.str() + " vs " + b.dims.str());
}

}  // namespace ssnet
