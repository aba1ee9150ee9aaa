#pragma once

#include <array>
#include <cstdlib>
#include <stdexcept>
#include <vector>

#include "ssnet/volume.hpp"

namespace ssnet {

enum class StructuringElement { Cross6, Cube26 };

struct FusionConfig {
  StructuringElement element = StructuringElement::Cross6;
  int open_radius = 1;
  int close_radius = 1;

  void validate() const {
    if (open_radius < 0 || close_radius < 0)
      throw std::invalid_argument("FusionConfig: radii must be >= 0");
  }
};

// Offsets of the element at a radius: the L1 ball for Cross6 (the radius-fold
// dilation of the 6-neighbour cross) and the L-infinity ball for Cube26.
inline std::vector<std::array<int, 3>> element_offsets(StructuringElement e, int radius) {
  std::vector<std::array<int, 3>> out;
  for (int dz = -radius; dz <= radius; ++dz)
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx) {
        if (e == StructuringElement::Cross6 && std::abs(dz) + std::abs(dy) + std::abs(dx) > radius) continue;
        out.push_back({dz, dy, dx});
      }
  return out;
}

// Morphology treats the mask as embedded in an unbounded zero background:
// erosion and dilation run on a copy padded by the element radius, which makes
// opening anti-extensive, closing extensive, and both idempotent at fixed
// radius. Results are cropped back to the input grid.
namespace detail {

struct Padded {
  Dims dims;
  int pad = 0;
  std::vector<std::uint8_t> v;
  [[nodiscard]] std::size_t idx(int z, int y, int x) const {
    return (static_cast<std::size_t>(z) * dims.y + y) * dims.x + x;
  }
};

inline Padded pad_mask(const Mask& m, int pad) {
  Padded p;
  p.pad = pad;
  p.dims = {m.dims.z + 2 * pad, m.dims.y + 2 * pad, m.dims.x + 2 * pad};
  p.v.assign(p.dims.count(), 0);
  for (int z = 0; z < m.dims.z; ++z)
    for (int y = 0; y < m.dims.y; ++y)
      for (int x = 0; x < m.dims.x; ++x) p.v[p.idx(z + pad, y + pad, x + pad)] = m.at(z, y, x);
  return p;
}

inline Mask crop_mask(const Padded& p, const Mask& like) {
  Mask out(like.dims, like.spacing_mm, 0, like.contrast);
  for (int z = 0; z < like.dims.z; ++z)
    for (int y = 0; y < like.dims.y; ++y)
      for (int x = 0; x < like.dims.x; ++x) out.at(z, y, x) = p.v[p.idx(z + p.pad, y + p.pad, x + p.pad)];
  return out;
}

// erode = true: all neighbours set; false (dilate): any neighbour set.
// Out-of-range neighbours read as 0.
inline Padded apply(const Padded& in, const std::vector<std::array<int, 3>>& offs, bool erode) {
  Padded out = in;
  const Dims d = in.dims;
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x) {
        bool acc = erode;
        for (const auto& o : offs) {
          const int zz = z + o[0], yy = y + o[1], xx = x + o[2];
          const bool inside = zz >= 0 && zz < d.z && yy >= 0 && yy < d.y && xx >= 0 && xx < d.x;
          const bool v = inside && in.v[in.idx(zz, yy, xx)];
          if (erode && !v) {
            acc = false;
            break;
          }
          if (!erode && v) {
            acc = true;
            break;
          }
        }
        out.v[out.idx(z, y, x)] = acc ? 1 : 0;
      }
  return out;
}

}  // namespace detail

inline Mask erode(const Mask& m, StructuringElement e, int radius) {
  if (radius == 0) return m;
  return detail::crop_mask(detail::apply(detail::pad_mask(m, radius), element_offsets(e, radius), true), m);
}

inline Mask dilate(const Mask& m, StructuringElement e, int radius) {
  if (radius == 0) return m;
  return detail::crop_mask(detail::apply(detail::pad_mask(m, radius), element_offsets(e, radius), false), m);
}

inline Mask open_mask(const Mask& m, StructuringElement e, int radius) {
  if (radius == 0) return m;
  const auto offs = element_offsets(e, radius);
  const auto p = detail::pad_mask(m, radius);
  return detail::crop_mask(detail::apply(detail::apply(p, offs, true), offs, false), m);
}

inline Mask close_mask(const Mask& m, StructuringElement e, int radius) {
  if (radius == 0) return m;
  const auto offs = element_offsets(e, radius);
  const auto p = detail::pad_mask(m, radius);
  return detail::crop_mask(detail::apply(detail::apply(p, offs, false), offs, true), m);
}

inline Mask union_masks(const Mask& a, const Mask& b, const Mask& c) {
  require_same_dims(a, b, "union");
  require_same_dims(a, c, "union");
  Mask out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = (a.data[i] | b.data[i] | c.data[i]) ? 1 : 0;
  return out;
}

// Voxelwise union, then opening, then closing.
inline Mask fuse_views(const Mask& axial, const Mask& coronal, const Mask& sagittal,
                       const FusionConfig& cfg = {}) {
  cfg.validate();
  Mask u = union_masks(axial, coronal, sagittal);
  u = open_mask(u, cfg.element, cfg.open_radius);
  return close_mask(u, cfg.element, cfg.close_radius);
}

}  // namespace ssnet
