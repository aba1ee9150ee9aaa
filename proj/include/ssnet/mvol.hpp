#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ssnet/volume.hpp"

namespace ssnet {

// MVOL layout:
//   bytes 0..7        ASCII "MVOL0001"
//   bytes 8..11       little-endian u32 header length H
//   bytes 12..12+H    UTF-8 JSON {dims:[z,y,x], spacing_mm:[z,y,x], dtype:"f32"|"u8",
//                                 order:"zyx-row-major", contrast:"t1"|"t2"|"unknown"}
//   remainder         little-endian payload of exactly z*y*x elements

class MvolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class MvolMagicError : public MvolError {
 public:
  using MvolError::MvolError;
};
class MvolTruncatedError : public MvolError {
 public:
  using MvolError::MvolError;
};
class MvolSizeMismatchError : public MvolError {
 public:
  using MvolError::MvolError;
};
class MvolDtypeError : public MvolError {
 public:
  using MvolError::MvolError;
};
class MvolHeaderError : public MvolError {
 public:
  using MvolError::MvolError;
};

inline constexpr char kMvolMagic[8] = {'M', 'V', 'O', 'L', '0', '0', '0', '1'};

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "MVOL payloads are written by memcpy on little-endian hosts");

template <typename V>
constexpr const char* mvol_dtype() {
  if constexpr (std::is_same_v<V, float>)
    return "f32";
  else
    return "u8";
}

template <typename V>
std::string encode_mvol(const Grid3<V>& g) {
  nlohmann::ordered_json h;
  h["dims"] = {g.dims.z, g.dims.y, g.dims.x};
  h["spacing_mm"] = {g.spacing_mm[0], g.spacing_mm[1], g.spacing_mm[2]};
  h["dtype"] = mvol_dtype<V>();
  h["order"] = "zyx-row-major";
  h["contrast"] = to_string(g.contrast);
  const std::string header = h.dump();
  std::string out(kMvolMagic, 8);
  const auto len = static_cast<std::uint32_t>(header.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xFFu));
  out += header;
  const std::size_t bytes = g.data.size() * sizeof(V);
  const std::size_t off = out.size();
  out.resize(off + bytes);
  std::memcpy(out.data() + off, g.data.data(), bytes);
  return out;
}

}  // namespace detail

using MvolGrid = std::variant<Volume, Mask>;

inline MvolGrid decode_mvol(const std::string& buf) {
  if (buf.size() < 8 || std::memcmp(buf.data(), kMvolMagic, 8) != 0)
    throw MvolMagicError("not an MVOL file (bad magic)");
  if (buf.size() < 12) throw MvolTruncatedError("MVOL truncated before header length");
  std::uint32_t hlen = 0;
  for (int i = 0; i < 4; ++i)
    hlen |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[8 + i])) << (8 * i);
  if (buf.size() < 12 + static_cast<std::size_t>(hlen))
    throw MvolTruncatedError("MVOL truncated inside header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(buf.begin() + 12, buf.begin() + 12 + hlen);
  } catch (const nlohmann::json::exception& e) {
    throw MvolHeaderError(std::string("MVOL header is not valid JSON: ") + e.what());
  }
  Dims dims;
  std::array<double, 3> spacing{};
  std::string dtype, order, contrast;
  try {
    const auto& d = h.at("dims");
    const auto& s = h.at("spacing_mm");
    if (d.size() != 3 || s.size() != 3) throw MvolHeaderError("MVOL dims/spacing must have 3 entries");
    dims = {d[0].get<int>(), d[1].get<int>(), d[2].get<int>()};
    spacing = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
    dtype = h.at("dtype").get<std::string>();
    order = h.at("order").get<std::string>();
    contrast = h.at("contrast").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw MvolHeaderError(std::string("MVOL header missing or malformed key: ") + e.what());
  }
  if (order != "zyx-row-major") throw MvolHeaderError("unsupported MVOL order '" + order + "'");
  std::size_t elem;
  if (dtype == "f32")
    elem = 4;
  else if (dtype == "u8")
    elem = 1;
  else
    throw MvolDtypeError("unknown MVOL dtype '" + dtype + "'");
  if (dims.z < 1 || dims.y < 1 || dims.x < 1) throw MvolHeaderError("MVOL dims must be >= 1");
  Contrast c;
  try {
    c = contrast_from_string(contrast);
  } catch (const std::invalid_argument& e) {
    throw MvolHeaderError(e.what());
  }
  const std::size_t payload = buf.size() - 12 - hlen;
  const std::size_t expected = dims.count() * elem;
  if (payload < expected)
    throw MvolTruncatedError("MVOL payload has " + std::to_string(payload) + " bytes, dims imply " +
                             std::to_string(expected));
  if (payload > expected)
    throw MvolSizeMismatchError("MVOL payload has " + std::to_string(payload) +
                                " bytes, dims imply " + std::to_string(expected));
  const char* src = buf.data() + 12 + hlen;
  try {
    if (elem == 4) {
      Volume v(dims, spacing, 0.0f, c);
      std::memcpy(v.data.data(), src, expected);
      return v;
    }
    Mask m(dims, spacing, 0, c);
    std::memcpy(m.data.data(), src, expected);
    return m;
  } catch (const std::invalid_argument& e) {
    throw MvolHeaderError(e.what());
  }
}

template <typename V>
void write_mvol(const Grid3<V>& g, const std::filesystem::path& path) {
  const std::string bytes = detail::encode_mvol(g);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline MvolGrid read_mvol(const std::filesystem::path& path) {
  return decode_mvol(read_file_bytes(path));
}

inline Volume read_volume(const std::filesystem::path& path) {
  auto g = read_mvol(path);
  if (auto* v = std::get_if<Volume>(&g)) return std::move(*v);
  throw MvolDtypeError(path.string() + ": expected an f32 volume, found u8");
}

inline Mask read_mask(const std::filesystem::path& path) {
  auto g = read_mvol(path);
  if (auto* m = std::get_if<Mask>(&g)) {
    for (auto v : m->data)
      if (v > 1) throw MvolHeaderError(path.string() + ": mask values must be 0 or 1");
    return std::move(*m);
  }
  throw MvolDtypeError(path.string() + ": expected a u8 mask, found f32");
}

}  // namespace ssnet
