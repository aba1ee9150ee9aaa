#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssnet/adam.hpp"
#include "ssnet/discriminator.hpp"
#include "ssnet/generator.hpp"
#include "ssnet/tensor.hpp"

namespace ssnet {

// Flat tensor archive, little-endian:
//   "SSNT0001"  u32 count
//   per tensor: u32 name_len, name bytes, u8 dtype (0 = f32, 1 = f64),
//               u32 n, c, h, w, then n*c*h*w elements
class ArchiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kArchiveMagic[8] = {'S', 'S', 'N', 'T', '0', '0', '0', '1'};

using TensorArchive = std::map<std::string, Tensor<double>>;

namespace detail {
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}
inline std::uint32_t get_u32(const std::string& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw ArchiveError("archive truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 4;
  return v;
}
}  // namespace detail

template <typename T>
void write_archive(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, const Tensor<T>*>>& entries) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  std::string out(kArchiveMagic, 8);
  detail::put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    out.push_back(std::is_same_v<T, float> ? 0 : 1);
    const Shape s = t->shape();
    for (int d : {s.n, s.c, s.h, s.w}) detail::put_u32(out, static_cast<std::uint32_t>(d));
    const std::size_t off = out.size();
    out.resize(off + t->size() * sizeof(T));
    std::memcpy(out.data() + off, t->data(), t->size() * sizeof(T));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ArchiveError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

inline TensorArchive read_archive(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArchiveError("cannot open " + path.string());
  const std::string in{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  if (in.size() < 12 || std::memcmp(in.data(), kArchiveMagic, 8) != 0)
    throw ArchiveError(path.string() + ": bad archive magic");
  std::size_t pos = 8;
  const std::uint32_t count = detail::get_u32(in, pos);
  TensorArchive out;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t len = detail::get_u32(in, pos);
    if (pos + len + 1 > in.size()) throw ArchiveError("archive truncated");
    std::string name = in.substr(pos, len);
    pos += len;
    const auto dtype = static_cast<unsigned char>(in[pos++]);
    if (dtype > 1) throw ArchiveError("unknown archive dtype");
    Shape s;
    s.n = static_cast<int>(detail::get_u32(in, pos));
    s.c = static_cast<int>(detail::get_u32(in, pos));
    s.h = static_cast<int>(detail::get_u32(in, pos));
    s.w = static_cast<int>(detail::get_u32(in, pos));
    Tensor<double> t(s);
    const std::size_t elem = dtype == 0 ? 4 : 8;
    if (pos + t.size() * elem > in.size()) throw ArchiveError("archive truncated in " + name);
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (dtype == 0) {
        float v;
        std::memcpy(&v, in.data() + pos + i * 4, 4);
        t[i] = v;
      } else {
        std::memcpy(&t[i], in.data() + pos + i * 8, 8);
      }
    }
    pos += t.size() * elem;
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

template <typename T>
void save_params(const std::filesystem::path& path, const ParamList<T>& params) {
  std::vector<std::pair<std::string, const Tensor<T>*>> e;
  for (const auto* p : params) e.emplace_back(p->name, &p->value);
  write_archive(path, e);
}

template <typename T>
void load_params(const std::filesystem::path& path, const ParamList<T>& params) {
  const TensorArchive a = read_archive(path);
  for (auto* p : params) {
    auto it = a.find(p->name);
    if (it == a.end()) throw ArchiveError(path.string() + ": missing tensor " + p->name);
    if (!(it->second.shape() == p->value.shape()))
      throw ArchiveError(path.string() + ": shape mismatch for " + p->name);
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = static_cast<T>(it->second[i]);
  }
}

template <typename T>
void save_adam(const std::filesystem::path& path, Adam<T>& opt, const ParamList<T>& params) {
  std::vector<std::pair<std::string, const Tensor<T>*>> e;
  for (std::size_t k = 0; k < params.size(); ++k) {
    e.emplace_back("m." + params[k]->name, &opt.first_moments()[k]);
    e.emplace_back("v." + params[k]->name, &opt.second_moments()[k]);
  }
  write_archive(path, e);
}

template <typename T>
void load_adam(const std::filesystem::path& path, Adam<T>& opt, const ParamList<T>& params) {
  const TensorArchive a = read_archive(path);
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (auto [prefix, dst] : {std::pair{"m.", &opt.first_moments()[k]}, std::pair{"v.", &opt.second_moments()[k]}}) {
      auto it = a.find(prefix + params[k]->name);
      if (it == a.end()) throw ArchiveError(path.string() + ": missing moment for " + params[k]->name);
      for (std::size_t i = 0; i < dst->size(); ++i) (*dst)[i] = static_cast<T>(it->second[i]);
    }
  }
}

// ---------------------------------------------------------------------------
// Spec JSON

inline std::string to_string(KernelRule r) { return r == KernelRule::Fixed ? "fixed" : "feature-resolution"; }

inline void to_json(nlohmann::json& j, const GeneratorSpec& s) {
  j = nlohmann::json{{"input_size", s.input_size},
                     {"in_channels", s.in_channels},
                     {"num_classes", s.num_classes},
                     {"encoder_channels", s.encoder_channels},
                     {"blocks_per_stage", s.blocks_per_stage},
                     {"gcn_kernel_rule", to_string(s.gcn_kernel_rule)},
                     {"gcn_fixed_kernel", s.gcn_fixed_kernel},
                     {"decoder_channels", s.decoder_channels},
                     {"literal_stem", s.literal_stem}};
}

inline void from_json(const nlohmann::json& j, GeneratorSpec& s) {
  GeneratorSpec d;
  s.input_size = j.value("input_size", d.input_size);
  s.in_channels = j.value("in_channels", d.in_channels);
  s.num_classes = j.value("num_classes", d.num_classes);
  s.encoder_channels = j.value("encoder_channels", d.encoder_channels);
  s.blocks_per_stage = j.value("blocks_per_stage", d.blocks_per_stage);
  const std::string rule = j.value("gcn_kernel_rule", to_string(d.gcn_kernel_rule));
  if (rule != "fixed" && rule != "feature-resolution") throw std::invalid_argument("unknown gcn_kernel_rule " + rule);
  s.gcn_kernel_rule = rule == "fixed" ? KernelRule::Fixed : KernelRule::FeatureResolution;
  s.gcn_fixed_kernel = j.value("gcn_fixed_kernel", d.gcn_fixed_kernel);
  s.decoder_channels = j.value("decoder_channels", d.decoder_channels);
  s.literal_stem = j.value("literal_stem", d.literal_stem);
}

inline void to_json(nlohmann::json& j, const DiscriminatorSpec& s) {
  j = nlohmann::json{{"in_channels", s.in_channels}, {"base_channels", s.base_channels},
                     {"n_layers", s.n_layers},       {"kernel", s.kernel},
                     {"use_norm", s.use_norm},       {"leaky_slope", s.leaky_slope}};
}

inline void from_json(const nlohmann::json& j, DiscriminatorSpec& s) {
  DiscriminatorSpec d;
  s.in_channels = j.value("in_channels", d.in_channels);
  s.base_channels = j.value("base_channels", d.base_channels);
  s.n_layers = j.value("n_layers", d.n_layers);
  s.kernel = j.value("kernel", d.kernel);
  s.use_norm = j.value("use_norm", d.use_norm);
  s.leaky_slope = j.value("leaky_slope", d.leaky_slope);
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return nlohmann::json::parse(f);
}

// Loads a generator from a checkpoint directory (generator.json + generator.bin).
template <typename T = float>
Generator<T> load_generator(const std::filesystem::path& dir) {
  const auto spec = read_json_file(dir / "generator.json").get<GeneratorSpec>();
  Generator<T> g(spec);
  load_params(dir / "generator.bin", g.params());
  return g;
}

}  // namespace ssnet
