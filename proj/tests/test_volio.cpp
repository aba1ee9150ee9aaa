#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "ssnet/mvol.hpp"
#include "ssnet/tensor.hpp"
#include "ssnet/volume.hpp"

using namespace ssnet;
namespace fs = std::filesystem;

namespace {

Volume random_volume(Dims d, std::uint64_t seed) {
  Rng rng(seed);
  Volume v(d, {1.5, 2.0, 0.75}, 0.0f, Contrast::T1);
  for (auto& x : v.data) x = static_cast<float>(rng.uniform(-5, 5));
  return v;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ssnet_volio_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string encode_with_header(const std::string& header, std::size_t payload) {
  std::string out(kMvolMagic, 8);
  const auto len = static_cast<std::uint32_t>(header.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xFF));
  out += header;
  out.append(payload, '\0');
  return out;
}

}  // namespace

TEST(Views, SliceOrientationConvention) {
  Volume v(Dims{3, 3, 3});
  for (int z = 0; z < 3; ++z)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) v.at(z, y, x) = static_cast<float>(100 * z + 10 * y + x);
  EXPECT_EQ(extract_slices(v, ViewAxis::Axial)[2].at(1, 0), 210.0f);     // z=2, (y, x)
  EXPECT_EQ(extract_slices(v, ViewAxis::Coronal)[2].at(1, 0), 120.0f);   // y=2, (z, x)
  EXPECT_EQ(extract_slices(v, ViewAxis::Sagittal)[2].at(1, 0), 102.0f);  // x=2, (z, y)
}

TEST(Views, ExtractAssembleIdentity) {
  Rng rng(4);
  Mask m(Dims{7, 7, 7}, {2, 2, 2});
  for (auto& v : m.data) v = rng.uniform() < 0.3 ? 1 : 0;
  const Volume vol = random_volume(Dims{6, 6, 6}, 3);
  for (ViewAxis view : kAllViews) {
    EXPECT_EQ(assemble_volume(extract_slices(m, view), view, m.spacing_mm), m);
    const auto g = assemble_grid(extract_slices(vol, view), view, vol.spacing_mm);
    EXPECT_EQ(g.data, vol.data);
  }
  EXPECT_THROW(extract_slices(Volume(Dims{2, 3, 3}), ViewAxis::Axial), std::invalid_argument);
  auto bad = extract_slices(m, ViewAxis::Axial);
  bad[0].at(0, 0) = 2;
  EXPECT_THROW(assemble_volume(bad, ViewAxis::Axial), std::invalid_argument);
  bad.pop_back();
  EXPECT_THROW(assemble_volume(bad, ViewAxis::Axial), std::invalid_argument);
}

TEST(Resample, TrilinearReproducesLinearRamp) {
  // A linear field is reproduced exactly wherever no clamping occurs.
  const Dims d{10, 12, 8};
  Volume v(d, {1, 1, 1});
  auto f = [](double z, double y, double x) { return 0.5 * z - 0.25 * y + 2.0 * x + 3.0; };
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x) v.at(z, y, x) = static_cast<float>(f(z, y, x));
  const int n = 6;
  const Volume r = resample_cubic(v, n, Interpolation::Trilinear);
  EXPECT_EQ(r.dims, (Dims{n, n, n}));
  EXPECT_DOUBLE_EQ(r.spacing_mm[0], 10.0 / 6);
  EXPECT_DOUBLE_EQ(r.spacing_mm[2], 8.0 / 6);
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double pz = (z + 0.5) * d.z / n - 0.5, py = (y + 0.5) * d.y / n - 0.5, px = (x + 0.5) * d.x / n - 0.5;
        EXPECT_NEAR(r.at(z, y, x), f(pz, py, px), 1e-4);
      }
}

TEST(Resample, NearestKeepsLabelsAndIdentityAtSameSize) {
  Rng rng(8);
  Mask m(Dims{5, 5, 5});
  for (auto& v : m.data) v = rng.uniform() < 0.5;
  EXPECT_EQ(resample_cubic(m, 5, Interpolation::Nearest).data, m.data);
  const Mask up = resample_cubic(m, 10, Interpolation::Nearest);
  for (int z = 0; z < 10; ++z)
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 10; ++x) EXPECT_EQ(up.at(z, y, x), m.at(z / 2, y / 2, x / 2));
  const Volume v = random_volume(Dims{4, 4, 4}, 1);
  const Volume same = resample_cubic(v, 4, Interpolation::Trilinear);
  for (std::size_t i = 0; i < v.data.size(); ++i) EXPECT_FLOAT_EQ(same.data[i], v.data[i]);
  Volume bad = v;
  bad.data[3] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(resample_cubic(bad, 4, Interpolation::Trilinear), std::invalid_argument);
}

TEST(Mvol, BitExactRoundTrip) {
  const fs::path dir = temp_dir("rt");
  const Volume v = random_volume(Dims{5, 7, 3}, 99);
  write_mvol(v, dir / "v.mvol");
  const Volume back = read_volume(dir / "v.mvol");
  EXPECT_EQ(back, v);
  EXPECT_EQ(std::memcmp(back.data.data(), v.data.data(), v.data.size() * 4), 0);
  EXPECT_EQ(detail::encode_mvol(back), read_file_bytes(dir / "v.mvol"));

  Mask m(Dims{2, 3, 4}, {1, 1, 3}, 0, Contrast::T2);
  m.data[5] = 1;
  write_mvol(m, dir / "m.mvol");
  EXPECT_EQ(read_mask(dir / "m.mvol"), m);
  EXPECT_THROW(read_mask(dir / "v.mvol"), MvolDtypeError);
  EXPECT_THROW(read_volume(dir / "m.mvol"), MvolDtypeError);
}

TEST(Mvol, ErrorCases) {
  const std::string good = detail::encode_mvol(Mask(Dims{2, 2, 2}));
  EXPECT_NO_THROW(decode_mvol(good));
  EXPECT_THROW(decode_mvol("NOTMVOL1xxxx"), MvolMagicError);
  EXPECT_THROW(decode_mvol(""), MvolMagicError);
  EXPECT_THROW(decode_mvol(good.substr(0, 10)), MvolTruncatedError);
  EXPECT_THROW(decode_mvol(good.substr(0, 20)), MvolTruncatedError);
  EXPECT_THROW(decode_mvol(good.substr(0, good.size() - 1)), MvolTruncatedError);
  EXPECT_THROW(decode_mvol(good + "x"), MvolSizeMismatchError);

  const std::string base = R"("spacing_mm":[1,1,1],"order":"zyx-row-major","contrast":"t1")";
  EXPECT_THROW(decode_mvol(encode_with_header(R"({"dims":[2,2,2],"dtype":"f64",)" + base + "}", 64)),
               MvolDtypeError);
  EXPECT_THROW(decode_mvol(encode_with_header("{not json", 0)), MvolHeaderError);
  EXPECT_THROW(decode_mvol(encode_with_header(R"({"dims":[2,2],"dtype":"u8",)" + base + "}", 4)),
               MvolHeaderError);
  EXPECT_THROW(decode_mvol(encode_with_header(R"({"dims":[0,2,2],"dtype":"u8",)" + base + "}", 0)),
               MvolHeaderError);
  EXPECT_THROW(decode_mvol(encode_with_header(
                   R"({"dims":[1,1,1],"dtype":"u8","spacing_mm":[1,1,1],"order":"xyz","contrast":"t1"})", 1)),
               MvolHeaderError);
  EXPECT_THROW(decode_mvol(encode_with_header(
                   R"({"dims":[1,1,1],"dtype":"u8","spacing_mm":[1,1,1],"order":"zyx-row-major","contrast":"pd"})",
                   1)),
               MvolHeaderError);
  EXPECT_THROW(decode_mvol(encode_with_header(R"({"dims":[1,1,1],"dtype":"u8"})", 1)), MvolHeaderError);

  const fs::path dir = temp_dir("err");
  std::string bad_mask = detail::encode_mvol(Mask(Dims{1, 1, 2}));
  bad_mask.back() = 7;
  std::ofstream(dir / "bad.mvol", std::ios::binary) << bad_mask;
  EXPECT_THROW(read_mask(dir / "bad.mvol"), MvolHeaderError);
  EXPECT_THROW(read_mvol(dir / "missing.mvol"), std::runtime_error);
}

TEST(Grid, GeometryHelpers) {
  Volume v(Dims{2, 3, 4}, {2, 3, 4});
  EXPECT_DOUBLE_EQ(v.voxel_mm3(), 24.0);
  EXPECT_EQ(v.index(1, 2, 3), 23u);
  EXPECT_FALSE(v.dims.cubic());
  EXPECT_EQ(contrast_from_string(to_string(Contrast::T2)), Contrast::T2);
  EXPECT_THROW(contrast_from_string("flair"), std::invalid_argument);
  EXPECT_EQ(view_from_string("coronal"), ViewAxis::Coronal);
  EXPECT_THROW(view_from_string("oblique"), std::invalid_argument);
}
