#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ssnet/layers.hpp"
#include "ssnet/tensor.hpp"

namespace ssnet {

struct KernelStride {
  int kernel = 1;
  int stride = 1;
};

// Receptive field of one output unit of a conv chain: r grows by (k - 1)
// times the product of all earlier strides.
inline int receptive_field(const std::vector<KernelStride>& chain) {
  int r = 1, jump = 1;
  for (const auto& ks : chain) {
    r += (ks.kernel - 1) * jump;
    jump *= ks.stride;
  }
  return r;
}

struct DiscriminatorSpec {
  int in_channels = 3;
  int base_channels = 16;
  int n_layers = 3;
  int kernel = 4;
  bool use_norm = true;
  double leaky_slope = 0.2;

  static DiscriminatorSpec paper_scale() {
    DiscriminatorSpec s;
    s.base_channels = 64;
    return s;
  }

  // Layer 0 and layers 1..n_layers-1 stride 2, layer n_layers stride 1,
  // then the stride-1 scoring conv. All use padding 1.
  [[nodiscard]] std::vector<KernelStride> chain() const {
    std::vector<KernelStride> c;
    for (int i = 0; i < n_layers; ++i) c.push_back({kernel, 2});
    c.push_back({kernel, 1});
    c.push_back({kernel, 1});
    return c;
  }

  [[nodiscard]] int channels(int layer) const {
    return base_channels * std::min(1 << layer, 8);
  }

  // Spatial size of the score grid for an S x S input; <= 0 means too small.
  [[nodiscard]] int score_size(int s) const {
    for (const auto& ks : chain()) {
      if (s + 2 < ks.kernel) return 0;
      s = (s + 2 - ks.kernel) / ks.stride + 1;
    }
    return s;
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("DiscriminatorSpec: " + m); };
    if (in_channels != 3) fail("in_channels must be 3 (image + two segmentation channels)");
    if (base_channels < 1) fail("base_channels must be positive");
    if (n_layers < 1) fail("n_layers must be >= 1");
    if (kernel < 2) fail("kernel must be >= 2");
    if (leaky_slope < 0) fail("leaky_slope must be >= 0");
  }
};

inline int receptive_field(const DiscriminatorSpec& spec) { return receptive_field(spec.chain()); }

// Channel concatenation, image first.
template <typename T>
Tensor<T> condition_pair(const Tensor<T>& image, const Tensor<T>& seg) {
  if (image.c() != 1 || seg.c() != 2 || image.n() != seg.n() || image.h() != seg.h() ||
      image.w() != seg.w())
    throw ShapeError("condition_pair: image " + image.shape().str() + " and segmentation " +
                     seg.shape().str() + " do not pair");
  Tensor<T> out(image.n(), 3, image.h(), image.w());
  const std::size_t m = image.shape().plane();
  for (int n = 0; n < image.n(); ++n) {
    std::copy_n(image.channel(n, 0), m, out.channel(n, 0));
    std::copy_n(seg.channel(n, 0), m, out.channel(n, 1));
    std::copy_n(seg.channel(n, 1), m, out.channel(n, 2));
  }
  return out;
}

// Splits a conditioned pair back into (image, segmentation).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_pair(const Tensor<T>& pair) {
  if (pair.c() != 3) throw ShapeError("split_pair: expected 3 channels");
  Tensor<T> image(pair.n(), 1, pair.h(), pair.w());
  Tensor<T> seg(pair.n(), 2, pair.h(), pair.w());
  const std::size_t m = pair.shape().plane();
  for (int n = 0; n < pair.n(); ++n) {
    std::copy_n(pair.channel(n, 0), m, image.channel(n, 0));
    std::copy_n(pair.channel(n, 1), m, seg.channel(n, 0));
    std::copy_n(pair.channel(n, 2), m, seg.channel(n, 1));
  }
  return {std::move(image), std::move(seg)};
}

// PatchGAN: conv4x4-norm-leakyrelu blocks ending in a one-channel conv that
// emits raw logits, one per receptive-field patch.
template <typename T>
class Discriminator {
 public:
  explicit Discriminator(DiscriminatorSpec spec = {}) : spec_(spec) {
    spec_.validate();
    const auto chain = spec_.chain();
    const int blocks = spec_.n_layers + 1;
    int cin = spec_.in_channels;
    for (int i = 0; i < blocks; ++i) {
      const int cout = spec_.channels(i);
      const bool norm = spec_.use_norm && i > 0;
      Block b;
      b.conv = Conv2d<T>("d" + std::to_string(i), cin, cout,
                         ConvGeom::square(spec_.kernel, chain[i].stride, 1), !norm);
      b.has_norm = norm;
      if (norm) b.norm = InstanceNorm2d<T>("d" + std::to_string(i) + ".norm", cout);
      b.act = LeakyRelu<T>(spec_.leaky_slope);
      blocks_.push_back(std::move(b));
      cin = cout;
    }
    score_ = Conv2d<T>("d_score", cin, 1, ConvGeom::square(spec_.kernel, 1, 1));
  }

  [[nodiscard]] const DiscriminatorSpec& spec() const { return spec_; }

  void init(Rng& rng) {
    for (auto& b : blocks_) {
      b.conv.init(rng);
      if (b.has_norm) b.norm.init(rng);
    }
    score_.init(rng);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.c() != spec_.in_channels)
      throw ShapeError("Discriminator expects 3 input channels, got " + x.shape().str());
    if (x.h() != x.w() || spec_.score_size(x.h()) < 1)
      throw ShapeError("Discriminator input " + x.shape().str() + " too small for " +
                       std::to_string(spec_.n_layers) + " strided layers");
    Tensor<T> h = x;
    for (auto& b : blocks_) {
      h = b.conv.forward(h);
      if (b.has_norm) h = b.norm.forward(h);
      h = b.act.forward(h);
    }
    return score_.forward(h);
  }

  Tensor<T> backward(const Tensor<T>& dscore) {
    Tensor<T> g = score_.backward(dscore);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
      g = it->act.backward(g);
      if (it->has_norm) g = it->norm.backward(g);
      g = it->conv.backward(g);
    }
    return g;
  }

  ParamList<T> params() {
    ParamList<T> out;
    for (auto& b : blocks_) {
      b.conv.collect(out);
      if (b.has_norm) b.norm.collect(out);
    }
    score_.collect(out);
    return out;
  }

 private:
  struct Block {
    Conv2d<T> conv;
    bool has_norm = false;
    InstanceNorm2d<T> norm;
    LeakyRelu<T> act;
  };

  DiscriminatorSpec spec_;
  std::vector<Block> blocks_;
  Conv2d<T> score_;
};

}  // namespace ssnet
