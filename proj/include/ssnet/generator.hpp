#pragma once

#include <array>
#include <string>
#include <vector>

#include "ssnet/layers.hpp"
#include "ssnet/tensor.hpp"

namespace ssnet {

enum class KernelRule { FeatureResolution, Fixed };

// Largest odd kernel not exceeding the feature-map resolution; with the fixed
// rule the requested kernel is capped by the same bound.
inline int kernel_for_level(int feature_size, KernelRule rule, int fixed_kernel = 7) {
  if (feature_size < 1) throw std::invalid_argument("feature_size must be >= 1");
  const int largest_odd = (feature_size % 2 == 1) ? feature_size : feature_size - 1;
  if (rule == KernelRule::FeatureResolution) return largest_odd;
  return std::min(fixed_kernel, largest_odd);
}

inline constexpr int kScales = 5;
inline constexpr int kStages = 4;

struct GeneratorSpec {
  int input_size = 64;
  int in_channels = 1;
  int num_classes = 2;
  std::array<int, kScales> encoder_channels{16, 32, 64, 128, 256};
  std::array<int, kStages> blocks_per_stage{1, 1, 1, 1};
  KernelRule gcn_kernel_rule = KernelRule::FeatureResolution;
  int gcn_fixed_kernel = 7;
  int decoder_channels = 2;
  // Stem as literally described (1x1 kernel, stride 2, padding 3); the
  // inflated border is cropped away so the scale ladder still holds.
  bool literal_stem = false;

  static GeneratorSpec paper_scale() {
    GeneratorSpec s;
    s.input_size = 512;
    s.encoder_channels = {64, 256, 512, 1024, 2048};
    return s;
  }

  [[nodiscard]] int scale_size(int level) const { return input_size >> (level + 1); }
  [[nodiscard]] int gcn_kernel(int level) const {
    return kernel_for_level(scale_size(level), gcn_kernel_rule, gcn_fixed_kernel);
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("GeneratorSpec: " + m); };
    if (input_size < 64 || (input_size & (input_size - 1)) != 0)
      fail("input_size must be a power of two >= 64 (five scales down to S/32 >= 2)");
    if (in_channels != 1) fail("in_channels must be 1");
    if (num_classes != 2) fail("num_classes must be 2");
    if (decoder_channels != 2) fail("decoder_channels must be 2");
    for (int c : encoder_channels)
      if (c < 1) fail("encoder channels must be positive");
    for (int b : blocks_per_stage)
      if (b < 1) fail("blocks_per_stage entries must be >= 1");
    if (gcn_kernel_rule == KernelRule::Fixed && (gcn_fixed_kernel < 1 || gcn_fixed_kernel % 2 == 0))
      fail("fixed GCN kernel must be a positive odd integer");
  }
};

// One row per layer: name, output shape of a single-sample forward, parameter count.
struct TraceEntry {
  std::string name;
  Shape shape;
  std::size_t params = 0;
};
using LayerShapeTrace = std::vector<TraceEntry>;

// ResNet basic block: conv3x3-norm-relu-conv3x3-norm, shortcut add, relu.
// A strided or widening block uses a 1x1 projection shortcut.
template <typename T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(const std::string& name, int cin, int cout, int stride)
      : conv1_(name + ".conv1", cin, cout, ConvGeom::square(3, stride, 1), false),
        norm1_(name + ".norm1", cout),
        conv2_(name + ".conv2", cout, cout, ConvGeom::square(3, 1, 1), false),
        norm2_(name + ".norm2", cout),
        project_(stride != 1 || cin != cout) {
    if (project_) {
      proj_ = Conv2d<T>(name + ".proj", cin, cout, ConvGeom::square(1, stride, 0), false);
      proj_norm_ = InstanceNorm2d<T>(name + ".proj_norm", cout);
    }
  }

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> branch = norm2_.forward(conv2_.forward(relu1_.forward(norm1_.forward(conv1_.forward(x)))));
    if (project_)
      branch += proj_norm_.forward(proj_.forward(x));
    else
      branch += x;
    return relu_out_.forward(branch);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const Tensor<T> dsum = relu_out_.backward(dy);
    Tensor<T> dx = conv1_.backward(norm1_.backward(relu1_.backward(conv2_.backward(norm2_.backward(dsum)))));
    if (project_)
      dx += proj_.backward(proj_norm_.backward(dsum));
    else
      dx += dsum;
    return dx;
  }

  void init(Rng& rng) {
    conv1_.init(rng);
    norm1_.init(rng);
    conv2_.init(rng);
    norm2_.init(rng);
    if (project_) {
      proj_.init(rng);
      proj_norm_.init(rng);
    }
  }

  void collect(ParamList<T>& out) {
    conv1_.collect(out);
    norm1_.collect(out);
    conv2_.collect(out);
    norm2_.collect(out);
    if (project_) {
      proj_.collect(out);
      proj_norm_.collect(out);
    }
  }

  [[nodiscard]] bool projects() const { return project_; }
  Conv2d<T>& conv1() { return conv1_; }
  Conv2d<T>& conv2() { return conv2_; }
  InstanceNorm2d<T>& norm2() { return norm2_; }

 private:
  Conv2d<T> conv1_;
  InstanceNorm2d<T> norm1_;
  Relu<T> relu1_;
  Conv2d<T> conv2_;
  InstanceNorm2d<T> norm2_;
  bool project_ = false;
  Conv2d<T> proj_;
  InstanceNorm2d<T> proj_norm_;
  Relu<T> relu_out_;
};

// Large separable kernel: (k x 1 then 1 x k) + (1 x k then k x 1), no
// nonlinearity in between.
template <typename T>
class GcnUnit {
 public:
  GcnUnit() = default;
  GcnUnit(const std::string& name, int cin, int k, int cout = 2) : k_(k) {
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("GCN kernel must be odd, got " + std::to_string(k));
    const int p = k / 2;
    a1_ = Conv2d<T>(name + ".a1", cin, cout, ConvGeom{k, 1, 1, 1, p, 0});
    a2_ = Conv2d<T>(name + ".a2", cout, cout, ConvGeom{1, k, 1, 1, 0, p});
    b1_ = Conv2d<T>(name + ".b1", cin, cout, ConvGeom{1, k, 1, 1, 0, p});
    b2_ = Conv2d<T>(name + ".b2", cout, cout, ConvGeom{k, 1, 1, 1, p, 0});
  }

  Tensor<T> forward(const Tensor<T>& x) {
    if (k_ > x.h() || k_ > x.w())
      throw ShapeError("GCN kernel " + std::to_string(k_) + " exceeds feature map " + x.shape().str());
    Tensor<T> y = a2_.forward(a1_.forward(x));
    y += b2_.forward(b1_.forward(x));
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx = a1_.backward(a2_.backward(dy));
    dx += b1_.backward(b2_.backward(dy));
    return dx;
  }

  // No ReLU follows these convolutions, so they use unit gain.
  void init(Rng& rng) {
    a1_.init(rng, 1.0);
    a2_.init(rng, 1.0);
    b1_.init(rng, 1.0);
    b2_.init(rng, 1.0);
  }

  void collect(ParamList<T>& out) {
    a1_.collect(out);
    a2_.collect(out);
    b1_.collect(out);
    b2_.collect(out);
  }

  [[nodiscard]] std::size_t param_count() const {
    return a1_.param_count() + a2_.param_count() + b1_.param_count() + b2_.param_count();
  }
  [[nodiscard]] int kernel() const { return k_; }
  Conv2d<T>& a1() { return a1_; }
  Conv2d<T>& a2() { return a2_; }
  Conv2d<T>& b1() { return b1_; }
  Conv2d<T>& b2() { return b2_; }

 private:
  int k_ = 1;
  Conv2d<T> a1_, a2_, b1_, b2_;
};

// y = x + conv3x3(relu(conv3x3(x))).
template <typename T>
class BoundaryRefine {
 public:
  BoundaryRefine() = default;
  BoundaryRefine(const std::string& name, int channels = 2)
      : c1_(name + ".c1", channels, channels, ConvGeom::square(3, 1, 1)),
        c2_(name + ".c2", channels, channels, ConvGeom::square(3, 1, 1)) {}

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> y = c2_.forward(relu_.forward(c1_.forward(x)));
    y += x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx = c1_.backward(relu_.backward(c2_.backward(dy)));
    dx += dy;
    return dx;
  }

  // The residual branch starts at zero, so the block is the identity at init.
  void init(Rng& rng) {
    c1_.init(rng);
    c2_.init(rng);
    c2_.weight().value.zero();
  }
  void collect(ParamList<T>& out) {
    c1_.collect(out);
    c2_.collect(out);
  }
  [[nodiscard]] std::size_t param_count() const { return c1_.param_count() + c2_.param_count(); }
  Conv2d<T>& c1() { return c1_; }
  Conv2d<T>& c2() { return c2_; }

 private:
  Conv2d<T> c1_;
  Relu<T> relu_;
  Conv2d<T> c2_;
};

// Encoder (stem + four residual stages) feeding a GCN unit and boundary
// refinement at each of the five scales S/2 .. S/32; the decoder upsamples
// from the deepest scale, adding each shallower skip, and a final transposed
// convolution restores S x S.
template <typename T>
class Generator {
 public:
  explicit Generator(GeneratorSpec spec = {}) : spec_(std::move(spec)) {
    spec_.validate();
    const auto& ch = spec_.encoder_channels;
    if (spec_.literal_stem) {
      stem_ = Conv2d<T>("stem", spec_.in_channels, ch[0], ConvGeom::square(1, 2, 3));
      // Output row o samples input row 2o - 3; rows 2 .. S/2+1 cover odd input rows.
      stem_crop_ = Crop<T>(2, 2, spec_.input_size / 2, spec_.input_size / 2);
    } else {
      stem_ = Conv2d<T>("stem", spec_.in_channels, ch[0], ConvGeom::square(7, 2, 3));
    }
    for (int s = 0; s < kStages; ++s) {
      auto& stage = stages_[s];
      for (int b = 0; b < spec_.blocks_per_stage[s]; ++b) {
        const std::string name = "enc" + std::to_string(s + 1) + ".block" + std::to_string(b);
        stage.emplace_back(name, b == 0 ? ch[s] : ch[s + 1], ch[s + 1], b == 0 ? 2 : 1);
      }
    }
    for (int l = 0; l < kScales; ++l) {
      const std::string sl = std::to_string(l);
      gcn_[l] = GcnUnit<T>("gcn" + sl, ch[l], spec_.gcn_kernel(l), spec_.decoder_channels);
      br_skip_[l] = BoundaryRefine<T>("br_skip" + sl, spec_.decoder_channels);
    }
    for (int l = 0; l < kScales - 1; ++l) {
      const std::string sl = std::to_string(l);
      deconv_[l] = ConvTranspose2d<T>("deconv" + sl, 2, 2, ConvGeom::square(4, 2, 1));
      br_dec_[l] = BoundaryRefine<T>("br_dec" + sl, spec_.decoder_channels);
    }
    deconv_final_ = ConvTranspose2d<T>("deconv_final", 2, 2, ConvGeom::square(4, 2, 1));
    br_final_ = BoundaryRefine<T>("br_final", spec_.decoder_channels);
  }

  [[nodiscard]] const GeneratorSpec& spec() const { return spec_; }

  void init(Rng& rng) {
    stem_.init(rng);
    for (auto& stage : stages_)
      for (auto& b : stage) b.init(rng);
    for (int l = 0; l < kScales; ++l) {
      gcn_[l].init(rng);
      br_skip_[l].init(rng);
    }
    for (int l = 0; l < kScales - 1; ++l) {
      deconv_[l].init(rng, 1.0);
      br_dec_[l].init(rng);
    }
    deconv_final_.init(rng, 1.0);
    br_final_.init(rng);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    const int s = spec_.input_size;
    if (x.c() != spec_.in_channels || x.h() != s || x.w() != s)
      throw ShapeError("Generator expects [B,1," + std::to_string(s) + "," + std::to_string(s) +
                       "], got " + x.shape().str());
    trace_.clear();
    std::array<Tensor<T>, kScales> feat;
    Tensor<T> stem_out = stem_.forward(x);
    record("stem", stem_out, stem_.param_count());
    if (spec_.literal_stem) stem_out = stem_crop_.forward(stem_out);
    feat[0] = stem_relu_.forward(stem_out);
    for (int st = 0; st < kStages; ++st) {
      Tensor<T> h = feat[st];
      for (auto& b : stages_[st]) h = b.forward(h);
      feat[st + 1] = std::move(h);
      record("enc" + std::to_string(st + 1), feat[st + 1], stage_params(st));
    }
    std::array<Tensor<T>, kScales> skip;
    for (int l = 0; l < kScales; ++l) {
      Tensor<T> g = gcn_[l].forward(feat[l]);
      record("gcn" + std::to_string(l), g, gcn_[l].param_count());
      skip[l] = br_skip_[l].forward(g);
      record("br_skip" + std::to_string(l), skip[l], br_skip_[l].param_count());
    }
    Tensor<T> d = skip[kScales - 1];
    for (int l = kScales - 2; l >= 0; --l) {
      Tensor<T> up = deconv_[l].forward(d);
      record("deconv" + std::to_string(l), up, deconv_[l].param_count());
      up += skip[l];
      d = br_dec_[l].forward(up);
      record("br_dec" + std::to_string(l), d, br_dec_[l].param_count());
    }
    Tensor<T> up = deconv_final_.forward(d);
    record("deconv_final", up, deconv_final_.param_count());
    Tensor<T> out = br_final_.forward(up);
    record("br_final", out, br_final_.param_count());
    return out;
  }

  // Accumulates parameter gradients and returns the gradient w.r.t. the input.
  Tensor<T> backward(const Tensor<T>& dlogits) {
    Tensor<T> dd = deconv_final_.backward(br_final_.backward(dlogits));
    std::array<Tensor<T>, kScales> dskip;
    for (int l = 0; l < kScales - 1; ++l) {
      Tensor<T> dsum = br_dec_[l].backward(dd);
      dd = deconv_[l].backward(dsum);
      dskip[l] = std::move(dsum);
    }
    dskip[kScales - 1] = std::move(dd);
    std::array<Tensor<T>, kScales> dfeat;
    for (int l = 0; l < kScales; ++l) dfeat[l] = gcn_[l].backward(br_skip_[l].backward(dskip[l]));
    for (int st = kStages - 1; st >= 0; --st) {
      Tensor<T> g = dfeat[st + 1];
      for (auto it = stages_[st].rbegin(); it != stages_[st].rend(); ++it) g = it->backward(g);
      dfeat[st] += g;
    }
    Tensor<T> g = stem_relu_.backward(dfeat[0]);
    if (spec_.literal_stem) g = stem_crop_.backward(g);
    return stem_.backward(g);
  }

  ParamList<T> params() {
    ParamList<T> out;
    stem_.collect(out);
    for (auto& stage : stages_)
      for (auto& b : stage) b.collect(out);
    for (int l = 0; l < kScales; ++l) {
      gcn_[l].collect(out);
      br_skip_[l].collect(out);
    }
    for (int l = 0; l < kScales - 1; ++l) {
      deconv_[l].collect(out);
      br_dec_[l].collect(out);
    }
    deconv_final_.collect(out);
    br_final_.collect(out);
    return out;
  }

  [[nodiscard]] std::size_t param_count() {
    std::size_t n = 0;
    for (auto* p : params()) n += p->value.size();
    return n;
  }

  // Shapes and parameter counts of a single-sample forward.
  LayerShapeTrace trace() {
    Tensor<T> x(1, spec_.in_channels, spec_.input_size, spec_.input_size);
    tracing_ = true;
    forward(x);
    tracing_ = false;
    LayerShapeTrace out = std::move(trace_);
    trace_.clear();
    return out;
  }

  Conv2d<T>& stem() { return stem_; }
  std::vector<ResidualBlock<T>>& stage(int s) { return stages_.at(s); }
  GcnUnit<T>& gcn(int l) { return gcn_.at(l); }
  BoundaryRefine<T>& br_skip(int l) { return br_skip_.at(l); }
  BoundaryRefine<T>& br_dec(int l) { return br_dec_.at(l); }
  ConvTranspose2d<T>& deconv(int l) { return deconv_.at(l); }
  ConvTranspose2d<T>& deconv_final() { return deconv_final_; }
  BoundaryRefine<T>& br_final() { return br_final_; }

 private:
  void record(const std::string& name, const Tensor<T>& t, std::size_t params) {
    if (tracing_) trace_.push_back({name, t.shape(), params});
  }

  std::size_t stage_params(int st) {
    ParamList<T> ps;
    for (auto& b : stages_[st]) b.collect(ps);
    std::size_t n = 0;
    for (auto* p : ps) n += p->value.size();
    return n;
  }

  GeneratorSpec spec_;
  Conv2d<T> stem_;
  Crop<T> stem_crop_;
  Relu<T> stem_relu_;
  std::array<std::vector<ResidualBlock<T>>, kStages> stages_;
  std::array<GcnUnit<T>, kScales> gcn_;
  std::array<BoundaryRefine<T>, kScales> br_skip_;
  std::array<ConvTranspose2d<T>, kScales - 1> deconv_;
  std::array<BoundaryRefine<T>, kScales - 1> br_dec_;
  ConvTranspose2d<T> deconv_final_;
  BoundaryRefine<T> br_final_;
  bool tracing_ = false;
  LayerShapeTrace trace_;
};

}  // namespace ssnet
