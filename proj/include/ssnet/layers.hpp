#pragma once

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <vector>

#include "ssnet/tensor.hpp"

namespace ssnet {

// Kernel, stride and padding of a 2-D convolution, per axis.
struct ConvGeom {
  int kh = 1, kw = 1;
  int sh = 1, sw = 1;
  int ph = 0, pw = 0;

  static constexpr ConvGeom square(int k, int s, int p) { return {k, k, s, s, p, p}; }

  [[nodiscard]] int out_h(int h) const { return (h + 2 * ph - kh) / sh + 1; }
  [[nodiscard]] int out_w(int w) const { return (w + 2 * pw - kw) / sw + 1; }
  [[nodiscard]] bool valid_for(int h, int w) const {
    return h + 2 * ph >= kh && w + 2 * pw >= kw;
  }
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

// col has shape [C*kh*kw, oh*ow], row-major.
template <typename T>
void im2col(const T* x, int c, int h, int w, const ConvGeom& g, int oh, int ow, T* col) {
  const std::size_t cols = static_cast<std::size_t>(oh) * ow;
  for (int ci = 0; ci < c; ++ci) {
    const T* xc = x + static_cast<std::size_t>(ci) * h * w;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        T* row = col + ((static_cast<std::size_t>(ci) * g.kh + ki) * g.kw + kj) * cols;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.sh - g.ph + ki;
          T* dst = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.sw - g.pw + kj;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-add col back into x.
template <typename T>
void col2im(const T* col, int c, int h, int w, const ConvGeom& g, int oh, int ow, T* x) {
  const std::size_t cols = static_cast<std::size_t>(oh) * ow;
  for (int ci = 0; ci < c; ++ci) {
    T* xc = x + static_cast<std::size_t>(ci) * h * w;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const T* row = col + ((static_cast<std::size_t>(ci) * g.kh + ki) * g.kw + kj) * cols;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.sh - g.ph + ki;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * ow;
          T* dst = xc + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.sw - g.pw + kj;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// Zero-mean normal with variance gain / fan_in; gain 2 is He-normal.
template <typename T>
void he_normal(Tensor<T>& w, double fan_in, Rng& rng, double gain = 2.0) {
  const double std = std::sqrt(gain / fan_in);
  for (auto& v : w.vec()) v = static_cast<T>(rng.normal() * std);
}

}  // namespace detail

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int cin, int cout, ConvGeom g, bool bias = true)
      : cin_(cin), cout_(cout), g_(g), has_bias_(bias),
        weight_(name + ".weight", Shape{cout, cin, g.kh, g.kw}),
        bias_(name + ".bias", Shape{1, bias ? cout : 0, 1, 1}) {}

  Tensor<T> forward(const Tensor<T>& x) {
    check_input(x);
    input_ = x;
    const int oh = g_.out_h(x.h()), ow = g_.out_w(x.w());
    Tensor<T> y(x.n(), cout_, oh, ow);
    const int k = cin_ * g_.kh * g_.kw;
    const int p = oh * ow;
    col_.resize(static_cast<std::size_t>(k) * p);
    detail::CMapMat<T> wmat(weight_.value.data(), cout_, k);
    for (int n = 0; n < x.n(); ++n) {
      detail::im2col(x.sample(n), cin_, x.h(), x.w(), g_, oh, ow, col_.data());
      detail::MapMat<T> ymat(y.sample(n), cout_, p);
      ymat.noalias() = wmat * detail::CMapMat<T>(col_.data(), k, p);
      if (has_bias_) {
        for (int co = 0; co < cout_; ++co) ymat.row(co).array() += bias_.value[co];
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const Tensor<T>& x = input_;
    const int oh = g_.out_h(x.h()), ow = g_.out_w(x.w());
    if (!(dy.shape() == Shape{x.n(), cout_, oh, ow}))
      throw ShapeError("Conv2d backward: unexpected gradient shape " + dy.shape().str());
    const int k = cin_ * g_.kh * g_.kw;
    const int p = oh * ow;
    Tensor<T> dx(x.shape());
    col_.resize(static_cast<std::size_t>(k) * p);
    dcol_.resize(static_cast<std::size_t>(k) * p);
    detail::CMapMat<T> wmat(weight_.value.data(), cout_, k);
    detail::MapMat<T> dw(weight_.grad.data(), cout_, k);
    for (int n = 0; n < x.n(); ++n) {
      detail::CMapMat<T> dymat(dy.sample(n), cout_, p);
      detail::im2col(x.sample(n), cin_, x.h(), x.w(), g_, oh, ow, col_.data());
      dw.noalias() += dymat * detail::CMapMat<T>(col_.data(), k, p).transpose();
      if (has_bias_) {
        for (int co = 0; co < cout_; ++co) bias_.grad[co] += dymat.row(co).sum();
      }
      detail::MapMat<T>(dcol_.data(), k, p).noalias() = wmat.transpose() * dymat;
      detail::col2im(dcol_.data(), cin_, x.h(), x.w(), g_, oh, ow, dx.sample(n));
    }
    return dx;
  }

  [[nodiscard]] Shape output_shape(const Shape& in) const {
    return {in.n, cout_, g_.out_h(in.h), g_.out_w(in.w)};
  }

  void init(Rng& rng, double gain = 2.0) {
    detail::he_normal(weight_.value, static_cast<double>(cin_) * g_.kh * g_.kw, rng, gain);
    bias_.value.zero();
  }

  void collect(ParamList<T>& out) {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }

  [[nodiscard]] std::size_t param_count() const {
    return weight_.value.size() + (has_bias_ ? bias_.value.size() : 0);
  }

  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }
  [[nodiscard]] const ConvGeom& geom() const { return g_; }
  [[nodiscard]] int in_channels() const { return cin_; }
  [[nodiscard]] int out_channels() const { return cout_; }

 private:
  void check_input(const Tensor<T>& x) const {
    if (x.c() != cin_)
      throw ShapeError("Conv2d " + weight_.name + ": expected " + std::to_string(cin_) +
                       " channels, got " + x.shape().str());
    if (!g_.valid_for(x.h(), x.w()))
      throw ShapeError("Conv2d " + weight_.name + ": input " + x.shape().str() +
                       " smaller than kernel");
  }

  int cin_ = 0, cout_ = 0;
  ConvGeom g_{};
  bool has_bias_ = true;
  Param<T> weight_;
  Param<T> bias_;
  Tensor<T> input_;
  AlignedVector<T> col_, dcol_;
};

// Transposed convolution; weight layout [Cin, Cout, kh, kw]. Output size is
// (h - 1) * s - 2p + k per axis.
template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(std::string name, int cin, int cout, ConvGeom g)
      : cin_(cin), cout_(cout), g_(g),
        weight_(name + ".weight", Shape{cin, cout, g.kh, g.kw}),
        bias_(name + ".bias", Shape{1, cout, 1, 1}) {}

  [[nodiscard]] int out_h(int h) const { return (h - 1) * g_.sh - 2 * g_.ph + g_.kh; }
  [[nodiscard]] int out_w(int w) const { return (w - 1) * g_.sw - 2 * g_.pw + g_.kw; }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.c() != cin_) throw ShapeError("ConvTranspose2d " + weight_.name + ": channel mismatch");
    input_ = x;
    const int oh = out_h(x.h()), ow = out_w(x.w());
    Tensor<T> y(x.n(), cout_, oh, ow);
    const int k = cout_ * g_.kh * g_.kw;
    const int p = x.h() * x.w();
    col_.resize(static_cast<std::size_t>(k) * p);
    detail::CMapMat<T> wmat(weight_.value.data(), cin_, k);
    for (int n = 0; n < x.n(); ++n) {
      detail::MapMat<T>(col_.data(), k, p).noalias() =
          wmat.transpose() * detail::CMapMat<T>(x.sample(n), cin_, p);
      detail::col2im(col_.data(), cout_, oh, ow, g_, x.h(), x.w(), y.sample(n));
      for (int co = 0; co < cout_; ++co) {
        T* yc = y.channel(n, co);
        for (std::size_t i = 0; i < y.shape().plane(); ++i) yc[i] += bias_.value[co];
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const Tensor<T>& x = input_;
    const int oh = out_h(x.h()), ow = out_w(x.w());
    if (!(dy.shape() == Shape{x.n(), cout_, oh, ow}))
      throw ShapeError("ConvTranspose2d backward: unexpected gradient shape");
    const int k = cout_ * g_.kh * g_.kw;
    const int p = x.h() * x.w();
    Tensor<T> dx(x.shape());
    col_.resize(static_cast<std::size_t>(k) * p);
    detail::CMapMat<T> wmat(weight_.value.data(), cin_, k);
    detail::MapMat<T> dw(weight_.grad.data(), cin_, k);
    for (int n = 0; n < x.n(); ++n) {
      detail::im2col(dy.sample(n), cout_, oh, ow, g_, x.h(), x.w(), col_.data());
      detail::CMapMat<T> dcol(col_.data(), k, p);
      detail::CMapMat<T> xmat(x.sample(n), cin_, p);
      dw.noalias() += xmat * dcol.transpose();
      detail::MapMat<T>(dx.sample(n), cin_, p).noalias() = wmat * dcol;
      for (int co = 0; co < cout_; ++co) {
        const T* dyc = dy.channel(n, co);
        T s = 0;
        for (std::size_t i = 0; i < dy.shape().plane(); ++i) s += dyc[i];
        bias_.grad[co] += s;
      }
    }
    return dx;
  }

  void init(Rng& rng, double gain = 2.0) {
    // Each output pixel receives cin * (k/s)^2 contributions.
    const double fan_in =
        static_cast<double>(cin_) * g_.kh * g_.kw / (static_cast<double>(g_.sh) * g_.sw);
    detail::he_normal(weight_.value, fan_in, rng, gain);
    bias_.value.zero();
  }

  void collect(ParamList<T>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  [[nodiscard]] std::size_t param_count() const {
    return weight_.value.size() + bias_.value.size();
  }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

 private:
  int cin_ = 0, cout_ = 0;
  ConvGeom g_{};
  Param<T> weight_;
  Param<T> bias_;
  Tensor<T> input_;
  AlignedVector<T> col_;
};

// Per-sample, per-channel normalization over the spatial plane, with affine
// scale and shift. Samples never interact, so batched and single-sample
// forwards agree.
template <typename T>
class InstanceNorm2d {
 public:
  InstanceNorm2d() = default;
  InstanceNorm2d(std::string name, int channels, double eps = 1e-5)
      : c_(channels), eps_(eps), gamma_(name + ".gamma", Shape{1, channels, 1, 1}),
        beta_(name + ".beta", Shape{1, channels, 1, 1}) {
    gamma_.value.fill(T(1));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.c() != c_) throw ShapeError("InstanceNorm2d " + gamma_.name + ": channel mismatch");
    Tensor<T> y(x.shape());
    xhat_ = Tensor<T>(x.shape());
    inv_std_.assign(static_cast<std::size_t>(x.n()) * c_, T(0));
    const std::size_t m = x.shape().plane();
    for (int n = 0; n < x.n(); ++n) {
      for (int c = 0; c < c_; ++c) {
        const T* xc = x.channel(n, c);
        T mean = 0;
        for (std::size_t i = 0; i < m; ++i) mean += xc[i];
        mean /= static_cast<T>(m);
        T var = 0;
        for (std::size_t i = 0; i < m; ++i) var += (xc[i] - mean) * (xc[i] - mean);
        var /= static_cast<T>(m);
        const T inv = T(1) / std::sqrt(var + static_cast<T>(eps_));
        inv_std_[static_cast<std::size_t>(n) * c_ + c] = inv;
        T* xh = xhat_.channel(n, c);
        T* yc = y.channel(n, c);
        const T g = gamma_.value[c], b = beta_.value[c];
        for (std::size_t i = 0; i < m; ++i) {
          xh[i] = (xc[i] - mean) * inv;
          yc[i] = g * xh[i] + b;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    xhat_.require_same(dy, "InstanceNorm2d backward");
    Tensor<T> dx(dy.shape());
    const std::size_t m = dy.shape().plane();
    const T mt = static_cast<T>(m);
    for (int n = 0; n < dy.n(); ++n) {
      for (int c = 0; c < c_; ++c) {
        const T* d = dy.channel(n, c);
        const T* xh = xhat_.channel(n, c);
        T sum_d = 0, sum_dx = 0;
        for (std::size_t i = 0; i < m; ++i) {
          sum_d += d[i];
          sum_dx += d[i] * xh[i];
        }
        gamma_.grad[c] += sum_dx;
        beta_.grad[c] += sum_d;
        const T g = gamma_.value[c];
        const T scale = g * inv_std_[static_cast<std::size_t>(n) * c_ + c] / mt;
        T* o = dx.channel(n, c);
        for (std::size_t i = 0; i < m; ++i) o[i] = scale * (mt * d[i] - sum_d - xh[i] * sum_dx);
      }
    }
    return dx;
  }

  void init(Rng&) {
    gamma_.value.fill(T(1));
    beta_.value.zero();
  }

  void collect(ParamList<T>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
  [[nodiscard]] std::size_t param_count() const { return 2 * static_cast<std::size_t>(c_); }
  Param<T>& gamma() { return gamma_; }
  Param<T>& beta() { return beta_; }

 private:
  int c_ = 0;
  double eps_ = 1e-5;
  Param<T> gamma_;
  Param<T> beta_;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

// slope 0 gives a plain ReLU.
template <typename T>
class LeakyRelu {
 public:
  explicit LeakyRelu(double slope = 0.0) : slope_(static_cast<T>(slope)) {}

  Tensor<T> forward(const Tensor<T>& x) {
    input_ = x;
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : slope_ * x[i];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    input_.require_same(dy, "LeakyRelu backward");
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = input_[i] > T(0) ? dy[i] : slope_ * dy[i];
    return dx;
  }

 private:
  T slope_;
  Tensor<T> input_;
};

template <typename T>
using Relu = LeakyRelu<T>;

// Spatial crop [y0, y0 + h) x [x0, x0 + w).
template <typename T>
class Crop {
 public:
  Crop() = default;
  Crop(int y0, int x0, int h, int w) : y0_(y0), x0_(x0), h_(h), w_(w) {}

  Tensor<T> forward(const Tensor<T>& x) {
    if (y0_ + h_ > x.h() || x0_ + w_ > x.w()) throw ShapeError("Crop outside input");
    in_shape_ = x.shape();
    Tensor<T> y(x.n(), x.c(), h_, w_);
    for (int n = 0; n < x.n(); ++n)
      for (int c = 0; c < x.c(); ++c)
        for (int i = 0; i < h_; ++i)
          for (int j = 0; j < w_; ++j) y.at(n, c, i, j) = x.at(n, c, y0_ + i, x0_ + j);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(in_shape_);
    for (int n = 0; n < dy.n(); ++n)
      for (int c = 0; c < dy.c(); ++c)
        for (int i = 0; i < h_; ++i)
          for (int j = 0; j < w_; ++j) dx.at(n, c, y0_ + i, x0_ + j) = dy.at(n, c, i, j);
    return dx;
  }

 private:
  int y0_ = 0, x0_ = 0, h_ = 0, w_ = 0;
  Shape in_shape_{};
};

// Two-class softmax along the channel axis.
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits) {
  Tensor<T> p(logits.shape());
  const std::size_t m = logits.shape().plane();
  for (int n = 0; n < logits.n(); ++n) {
    for (std::size_t i = 0; i < m; ++i) {
      T mx = logits.channel(n, 0)[i];
      for (int c = 1; c < logits.c(); ++c) mx = std::max(mx, logits.channel(n, c)[i]);
      T s = 0;
      for (int c = 0; c < logits.c(); ++c) {
        const T e = std::exp(logits.channel(n, c)[i] - mx);
        p.channel(n, c)[i] = e;
        s += e;
      }
      for (int c = 0; c < logits.c(); ++c) p.channel(n, c)[i] /= s;
    }
  }
  return p;
}

// Gradient w.r.t. logits given probabilities p and upstream gradient dp.
template <typename T>
Tensor<T> softmax_channels_backward(const Tensor<T>& p, const Tensor<T>& dp) {
  p.require_same(dp, "softmax backward");
  Tensor<T> dl(p.shape());
  const std::size_t m = p.shape().plane();
  for (int n = 0; n < p.n(); ++n) {
    for (std::size_t i = 0; i < m; ++i) {
      T dot = 0;
      for (int c = 0; c < p.c(); ++c) dot += p.channel(n, c)[i] * dp.channel(n, c)[i];
      for (int c = 0; c < p.c(); ++c)
        dl.channel(n, c)[i] = p.channel(n, c)[i] * (dp.channel(n, c)[i] - dot);
    }
  }
  return dl;
}

}  // namespace ssnet
