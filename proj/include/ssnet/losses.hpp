#pragma once

#include <cmath>
#include <stdexcept>

#include "ssnet/tensor.hpp"

namespace ssnet {

template <typename T>
struct LossGrad {
  T loss{};
  Tensor<T> grad;  // d loss / d input, same shape as the differentiated input
};

// Negative soft Dice on the foreground channel (channel 1), averaged over the
// batch: -(2 sum p g + eps) / (sum p + sum g + eps).
template <typename T>
LossGrad<T> soft_dice_loss(const Tensor<T>& probs, const Tensor<T>& target, double eps = 1.0) {
  probs.require_same(target, "soft_dice_loss");
  if (probs.c() != 2) throw ShapeError("soft_dice_loss expects two channels");
  LossGrad<T> out{T(0), Tensor<T>(probs.shape())};
  const std::size_t m = probs.shape().plane();
  const T e = static_cast<T>(eps);
  const T inv_b = T(1) / static_cast<T>(probs.n());
  for (int n = 0; n < probs.n(); ++n) {
    const T* p = probs.channel(n, 1);
    const T* g = target.channel(n, 1);
    T inter = 0, sp = 0, sg = 0;
    for (std::size_t i = 0; i < m; ++i) {
      inter += p[i] * g[i];
      sp += p[i];
      sg += g[i];
    }
    const T num = T(2) * inter + e;
    const T den = sp + sg + e;
    if (den == T(0)) {
      // Both empty with eps = 0: define as perfect agreement.
      out.loss += -inv_b;
      continue;
    }
    out.loss += -(num / den) * inv_b;
    T* d = out.grad.channel(n, 1);
    for (std::size_t i = 0; i < m; ++i) d[i] = -(T(2) * g[i] * den - num) / (den * den) * inv_b;
  }
  return out;
}

template <typename T>
T softplus(T z) {
  return std::max(z, T(0)) + std::log1p(std::exp(-std::abs(z)));
}

template <typename T>
T sigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

template <typename T>
struct GanLosses {
  T loss_d{};
  T loss_g{};
  Tensor<T> d_real_grad;  // d loss_d / d real logits
  Tensor<T> d_fake_grad;  // d loss_d / d fake logits
  Tensor<T> g_fake_grad;  // d loss_g / d fake logits
};

// BCE-with-logits GAN objectives averaged over every patch score:
// loss_d = (BCE(real, 1) + BCE(fake, 0)) / 2, loss_g = BCE(fake, 1).
template <typename T>
GanLosses<T> gan_losses(const Tensor<T>& real_logits, const Tensor<T>& fake_logits) {
  real_logits.require_same(fake_logits, "gan_losses");
  const std::size_t m = real_logits.size();
  if (m == 0) throw ShapeError("gan_losses: empty score grid");
  GanLosses<T> out;
  out.d_real_grad = Tensor<T>(real_logits.shape());
  out.d_fake_grad = Tensor<T>(real_logits.shape());
  out.g_fake_grad = Tensor<T>(real_logits.shape());
  const T inv = T(1) / static_cast<T>(m);
  T real_sum = 0, fake_sum = 0, g_sum = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const T zr = real_logits[i], zf = fake_logits[i];
    if (!std::isfinite(zr) || !std::isfinite(zf))
      throw std::domain_error("gan_losses: non-finite discriminator logit");
    real_sum += softplus(-zr);
    fake_sum += softplus(zf);
    g_sum += softplus(-zf);
    out.d_real_grad[i] = T(0.5) * (sigmoid(zr) - T(1)) * inv;
    out.d_fake_grad[i] = T(0.5) * sigmoid(zf) * inv;
    out.g_fake_grad[i] = (sigmoid(zf) - T(1)) * inv;
  }
  out.loss_d = T(0.5) * (real_sum + fake_sum) * inv;
  out.loss_g = g_sum * inv;
  return out;
}

template <typename T>
T ssnet_loss(T dice, T gan_g, T lambda) {
  if (lambda < T(0)) throw std::invalid_argument("lambda must be >= 0");
  return dice + lambda * gan_g;
}

}  // namespace ssnet
