#pragma once
// l1 + structural-similarity training loss with a hand-written backward pass.
//
// SSIM here: 11x11 Gaussian window (sigma 1.5) applied with zero padding
// ("same" output size), K1=0.01 / K2=0.03, dynamic range 1, computed per
// channel and averaged over channels and pixels. The window is separable, so
// forward needs 5 blurs per channel and backward another 3: the adjoint of a
// symmetric blur is the same blur.

#include <array>
#include <cmath>

#include "procomp/core/tensor.hpp"
#include "procomp/kernels/kernels.hpp"

namespace procomp::nn {

inline constexpr int kSsimWin = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

template <typename T>
std::array<T, kSsimWin> ssim_window() {
  std::array<T, kSsimWin> k{};
  double s = 0;
  for (int i = 0; i < kSsimWin; ++i) {
    double d = i - kSsimWin / 2;
    double v = std::exp(-d * d / (2 * kSsimSigma * kSsimSigma));
    s += v;
  }
  for (int i = 0; i < kSsimWin; ++i) {
    double d = i - kSsimWin / 2;
    k[i] = T(std::exp(-d * d / (2 * kSsimSigma * kSsimSigma)) / s);
  }
  return k;
}

// state kept from forward for the backward pass (per full [C,H,W] pair)
template <typename T>
struct SsimState {
  Tensor<T> mu_a, mu_b, sa, sb, sab;  // per-channel stacked [C,H,W]
  Tensor<T> tmp, t2;                  // scratch planes
  int C = 0, H = 0, W = 0;

  void blur(const T* in, T* out, int h, int w, const std::array<T, kSsimWin>& kr) {
    tmp.resize({1, h, w});
    k::blur_h(in, tmp.ptr(), h, w, kr.data(), kSsimWin);
    k::blur_v(tmp.ptr(), out, h, w, kr.data(), kSsimWin);
  }
};

// returns mean SSIM over channels/pixels; fills state for ssim_bwd
template <typename T>
double ssim_fwd(const Tensor<T>& a, const Tensor<T>& b, SsimState<T>& st) {
  auto kr = ssim_window<T>();
  int C = a.dim(0), H = a.dim(1), W = a.dim(2);
  st.C = C; st.H = H; st.W = W;
  size_t hw = (size_t)H * W;
  st.mu_a.resize(a.shape);
  st.mu_b.resize(a.shape);
  st.sa.resize(a.shape);
  st.sb.resize(a.shape);
  st.sab.resize(a.shape);
  st.t2.resize({1, H, W});
  double total = 0;
  for (int c = 0; c < C; ++c) {
    const T* pa = a.ptr() + c * hw;
    const T* pb = b.ptr() + c * hw;
    T* mu_a = st.mu_a.ptr() + c * hw;
    T* mu_b = st.mu_b.ptr() + c * hw;
    T* sa = st.sa.ptr() + c * hw;
    T* sb = st.sb.ptr() + c * hw;
    T* sab = st.sab.ptr() + c * hw;
    st.blur(pa, mu_a, H, W, kr);
    st.blur(pb, mu_b, H, W, kr);
    T* prod = st.t2.ptr();
    k::mul(pa, pa, prod, hw);
    st.blur(prod, sa, H, W, kr);  // E[a^2]
    k::mul(pb, pb, prod, hw);
    st.blur(prod, sb, H, W, kr);
    k::mul(pa, pb, prod, hw);
    st.blur(prod, sab, H, W, kr);
    double acc = 0;
    for (size_t i = 0; i < hw; ++i) {
      double ma = mu_a[i], mb = mu_b[i];
      double va = sa[i] - ma * ma;   // variance (biased, window-weighted)
      double vb = sb[i] - mb * mb;
      double vab = sab[i] - ma * mb;
      double num = (2 * ma * mb + kSsimC1) * (2 * vab + kSsimC2);
      double den = (ma * ma + mb * mb + kSsimC1) * (va + vb + kSsimC2);
      acc += num / den;
      sa[i] = T(va);  // keep the centered moments for backward
      sb[i] = T(vb);
      sab[i] = T(vab);
    }
    total += acc / (double)hw;
  }
  return total / C;
}

// accumulates d(ssim)/da * upstream into da (a is the prediction side)
template <typename T>
void ssim_bwd(const Tensor<T>& a, const Tensor<T>& b, SsimState<T>& st,
              double upstream, Tensor<T>& da) {
  auto kr = ssim_window<T>();
  int C = st.C, H = st.H, W = st.W;
  size_t hw = (size_t)H * W;
  double scale = upstream / ((double)hw * C);  // d(mean)/d(map pixel)
  Tensor<T> gmu({1, H, W}), gsa({1, H, W}), gsab({1, H, W}), blurred({1, H, W});
  for (int c = 0; c < C; ++c) {
    const T* pa = a.ptr() + c * hw;
    const T* pb = b.ptr() + c * hw;
    const T* mu_a = st.mu_a.ptr() + c * hw;
    const T* mu_b = st.mu_b.ptr() + c * hw;
    const T* va = st.sa.ptr() + c * hw;
    const T* vb = st.sb.ptr() + c * hw;
    const T* vab = st.sab.ptr() + c * hw;
    for (size_t i = 0; i < hw; ++i) {
      double ma = mu_a[i], mb = mu_b[i];
      double A1 = 2 * ma * mb + kSsimC1, A2 = 2 * (double)vab[i] + kSsimC2;
      double B1 = ma * ma + mb * mb + kSsimC1, B2 = (double)va[i] + vb[i] + kSsimC2;
      double inv = 1.0 / (B1 * B2);
      double map = A1 * A2 * inv;
      // field gradients at this pixel
      double g_sigma_a = -map / B2;                       // d map / d va
      double g_sigma_ab = 2 * A1 * inv;                   // d map / d vab
      double g_mu_a = 2 * mb * A2 * inv - map * 2 * ma / B1
                      - 2 * ma * g_sigma_a - mb * g_sigma_ab;
      gmu[i] = T(scale * g_mu_a);
      gsa[i] = T(scale * g_sigma_a);
      gsab[i] = T(scale * g_sigma_ab);
    }
    T* dst = da.ptr() + c * hw;
    st.blur(gmu.ptr(), blurred.ptr(), H, W, kr);
    k::add(dst, blurred.ptr(), dst, hw);
    st.blur(gsa.ptr(), blurred.ptr(), H, W, kr);
    for (size_t i = 0; i < hw; ++i) dst[i] += T(2) * blurred[i] * pa[i];
    st.blur(gsab.ptr(), blurred.ptr(), H, W, kr);
    for (size_t i = 0; i < hw; ++i) dst[i] += blurred[i] * pb[i];
  }
}

// training loss: mean-l1 + (1 - ssim). Returns the scalar; fills dpred.
template <typename T>
struct CompenLoss {
  SsimState<T> st;
  double last_l1 = 0, last_ssim = 0;

  double forward(const Tensor<T>& pred, const Tensor<T>& target) {
    last_l1 = k::sum_abs_diff(pred.ptr(), target.ptr(), pred.numel()) / pred.numel();
    last_ssim = ssim_fwd(pred, target, st);
    return last_l1 + (1.0 - last_ssim);
  }

  void backward(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>& dpred) {
    dpred.resize(pred.shape);
    k::sign_scaled(pred.ptr(), target.ptr(), dpred.ptr(), pred.numel(),
                   T(1.0 / pred.numel()));
    ssim_bwd(pred, target, st, -1.0, dpred);
  }
};

}  // namespace procomp::nn
