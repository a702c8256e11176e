#pragma once
// Evaluation metrics over [0,1] images. PSNR uses peak 1 and is capped at
// 300 dB for identical inputs. RMSE follows the convention used by the
// compensation literature: sqrt of the per-pixel sum over channels of squared
// differences, i.e. rmse = sqrt(3) * 10^(-psnr/20) for 3-channel images.

#include <cmath>

#include "procomp/core/tensor.hpp"
#include "procomp/kernels/kernels.hpp"
#include "procomp/nn/loss.hpp"

namespace procomp::img {

inline constexpr double kPsnrCap = 300.0;

inline double mse(const TensorF& a, const TensorF& b) {
  return k::sum_sq_diff(a.ptr(), b.ptr(), a.numel()) / (double)a.numel();
}

inline double psnr(const TensorF& a, const TensorF& b) {
  double m = mse(a, b);
  if (m <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

inline double rmse(const TensorF& a, const TensorF& b) {
  size_t n_px = (size_t)a.dim(1) * a.dim(2);
  return std::sqrt(k::sum_sq_diff(a.ptr(), b.ptr(), a.numel()) / (double)n_px);
}

// Evaluation-side SSIM runs in double; the float path is reserved for the
// training loss where gradients flow.
inline double ssim(const TensorF& a, const TensorF& b) {
  Tensor<double> ad(a.shape), bd(b.shape);
  for (size_t i = 0; i < a.numel(); ++i) {
    ad[i] = a[i];
    bd[i] = b[i];
  }
  nn::SsimState<double> st;
  return nn::ssim_fwd(ad, bd, st);
}

struct MetricTriple {
  double psnr = 0, rmse = 0, ssim = 0;
};

inline MetricTriple metrics(const TensorF& a, const TensorF& b) {
  return {psnr(a, b), rmse(a, b), ssim(a, b)};
}

}  // namespace procomp::img
