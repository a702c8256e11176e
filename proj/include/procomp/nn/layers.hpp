#pragma once
// Hand-rolled layers with explicit forward/backward passes, caffe style.
// No tape: each network wires its own backward in reverse order. Templated on
// scalar type; float for training, double for finite-difference checks.
//
// Convolutions are 3x3, pad 1, stride 1 or 2, lowered to GEMM via im2col.
// Transposed convolution (stride 2, output twice the input size) is the exact
// adjoint of the stride-2 convolution, expressed with the same two building
// blocks (GEMM and col2im).

#include <cmath>
#include <string>
#include <vector>

#include "procomp/core/rng.hpp"
#include "procomp/core/tensor.hpp"
#include "procomp/kernels/kernels.hpp"

namespace procomp::nn {

template <typename T>
struct Conv2d {
  int cin = 0, cout = 0, stride = 1;
  Param<T> w, b;  // w: [cout, cin*9], b: [cout]
  Tensor<T> col, dcol;
  int in_h = 0, in_w = 0;

  Conv2d() = default;
  Conv2d(const std::string& name, int ci, int co, int s)
      : cin(ci), cout(co), stride(s),
        w(name + ".w", {co, ci * 9}), b(name + ".b", {co}) {}

  void init_he(Rng& rng) {
    T bound = T(std::sqrt(6.0 / (cin * 9)));
    for (auto& v : w.value.data) v = T(rng.uniform(-bound, bound));
    b.value.zero();
  }
  void init_uniform(Rng& rng, T s) {
    for (auto& v : w.value.data) v = T(rng.uniform(-s, s));
    for (auto& v : b.value.data) v = T(rng.uniform(-s, s));
  }

  void out_shape(int H, int W, int& OH, int& OW) const {
    OH = (H - 1) / stride + 1;
    OW = (W - 1) / stride + 1;
  }

  void forward(const Tensor<T>& x, Tensor<T>& y) {
    in_h = x.dim(1);
    in_w = x.dim(2);
    int OH, OW;
    out_shape(in_h, in_w, OH, OW);
    size_t ohw = (size_t)OH * OW;
    col.resize({cin * 9, OH * OW});
    y.resize({cout, OH, OW});
    k::im2col_3x3(x.ptr(), cin, in_h, in_w, stride, col.ptr());
    k::gemm<T>(false, false, cout, (int)ohw, cin * 9, T(1), w.value.ptr(),
               cin * 9, col.ptr(), (int)ohw, T(0), y.ptr(), (int)ohw);
    for (int oc = 0; oc < cout; ++oc) {
      T bv = b.value[oc];
      T* row = y.ptr() + oc * ohw;
      for (size_t i = 0; i < ohw; ++i) row[i] += bv;
    }
  }

  // accumulates parameter grads; writes dx (overwrite) when non-null.
  // uses the col buffer cached by the last forward.
  void backward(const Tensor<T>& dy, Tensor<T>* dx) {
    int OH = dy.dim(1), OW = dy.dim(2);
    size_t ohw = (size_t)OH * OW;
    k::gemm<T>(false, true, cout, cin * 9, (int)ohw, T(1), dy.ptr(), (int)ohw,
               col.ptr(), (int)ohw, T(1), w.grad.ptr(), cin * 9);
    for (int oc = 0; oc < cout; ++oc)
      b.grad[oc] += T(k::sum(dy.ptr() + oc * ohw, ohw));
    if (dx) {
      dcol.resize({cin * 9, OH * OW});
      k::gemm<T>(true, false, cin * 9, (int)ohw, cout, T(1), w.value.ptr(),
                 cin * 9, dy.ptr(), (int)ohw, T(0), dcol.ptr(), (int)ohw);
      dx->resize({cin, in_h, in_w});
      k::col2im_3x3(dcol.ptr(), cin, in_h, in_w, stride, dx->ptr());
    }
  }
};

// stride-2 transposed conv, 3x3, pad 1, output twice the input spatial size.
// Weights are stored in the layout of the adjoint stride-2 conv: w[cin, cout*9].
template <typename T>
struct ConvTranspose2d {
  int cin = 0, cout = 0;
  Param<T> w, b;
  Tensor<T> ycol, dycol;
  int in_h = 0, in_w = 0;

  ConvTranspose2d() = default;
  ConvTranspose2d(const std::string& name, int ci, int co)
      : cin(ci), cout(co), w(name + ".w", {ci, co * 9}), b(name + ".b", {co}) {}

  void init_he(Rng& rng) {
    T bound = T(std::sqrt(6.0 / (cin * 9)));
    for (auto& v : w.value.data) v = T(rng.uniform(-bound, bound));
    b.value.zero();
  }
  void init_uniform(Rng& rng, T s) {
    for (auto& v : w.value.data) v = T(rng.uniform(-s, s));
    for (auto& v : b.value.data) v = T(rng.uniform(-s, s));
  }

  void forward(const Tensor<T>& x, Tensor<T>& y) {
    in_h = x.dim(1);
    in_w = x.dim(2);
    int OH = in_h * 2, OW = in_w * 2;
    size_t hw = (size_t)in_h * in_w;
    ycol.resize({cout * 9, in_h * in_w});
    y.resize({cout, OH, OW});
    k::gemm<T>(true, false, cout * 9, (int)hw, cin, T(1), w.value.ptr(),
               cout * 9, x.ptr(), (int)hw, T(0), ycol.ptr(), (int)hw);
    k::col2im_3x3(ycol.ptr(), cout, OH, OW, 2, y.ptr());
    size_t ohw = (size_t)OH * OW;
    for (int oc = 0; oc < cout; ++oc) {
      T bv = b.value[oc];
      T* row = y.ptr() + oc * ohw;
      for (size_t i = 0; i < ohw; ++i) row[i] += bv;
    }
  }

  // needs the forward input x for the weight gradient
  void backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>* dx) {
    int OH = dy.dim(1), OW = dy.dim(2);
    size_t hw = (size_t)in_h * in_w, ohw = (size_t)OH * OW;
    dycol.resize({cout * 9, in_h * in_w});
    k::im2col_3x3(dy.ptr(), cout, OH, OW, 2, dycol.ptr());
    k::gemm<T>(false, true, cin, cout * 9, (int)hw, T(1), x.ptr(), (int)hw,
               dycol.ptr(), (int)hw, T(1), w.grad.ptr(), cout * 9);
    for (int oc = 0; oc < cout; ++oc)
      b.grad[oc] += T(k::sum(dy.ptr() + oc * ohw, ohw));
    if (dx) {
      dx->resize({cin, in_h, in_w});
      k::gemm<T>(false, false, cin, (int)hw, cout * 9, T(1), w.value.ptr(),
                 cout * 9, dycol.ptr(), (int)hw, T(0), dx->ptr(), (int)hw);
    }
  }
};

inline constexpr double kLreluSlope = 0.2;

template <typename T>
void lrelu(const Tensor<T>& x, Tensor<T>& y) {
  y.resize(x.shape);
  k::lrelu_fwd(x.ptr(), y.ptr(), x.numel(), T(kLreluSlope));
}
template <typename T>
void lrelu_grad(const Tensor<T>& pre, const Tensor<T>& dy, Tensor<T>& dx) {
  dx.resize(pre.shape);
  k::lrelu_bwd(pre.ptr(), dy.ptr(), dx.ptr(), pre.numel(), T(kLreluSlope));
}

// ---- sampling-grid generators ----

// grid(i,j) = p * (u_j, v_i, 1)^T; p row-major 2x3
template <typename T>
void affine_grid_fwd(const T* p, int h, int w, T* grid) {
  size_t hw = (size_t)h * w;
  for (int y = 0; y < h; ++y) {
    T v = h > 1 ? T(2) * y / (h - 1) - T(1) : T(0);
    for (int x = 0; x < w; ++x) {
      T u = w > 1 ? T(2) * x / (w - 1) - T(1) : T(0);
      size_t i = (size_t)y * w + x;
      grid[i] = p[0] * u + p[1] * v + p[2];
      grid[hw + i] = p[3] * u + p[4] * v + p[5];
    }
  }
}

template <typename T>
void affine_grid_bwd(const T* dgrid, int h, int w, T* dp) {
  size_t hw = (size_t)h * w;
  double acc[6] = {0, 0, 0, 0, 0, 0};
  for (int y = 0; y < h; ++y) {
    double v = h > 1 ? 2.0 * y / (h - 1) - 1.0 : 0.0;
    for (int x = 0; x < w; ++x) {
      double u = w > 1 ? 2.0 * x / (w - 1) - 1.0 : 0.0;
      size_t i = (size_t)y * w + x;
      double g0 = dgrid[i], g1 = dgrid[hw + i];
      acc[0] += g0 * u;
      acc[1] += g0 * v;
      acc[2] += g0;
      acc[3] += g1 * u;
      acc[4] += g1 * v;
      acc[5] += g1;
    }
  }
  for (int i = 0; i < 6; ++i) dp[i] += T(acc[i]);
}

// Thin plate spline grid over a fixed 6x6 control lattice spanning [-1,1]^2.
// Parameters per output dimension: [constant, u coefficient, v coefficient,
// 36 kernel weights] -> [2,39] total. Radial kernel U(r) = r^2 log r,
// evaluated as 0.5*q*log(q) with q = r^2.
inline constexpr int kTpsLattice = 6;
inline constexpr int kTpsCtrl = kTpsLattice * kTpsLattice;
inline constexpr int kTpsCols = kTpsCtrl + 3;

inline void tps_ctrl_points(double* cx, double* cy) {
  for (int i = 0; i < kTpsLattice; ++i)
    for (int j = 0; j < kTpsLattice; ++j) {
      cx[i * kTpsLattice + j] = -1.0 + 2.0 * j / (kTpsLattice - 1);
      cy[i * kTpsLattice + j] = -1.0 + 2.0 * i / (kTpsLattice - 1);
    }
}

template <typename T>
struct TpsGrid {
  Param<T> p;           // [2, 39]
  Tensor<T> basis;      // [36, h*w], kernel values at each output pixel
  std::vector<T> us, vs;  // identity coords per pixel
  int h = 0, w = 0;

  explicit TpsGrid(const std::string& name = "tps") : p(name + ".p", {2, kTpsCols}) {}

  // identity mapping plus (optionally) tiny random kernel/affine perturbation
  void init_identity(Rng* rng = nullptr, T noise = T(0)) {
    p.value.zero();
    p.value[1] = T(1);               // u_out = u
    p.value[kTpsCols + 2] = T(1);    // v_out = v
    if (rng && noise > T(0))
      for (int d = 0; d < 2; ++d)
        for (int k = 3; k < kTpsCols; ++k)
          p.value[d * kTpsCols + k] = T(rng->uniform(-noise, noise));
  }

  void prepare(int hh, int ww) {
    if (h == hh && w == ww && !basis.empty()) return;
    h = hh;
    w = ww;
    size_t hw = (size_t)h * w;
    basis.resize({kTpsCtrl, (int)hw});
    us.resize(hw);
    vs.resize(hw);
    double cx[kTpsCtrl], cy[kTpsCtrl];
    tps_ctrl_points(cx, cy);
    for (int y = 0; y < h; ++y) {
      double v = h > 1 ? 2.0 * y / (h - 1) - 1.0 : 0.0;
      for (int x = 0; x < w; ++x) {
        double u = w > 1 ? 2.0 * x / (w - 1) - 1.0 : 0.0;
        size_t i = (size_t)y * w + x;
        us[i] = T(w > 1 ? T(2) * x / (w - 1) - T(1) : T(0));
        vs[i] = T(h > 1 ? T(2) * y / (h - 1) - T(1) : T(0));
        for (int c = 0; c < kTpsCtrl; ++c) {
          double q = (u - cx[c]) * (u - cx[c]) + (v - cy[c]) * (v - cy[c]);
          basis[(size_t)c * hw + i] = T(q > 0 ? 0.5 * q * std::log(q) : 0.0);
        }
      }
    }
  }

  void forward(int hh, int ww, Tensor<T>& grid) {
    prepare(hh, ww);
    size_t hw = (size_t)h * w;
    grid.resize({2, h, w});
    // affine part mirrors affine_grid_fwd's arithmetic exactly so that zero
    // kernel weights reproduce it bitwise
    for (int d = 0; d < 2; ++d) {
      const T* pd = p.value.ptr() + d * kTpsCols;
      T* gd = grid.ptr() + d * hw;
      for (size_t i = 0; i < hw; ++i) gd[i] = pd[1] * us[i] + pd[2] * vs[i] + pd[0];
    }
    // + kernel part: grid += W[2,36] * basis[36,hw]
    k::gemm<T>(false, false, 2, (int)hw, kTpsCtrl, T(1), p.value.ptr() + 3,
               kTpsCols, basis.ptr(), (int)hw, T(1), grid.ptr(), (int)hw);
  }

  void backward(const Tensor<T>& dgrid) {
    size_t hw = (size_t)h * w;
    for (int d = 0; d < 2; ++d) {
      const T* gd = dgrid.ptr() + d * hw;
      double a0 = 0, a1 = 0, a2 = 0;
      for (size_t i = 0; i < hw; ++i) {
        a0 += gd[i];
        a1 += (double)gd[i] * us[i];
        a2 += (double)gd[i] * vs[i];
      }
      p.grad[d * kTpsCols + 0] += T(a0);
      p.grad[d * kTpsCols + 1] += T(a1);
      p.grad[d * kTpsCols + 2] += T(a2);
    }
    k::gemm<T>(false, true, 2, kTpsCtrl, (int)hw, T(1), dgrid.ptr(), (int)hw,
               basis.ptr(), (int)hw, T(1), p.grad.ptr() + 3, kTpsCols);
  }
};

}  // namespace procomp::nn
