#pragma once
// Compute kernel dispatch. Float32 hot paths go through a function table
// filled at startup with either scalar or AVX2 variants (runtime CPUID check,
// PROCOMP_FORCE_SCALAR=1 forces the reference path). The double-precision
// instantiations used by gradient checking always take the scalar templates.

#include <cmath>
#include <cstddef>
#include <string>
#include <type_traits>

#include "procomp/kernels/scalar.hpp"

namespace procomp::k {

struct Table {
  void (*gemm)(bool, bool, int, int, int, float, const float*, int, const float*,
               int, float, float*, int);
  void (*add)(const float*, const float*, float*, size_t);
  void (*sub)(const float*, const float*, float*, size_t);
  void (*mul)(const float*, const float*, float*, size_t);
  void (*axpy)(float, const float*, float*, size_t);
  void (*scale)(float, float*, size_t);
  void (*lrelu_fwd)(const float*, float*, size_t, float);
  void (*lrelu_bwd)(const float*, const float*, float*, size_t, float);
  void (*clamp01_fwd)(const float*, float*, size_t);
  void (*clamp01_bwd)(const float*, const float*, float*, size_t);
  double (*sum)(const float*, size_t);
  double (*sum_abs_diff)(const float*, const float*, size_t);
  double (*sum_sq_diff)(const float*, const float*, size_t);
  void (*sign_scaled)(const float*, const float*, float*, size_t, float);
  void (*blur_h)(const float*, float*, int, int, const float*, int);
  void (*blur_v)(const float*, float*, int, int, const float*, int);
  void (*adam_step)(float*, const float*, float*, float*, size_t, float, float,
                    float, float, float, float, float);
  const char* name;
};

extern Table tab;

// selected implementation name ("avx2" or "scalar")
const char* active_impl();
bool cpu_has_avx2();
// force the scalar table (tests); true restores auto selection when false
void select_impl(bool use_simd);

// ---- typed entry points: float -> dispatch table, double -> reference ----

template <typename T>
inline void gemm(bool ta, bool tb, int M, int N, int K, T alpha, const T* A,
                 int lda, const T* B, int ldb, T beta, T* C, int ldc) {
  if constexpr (std::is_same_v<T, float>)
    tab.gemm(ta, tb, M, N, K, alpha, A, lda, B, ldb, beta, C, ldc);
  else
    scalar::gemm(ta, tb, M, N, K, alpha, A, lda, B, ldb, beta, C, ldc);
}

#define PROCOMP_EW2(fn)                                              \
  template <typename T>                                              \
  inline void fn(const T* a, const T* b, T* c, size_t n) {           \
    if constexpr (std::is_same_v<T, float>) tab.fn(a, b, c, n);      \
    else scalar::fn(a, b, c, n);                                     \
  }
PROCOMP_EW2(add)
PROCOMP_EW2(sub)
PROCOMP_EW2(mul)
#undef PROCOMP_EW2

template <typename T>
inline void axpy(T a, const T* x, T* y, size_t n) {
  if constexpr (std::is_same_v<T, float>) tab.axpy(a, x, y, n);
  else scalar::axpy(a, x, y, n);
}
template <typename T>
inline void scale(T a, T* x, size_t n) {
  if constexpr (std::is_same_v<T, float>) tab.scale(a, x, n);
  else scalar::scale(a, x, n);
}
template <typename T>
inline void lrelu_fwd(const T* x, T* y, size_t n, T slope) {
  if constexpr (std::is_same_v<T, float>) tab.lrelu_fwd(x, y, n, slope);
  else scalar::lrelu_fwd(x, y, n, slope);
}
template <typename T>
inline void lrelu_bwd(const T* pre, const T* dy, T* dx, size_t n, T slope) {
  if constexpr (std::is_same_v<T, float>) tab.lrelu_bwd(pre, dy, dx, n, slope);
  else scalar::lrelu_bwd(pre, dy, dx, n, slope);
}
template <typename T>
inline void clamp01_fwd(const T* x, T* y, size_t n) {
  if constexpr (std::is_same_v<T, float>) tab.clamp01_fwd(x, y, n);
  else scalar::clamp01_fwd(x, y, n);
}
template <typename T>
inline void clamp01_bwd(const T* pre, const T* dy, T* dx, size_t n) {
  if constexpr (std::is_same_v<T, float>) tab.clamp01_bwd(pre, dy, dx, n);
  else scalar::clamp01_bwd(pre, dy, dx, n);
}
template <typename T>
inline double sum(const T* x, size_t n) {
  if constexpr (std::is_same_v<T, float>) return tab.sum(x, n);
  else return scalar::sum(x, n);
}
template <typename T>
inline double sum_abs_diff(const T* a, const T* b, size_t n) {
  if constexpr (std::is_same_v<T, float>) return tab.sum_abs_diff(a, b, n);
  else return scalar::sum_abs_diff(a, b, n);
}
template <typename T>
inline double sum_sq_diff(const T* a, const T* b, size_t n) {
  if constexpr (std::is_same_v<T, float>) return tab.sum_sq_diff(a, b, n);
  else return scalar::sum_sq_diff(a, b, n);
}
template <typename T>
inline void sign_scaled(const T* a, const T* b, T* g, size_t n, T sc) {
  if constexpr (std::is_same_v<T, float>) tab.sign_scaled(a, b, g, n, sc);
  else scalar::sign_scaled(a, b, g, n, sc);
}
template <typename T>
inline void blur_h(const T* in, T* out, int h, int w, const T* kr, int kn) {
  if constexpr (std::is_same_v<T, float>) tab.blur_h(in, out, h, w, kr, kn);
  else scalar::blur_h(in, out, h, w, kr, kn);
}
template <typename T>
inline void blur_v(const T* in, T* out, int h, int w, const T* kr, int kn) {
  if constexpr (std::is_same_v<T, float>) tab.blur_v(in, out, h, w, kr, kn);
  else scalar::blur_v(in, out, h, w, kr, kn);
}
template <typename T>
inline void adam_step(T* p, const T* g, T* m, T* v, size_t n, T lr, T b1, T b2,
                      T eps, T wd, T bc1, T bc2) {
  if constexpr (std::is_same_v<T, float>)
    tab.adam_step(p, g, m, v, n, lr, b1, b2, eps, wd, bc1, bc2);
  else
    scalar::adam_step(p, g, m, v, n, lr, b1, b2, eps, wd, bc1, bc2);
}

template <typename T>
inline void im2col_3x3(const T* x, int C, int H, int W, int s, T* col) {
  scalar::im2col_3x3(x, C, H, W, s, col);
}
template <typename T>
inline void col2im_3x3(const T* col, int C, int H, int W, int s, T* x) {
  scalar::col2im_3x3(col, C, H, W, s, x);
}

// ---- grid sampling (scalar templates; gather bound) ----
//
// Grids are [2,h,w]: channel 0 holds x (u), channel 1 holds y (v), both
// align-corners normalized: u=-1 is pixel column 0, u=+1 is column W-1.

template <typename T>
inline void identity_grid(int h, int w, T* g) {
  size_t hw = (size_t)h * w;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      g[(size_t)y * w + x] = w > 1 ? T(2) * x / (w - 1) - T(1) : T(0);
      g[hw + (size_t)y * w + x] = h > 1 ? T(2) * y / (h - 1) - T(1) : T(0);
    }
}

// Denormalize one grid coordinate to pixel units and split into base index
// and fraction. Fractions within a snap width of a pixel center are snapped
// onto it: identity/integer grids then reproduce pixels exactly instead of
// leaking ~1e-5 of a neighbor through denormalization round-off, and
// composing a grid with the identity grid is an exact copy. The width covers
// that round-off for each precision and nothing more, so finite-difference
// probes at generic coordinates never straddle a snap zone.
inline constexpr float kSnap = 1e-4f;
inline constexpr double kSnapD = 1e-9;

template <typename T>
inline void denorm_coord(T u, int W, int& x0, T& wx) {
  T fx = (u + 1) * T(0.5) * (W - 1);
  x0 = (int)std::floor(fx);
  wx = fx - x0;
  constexpr T snap = std::is_same_v<T, float> ? T(kSnap) : T(kSnapD);
  if (wx < snap) {
    wx = 0;
  } else if (wx > T(1) - snap) {
    ++x0;
    wx = 0;
  }
}

// out[c,y,x] = img sampled at grid(y,x); taps outside the image read zero.
template <typename T>
void bilinear_fwd(const T* img, int C, int H, int W, const T* grid, int h,
                  int w, T* out) {
  size_t hw = (size_t)h * w, HW = (size_t)H * W;
  for (size_t i = 0; i < hw; ++i) {
    int x0, y0;
    T wx, wy;
    denorm_coord(grid[i], W, x0, wx);
    denorm_coord(grid[hw + i], H, y0, wy);
    int x1 = x0 + 1, y1 = y0 + 1;
    bool vx0 = x0 >= 0 && x0 < W, vx1 = x1 >= 0 && x1 < W;
    bool vy0 = y0 >= 0 && y0 < H, vy1 = y1 >= 0 && y1 < H;
    for (int c = 0; c < C; ++c) {
      const T* p = img + c * HW;
      T v00 = vy0 && vx0 ? p[(size_t)y0 * W + x0] : T(0);
      T v01 = vy0 && vx1 ? p[(size_t)y0 * W + x1] : T(0);
      T v10 = vy1 && vx0 ? p[(size_t)y1 * W + x0] : T(0);
      T v11 = vy1 && vx1 ? p[(size_t)y1 * W + x1] : T(0);
      out[c * hw + i] = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                        wy * ((1 - wx) * v10 + wx * v11);
    }
  }
}

// accumulates into dimg (if non-null) and dgrid (if non-null)
template <typename T>
void bilinear_bwd(const T* img, int C, int H, int W, const T* grid, int h,
                  int w, const T* dout, T* dimg, T* dgrid) {
  size_t hw = (size_t)h * w, HW = (size_t)H * W;
  for (size_t i = 0; i < hw; ++i) {
    int x0, y0;
    T wx, wy;
    denorm_coord(grid[i], W, x0, wx);
    denorm_coord(grid[hw + i], H, y0, wy);
    int x1 = x0 + 1, y1 = y0 + 1;
    bool vx0 = x0 >= 0 && x0 < W, vx1 = x1 >= 0 && x1 < W;
    bool vy0 = y0 >= 0 && y0 < H, vy1 = y1 >= 0 && y1 < H;
    T du = 0, dv = 0;
    for (int c = 0; c < C; ++c) {
      const T* p = img + c * HW;
      T g = dout[c * hw + i];
      T v00 = vy0 && vx0 ? p[(size_t)y0 * W + x0] : T(0);
      T v01 = vy0 && vx1 ? p[(size_t)y0 * W + x1] : T(0);
      T v10 = vy1 && vx0 ? p[(size_t)y1 * W + x0] : T(0);
      T v11 = vy1 && vx1 ? p[(size_t)y1 * W + x1] : T(0);
      if (dimg) {
        T* q = dimg + c * HW;
        if (vy0 && vx0) q[(size_t)y0 * W + x0] += g * (1 - wy) * (1 - wx);
        if (vy0 && vx1) q[(size_t)y0 * W + x1] += g * (1 - wy) * wx;
        if (vy1 && vx0) q[(size_t)y1 * W + x0] += g * wy * (1 - wx);
        if (vy1 && vx1) q[(size_t)y1 * W + x1] += g * wy * wx;
      }
      du += g * ((1 - wy) * (v01 - v00) + wy * (v11 - v10));
      dv += g * ((1 - wx) * (v10 - v00) + wx * (v11 - v01));
    }
    if (dgrid) {
      dgrid[i] += du * T(0.5) * (W - 1);
      dgrid[hw + i] += dv * T(0.5) * (H - 1);
    }
  }
}

// Grid-of-grids composition: out(y,x) = coarse sampled at fine(y,x).
// fine coords outside [-1,1]^2 produce the sentinel pair (-2,-2); inside,
// taps are clamped to the lattice (the +1 neighbors at the exact far edge
// carry zero weight, so clamping is exact, not an approximation).
// A small tolerance band around the frame clamps instead of sentineling:
// spline/refinement perturbations routinely push the exact boundary pixels a
// hair outside, and a hard cutoff would kill those pixels (and their
// gradients) permanently.
inline constexpr float kGridSentinel = -2.0f;
inline constexpr float kComposeTol = 0.01f;

template <typename T>
void compose_fwd(const T* coarse, int H, int W, const T* fine, int h, int w,
                 T* out) {
  const T tol = T(kComposeTol);
  size_t hw = (size_t)h * w, HW = (size_t)H * W;
  for (size_t i = 0; i < hw; ++i) {
    T u = fine[i], v = fine[hw + i];
    if (u < -1 - tol || u > 1 + tol || v < -1 - tol || v > 1 + tol) {
      out[i] = T(kGridSentinel);
      out[hw + i] = T(kGridSentinel);
      continue;
    }
    u = std::min(std::max(u, T(-1)), T(1));
    v = std::min(std::max(v, T(-1)), T(1));
    int x0, y0;
    T wx, wy;
    denorm_coord(u, W, x0, wx);
    denorm_coord(v, H, y0, wy);
    x0 = std::min(std::max(x0, 0), W - 1);
    y0 = std::min(std::max(y0, 0), H - 1);
    int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
    for (int c = 0; c < 2; ++c) {
      const T* p = coarse + c * HW;
      T v00 = p[(size_t)y0 * W + x0], v01 = p[(size_t)y0 * W + x1];
      T v10 = p[(size_t)y1 * W + x0], v11 = p[(size_t)y1 * W + x1];
      out[c * hw + i] = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                        wy * ((1 - wx) * v10 + wx * v11);
    }
  }
}

template <typename T>
void compose_bwd(const T* coarse, int H, int W, const T* fine, int h, int w,
                 const T* dout, T* dcoarse, T* dfine) {
  const T tol = T(kComposeTol);
  size_t hw = (size_t)h * w, HW = (size_t)H * W;
  for (size_t i = 0; i < hw; ++i) {
    T u = fine[i], v = fine[hw + i];
    if (u < -1 - tol || u > 1 + tol || v < -1 - tol || v > 1 + tol) continue;
    // inside the clamp band the output is constant along the clamped axis, so
    // that axis gets zero gradient
    bool cu = u < -1 || u > 1, cv = v < -1 || v > 1;
    u = std::min(std::max(u, T(-1)), T(1));
    v = std::min(std::max(v, T(-1)), T(1));
    int x0, y0;
    T wx, wy;
    denorm_coord(u, W, x0, wx);
    denorm_coord(v, H, y0, wy);
    x0 = std::min(std::max(x0, 0), W - 1);
    y0 = std::min(std::max(y0, 0), H - 1);
    int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
    T du = 0, dv = 0;
    for (int c = 0; c < 2; ++c) {
      const T* p = coarse + c * HW;
      T g = dout[c * hw + i];
      T v00 = p[(size_t)y0 * W + x0], v01 = p[(size_t)y0 * W + x1];
      T v10 = p[(size_t)y1 * W + x0], v11 = p[(size_t)y1 * W + x1];
      if (dcoarse) {
        T* q = dcoarse + c * HW;
        q[(size_t)y0 * W + x0] += g * (1 - wy) * (1 - wx);
        q[(size_t)y0 * W + x1] += g * (1 - wy) * wx;
        q[(size_t)y1 * W + x0] += g * wy * (1 - wx);
        q[(size_t)y1 * W + x1] += g * wy * wx;
      }
      du += g * ((1 - wy) * (v01 - v00) + wy * (v11 - v10));
      dv += g * ((1 - wx) * (v10 - v00) + wx * (v11 - v01));
    }
    if (dfine) {
      if (!cu) dfine[i] += du * T(0.5) * (W - 1);
      if (!cv) dfine[hw + i] += dv * T(0.5) * (H - 1);
    }
  }
}

}  // namespace procomp::k
