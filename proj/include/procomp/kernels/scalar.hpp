#pragma once
// Reference kernels. Plain loops, readable, used three ways:
//  - double-precision path of the templated layers (gradient checking)
//  - scalar float fallback when AVX2 is unavailable or disabled
//  - ground truth for the SIMD equivalence tests
// Keep these dumb. Anything clever goes in the AVX2 file.

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace procomp::k::scalar {

// C[M,N] = alpha*op(A)op(B) + beta*C, row-major, ld* are row strides.
// ta/tb transpose the *stored* matrix: op(A) = A' when ta, where A is stored
// K x M with leading dim lda.
template <typename T>
void gemm(bool ta, bool tb, int M, int N, int K, T alpha, const T* A, int lda,
          const T* B, int ldb, T beta, T* C, int ldc) {
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < N; ++j) {
      T acc = 0;
      for (int p = 0; p < K; ++p) {
        T a = ta ? A[(size_t)p * lda + i] : A[(size_t)i * lda + p];
        T b = tb ? B[(size_t)j * ldb + p] : B[(size_t)p * ldb + j];
        acc += a * b;
      }
      T* c = &C[(size_t)i * ldc + j];
      *c = alpha * acc + (beta == T(0) ? T(0) : beta * *c);
    }
  }
}

template <typename T>
void add(const T* a, const T* b, T* c, size_t n) {
  for (size_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}
template <typename T>
void sub(const T* a, const T* b, T* c, size_t n) {
  for (size_t i = 0; i < n; ++i) c[i] = a[i] - b[i];
}
template <typename T>
void mul(const T* a, const T* b, T* c, size_t n) {
  for (size_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
}
template <typename T>
void axpy(T a, const T* x, T* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}
template <typename T>
void scale(T a, T* x, size_t n) {
  for (size_t i = 0; i < n; ++i) x[i] *= a;
}

template <typename T>
void lrelu_fwd(const T* x, T* y, size_t n, T slope) {
  for (size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : slope * x[i];
}
// dx = dy * lrelu'(pre)
template <typename T>
void lrelu_bwd(const T* pre, const T* dy, T* dx, size_t n, T slope) {
  for (size_t i = 0; i < n; ++i) dx[i] = pre[i] > T(0) ? dy[i] : slope * dy[i];
}

template <typename T>
void clamp01_fwd(const T* x, T* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = std::min(T(1), std::max(T(0), x[i]));
}
// pass-through gradient strictly inside (0,1)
template <typename T>
void clamp01_bwd(const T* pre, const T* dy, T* dx, size_t n) {
  for (size_t i = 0; i < n; ++i)
    dx[i] = (pre[i] > T(0) && pre[i] < T(1)) ? dy[i] : T(0);
}

// reductions accumulate in double regardless of T
template <typename T>
double sum(const T* x, size_t n) {
  double s = 0;
  for (size_t i = 0; i < n; ++i) s += x[i];
  return s;
}
template <typename T>
double sum_abs_diff(const T* a, const T* b, size_t n) {
  double s = 0;
  for (size_t i = 0; i < n; ++i) s += std::abs((double)a[i] - (double)b[i]);
  return s;
}
template <typename T>
double sum_sq_diff(const T* a, const T* b, size_t n) {
  double s = 0;
  for (size_t i = 0; i < n; ++i) {
    double d = (double)a[i] - (double)b[i];
    s += d * d;
  }
  return s;
}

// g = scale * sign(a-b); subgradient 0 at ties
template <typename T>
void sign_scaled(const T* a, const T* b, T* g, size_t n, T sc) {
  for (size_t i = 0; i < n; ++i)
    g[i] = a[i] > b[i] ? sc : (a[i] < b[i] ? -sc : T(0));
}

// separable blur, zero padding outside, one plane h x w, kernel length kn
// (kn odd, centered)
template <typename T>
void blur_h(const T* in, T* out, int h, int w, const T* kr, int kn) {
  int r = kn / 2;
  for (int y = 0; y < h; ++y) {
    const T* row = in + (size_t)y * w;
    T* orow = out + (size_t)y * w;
    for (int x = 0; x < w; ++x) {
      T s = 0;
      int t0 = std::max(-r, -x), t1 = std::min(r, w - 1 - x);
      for (int t = t0; t <= t1; ++t) s += kr[t + r] * row[x + t];
      orow[x] = s;
    }
  }
}
template <typename T>
void blur_v(const T* in, T* out, int h, int w, const T* kr, int kn) {
  int r = kn / 2;
  for (int y = 0; y < h; ++y) {
    T* orow = out + (size_t)y * w;
    int t0 = std::max(-r, -y), t1 = std::min(r, h - 1 - y);
    for (int x = 0; x < w; ++x) {
      T s = 0;
      for (int t = t0; t <= t1; ++t) s += kr[t + r] * in[(size_t)(y + t) * w + x];
      orow[x] = s;
    }
  }
}

// one Adam step with decoupled-as-L2 weight decay folded into the gradient;
// bc1/bc2 are the bias corrections 1-beta^t, precomputed by the caller
template <typename T>
void adam_step(T* p, const T* g, T* m, T* v, size_t n, T lr, T b1, T b2, T eps,
               T wd, T bc1, T bc2) {
  for (size_t i = 0; i < n; ++i) {
    T gi = g[i] + wd * p[i];
    m[i] = b1 * m[i] + (1 - b1) * gi;
    v[i] = b2 * v[i] + (1 - b2) * gi * gi;
    T mh = m[i] / bc1;
    T vh = v[i] / bc2;
    p[i] -= lr * mh / (std::sqrt(vh) + eps);
  }
}

// ---- geometry kernels (scalar only; gather-heavy, memory bound) ----

// x: [C,H,W]; col: [C*9, OH*OW]; 3x3 window, pad 1, stride s
template <typename T>
void im2col_3x3(const T* x, int C, int H, int W, int s, T* col) {
  int OH = (H + 2 - 3) / s + 1;
  int OW = (W + 2 - 3) / s + 1;
  size_t ohw = (size_t)OH * OW;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* dst = col + ((size_t)(c * 9 + ky * 3 + kx)) * ohw;
        if (s == 1) {
          // stride 1: each col row is the image row shifted by kx-1
          int sh = kx - 1;
          int ox0 = sh < 0 ? -sh : 0;        // first valid output col
          int ox1 = sh > 0 ? W - sh : W;     // one past last valid
          for (int oy = 0; oy < OH; ++oy) {
            int iy = oy + ky - 1;
            T* d = dst + (size_t)oy * OW;
            if (iy < 0 || iy >= H) {
              std::fill(d, d + OW, T(0));
              continue;
            }
            const T* src = x + ((size_t)c * H + iy) * W;
            if (ox0 > 0) d[0] = 0;
            std::copy(src + ox0 + sh, src + ox1 + sh, d + ox0);
            if (ox1 < OW) d[OW - 1] = 0;
          }
          continue;
        }
        for (int oy = 0; oy < OH; ++oy) {
          int iy = oy * s + ky - 1;
          if (iy < 0 || iy >= H) {
            for (int ox = 0; ox < OW; ++ox) dst[(size_t)oy * OW + ox] = 0;
            continue;
          }
          const T* src = x + ((size_t)c * H + iy) * W;
          for (int ox = 0; ox < OW; ++ox) {
            int ix = ox * s + kx - 1;
            dst[(size_t)oy * OW + ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// adjoint of im2col_3x3: x[c,y,x] = sum of col entries that read it.
// gather formulation (each output element written once).
template <typename T>
void col2im_3x3(const T* col, int C, int H, int W, int s, T* x) {
  int OH = (H + 2 - 3) / s + 1;
  int OW = (W + 2 - 3) / s + 1;
  size_t ohw = (size_t)OH * OW;
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < H; ++y) {
      for (int xx = 0; xx < W; ++xx) {
        T acc = 0;
        for (int ky = 0; ky < 3; ++ky) {
          int t = y - ky + 1;
          if (t < 0 || t % s) continue;
          int oy = t / s;
          if (oy >= OH) continue;
          for (int kx = 0; kx < 3; ++kx) {
            int u = xx - kx + 1;
            if (u < 0 || u % s) continue;
            int ox = u / s;
            if (ox >= OW) continue;
            acc += col[((size_t)(c * 9 + ky * 3 + kx)) * ohw + (size_t)oy * OW + ox];
          }
        }
        x[((size_t)c * H + y) * W + xx] = acc;
      }
    }
  }
}

}  // namespace procomp::k::scalar
