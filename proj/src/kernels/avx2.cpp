// AVX2/FMA kernel variants. This file is compiled with -mavx2 -mfma and is
// only entered after a runtime CPUID check (see dispatch.cpp).
//
// The GEMM is a packed 6x16 microkernel (12 ymm accumulators) with KC/NC/MC
// cache blocking. Both operands can be logically transposed; transposition is
// absorbed by the packing loops so the hot loop never branches on it.

#include <immintrin.h>

#include <algorithm>
#include <cstring>
#include <vector>

#include "procomp/kernels/kernels.hpp"

namespace procomp::k {
namespace {

constexpr int KC = 256;
constexpr int NC = 512;
constexpr int MC = 132;  // multiple of MR
constexpr int MR = 6;
constexpr int NR = 16;

struct Scratch {
  std::vector<float> a, b;
  Scratch() : a((size_t)MC * KC + 64), b((size_t)KC * NC + 64) {}
};
Scratch& scratch() {
  thread_local Scratch s;
  return s;
}

inline float at(const float* M, int ld, bool tr, int r, int c) {
  return tr ? M[(size_t)c * ld + r] : M[(size_t)r * ld + c];
}

// Bp: panels of NR columns, each panel kc x NR contiguous
void pack_b(const float* B, int ldb, bool tb, int pc, int jc, int kc, int nc,
            float* Bp) {
  for (int j = 0; j < nc; j += NR) {
    int nr = std::min(NR, nc - j);
    float* dst = Bp + (size_t)j * kc;
    for (int p = 0; p < kc; ++p) {
      for (int t = 0; t < nr; ++t) dst[t] = at(B, ldb, tb, pc + p, jc + j + t);
      for (int t = nr; t < NR; ++t) dst[t] = 0.0f;
      dst += NR;
    }
  }
}

// Ap: panels of MR rows, each panel kc x MR contiguous (k-major)
void pack_a(const float* A, int lda, bool ta, int ic, int pc, int mc, int kc,
            float* Ap) {
  for (int i = 0; i < mc; i += MR) {
    int mr = std::min(MR, mc - i);
    float* dst = Ap + (size_t)i * kc;
    for (int p = 0; p < kc; ++p) {
      for (int t = 0; t < mr; ++t) dst[t] = at(A, lda, ta, ic + i + t, pc + p);
      for (int t = mr; t < MR; ++t) dst[t] = 0.0f;
      dst += MR;
    }
  }
}

// C tile (mr x nr) = alpha * acc + beta * C; acc held in 12 ymm registers
void kernel_6x16(const float* ap, const float* bp, int kc, float* C, int ldc,
                 int mr, int nr, float alpha, float beta) {
  __m256 acc[MR][2];
  for (int r = 0; r < MR; ++r) {
    acc[r][0] = _mm256_setzero_ps();
    acc[r][1] = _mm256_setzero_ps();
  }
  for (int p = 0; p < kc; ++p) {
    __m256 b0 = _mm256_loadu_ps(bp + (size_t)p * NR);
    __m256 b1 = _mm256_loadu_ps(bp + (size_t)p * NR + 8);
    const float* a = ap + (size_t)p * MR;
    __m256 v;
    v = _mm256_broadcast_ss(a + 0);
    acc[0][0] = _mm256_fmadd_ps(v, b0, acc[0][0]);
    acc[0][1] = _mm256_fmadd_ps(v, b1, acc[0][1]);
    v = _mm256_broadcast_ss(a + 1);
    acc[1][0] = _mm256_fmadd_ps(v, b0, acc[1][0]);
    acc[1][1] = _mm256_fmadd_ps(v, b1, acc[1][1]);
    v = _mm256_broadcast_ss(a + 2);
    acc[2][0] = _mm256_fmadd_ps(v, b0, acc[2][0]);
    acc[2][1] = _mm256_fmadd_ps(v, b1, acc[2][1]);
    v = _mm256_broadcast_ss(a + 3);
    acc[3][0] = _mm256_fmadd_ps(v, b0, acc[3][0]);
    acc[3][1] = _mm256_fmadd_ps(v, b1, acc[3][1]);
    v = _mm256_broadcast_ss(a + 4);
    acc[4][0] = _mm256_fmadd_ps(v, b0, acc[4][0]);
    acc[4][1] = _mm256_fmadd_ps(v, b1, acc[4][1]);
    v = _mm256_broadcast_ss(a + 5);
    acc[5][0] = _mm256_fmadd_ps(v, b0, acc[5][0]);
    acc[5][1] = _mm256_fmadd_ps(v, b1, acc[5][1]);
  }
  __m256 va = _mm256_set1_ps(alpha);
  if (nr == NR) {
    for (int r = 0; r < mr; ++r) {
      float* c = C + (size_t)r * ldc;
      __m256 r0 = _mm256_mul_ps(acc[r][0], va);
      __m256 r1 = _mm256_mul_ps(acc[r][1], va);
      if (beta == 0.0f) {
        _mm256_storeu_ps(c, r0);
        _mm256_storeu_ps(c + 8, r1);
      } else if (beta == 1.0f) {
        _mm256_storeu_ps(c, _mm256_add_ps(_mm256_loadu_ps(c), r0));
        _mm256_storeu_ps(c + 8, _mm256_add_ps(_mm256_loadu_ps(c + 8), r1));
      } else {
        __m256 vb = _mm256_set1_ps(beta);
        _mm256_storeu_ps(c, _mm256_fmadd_ps(vb, _mm256_loadu_ps(c), r0));
        _mm256_storeu_ps(c + 8, _mm256_fmadd_ps(vb, _mm256_loadu_ps(c + 8), r1));
      }
    }
  } else {
    float tmp[MR][NR];
    for (int r = 0; r < mr; ++r) {
      _mm256_storeu_ps(tmp[r], acc[r][0]);
      _mm256_storeu_ps(tmp[r] + 8, acc[r][1]);
    }
    for (int r = 0; r < mr; ++r) {
      float* c = C + (size_t)r * ldc;
      for (int t = 0; t < nr; ++t) {
        float v = alpha * tmp[r][t];
        c[t] = beta == 0.0f ? v : v + beta * c[t];
      }
    }
  }
}

void gemm_avx2(bool ta, bool tb, int M, int N, int K, float alpha,
               const float* A, int lda, const float* B, int ldb, float beta,
               float* C, int ldc) {
  if (M <= 0 || N <= 0) return;
  if (K <= 0) {
    // degenerate: C = beta*C
    for (int i = 0; i < M; ++i) {
      float* c = C + (size_t)i * ldc;
      if (beta == 0.0f) std::memset(c, 0, sizeof(float) * N);
      else if (beta != 1.0f)
        for (int j = 0; j < N; ++j) c[j] *= beta;
    }
    return;
  }
  Scratch& s = scratch();
  for (int jc = 0; jc < N; jc += NC) {
    int nc = std::min(NC, N - jc);
    for (int pc = 0; pc < K; pc += KC) {
      int kc = std::min(KC, K - pc);
      float beta_eff = pc == 0 ? beta : 1.0f;
      pack_b(B, ldb, tb, pc, jc, kc, nc, s.b.data());
      for (int ic = 0; ic < M; ic += MC) {
        int mc = std::min(MC, M - ic);
        pack_a(A, lda, ta, ic, pc, mc, kc, s.a.data());
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (nc >= 64 && (size_t)mc * kc >= 4096)
#endif
        for (int j = 0; j < nc; j += NR) {
          int nr = std::min(NR, nc - j);
          const float* bp = s.b.data() + (size_t)j * kc;
          for (int i = 0; i < mc; i += MR) {
            int mr = std::min(MR, mc - i);
            kernel_6x16(s.a.data() + (size_t)i * kc, bp, kc,
                        C + (size_t)(ic + i) * ldc + jc + j, ldc, mr, nr, alpha,
                        beta_eff);
          }
        }
      }
    }
  }
}

// ---- elementwise ----

void add_avx2(const float* a, const float* b, float* c, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(c + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) c[i] = a[i] + b[i];
}
void sub_avx2(const float* a, const float* b, float* c, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(c + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) c[i] = a[i] - b[i];
}
void mul_avx2(const float* a, const float* b, float* c, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(c + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) c[i] = a[i] * b[i];
}
void axpy_avx2(float a, const float* x, float* y, size_t n) {
  // mul+add (not fma) so results match the scalar reference bitwise
  __m256 va = _mm256_set1_ps(a);
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i),
                                          _mm256_mul_ps(va, _mm256_loadu_ps(x + i))));
  for (; i < n; ++i) y[i] += a * x[i];
}
void scale_avx2(float a, float* x, size_t n) {
  __m256 va = _mm256_set1_ps(a);
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(x + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

void lrelu_fwd_avx2(const float* x, float* y, size_t n, float slope) {
  __m256 vs = _mm256_set1_ps(slope);
  __m256 vz = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 v = _mm256_loadu_ps(x + i);
    __m256 pos = _mm256_max_ps(v, vz);
    __m256 neg = _mm256_min_ps(v, vz);
    _mm256_storeu_ps(y + i, _mm256_add_ps(pos, _mm256_mul_ps(vs, neg)));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}
void lrelu_bwd_avx2(const float* pre, const float* dy, float* dx, size_t n,
                    float slope) {
  __m256 vs = _mm256_set1_ps(slope);
  __m256 vz = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 p = _mm256_loadu_ps(pre + i);
    __m256 g = _mm256_loadu_ps(dy + i);
    __m256 m = _mm256_cmp_ps(p, vz, _CMP_GT_OQ);
    _mm256_storeu_ps(dx + i, _mm256_blendv_ps(_mm256_mul_ps(vs, g), g, m));
  }
  for (; i < n; ++i) dx[i] = pre[i] > 0.0f ? dy[i] : slope * dy[i];
}
void clamp01_fwd_avx2(const float* x, float* y, size_t n) {
  __m256 v0 = _mm256_setzero_ps(), v1 = _mm256_set1_ps(1.0f);
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_min_ps(_mm256_max_ps(_mm256_loadu_ps(x + i), v0), v1));
  for (; i < n; ++i) y[i] = std::min(1.0f, std::max(0.0f, x[i]));
}
void clamp01_bwd_avx2(const float* pre, const float* dy, float* dx, size_t n) {
  __m256 v0 = _mm256_setzero_ps(), v1 = _mm256_set1_ps(1.0f);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 p = _mm256_loadu_ps(pre + i);
    __m256 m = _mm256_and_ps(_mm256_cmp_ps(p, v0, _CMP_GT_OQ),
                             _mm256_cmp_ps(p, v1, _CMP_LT_OQ));
    _mm256_storeu_ps(dx + i, _mm256_and_ps(m, _mm256_loadu_ps(dy + i)));
  }
  for (; i < n; ++i) dx[i] = (pre[i] > 0.0f && pre[i] < 1.0f) ? dy[i] : 0.0f;
}
void sign_scaled_avx2(const float* a, const float* b, float* g, size_t n,
                      float sc) {
  __m256 vp = _mm256_set1_ps(sc), vn = _mm256_set1_ps(-sc);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 x = _mm256_loadu_ps(a + i), y = _mm256_loadu_ps(b + i);
    __m256 gt = _mm256_and_ps(_mm256_cmp_ps(x, y, _CMP_GT_OQ), vp);
    __m256 lt = _mm256_and_ps(_mm256_cmp_ps(x, y, _CMP_LT_OQ), vn);
    _mm256_storeu_ps(g + i, _mm256_or_ps(gt, lt));
  }
  for (; i < n; ++i) g[i] = a[i] > b[i] ? sc : (a[i] < b[i] ? -sc : 0.0f);
}

// ---- reductions (double accumulators; order differs from scalar, so these
// are tolerance-tested, not bitwise) ----

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}
double sum_avx2(const float* x, size_t n) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 v = _mm256_loadu_ps(x + i);
    a0 = _mm256_add_pd(a0, _mm256_cvtps_pd(_mm256_castps256_ps128(v)));
    a1 = _mm256_add_pd(a1, _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)));
  }
  double s = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) s += x[i];
  return s;
}
double sum_abs_diff_avx2(const float* a, const float* b, size_t n) {
  const __m256d msk = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffll));
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 x = _mm256_loadu_ps(a + i), y = _mm256_loadu_ps(b + i);
    __m256d d0 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(x)),
                               _mm256_cvtps_pd(_mm256_castps256_ps128(y)));
    __m256d d1 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(x, 1)),
                               _mm256_cvtps_pd(_mm256_extractf128_ps(y, 1)));
    a0 = _mm256_add_pd(a0, _mm256_and_pd(d0, msk));
    a1 = _mm256_add_pd(a1, _mm256_and_pd(d1, msk));
  }
  double s = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) s += std::abs((double)a[i] - (double)b[i]);
  return s;
}
double sum_sq_diff_avx2(const float* a, const float* b, size_t n) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 x = _mm256_loadu_ps(a + i), y = _mm256_loadu_ps(b + i);
    __m256d d0 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(x)),
                               _mm256_cvtps_pd(_mm256_castps256_ps128(y)));
    __m256d d1 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(x, 1)),
                               _mm256_cvtps_pd(_mm256_extractf128_ps(y, 1)));
    a0 = _mm256_fmadd_pd(d0, d0, a0);
    a1 = _mm256_fmadd_pd(d1, d1, a1);
  }
  double s = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) {
    double d = (double)a[i] - (double)b[i];
    s += d * d;
  }
  return s;
}

// ---- separable blur (used by the structural-similarity window) ----

void blur_h_avx2(const float* in, float* out, int h, int w, const float* kr,
                 int kn) {
  int r = kn / 2;
  if (w < 8 + 2 * r) {  // too narrow for the vector interior
    scalar::blur_h(in, out, h, w, kr, kn);
    return;
  }
  for (int y = 0; y < h; ++y) {
    const float* row = in + (size_t)y * w;
    float* orow = out + (size_t)y * w;
    int x = 0;
    for (; x < r; ++x) {  // left edge
      float s = 0;
      for (int t = -x; t <= r; ++t) s += kr[t + r] * row[x + t];
      orow[x] = s;
    }
    int lim = w - r - 8;  // vector interior: all taps in bounds
    for (; x <= lim; x += 8) {
      __m256 s = _mm256_setzero_ps();
      for (int t = -r; t <= r; ++t)
        s = _mm256_fmadd_ps(_mm256_set1_ps(kr[t + r]), _mm256_loadu_ps(row + x + t), s);
      _mm256_storeu_ps(orow + x, s);
    }
    for (; x < w; ++x) {
      float s = 0;
      int t1 = std::min(r, w - 1 - x);
      for (int t = -r; t <= t1; ++t) s += kr[t + r] * row[x + t];
      orow[x] = s;
    }
  }
}
void blur_v_avx2(const float* in, float* out, int h, int w, const float* kr,
                 int kn) {
  int r = kn / 2;
  for (int y = 0; y < h; ++y) {
    float* orow = out + (size_t)y * w;
    int t0 = std::max(-r, -y), t1 = std::min(r, h - 1 - y);
    int x = 0;
    for (; x + 8 <= w; x += 8) {
      __m256 s = _mm256_setzero_ps();
      for (int t = t0; t <= t1; ++t)
        s = _mm256_fmadd_ps(_mm256_set1_ps(kr[t + r]),
                            _mm256_loadu_ps(in + (size_t)(y + t) * w + x), s);
      _mm256_storeu_ps(orow + x, s);
    }
    for (; x < w; ++x) {
      float s = 0;
      for (int t = t0; t <= t1; ++t) s += kr[t + r] * in[(size_t)(y + t) * w + x];
      orow[x] = s;
    }
  }
}

void adam_step_avx2(float* p, const float* g, float* m, float* v, size_t n,
                    float lr, float b1, float b2, float eps, float wd,
                    float bc1, float bc2) {
  // mirror the scalar arithmetic op-for-op (mul/add, no fma) for bitwise
  // equality with the reference
  __m256 vlr = _mm256_set1_ps(lr), vb1 = _mm256_set1_ps(b1), vb2 = _mm256_set1_ps(b2);
  __m256 v1b1 = _mm256_set1_ps(1.0f - b1), v1b2 = _mm256_set1_ps(1.0f - b2);
  __m256 veps = _mm256_set1_ps(eps), vwd = _mm256_set1_ps(wd);
  __m256 vbc1 = _mm256_set1_ps(bc1), vbc2 = _mm256_set1_ps(bc2);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 pi = _mm256_loadu_ps(p + i);
    __m256 gi = _mm256_add_ps(_mm256_loadu_ps(g + i), _mm256_mul_ps(vwd, pi));
    __m256 mi = _mm256_add_ps(_mm256_mul_ps(vb1, _mm256_loadu_ps(m + i)),
                              _mm256_mul_ps(v1b1, gi));
    __m256 vi = _mm256_add_ps(_mm256_mul_ps(vb2, _mm256_loadu_ps(v + i)),
                              _mm256_mul_ps(_mm256_mul_ps(v1b2, gi), gi));
    _mm256_storeu_ps(m + i, mi);
    _mm256_storeu_ps(v + i, vi);
    __m256 mh = _mm256_div_ps(mi, vbc1);
    __m256 vh = _mm256_div_ps(vi, vbc2);
    __m256 den = _mm256_add_ps(_mm256_sqrt_ps(vh), veps);
    _mm256_storeu_ps(p + i, _mm256_sub_ps(pi, _mm256_div_ps(_mm256_mul_ps(vlr, mh), den)));
  }
  for (; i < n; ++i) {
    float gi = g[i] + wd * p[i];
    m[i] = b1 * m[i] + (1.0f - b1) * gi;
    v[i] = b2 * v[i] + (1.0f - b2) * gi * gi;
    float mh = m[i] / bc1;
    float vh = v[i] / bc2;
    p[i] -= lr * mh / (std::sqrt(vh) + eps);
  }
}

}  // namespace

void fill_avx2(Table& t) {
  t.gemm = &gemm_avx2;
  t.add = &add_avx2;
  t.sub = &sub_avx2;
  t.mul = &mul_avx2;
  t.axpy = &axpy_avx2;
  t.scale = &scale_avx2;
  t.lrelu_fwd = &lrelu_fwd_avx2;
  t.lrelu_bwd = &lrelu_bwd_avx2;
  t.clamp01_fwd = &clamp01_fwd_avx2;
  t.clamp01_bwd = &clamp01_bwd_avx2;
  t.sum = &sum_avx2;
  t.sum_abs_diff = &sum_abs_diff_avx2;
  t.sum_sq_diff = &sum_sq_diff_avx2;
  t.sign_scaled = &sign_scaled_avx2;
  t.blur_h = &blur_h_avx2;
  t.blur_v = &blur_v_avx2;
  t.adam_step = &adam_step_avx2;
}

}  // namespace procomp::k
