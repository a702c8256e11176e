#include <doctest.h>

#include <chrono>
#include <cstring>
#include <vector>

#include "oracles.hpp"
#include "procomp/core/rng.hpp"
#include "procomp/kernels/kernels.hpp"

using namespace procomp;

namespace {

std::vector<float> rand_vec(size_t n, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
  std::vector<float> v(n);
  for (auto& x : v) x = rng.uniformf(lo, hi);
  return v;
}

struct ImplGuard {
  ~ImplGuard() { k::select_impl(true); }
};

}  // namespace

TEST_CASE("gemm matches double oracle for both implementations") {
  Rng rng(42);
  struct Shape { int M, N, K; };
  const Shape shapes[] = {{1, 1, 1},   {6, 16, 8},   {5, 7, 3},  {13, 31, 17},
                          {64, 129, 65}, {2, 4096, 39}, {37, 41, 300}};
  for (bool simd : {false, true}) {
    if (simd && !k::cpu_has_avx2()) continue;
    ImplGuard g;
    k::select_impl(simd);
    for (auto [M, N, K] : shapes) {
      for (bool ta : {false, true}) {
        for (bool tb : {false, true}) {
          for (float beta : {0.0f, 1.0f, 0.5f}) {
            auto A = rand_vec((size_t)M * K, rng);
            auto B = rand_vec((size_t)K * N, rng);
            auto C = rand_vec((size_t)M * N, rng);
            // oracle in double on the untransposed layout
            std::vector<double> Ad((size_t)M * K), Bd((size_t)K * N);
            for (int i = 0; i < M; ++i)
              for (int p = 0; p < K; ++p)
                Ad[(size_t)i * K + p] = ta ? A[(size_t)p * M + i] : A[(size_t)i * K + p];
            for (int p = 0; p < K; ++p)
              for (int j = 0; j < N; ++j)
                Bd[(size_t)p * N + j] = tb ? B[(size_t)j * K + p] : B[(size_t)p * N + j];
            auto Cd = oracle::matmul(Ad, Bd, M, K, N);
            const float alpha = 0.75f;
            std::vector<float> Cout = C;
            k::gemm<float>(ta, tb, M, N, K, alpha, A.data(), ta ? M : K,
                           B.data(), tb ? K : N, beta, Cout.data(), N);
            double worst = 0;
            for (size_t i = 0; i < Cout.size(); ++i) {
              double want = alpha * Cd[i] + beta * (double)C[i];
              worst = std::max(worst, std::abs(want - (double)Cout[i]));
            }
            CAPTURE(M); CAPTURE(N); CAPTURE(K); CAPTURE(ta); CAPTURE(tb);
            CAPTURE(beta); CAPTURE(simd);
            CHECK(worst < 1e-4 * (1 + std::sqrt((double)K)));
          }
        }
      }
    }
  }
}

TEST_CASE("elementwise SIMD variants match scalar bitwise") {
  if (!k::cpu_has_avx2()) return;
  Rng rng(7);
  const size_t n = 16411;  // prime => exercises the vector tails
  auto a = rand_vec(n, rng, -2.0f, 2.0f);
  auto b = rand_vec(n, rng, -2.0f, 2.0f);

  auto run = [&](bool simd, auto&& fn) {
    ImplGuard g;
    k::select_impl(simd);
    return fn();
  };

  auto bitwise = [&](const std::vector<float>& x, const std::vector<float>& y) {
    REQUIRE(x.size() == y.size());
    return std::memcmp(x.data(), y.data(), x.size() * sizeof(float)) == 0;
  };

#define CHECK_EW(expr)                                             \
  {                                                                \
    auto scalar_out = run(false, [&] { expr });                    \
    auto simd_out = run(true, [&] { expr });                       \
    CHECK(bitwise(scalar_out, simd_out));                          \
  }

  CHECK_EW({ std::vector<float> c(n); k::tab.add(a.data(), b.data(), c.data(), n); return c; })
  CHECK_EW({ std::vector<float> c(n); k::tab.sub(a.data(), b.data(), c.data(), n); return c; })
  CHECK_EW({ std::vector<float> c(n); k::tab.mul(a.data(), b.data(), c.data(), n); return c; })
  CHECK_EW({ std::vector<float> c = b; k::tab.axpy(0.37f, a.data(), c.data(), n); return c; })
  CHECK_EW({ std::vector<float> c = a; k::tab.scale(1.7f, c.data(), n); return c; })
  CHECK_EW({ std::vector<float> c(n); k::tab.lrelu_fwd(a.data(), c.data(), n, 0.2f); return c; })
  CHECK_EW({ std::vector<float> c(n); k::tab.lrelu_bwd(a.data(), b.data(), c.data(), n, 0.2f); return c; })
  CHECK_EW({ std::vector<float> c(n); k::tab.clamp01_fwd(a.data(), c.data(), n); return c; })
  CHECK_EW({ std::vector<float> c(n); k::tab.clamp01_bwd(a.data(), b.data(), c.data(), n); return c; })
  CHECK_EW({ std::vector<float> c(n); k::tab.sign_scaled(a.data(), b.data(), c.data(), n, 0.25f); return c; })
#undef CHECK_EW

  // adam: the SIMD lane arithmetic mirrors the scalar op order exactly
  {
    std::vector<float> p0 = rand_vec(n, rng), g0 = rand_vec(n, rng);
    std::vector<float> res[2];
    for (int which : {0, 1}) {
      ImplGuard g;
      k::select_impl(which == 1);
      std::vector<float> p = p0, m(n, 0.1f), v(n, 0.02f);
      k::tab.adam_step(p.data(), g0.data(), m.data(), v.data(), n, 1e-3f, 0.9f,
                       0.999f, 1e-8f, 1e-4f, 0.1f, 0.001999f);
      res[which] = p;
      res[which].insert(res[which].end(), m.begin(), m.end());
      res[which].insert(res[which].end(), v.begin(), v.end());
    }
    CHECK(bitwise(res[0], res[1]));
  }
}

TEST_CASE("reductions match scalar within accumulation tolerance") {
  if (!k::cpu_has_avx2()) return;
  Rng rng(11);
  const size_t n = 100003;
  auto a = rand_vec(n, rng), b = rand_vec(n, rng);
  double r[2][3];
  for (int which : {0, 1}) {
    ImplGuard g;
    k::select_impl(which == 1);
    r[which][0] = k::tab.sum(a.data(), n);
    r[which][1] = k::tab.sum_abs_diff(a.data(), b.data(), n);
    r[which][2] = k::tab.sum_sq_diff(a.data(), b.data(), n);
  }
  for (int i = 0; i < 3; ++i)
    CHECK(std::abs(r[0][i] - r[1][i]) < 1e-9 * (1.0 + std::abs(r[0][i])));
}

TEST_CASE("separable blur equals direct 2D oracle and SIMD matches scalar") {
  Rng rng(13);
  const int h = 37, w = 53, kn = 11;
  auto img = rand_vec((size_t)h * w, rng, 0.0f, 1.0f);
  // a gaussian-ish normalized kernel
  std::vector<float> kr(kn);
  float s = 0;
  for (int i = 0; i < kn; ++i) { kr[i] = std::exp(-0.5f * (i - 5) * (i - 5) / 2.25f); s += kr[i]; }
  for (auto& x : kr) x /= s;

  std::vector<double> k2d(kn * kn), imgd(img.begin(), img.end());
  for (int y = 0; y < kn; ++y)
    for (int x = 0; x < kn; ++x) k2d[(size_t)y * kn + x] = (double)kr[y] * kr[x];
  auto want = oracle::blur2d(imgd, h, w, k2d, kn);

  std::vector<float> out[2];
  for (int which : {0, 1}) {
    if (which == 1 && !k::cpu_has_avx2()) { out[1] = out[0]; break; }
    ImplGuard g;
    k::select_impl(which == 1);
    std::vector<float> tmp((size_t)h * w), o((size_t)h * w);
    k::tab.blur_h(img.data(), tmp.data(), h, w, kr.data(), kn);
    k::tab.blur_v(tmp.data(), o.data(), h, w, kr.data(), kn);
    out[which] = o;
  }
  double worst = 0, cross = 0;
  for (size_t i = 0; i < out[0].size(); ++i) {
    worst = std::max(worst, std::abs(want[i] - (double)out[0][i]));
    cross = std::max(cross, std::abs((double)out[0][i] - (double)out[1][i]));
  }
  CHECK(worst < 1e-5);
  CHECK(cross < 1e-6);
}

TEST_CASE("im2col matches direct window gather and col2im is its adjoint") {
  Rng rng(17);
  for (int stride : {1, 2}) {
    const int C = 3, H = 8, W = 10;
    int OH = (H - 1) / stride + 1, OW = (W - 1) / stride + 1;
    auto x = rand_vec((size_t)C * H * W, rng);
    std::vector<float> col((size_t)C * 9 * OH * OW);
    k::im2col_3x3(x.data(), C, H, W, stride, col.data());

    // direct gather
    for (int c = 0; c < C; ++c)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx)
          for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox) {
              int iy = oy * stride + ky - 1, ix = ox * stride + kx - 1;
              float want = 0;
              if (iy >= 0 && iy < H && ix >= 0 && ix < W)
                want = x[((size_t)c * H + iy) * W + ix];
              float got = col[((size_t)(c * 9 + ky * 3 + kx) * OH + oy) * OW + ox];
              REQUIRE(got == want);
            }

    // adjoint: <col2im(u), x> == <u, im2col(x)>
    auto u = rand_vec(col.size(), rng);
    std::vector<float> xt((size_t)C * H * W);
    k::col2im_3x3(u.data(), C, H, W, stride, xt.data());
    double lhs = 0, rhs = 0;
    for (size_t i = 0; i < xt.size(); ++i) lhs += (double)xt[i] * x[i];
    for (size_t i = 0; i < u.size(); ++i) rhs += (double)u[i] * col[i];
    CHECK(std::abs(lhs - rhs) < 1e-3 * (1 + std::abs(lhs)));
  }
}

TEST_CASE("bilinear sampling: pinned hand value") {
  // 2x2 single-channel image [[0,1],[0.5,0.25]], one grid point at (0,0)
  std::vector<float> img = {0.0f, 1.0f, 0.5f, 0.25f};
  std::vector<float> grid = {0.0f, 0.0f};  // u=0, v=0
  float out = -1;
  k::bilinear_fwd(img.data(), 1, 2, 2, grid.data(), 1, 1, &out);
  CHECK(out == doctest::Approx(0.4375).epsilon(1e-7));
  // independent oracle
  std::vector<double> imgd(img.begin(), img.end());
  CHECK(oracle::sample_one(imgd, 2, 2, 0.0, 0.0) == doctest::Approx(0.4375));
}

TEST_CASE("bilinear sampling: identity grid reproduces the image exactly") {
  Rng rng(23);
  const int C = 3, H = 33, W = 47;
  auto img = rand_vec((size_t)C * H * W, rng, 0.0f, 1.0f);
  std::vector<float> grid(2 * (size_t)H * W);
  k::identity_grid(H, W, grid.data());
  std::vector<float> out((size_t)C * H * W);
  k::bilinear_fwd(img.data(), C, H, W, grid.data(), H, W, out.data());
  CHECK(std::memcmp(img.data(), out.data(), img.size() * sizeof(float)) == 0);
}

TEST_CASE("bilinear sampling: constants, linearity, oracle agreement") {
  Rng rng(29);
  const int C = 2, H = 9, W = 13, h = 7, w = 11;
  std::vector<float> grid(2 * (size_t)h * w);
  for (auto& g : grid) g = rng.uniformf(-0.95f, 0.95f);

  // constant image stays constant
  std::vector<float> cimg((size_t)C * H * W, 0.7f), cout((size_t)C * h * w);
  k::bilinear_fwd(cimg.data(), C, H, W, grid.data(), h, w, cout.data());
  for (float v : cout) CHECK(std::abs(v - 0.7f) < 1e-6f);

  // linearity in the image argument
  auto a = rand_vec((size_t)C * H * W, rng), b = rand_vec((size_t)C * H * W, rng);
  std::vector<float> mix(a.size()), sa(cout.size()), sb(cout.size()), sm(cout.size());
  for (size_t i = 0; i < a.size(); ++i) mix[i] = 0.3f * a[i] + 0.6f * b[i];
  k::bilinear_fwd(a.data(), C, H, W, grid.data(), h, w, sa.data());
  k::bilinear_fwd(b.data(), C, H, W, grid.data(), h, w, sb.data());
  k::bilinear_fwd(mix.data(), C, H, W, grid.data(), h, w, sm.data());
  for (size_t i = 0; i < sm.size(); ++i)
    CHECK(std::abs(sm[i] - (0.3f * sa[i] + 0.6f * sb[i])) < 1e-6f);

  // random grids (including out-of-bounds) match the double oracle
  std::vector<float> wide(2 * (size_t)h * w);
  for (auto& g : wide) g = rng.uniformf(-1.6f, 1.6f);
  std::vector<float> out((size_t)C * h * w);
  k::bilinear_fwd(a.data(), C, H, W, wide.data(), h, w, out.data());
  for (int c = 0; c < C; ++c) {
    std::vector<double> plane((size_t)H * W);
    for (size_t i = 0; i < plane.size(); ++i) plane[i] = a[c * plane.size() + i];
    for (size_t i = 0; i < (size_t)h * w; ++i) {
      double want = oracle::sample_one(plane, H, W, wide[i], wide[(size_t)h * w + i]);
      CHECK(std::abs(want - (double)out[c * (size_t)h * w + i]) < 2e-5);
    }
  }
}

TEST_CASE("grid composition: identity cases and sentinel") {
  Rng rng(31);
  const int H = 12, W = 15;
  std::vector<float> ident(2 * (size_t)H * W);
  k::identity_grid(H, W, ident.data());

  // compose(G, identity) == G
  std::vector<float> G(2 * (size_t)H * W);
  for (auto& g : G) g = rng.uniformf(-0.9f, 0.9f);
  std::vector<float> out(G.size());
  k::compose_fwd(G.data(), H, W, ident.data(), H, W, out.data());
  for (size_t i = 0; i < G.size(); ++i) CHECK(out[i] == doctest::Approx(G[i]).epsilon(1e-6));

  // compose(identity, F) == F for in-bounds F
  std::vector<float> F(2 * (size_t)H * W);
  for (auto& g : F) g = rng.uniformf(-0.98f, 0.98f);
  k::compose_fwd(ident.data(), H, W, F.data(), H, W, out.data());
  for (size_t i = 0; i < F.size(); ++i)
    CHECK(std::abs(out[i] - F[i]) < 2e-5f);

  // out-of-bounds fine coords map to the sentinel
  std::vector<float> far(2, 0.0f);
  far[0] = 1.5f;  // u out of range
  std::vector<float> o2(2);
  k::compose_fwd(G.data(), H, W, far.data(), 1, 1, o2.data());
  CHECK(o2[0] == k::kGridSentinel);
  CHECK(o2[1] == k::kGridSentinel);
}

TEST_CASE("gemm throughput report") {
  if (!k::cpu_has_avx2()) return;
  const int M = 128, N = 4096, K = 576;
  Rng rng(3);
  auto A = rand_vec((size_t)M * K, rng);
  auto B = rand_vec((size_t)K * N, rng);
  std::vector<float> C((size_t)M * N);
  // warmup
  k::gemm<float>(false, false, M, N, K, 1.0f, A.data(), K, B.data(), N, 0.0f, C.data(), N);
  auto t0 = std::chrono::steady_clock::now();
  const int reps = 8;
  for (int r = 0; r < reps; ++r)
    k::gemm<float>(false, false, M, N, K, 1.0f, A.data(), K, B.data(), N, 0.0f, C.data(), N);
  double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double gflops = 2.0 * M * N * K * reps / sec / 1e9;
  MESSAGE("gemm ", M, "x", N, "x", K, ": ", gflops, " GFLOP/s (", std::string(k::active_impl()), ")");
  CHECK(gflops > 1.0);  // sanity only
}
