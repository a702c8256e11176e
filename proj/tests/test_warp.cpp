#include <doctest.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <vector>

#include "oracles.hpp"
#include "procomp/core/rng.hpp"
#include "procomp/nn/gradcheck.hpp"
#include "procomp/warp/warp.hpp"

using namespace procomp;

namespace {

template <typename T>
void fill_rand(Tensor<T>& t, Rng& rng, double lo = 0, double hi = 1) {
  for (auto& v : t.data) v = T(rng.uniform(lo, hi));
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& r) {
  double s = 0;
  for (size_t i = 0; i < a.numel(); ++i) s += (double)a[i] * (double)r[i];
  return s;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0;
  for (size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs((double)a[i] - (double)b[i]));
  return m;
}

// smooth synthetic image for interpolation-order comparisons
TensorF smooth_img(int h, int w) {
  TensorF t({3, h, w});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        t.at(c, y, x) =
            0.5f + 0.35f * std::sin(6.28318f * x / w + 1.3f * c) *
                       std::cos(6.28318f * y / h + 0.7f * c);
  return t;
}

}  // namespace

TEST_CASE("refinement with zero weights is the exact identity on grids") {
  Rng rng(201);
  warp::RefineNet<float> net;  // params default to zero
  TensorF g({2, 24, 32}), out;
  fill_rand(g, rng, -1, 1);
  net.forward(g, out);
  REQUIRE(out.shape == g.shape);
  for (size_t i = 0; i < g.numel(); ++i) CHECK(out[i] == g[i]);
}

TEST_CASE("refinement with tiny random weights stays within 1e-2 of identity") {
  Rng rng(202);
  warp::RefineNet<float> net;
  net.init_uniform(rng, 1e-4f);
  TensorF g({2, 32, 32}), out;
  k::identity_grid(32, 32, g.ptr());
  net.forward(g, out);
  CHECK(max_abs_diff(out, g) <= 1e-2);
}

TEST_CASE("refinement rejects sizes not divisible by 8") {
  warp::RefineNet<float> net;
  TensorF g({2, 20, 24}), out;
  g.zero();
  CHECK_THROWS(net.forward(g, out));
}

TEST_CASE("identity-initialized warp leaves the image unchanged") {
  Rng rng(203);
  warp::WarpNet<float> wp(24, 24);
  TensorF img({3, 24, 24}), out;
  fill_rand(img, rng);
  wp.warp(img, out);
  REQUIRE(out.shape == img.shape);
  for (size_t i = 0; i < img.numel(); ++i) CHECK(out[i] == img[i]);
}

TEST_CASE("pure affine configuration equals direct single-sample warping") {
  Rng rng(204);
  const float a6[6] = {0.92f, 0.06f, -0.03f, -0.05f, 0.88f, 0.04f};
  warp::WarpNet<float> wp(32, 32);
  for (int i = 0; i < 6; ++i) wp.aff.value[i] = a6[i];
  TensorF img({3, 20, 22}), out, want({3, 32, 32});
  fill_rand(img, rng);
  wp.warp(img, out);
  TensorF ga(std::vector<int>{2, 32, 32});
  nn::affine_grid_fwd(a6, 32, 32, ga.ptr());
  k::bilinear_fwd(img.ptr(), 3, 20, 22, ga.ptr(), 32, 32, want.ptr());
  for (size_t i = 0; i < out.numel(); ++i) CHECK(out[i] == want[i]);

  // same configuration in double precision: agreement below 1e-12
  warp::WarpNet<double> wpd(32, 32);
  for (int i = 0; i < 6; ++i) wpd.aff.value[i] = a6[i];
  Tensor<double> imgd({3, 20, 22}), outd, wantd({3, 32, 32});
  for (size_t i = 0; i < imgd.numel(); ++i) imgd[i] = img[i];
  wpd.warp(imgd, outd);
  Tensor<double> gad(std::vector<int>{2, 32, 32});
  double a6d[6];
  for (int i = 0; i < 6; ++i) a6d[i] = a6[i];
  nn::affine_grid_fwd(a6d, 32, 32, gad.ptr());
  k::bilinear_fwd(imgd.ptr(), 3, 20, 22, gad.ptr(), 32, 32, wantd.ptr());
  CHECK(max_abs_diff(outd, wantd) <= 1e-12);
}

TEST_CASE("composing two affine grids equals the analytically multiplied affine") {
  const float A[6] = {0.9f, 0.1f, 0.05f, -0.08f, 1.05f, -0.1f};
  const float B[6] = {0.9f, 0.03f, 0.02f, -0.02f, 0.85f, -0.04f};  // in-bounds
  const int h = 17, w = 19;
  TensorF ga({2, h, w}), gb({2, h, w}), gc({2, h, w}), want({2, h, w});
  nn::affine_grid_fwd(A, h, w, ga.ptr());
  nn::affine_grid_fwd(B, h, w, gb.ptr());
  k::compose_fwd(ga.ptr(), h, w, gb.ptr(), h, w, gc.ptr());
  const float C[6] = {A[0] * B[0] + A[1] * B[3], A[0] * B[1] + A[1] * B[4],
                      A[0] * B[2] + A[1] * B[5] + A[2],
                      A[3] * B[0] + A[4] * B[3], A[3] * B[1] + A[4] * B[4],
                      A[3] * B[2] + A[4] * B[5] + A[5]};
  nn::affine_grid_fwd(C, h, w, want.ptr());
  CHECK(max_abs_diff(gc, want) <= 1e-6);
}

TEST_CASE("grid-space cascade matches image-space multi-sampling on smooth input") {
  // the production path samples the image once through composed grids; the
  // reference warps the image twice (affine image, then spline image). On a
  // smooth image with a smooth warp they agree to interpolation order.
  Rng rng(205);
  const int n = 64;
  TensorF img = smooth_img(n, n);
  warp::WarpNet<float> wp(n, n);
  wp.aff.value[0] = 0.9f;
  wp.aff.value[1] = 0.05f;
  wp.aff.value[2] = 0.02f;
  wp.aff.value[3] = -0.04f;
  wp.aff.value[4] = 0.92f;
  wp.aff.value[5] = -0.03f;
  wp.tps.init_identity();
  wp.tps.p.value[1] = 0.85f;
  wp.tps.p.value[nn::kTpsCols + 2] = 0.85f;
  for (int d = 0; d < 2; ++d)
    for (int k = 3; k < nn::kTpsCols; ++k)
      wp.tps.p.value[d * nn::kTpsCols + k] = (float)rng.uniform(-0.01, 0.01);

  TensorF fast;
  wp.warp(img, fast);

  // reference: image -> affine-warped image -> spline-warped image
  TensorF ga(std::vector<int>{2, n, n}), gt;
  nn::affine_grid_fwd(wp.aff.value.ptr(), n, n, ga.ptr());
  wp.tps.forward(n, n, gt);
  auto sample_image = [&](const TensorF& src, const TensorF& grid) {
    TensorF out({3, n, n});
    for (int c = 0; c < 3; ++c) {
      std::vector<double> plane((size_t)n * n);
      for (size_t i = 0; i < plane.size(); ++i) plane[i] = src[(size_t)c * n * n + i];
      for (size_t i = 0; i < plane.size(); ++i)
        out[(size_t)c * n * n + i] = (float)oracle::sample_one(
            plane, n, n, grid[i], grid[(size_t)n * n + i]);
    }
    return out;
  };
  TensorF xa = sample_image(img, ga);
  TensorF xt = sample_image(xa, gt);
  CHECK(max_abs_diff(fast, xt) <= 0.02);
  // and they are close but not identical (different interpolation order)
  CHECK(max_abs_diff(fast, xt) > 0.0);
}

TEST_CASE("simplified grid reproduces the full path") {
  Rng rng(206);
  // identity configuration collapses to the identity grid
  warp::WarpNet<float> wid(16, 16);
  TensorF g0 = wid.simplify(), ident(std::vector<int>{2, 16, 16});
  k::identity_grid(16, 16, ident.ptr());
  CHECK(max_abs_diff(g0, ident) == 0.0);

  // arbitrary parameters: single-sample path equals warp on 10 random images
  warp::WarpNet<float> wp(24, 24);
  const float a6[6] = {0.9f, 0.02f, -0.01f, 0.03f, 0.88f, 0.02f};
  Rng init_rng(207);
  wp.init_train(a6, init_rng, 1e-3f);
  TensorF grid = wp.simplify();
  REQUIRE(grid.shape == std::vector<int>{2, 24, 24});
  for (int i = 0; i < 10; ++i) {
    TensorF img({3, 21, 18}), full, simple;
    fill_rand(img, rng);
    wp.warp(img, full);
    warp::warp_with_grid(grid, img, simple);
    CHECK(max_abs_diff(full, simple) <= 1e-6);
  }
}

TEST_CASE("simplified path is at least twice as fast as the full cascade") {
  Rng rng(208);
  warp::WarpNet<float> wp(256, 256);
  const float a6[6] = {0.9f, 0.02f, -0.01f, 0.03f, 0.88f, 0.02f};
  wp.init_train(a6, rng, 1e-3f);
  TensorF img({3, 256, 256}), out;
  fill_rand(img, rng);
  TensorF grid = wp.simplify();
  wp.warp(img, out);  // warm-up
  warp::warp_with_grid(grid, img, out);

  using clk = std::chrono::steady_clock;
  auto time_best = [&](auto&& fn) {
    double best = 1e30;
    for (int r = 0; r < 3; ++r) {
      auto t0 = clk::now();
      fn();
      best = std::min(best, std::chrono::duration<double>(clk::now() - t0).count());
    }
    return best;
  };
  double t_full = time_best([&] { wp.warp(img, out); });
  double t_simple = time_best([&] { warp::warp_with_grid(grid, img, out); });
  MESSAGE("full ", t_full * 1e3, " ms, simplified ", t_simple * 1e3,
          " ms, speedup ", t_full / t_simple, "x");
  CHECK(t_full >= 2.0 * t_simple);
}

namespace {

void init_test_cascade(warp::WarpNet<double>& wp, Rng& rng) {
  const double a6[6] = {0.8, 0.03, 0.02, -0.02, 0.85, -0.04};
  for (int i = 0; i < 6; ++i) wp.aff.value[i] = a6[i];
  wp.tps.init_identity(&rng, 0.005);
  wp.tps.p.value[0] = 0.02;
  wp.tps.p.value[1] = 0.8;
  wp.tps.p.value[2] = 0.05;
  wp.tps.p.value[nn::kTpsCols + 0] = -0.02;
  wp.tps.p.value[nn::kTpsCols + 1] = -0.03;
  wp.tps.p.value[nn::kTpsCols + 2] = 0.85;
  wp.refine.init_uniform(rng, 0.05);
}

}  // namespace

TEST_CASE("full cascade gradients match finite differences on the grid") {
  // the objective reads the final grid directly: every stage of the cascade
  // (affine, spline, composition, refinement) is smooth there, so central
  // differences are trustworthy at 1e-3. Step 1e-7 keeps bias perturbations
  // (which shift thousands of pre-activations at once) from straddling
  // leaky-relu kinks; the 1e-6 absolute gate covers coordinates whose true
  // gradient sits below the finite-difference noise floor.
  Rng rng(209);
  warp::WarpNet<double> wp(16, 16);
  init_test_cascade(wp, rng);
  Tensor<double> r({2, 16, 16});
  fill_rand(r, rng, -1, 1);
  auto fwd = [&] { return dot(wp.forward_grid(), r); };
  auto back = [&] {
    for (auto* p : wp.params()) p->zero_grad();
    wp.forward_grid();
    wp.backward_grid(r);
  };
  auto rep = nn::grad_check<double>(fwd, back, wp.params(), 1e-7, 12, rng, 1e-6);
  CHECK(rep.max_rel_err <= 1e-3);
}

TEST_CASE("cascade gradients through image sampling (smooth image)") {
  // sampling a real image makes the objective piecewise linear in the grid
  // coordinates; finite differences straddling a pixel-cell boundary then
  // measure a blend of two one-sided slopes. A smooth image keeps those slope
  // jumps (its second differences) small so the check still resolves 1e-3.
  Rng rng(209);
  warp::WarpNet<double> wp(16, 16);
  init_test_cascade(wp, rng);
  TensorF simg = smooth_img(24, 24);
  Tensor<double> img({3, 24, 24}), out, r({3, 16, 16});
  for (size_t i = 0; i < img.numel(); ++i) img[i] = simg[i];
  fill_rand(r, rng, -1, 1);
  auto fwd = [&] {
    wp.warp(img, out);
    return dot(out, r);
  };
  auto back = [&] {
    for (auto* p : wp.params()) p->zero_grad();
    wp.warp(img, out);
    Tensor<double> dgr({2, 16, 16});
    dgr.zero();
    k::bilinear_bwd(img.ptr(), 3, 24, 24, wp.gr.ptr(), 16, 16, r.ptr(),
                    (double*)nullptr, dgr.ptr());
    wp.backward_grid(dgr);
  };
  auto rep = nn::grad_check<double>(fwd, back, wp.params(), 1e-7, 12, rng, 1e-6);
  CHECK(rep.max_rel_err <= 1e-3);
}

TEST_CASE("flat grid files round-trip and reject damage") {
  Rng rng(210);
  TensorF grid({2, 9, 13});
  fill_rand(grid, rng, -1, 1);
  const std::string path = "/tmp/procomp_grid.bin";
  warp::save_grid_flat(path, grid);
  TensorF back = warp::load_grid_flat(path);
  REQUIRE(back.shape == grid.shape);
  for (size_t i = 0; i < grid.numel(); ++i) CHECK(back[i] == grid[i]);

  CHECK_THROWS(warp::load_grid_flat("/tmp/does_not_exist_procomp.bin"));
  {
    std::ofstream f("/tmp/procomp_grid_trunc.bin", std::ios::binary);
    uint32_t h = 9, w = 13;
    f.write((const char*)&h, 4);
    f.write((const char*)&w, 4);
    float junk = 0.5f;
    f.write((const char*)&junk, 4);
  }
  CHECK_THROWS(warp::load_grid_flat("/tmp/procomp_grid_trunc.bin"));
}
