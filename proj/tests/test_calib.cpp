#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <vector>

#include "oracles.hpp"
#include "procomp/calib/calib.hpp"
#include "procomp/core/rng.hpp"

using namespace procomp;

namespace {

bool mask_equal(const img::Mask& a, const img::Mask& b) {
  if (a.shape != b.shape) return false;
  for (size_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

img::Mask rect_mask(int H, int W, calib::Rect r) {
  img::Mask m({1, H, W});
  m.zero();
  for (int y = r.y; y < r.y + r.h; ++y)
    for (int x = r.x; x < r.x + r.w; ++x) m.at(0, y, x) = 1;
  return m;
}

}  // namespace

TEST_CASE("otsu splits a bimodal image between the modes") {
  TensorF g({1, 10, 10});
  for (size_t i = 0; i < g.numel(); ++i) g[i] = (i % 2) ? 0.8f : 0.2f;
  float t = calib::otsu_threshold(g);
  CHECK(t > 0.2f);
  CHECK(t <= 0.8f);
}

TEST_CASE("otsu matches the exhaustive split search") {
  for (uint64_t seed : {401u, 402u, 403u}) {
    Rng rng(seed);
    TensorF g({1, 24, 24});
    std::vector<double> vals;
    for (auto& v : g.data) {
      v = rng.uniformf(0.0f, 1.0f);
      vals.push_back(v);
    }
    CHECK(calib::otsu_threshold(g) ==
          doctest::Approx(oracle::otsu_brute(vals)).epsilon(1e-12));
  }
}

TEST_CASE("otsu lands near the midpoint of a two-gaussian mixture") {
  Rng rng(404);
  TensorF g({1, 100, 200});
  for (size_t i = 0; i < g.numel(); ++i) {
    double mean = (i % 2) ? 0.75 : 0.25;
    g[i] = (float)std::clamp(mean + 0.05 * rng.normal(), 0.0, 1.0);
  }
  float t = calib::otsu_threshold(g);
  CHECK(std::abs(t - 0.5f) <= 0.05f);
}

TEST_CASE("otsu rejects images with no separation") {
  TensorF flat({1, 8, 8});
  flat.fill(0.4f);
  CHECK_THROWS(calib::otsu_threshold(flat));
  // two distinct values inside one histogram bin still cannot be split
  TensorF narrow({1, 8, 8});
  for (size_t i = 0; i < narrow.numel(); ++i)
    narrow[i] = 0.5f + (i % 2) * 1e-4f;
  CHECK_THROWS(calib::otsu_threshold(narrow));
}

TEST_CASE("fov_mask recovers an exact rectangle through salt and pepper") {
  const int H = 48, W = 64;
  calib::Rect r{10, 8, 40, 30};
  TensorF dark({3, H, W}), surf({3, H, W});
  dark.fill(0.05f);
  surf = dark;
  for (int y = r.y; y < r.y + r.h; ++y)
    for (int x = r.x; x < r.x + r.w; ++x)
      for (int c = 0; c < 3; ++c) surf.at(c, y, x) = 0.75f;
  // isolated bright specks outside and dark pinholes inside, spaced so no two
  // defects touch (about 1% of the frame)
  for (int y = 2; y < H; y += 7)
    for (int x = 3; x < W; x += 11) {
      bool inside = y >= r.y + 2 && y < r.y + r.h - 2 && x >= r.x + 2 &&
                    x < r.x + r.w - 2;
      bool outside = y < r.y - 2 || y >= r.y + r.h + 2 || x < r.x - 2 ||
                     x >= r.x + r.w + 2;
      for (int c = 0; c < 3; ++c) {
        if (inside) surf.at(c, y, x) = dark.at(c, y, x);   // pinhole
        if (outside) surf.at(c, y, x) = 0.75f;             // speck
      }
    }
  img::Mask m = calib::fov_mask(surf, dark);
  CHECK(mask_equal(m, rect_mask(H, W, r)));
}

TEST_CASE("fov_mask rejects identical captures") {
  TensorF a({3, 16, 16});
  Rng rng(405);
  for (auto& v : a.data) v = rng.uniformf(0.0f, 1.0f);
  CHECK_THROWS(calib::fov_mask(a, a));
}

TEST_CASE("mask cleanup is idempotent") {
  Rng rng(406);
  for (int trial = 0; trial < 4; ++trial) {
    img::Mask m({1, 32, 32});
    for (auto& v : m.data) v = rng.uniformf(0.0f, 1.0f) < 0.55f ? 1 : 0;
    bool any = false;
    for (auto v : m.data) any |= v != 0;
    if (!any) continue;
    img::Mask once = calib::clean_mask(m);
    img::Mask twice = calib::clean_mask(once);
    CHECK(mask_equal(once, twice));
  }
}

TEST_CASE("full mask yields the full frame and an identity fit") {
  const int H = 40, W = 64;
  img::Mask m({1, H, W});
  m.fill(1);
  auto [r, A] = calib::optimal_display_area(m, (float)W / H);
  CHECK(r == calib::Rect{0, 0, W, H});
  CHECK(A[0] == 1.0f);
  CHECK(A[4] == 1.0f);
  CHECK(A[1] == 0.0f);
  CHECK(A[3] == 0.0f);
  CHECK(A[2] == 0.0f);
  CHECK(A[5] == 0.0f);
}

TEST_CASE("inscribed rectangle matches brute force on an L-shaped mask") {
  const int H = 64, W = 64;
  img::Mask m({1, H, W});
  m.fill(1);
  for (int y = 0; y < 32; ++y)
    for (int x = 32; x < 64; ++x) m.at(0, y, x) = 0;  // cut a corner quadrant
  std::vector<uint8_t> raw(m.data.begin(), m.data.end());
  for (float aspect : {1.0f, 1.5f, 0.7f}) {
    auto [r, A] = calib::optimal_display_area(m, aspect);
    auto b = oracle::inscribed_brute(raw, H, W, aspect);
    CHECK(r.x == b.x);
    CHECK(r.y == b.y);
    CHECK(r.w == b.w);
    CHECK(r.h == b.h);
    // feasible: every covered pixel is on
    for (int y = r.y; y < r.y + r.h; ++y)
      for (int x = r.x; x < r.x + r.w; ++x) REQUIRE(m.at(0, y, x) == 1);
    // maximal: two more pixels of height fit nowhere
    int hh = r.h + 2, ww = (int)std::lround((double)hh * aspect);
    bool grows = false;
    if (hh <= H && ww <= W)
      for (int y = 0; y + hh <= H && !grows; ++y)
        for (int x = 0; x + ww <= W && !grows; ++x) {
          bool ok = true;
          for (int yy = y; yy < y + hh && ok; ++yy)
            for (int xx = x; xx < x + ww; ++xx)
              if (!m.at(0, yy, xx)) {
                ok = false;
                break;
              }
          grows = ok;
        }
    CHECK(!grows);
    // aspect kept to within rounding, uniform scale, no shear
    CHECK(std::abs(r.w - r.h * aspect) <= 0.5 + 1e-6);
    CHECK(A[0] == A[4]);
    CHECK(A[1] == 0.0f);
    CHECK(A[3] == 0.0f);
    CHECK(A[2] == (float)r.x);
    CHECK(A[5] == (float)r.y);
  }
}

TEST_CASE("square inscribed in a disc has side near r*sqrt(2)") {
  const int H = 64, W = 64, cx = 32, cy = 32, rad = 20;
  img::Mask m({1, H, W});
  m.zero();
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= rad * rad)
        m.at(0, y, x) = 1;
  auto [r, A] = calib::optimal_display_area(m, 1.0f);
  CHECK(r.w == r.h);
  CHECK(std::abs(r.w - rad * std::sqrt(2.0)) <= 1.0);
}

TEST_CASE("optimal rect stays inside the bounding rect") {
  const int H = 48, W = 48;
  img::Mask m({1, H, W});
  m.zero();
  for (int y = 6; y < 40; ++y)
    for (int x = 9; x < 44; ++x)
      if (!(y < 20 && x > 30)) m.at(0, y, x) = 1;
  calib::Rect bb = calib::bounding_rect(m);
  auto [opt, A] = calib::optimal_display_area(m, 1.2f);
  CHECK(opt.x >= bb.x);
  CHECK(opt.y >= bb.y);
  CHECK(opt.x + opt.w <= bb.x + bb.w);
  CHECK(opt.y + opt.h <= bb.y + bb.h);
}

TEST_CASE("empty mask is rejected") {
  img::Mask m({1, 16, 16});
  m.zero();
  CHECK_THROWS(calib::optimal_display_area(m, 1.0f));
  CHECK_THROWS(calib::bounding_rect(m));
}

TEST_CASE("display geometry survives a save/load round trip") {
  calib::DisplayGeometry g;
  g.bounding_rect = {3, 5, 40, 30};
  g.optimal_rect = {6, 8, 24, 16};
  g.fit_affine = {0.375f, 0.0f, 6.0f, 0.0f, 0.375f, 8.0f};
  const char* path = "geom_test.json";
  calib::save_geometry(path, g);
  auto back = calib::load_geometry(path);
  std::remove(path);
  CHECK(back.bounding_rect == g.bounding_rect);
  CHECK(back.optimal_rect == g.optimal_rect);
  for (int i = 0; i < 6; ++i) CHECK(back.fit_affine[i] == g.fit_affine[i]);
}
