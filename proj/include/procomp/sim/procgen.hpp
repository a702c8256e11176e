#pragma once

// procedural source imagery: enough variety (noise fields, gradients, shapes,
// glyph scatter) to train and validate compensation without shipping photos.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "procomp/core/rng.hpp"
#include "procomp/core/tensor.hpp"

namespace procomp::sim {

// bilinear sample of an n x m lattice stretched over the full image
inline double lattice_at(const std::vector<double>& lat, int ln, int lm,
                         double fy, double fx) {
  double gy = fy * (ln - 1), gx = fx * (lm - 1);
  int y0 = std::clamp((int)gy, 0, ln - 2), x0 = std::clamp((int)gx, 0, lm - 2);
  double wy = std::clamp(gy - y0, 0.0, 1.0), wx = std::clamp(gx - x0, 0.0, 1.0);
  double a = lat[(size_t)y0 * lm + x0], b = lat[(size_t)y0 * lm + x0 + 1];
  double c = lat[(size_t)(y0 + 1) * lm + x0],
         d = lat[(size_t)(y0 + 1) * lm + x0 + 1];
  return (a * (1 - wx) + b * wx) * (1 - wy) + (c * (1 - wx) + d * wx) * wy;
}

// multi-octave value noise in [0,1]; lattice doubles and amplitude halves
// per octave. Consumes rng draws in a fixed order.
inline TensorF octave_noise(Rng& rng, int h, int w, int octaves,
                            int base_lattice = 4) {
  std::vector<std::vector<double>> lats(octaves);
  std::vector<int> sizes(octaves);
  for (int o = 0; o < octaves; ++o) {
    int n = base_lattice << o;
    sizes[o] = n + 1;
    lats[o].resize((size_t)(n + 1) * (n + 1));
    for (auto& v : lats[o]) v = rng.uniform();
  }
  TensorF out({1, h, w});
  double amp_total = 0, amp = 1;
  for (int o = 0; o < octaves; ++o, amp *= 0.5) amp_total += amp;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double fy = h > 1 ? (double)y / (h - 1) : 0.0;
      double fx = w > 1 ? (double)x / (w - 1) : 0.0;
      double s = 0;
      amp = 1;
      for (int o = 0; o < octaves; ++o, amp *= 0.5)
        s += amp * lattice_at(lats[o], sizes[o], sizes[o], fy, fx);
      out.at(0, y, x) = (float)(s / amp_total);
    }
  return out;
}

namespace detail {

// 5x7 glyph bitmaps, column-major bits (bit i = row i)
struct Glyph {
  char ch;
  uint8_t col[5];
};
inline const Glyph* font() {
  static const Glyph f[] = {
      {'A', {0x7e, 0x09, 0x09, 0x09, 0x7e}}, {'B', {0x7f, 0x49, 0x49, 0x49, 0x36}},
      {'C', {0x3e, 0x41, 0x41, 0x41, 0x22}}, {'E', {0x7f, 0x49, 0x49, 0x49, 0x41}},
      {'G', {0x3e, 0x41, 0x49, 0x49, 0x7a}}, {'H', {0x7f, 0x08, 0x08, 0x08, 0x7f}},
      {'K', {0x7f, 0x08, 0x14, 0x22, 0x41}}, {'M', {0x7f, 0x02, 0x0c, 0x02, 0x7f}},
      {'N', {0x7f, 0x04, 0x08, 0x10, 0x7f}}, {'O', {0x3e, 0x41, 0x41, 0x41, 0x3e}},
      {'R', {0x7f, 0x09, 0x19, 0x29, 0x46}}, {'S', {0x46, 0x49, 0x49, 0x49, 0x31}},
      {'T', {0x01, 0x01, 0x7f, 0x01, 0x01}}, {'U', {0x3f, 0x40, 0x40, 0x40, 0x3f}},
      {'W', {0x3f, 0x40, 0x38, 0x40, 0x3f}}, {'X', {0x63, 0x14, 0x08, 0x14, 0x63}},
      {'Z', {0x61, 0x51, 0x49, 0x45, 0x43}}, {'2', {0x42, 0x61, 0x51, 0x49, 0x46}},
      {'5', {0x27, 0x45, 0x45, 0x45, 0x39}}, {'8', {0x36, 0x49, 0x49, 0x49, 0x36}},
  };
  return f;
}
constexpr int kFontCount = 20;

inline void put_px(TensorF& img, int y, int x, const float rgb[3], float alpha) {
  if (y < 0 || y >= img.dim(1) || x < 0 || x >= img.dim(2)) return;
  for (int c = 0; c < 3; ++c)
    img.at(c, y, x) = img.at(c, y, x) * (1 - alpha) + rgb[c] * alpha;
}

}  // namespace detail

// deterministic source image #index at the given size
inline TensorF procedural_image(uint64_t index, int h, int w) {
  uint64_t hs = fnv1a(&index, sizeof(index));
  Rng rng(hs);
  TensorF img({3, h, w});
  const int family = (int)(index % 4);

  auto rand_color = [&](float* c, float lo = 0.0f, float hi = 1.0f) {
    for (int i = 0; i < 3; ++i) c[i] = rng.uniformf(lo, hi);
  };

  if (family == 0) {  // colorized clouds
    TensorF base = octave_noise(rng, h, w, 4);
    float c0[3], c1[3];
    rand_color(c0);
    rand_color(c1);
    TensorF tint = octave_noise(rng, h, w, 2, 3);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float t = base.at(0, y, x), u = tint.at(0, y, x);
        for (int c = 0; c < 3; ++c) {
          float v = c0[c] * (1 - t) + c1[c] * t;
          img.at(c, y, x) = std::clamp(v * (0.7f + 0.3f * u), 0.0f, 1.0f);
        }
      }
  } else if (family == 1) {  // gradient + stripes
    float c0[3], c1[3], cs[3];
    rand_color(c0);
    rand_color(c1);
    rand_color(cs);
    double ang = rng.uniform(0, 6.2831853);
    double gx = std::cos(ang), gy = std::sin(ang);
    double freq = rng.uniform(2.0, 9.0), phase = rng.uniform(0, 6.2831853);
    double sa = rng.uniform(0, 6.2831853);
    double sx = std::cos(sa), sy = std::sin(sa);
    float stripe_amp = rng.uniformf(0.1f, 0.45f);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double fy = h > 1 ? (double)y / (h - 1) : 0, fx = w > 1 ? (double)x / (w - 1) : 0;
        double t = std::clamp(0.5 + (fx - 0.5) * gx + (fy - 0.5) * gy, 0.0, 1.0);
        double s = 0.5 + 0.5 * std::sin(freq * 6.2831853 * (fx * sx + fy * sy) + phase);
        for (int c = 0; c < 3; ++c) {
          double v = c0[c] * (1 - t) + c1[c] * t;
          v = v * (1 - stripe_amp) + cs[c] * s * stripe_amp;
          img.at(c, y, x) = (float)std::clamp(v, 0.0, 1.0);
        }
      }
  } else if (family == 2) {  // composited shapes
    float bg0[3], bg1[3];
    rand_color(bg0);
    rand_color(bg1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float t = h > 1 ? (float)y / (h - 1) : 0;
        for (int c = 0; c < 3; ++c)
          img.at(c, y, x) = bg0[c] * (1 - t) + bg1[c] * t;
      }
    int count = 8 + (int)rng.below(13);
    for (int s = 0; s < count; ++s) {
      float col[3];
      rand_color(col, 0.05f, 0.95f);
      float alpha = rng.uniformf(0.6f, 1.0f);
      int kind = (int)rng.below(3);
      int cx = (int)rng.below(w), cy = (int)rng.below(h);
      int rw = 3 + (int)rng.below(std::max(2, w / 3));
      int rh = 3 + (int)rng.below(std::max(2, h / 3));
      for (int y = cy - rh; y <= cy + rh; ++y)
        for (int x = cx - rw; x <= cx + rw; ++x) {
          bool in = false;
          double dx = (double)(x - cx) / rw, dy = (double)(y - cy) / rh;
          if (kind == 0) in = true;                          // rectangle
          else if (kind == 1) in = dx * dx + dy * dy <= 1.0; // ellipse
          else in = std::abs(dx) + std::abs(dy) <= 1.0;      // diamond
          if (in) detail::put_px(img, y, x, col, alpha);
        }
    }
  } else {  // glyph scatter
    TensorF base = octave_noise(rng, h, w, 2, 3);
    float bg[3];
    rand_color(bg, 0.0f, 0.35f);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c)
          img.at(c, y, x) = std::clamp(bg[c] + 0.25f * base.at(0, y, x), 0.0f, 1.0f);
    int count = 10 + (int)rng.below(21);
    for (int g = 0; g < count; ++g) {
      const auto& gl = detail::font()[rng.below(detail::kFontCount)];
      int scale = 1 + (int)rng.below(std::max(1, std::min(h, w) / 24));
      int ox = (int)rng.below(std::max(1, w - 5 * scale));
      int oy = (int)rng.below(std::max(1, h - 7 * scale));
      float col[3];
      rand_color(col, 0.5f, 1.0f);
      for (int cx = 0; cx < 5; ++cx)
        for (int ry = 0; ry < 7; ++ry)
          if (gl.col[cx] >> ry & 1)
            for (int sy = 0; sy < scale; ++sy)
              for (int sx = 0; sx < scale; ++sx)
                detail::put_px(img, oy + ry * scale + sy, ox + cx * scale + sx,
                               col, 1.0f);
    }
  }
  return img;
}

}  // namespace procomp::sim
