#include "procomp/calib/calib.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace procomp::calib {

float otsu_threshold(const TensorF& gray) {
  if (gray.dim(0) != 1) throw std::runtime_error("otsu: expected one channel");
  const size_t n = gray.numel();
  if (n == 0) throw std::runtime_error("otsu: empty image");
  double hist[256] = {};
  float mn = std::numeric_limits<float>::max(), mx = -mn;
  for (size_t i = 0; i < n; ++i) {
    float v = gray[i];
    mn = std::min(mn, v);
    mx = std::max(mx, v);
    int b = (int)(v * 256.0f);
    b = std::clamp(b, 0, 255);
    hist[b] += 1.0;
  }
  if (mn == mx) throw std::runtime_error("otsu: constant image");

  double total = (double)n, sum_all = 0;
  for (int b = 0; b < 256; ++b) sum_all += hist[b] * b;
  // the criterion is flat across runs of empty bins, so the maximizer is a
  // plateau; take its average (the classic resolution), not an endpoint.
  double w0 = 0, sum0 = 0, best = -1.0;
  long tie_sum = 0, tie_cnt = 0;
  for (int t = 0; t < 255; ++t) {
    w0 += hist[t];
    sum0 += hist[t] * t;
    if (w0 == 0) continue;
    double w1 = total - w0;
    if (w1 == 0) break;
    double mu0 = sum0 / w0, mu1 = (sum_all - sum0) / w1;
    double var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (var > best) {
      best = var;
      tie_sum = t;
      tie_cnt = 1;
    } else if (var == best) {
      tie_sum += t;
      ++tie_cnt;
    }
  }
  if (tie_cnt == 0)
    throw std::runtime_error("otsu: values occupy a single histogram bin");
  int best_t = (int)std::llround((double)tie_sum / tie_cnt);
  return (best_t + 1) / 256.0f;
}

namespace {

img::Mask erode3(const img::Mask& m) {
  int H = m.dim(1), W = m.dim(2);
  img::Mask out({1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      uint8_t keep = 1;
      for (int dy = -1; dy <= 1 && keep; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          int yy = y + dy, xx = x + dx;
          // outside the frame counts as background
          if (yy < 0 || yy >= H || xx < 0 || xx >= W || !m.at(0, yy, xx)) {
            keep = 0;
            break;
          }
        }
      out.at(0, y, x) = keep;
    }
  return out;
}

img::Mask dilate3(const img::Mask& m) {
  int H = m.dim(1), W = m.dim(2);
  img::Mask out({1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      uint8_t hit = 0;
      for (int dy = -1; dy <= 1 && !hit; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < H && xx >= 0 && xx < W && m.at(0, yy, xx)) {
            hit = 1;
            break;
          }
        }
      out.at(0, y, x) = hit;
    }
  return out;
}

// 4-connected flood fill from (sy,sx) over pixels with value `from` in work,
// relabeling them to `to`; returns region size.
size_t flood4(std::vector<int>& work, int H, int W, int sy, int sx, int from,
              int to) {
  std::vector<std::pair<int, int>> stack{{sy, sx}};
  work[(size_t)sy * W + sx] = to;
  size_t count = 0;
  while (!stack.empty()) {
    auto [y, x] = stack.back();
    stack.pop_back();
    ++count;
    const int ny[4] = {y - 1, y + 1, y, y};
    const int nx[4] = {x, x, x - 1, x + 1};
    for (int k = 0; k < 4; ++k) {
      int yy = ny[k], xx = nx[k];
      if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
      int& cell = work[(size_t)yy * W + xx];
      if (cell != from) continue;
      cell = to;
      stack.push_back({yy, xx});
    }
  }
  return count;
}

img::Mask largest_component4(const img::Mask& m) {
  int H = m.dim(1), W = m.dim(2);
  std::vector<int> work(m.numel());
  for (size_t i = 0; i < m.numel(); ++i) work[i] = m[i] ? 1 : 0;
  int label = 2, best_label = 0;
  size_t best_size = 0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (work[(size_t)y * W + x] == 1) {
        size_t sz = flood4(work, H, W, y, x, 1, label);
        if (sz > best_size) {  // ties keep the first region in scan order
          best_size = sz;
          best_label = label;
        }
        ++label;
      }
  img::Mask out({1, H, W});
  for (size_t i = 0; i < out.numel(); ++i)
    out[i] = (best_label && work[i] == best_label) ? 1 : 0;
  return out;
}

img::Mask fill_holes4(const img::Mask& m) {
  int H = m.dim(1), W = m.dim(2);
  std::vector<int> work(m.numel());
  for (size_t i = 0; i < m.numel(); ++i) work[i] = m[i] ? 1 : 0;
  // background reachable from the border keeps label 0 -> mark it 2
  for (int y = 0; y < H; ++y) {
    if (work[(size_t)y * W] == 0) flood4(work, H, W, y, 0, 0, 2);
    if (work[(size_t)y * W + W - 1] == 0) flood4(work, H, W, y, W - 1, 0, 2);
  }
  for (int x = 0; x < W; ++x) {
    if (work[x] == 0) flood4(work, H, W, 0, x, 0, 2);
    if (work[(size_t)(H - 1) * W + x] == 0) flood4(work, H, W, H - 1, x, 0, 2);
  }
  img::Mask out({1, H, W});
  for (size_t i = 0; i < out.numel(); ++i) out[i] = (work[i] != 2) ? 1 : 0;
  return out;
}

}  // namespace

img::Mask clean_mask(const img::Mask& m) {
  img::Mask r = dilate3(erode3(m));   // open: drop specks
  r = erode3(dilate3(r));             // close: seal pinholes
  r = largest_component4(r);
  return fill_holes4(r);
}

img::Mask fov_mask(const TensorF& surface_capture,
                   const TensorF& dark_capture) {
  if (surface_capture.shape != dark_capture.shape)
    throw std::runtime_error("fov_mask: capture shapes differ");
  if (surface_capture.dim(0) != 3)
    throw std::runtime_error("fov_mask: expected 3-channel captures");
  int H = surface_capture.dim(1), W = surface_capture.dim(2);
  TensorF diff({1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      float m = 0;
      for (int c = 0; c < 3; ++c)
        m = std::max(m, surface_capture.at(c, y, x) - dark_capture.at(c, y, x));
      diff.at(0, y, x) = std::min(m, 1.0f);
    }
  float thr;
  try {
    thr = otsu_threshold(diff);
  } catch (const std::runtime_error&) {
    // single-bin histogram: uniformly lit frame (threshold at half the level)
    // or genuinely no light
    float mx = 0;
    for (size_t i = 0; i < diff.numel(); ++i) mx = std::max(mx, diff[i]);
    if (mx < 0.05f)
      throw std::runtime_error("fov_mask: no illumination difference");
    thr = mx / 2;
  }
  img::Mask m({1, H, W});
  for (size_t i = 0; i < m.numel(); ++i) m[i] = diff[i] >= thr ? 1 : 0;
  m = clean_mask(m);
  bool any = false;
  for (size_t i = 0; i < m.numel() && !any; ++i) any = m[i] != 0;
  if (!any) throw std::runtime_error("fov_mask: empty mask");
  return m;
}

Rect bounding_rect(const img::Mask& m) {
  int H = m.dim(1), W = m.dim(2);
  int x0 = W, y0 = H, x1 = -1, y1 = -1;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (m.at(0, y, x)) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) throw std::runtime_error("bounding_rect: empty mask");
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

std::pair<Rect, Affine2x3> optimal_display_area(const img::Mask& mask,
                                                float aspect) {
  if (!(aspect > 0)) throw std::runtime_error("optimal_display_area: bad aspect");
  int H = mask.dim(1), W = mask.dim(2);
  bool any = false;
  for (size_t i = 0; i < mask.numel() && !any; ++i) any = mask[i] != 0;
  if (!any) throw std::runtime_error("optimal_display_area: empty mask");

  // summed-area table of the mask complement: a rect is feasible iff it
  // contains zero background pixels.
  std::vector<int> sat((size_t)(H + 1) * (W + 1), 0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      sat[(size_t)(y + 1) * (W + 1) + x + 1] =
          (mask.at(0, y, x) ? 0 : 1) + sat[(size_t)y * (W + 1) + x + 1] +
          sat[(size_t)(y + 1) * (W + 1) + x] - sat[(size_t)y * (W + 1) + x];
  auto zeros_in = [&](int x, int y, int w, int h) {
    return sat[(size_t)(y + h) * (W + 1) + x + w] -
           sat[(size_t)y * (W + 1) + x + w] -
           sat[(size_t)(y + h) * (W + 1) + x] + sat[(size_t)y * (W + 1) + x];
  };
  // first feasible placement in (y,x) scan order, or none
  auto feasible = [&](int h, Rect* out) {
    int w = (int)std::lround((double)h * aspect);
    if (h < 1 || h > H || w < 1 || w > W) return false;
    for (int y = 0; y + h <= H; ++y)
      for (int x = 0; x + w <= W; ++x)
        if (zeros_in(x, y, w, h) == 0) {
          if (out) *out = {x, y, w, h};
          return true;
        }
    return false;
  };
  // feasibility is monotone in h (smaller similar rect fits in the larger)
  int lo = 0, hi = H;
  while (lo < hi) {
    int mid = (lo + hi + 1) / 2;
    if (feasible(mid, nullptr))
      lo = mid;
    else
      hi = mid - 1;
  }
  Rect r;
  if (lo == 0 || !feasible(lo, &r))
    throw std::runtime_error("optimal_display_area: no inscribed rectangle");
  float s = std::min((float)r.w / W, (float)r.h / H);
  Affine2x3 A = {s, 0.0f, (float)r.x, 0.0f, s, (float)r.y};
  return {r, A};
}

DisplayGeometry calibrate(const TensorF& surface_capture,
                          const TensorF& dark_capture, float aspect) {
  DisplayGeometry g;
  g.fov = fov_mask(surface_capture, dark_capture);
  g.bounding_rect = bounding_rect(g.fov);
  auto [r, A] = optimal_display_area(g.fov, aspect);
  g.optimal_rect = r;
  g.fit_affine = A;
  return g;
}

static nlohmann::json rect_json(const Rect& r) {
  return {{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}};
}

static Rect rect_from(const nlohmann::json& j) {
  return {j.at("x").get<int>(), j.at("y").get<int>(), j.at("w").get<int>(),
          j.at("h").get<int>()};
}

void save_geometry(const std::string& path, const DisplayGeometry& g) {
  nlohmann::json j;
  j["bounding_rect"] = rect_json(g.bounding_rect);
  j["optimal_rect"] = rect_json(g.optimal_rect);
  j["fit_affine"] = g.fit_affine;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_geometry: cannot open " + path);
  f << j.dump(2) << "\n";
}

DisplayGeometry load_geometry(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_geometry: cannot open " + path);
  nlohmann::json j;
  f >> j;
  DisplayGeometry g;
  g.bounding_rect = rect_from(j.at("bounding_rect"));
  g.optimal_rect = rect_from(j.at("optimal_rect"));
  auto a = j.at("fit_affine");
  for (int i = 0; i < 6; ++i) g.fit_affine[i] = a.at(i).get<float>();
  return g;
}

TensorF place_image(const TensorF& z, const Affine2x3& A, int out_h,
                    int out_w) {
  if (std::abs(A[0]) < 1e-12f || std::abs(A[4]) < 1e-12f)
    throw std::runtime_error("place_image: degenerate affine");
  // invert (px,py) -> (A0*px + A2, A4*py + A5) and express it over normalized
  // coords so one affine grid + one bilinear pass does the whole placement
  float p[6];
  p[0] = 1.0f / A[0];
  p[1] = 0.0f;
  p[2] = out_w > 1 ? (1.0f - 2.0f * A[2] / (out_w - 1)) / A[0] - 1.0f
                   : -A[2] / A[0];
  p[3] = 0.0f;
  p[4] = 1.0f / A[4];
  p[5] = out_h > 1 ? (1.0f - 2.0f * A[5] / (out_h - 1)) / A[4] - 1.0f
                   : -A[5] / A[4];
  TensorF grid({2, out_h, out_w});
  nn::affine_grid_fwd(p, out_h, out_w, grid.ptr());
  TensorF out({z.dim(0), out_h, out_w});
  k::bilinear_fwd(z.ptr(), z.dim(0), z.dim(1), z.dim(2), grid.ptr(), out_h,
                  out_w, out.ptr());
  return out;
}

}  // namespace procomp::calib
