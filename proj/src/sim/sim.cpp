#include "procomp/sim/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <Eigen/Dense>
#include <json.hpp>

#include "procomp/core/rng.hpp"
#include "procomp/kernels/kernels.hpp"
#include "procomp/sim/procgen.hpp"

namespace procomp::sim {

namespace {

// homography from 4 point pairs (normalized coords), h9 pinned to 1
std::array<double, 9> solve_homography(const double src[4][2],
                                       const double dst[4][2]) {
  Eigen::Matrix<double, 8, 8> A;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    double u = src[i][0], v = src[i][1];
    double pu = dst[i][0], pv = dst[i][1];
    A.row(2 * i) << u, v, 1, 0, 0, 0, -pu * u, -pu * v;
    A.row(2 * i + 1) << 0, 0, 0, u, v, 1, -pv * u, -pv * v;
    b(2 * i) = pu;
    b(2 * i + 1) = pv;
  }
  Eigen::Matrix<double, 8, 1> h = A.partialPivLu().solve(b);
  return {h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0};
}

std::array<double, 9> invert3(const std::array<double, 9>& m) {
  Eigen::Matrix3d E;
  E << m[0], m[1], m[2], m[3], m[4], m[5], m[6], m[7], m[8];
  Eigen::Matrix3d I = E.inverse();
  return {I(0, 0), I(0, 1), I(0, 2), I(1, 0), I(1, 1),
          I(1, 2), I(2, 0), I(2, 1), I(2, 2)};
}

inline void apply_h(const std::array<double, 9>& m, double u, double v,
                    double* ou, double* ov) {
  double d = m[6] * u + m[7] * v + m[8];
  *ou = (m[0] * u + m[1] * v + m[2]) / d;
  *ov = (m[3] * u + m[4] * v + m[5]) / d;
}

// displacement lattice sample over normalized [-1,1] coords, clamped outside
inline double disp_at(const std::vector<double>& lat, int n, double u,
                      double v) {
  double fx = std::clamp((u + 1) * 0.5, 0.0, 1.0);
  double fy = std::clamp((v + 1) * 0.5, 0.0, 1.0);
  return lattice_at(lat, n, n, fy, fx);
}

void build_fwd_grid(SimSetup& s) {
  s.fwd_grid.resize({2, s.cam_h, s.cam_w});
  for (int y = 0; y < s.cam_h; ++y)
    for (int x = 0; x < s.cam_w; ++x) {
      double u = s.cam_w > 1 ? 2.0 * x / (s.cam_w - 1) - 1.0 : 0.0;
      double v = s.cam_h > 1 ? 2.0 * y / (s.cam_h - 1) - 1.0 : 0.0;
      double pu, pv;
      s.warp_coords(u, v, &pu, &pv);
      s.fwd_grid.at(0, y, x) = (float)pu;
      s.fwd_grid.at(1, y, x) = (float)pv;
    }
}

}  // namespace

void SimSetup::warp_coords(double u, double v, double* pu, double* pv) const {
  apply_h(Hfwd, u, v, pu, pv);
  if (amp1 != 0 || amp2 != 0) {
    *pu += amp1 * disp_at(du1, lat1, u, v) + amp2 * disp_at(du2, lat2, u, v);
    *pv += amp1 * disp_at(dv1, lat1, u, v) + amp2 * disp_at(dv2, lat2, u, v);
  }
}

SimSetup make_identity_setup(int h, int w) {
  SimSetup s;
  s.identity = true;
  s.cam_h = s.proj_h = h;
  s.cam_w = s.proj_w = w;
  s.Hfwd = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  s.Hinv = s.Hfwd;
  s.albedo = img::constant_image(h, w, 1, 1, 1);
  s.ambient = img::constant_image(h, w, 0, 0, 0);
  s.vignette = TensorF({1, h, w});
  s.vignette.fill(1.0f);
  s.M = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  s.gamma = {1, 1, 1};
  s.prm.sigma = 0;
  s.prm.disp_px = 0;
  build_fwd_grid(s);
  return s;
}

SimSetup make_random_setup(uint64_t seed, int cam_h, int cam_w, int proj_h,
                           int proj_w, const SimParams& prm) {
  SimSetup s;
  s.seed = seed;
  s.cam_h = cam_h;
  s.cam_w = cam_w;
  s.proj_h = proj_h;
  s.proj_w = proj_w;
  s.prm = prm;
  Rng rng(seed ^ 0x5b1cd34705cull);

  // projected quad corners in the camera frame, jittered
  double q = prm.quad_half, j = prm.corner_jitter;
  double cam_c[4][2] = {{-q, -q}, {q, -q}, {q, q}, {-q, q}};
  const double proj_c[4][2] = {{-1, -1}, {1, -1}, {1, 1}, {-1, 1}};
  for (auto& c : cam_c)
    for (double& v : c) v += rng.uniform(-j, j);
  s.Hfwd = solve_homography(cam_c, proj_c);
  s.Hinv = invert3(s.Hfwd);

  // color mixing: off-diagonals then rows normalized to sum 1
  for (int r = 0; r < 3; ++r) {
    double off0 = rng.uniform(0.02, 0.12), off1 = rng.uniform(0.02, 0.12);
    int k = 0;
    for (int c = 0; c < 3; ++c)
      if (c != r) s.M[3 * r + c] = k++ ? off1 : off0;
    s.M[3 * r + r] = 1.0 - off0 - off1;
  }
  for (auto& g : s.gamma) g = rng.uniform(1.5, 2.4);

  // vignette: radial falloff, clamped into [0.7, 1]
  double vk = rng.uniform(0.1, 0.3);
  double vcx = rng.uniform(-0.1, 0.1), vcy = rng.uniform(-0.1, 0.1);
  s.vignette.resize({1, cam_h, cam_w});
  for (int y = 0; y < cam_h; ++y)
    for (int x = 0; x < cam_w; ++x) {
      double u = cam_w > 1 ? 2.0 * x / (cam_w - 1) - 1.0 : 0.0;
      double v = cam_h > 1 ? 2.0 * y / (cam_h - 1) - 1.0 : 0.0;
      double r2 = ((u - vcx) * (u - vcx) + (v - vcy) * (v - vcy)) / 2.0;
      s.vignette.at(0, y, x) = (float)std::clamp(1.0 - vk * r2, 0.7, 1.0);
    }

  // surface albedo: shared structure plus per-channel variation
  TensorF base = octave_noise(rng, cam_h, cam_w, 3, 3);
  s.albedo.resize({3, cam_h, cam_w});
  for (int c = 0; c < 3; ++c) {
    TensorF chan = octave_noise(rng, cam_h, cam_w, 2, 3);
    for (int y = 0; y < cam_h; ++y)
      for (int x = 0; x < cam_w; ++x) {
        float t = 0.75f * base.at(0, y, x) + 0.25f * chan.at(0, y, x);
        s.albedo.at(c, y, x) = 0.35f + 0.65f * std::clamp(t, 0.0f, 1.0f);
      }
  }

  // ambient: low-frequency light field shaded by the surface
  TensorF amb = octave_noise(rng, cam_h, cam_w, 2, 3);
  float amb_hi = rng.uniformf(0.06f, 0.15f);
  s.ambient.resize({3, cam_h, cam_w});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < cam_h; ++y)
      for (int x = 0; x < cam_w; ++x)
        s.ambient.at(c, y, x) =
            amb_hi * amb.at(0, y, x) * s.albedo.at(c, y, x);

  // smooth displacement field, two octaves, capped at disp_px pixels
  double tot = prm.disp_px * 2.0 / (std::min(cam_h, cam_w) - 1);
  s.amp1 = tot * 2.0 / 3.0;
  s.amp2 = tot / 3.0;
  auto fill_lat = [&](std::vector<double>& lat, int n) {
    lat.resize((size_t)n * n);
    for (auto& v : lat) v = rng.uniform(-1.0, 1.0);
  };
  fill_lat(s.du1, s.lat1);
  fill_lat(s.dv1, s.lat1);
  fill_lat(s.du2, s.lat2);
  fill_lat(s.dv2, s.lat2);
  if (prm.disp_px == 0) s.amp1 = s.amp2 = 0;

  build_fwd_grid(s);
  return s;
}

TensorF capture_linear(const SimSetup& s, const TensorF& x) {
  if (x.dim(0) != 3 || x.dim(1) != s.proj_h || x.dim(2) != s.proj_w)
    throw std::runtime_error("capture: input is not projector resolution");
  TensorF warped({3, s.cam_h, s.cam_w});
  k::bilinear_fwd(x.ptr(), 3, s.proj_h, s.proj_w, s.fwd_grid.ptr(), s.cam_h,
                  s.cam_w, warped.ptr());
  TensorF out({3, s.cam_h, s.cam_w});
  const size_t hw = (size_t)s.cam_h * s.cam_w;
  for (size_t i = 0; i < hw; ++i) {
    double g[3];
    for (int c = 0; c < 3; ++c)
      g[c] = std::pow((double)warped[c * hw + i], s.gamma[c]);
    for (int c = 0; c < 3; ++c) {
      double mixed = s.M[3 * c] * g[0] + s.M[3 * c + 1] * g[1] + s.M[3 * c + 2] * g[2];
      out[c * hw + i] =
          (float)(s.vignette[i] * mixed * s.albedo[c * hw + i] + s.ambient[c * hw + i]);
    }
  }
  return out;
}

TensorF capture(const SimSetup& s, const TensorF& x) {
  TensorF out = capture_linear(s, x);
  if (s.prm.sigma > 0) {
    uint64_t h = fnv1a(x.ptr(), x.numel() * sizeof(float));
    Rng noise(h ^ (s.seed * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull));
    for (auto& v : out.data) v += (float)(s.prm.sigma * noise.normal());
  }
  k::clamp01_fwd(out.ptr(), out.ptr(), out.numel());
  return out;
}

img::Mask fov_ground_truth(const SimSetup& s) {
  img::Mask m({1, s.cam_h, s.cam_w});
  for (int y = 0; y < s.cam_h; ++y)
    for (int x = 0; x < s.cam_w; ++x) {
      float u = s.fwd_grid.at(0, y, x), v = s.fwd_grid.at(1, y, x);
      m.at(0, y, x) = (u >= -1 && u <= 1 && v >= -1 && v <= 1) ? 1 : 0;
    }
  return m;
}

TensorF ground_truth_grid(const SimSetup& s, int h, int w) {
  TensorF grid({2, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double pu = w > 1 ? 2.0 * x / (w - 1) - 1.0 : 0.0;
      double pv = h > 1 ? 2.0 * y / (h - 1) - 1.0 : 0.0;
      double cu, cv;
      apply_h(s.Hinv, pu, pv, &cu, &cv);
      bool ok = false;
      for (int it = 0; it < 50; ++it) {
        double gu, gv;
        s.warp_coords(cu, cv, &gu, &gv);
        if (std::abs(gu - pu) <= 1e-4 && std::abs(gv - pv) <= 1e-4) {
          ok = true;
          break;
        }
        // peel the displacement off the target, reapply the exact inverse
        double du = gu - pu, dv = gv - pv;
        apply_h(s.Hfwd, cu, cv, &gu, &gv);
        apply_h(s.Hinv, gu - du, gv - dv, &cu, &cv);
      }
      if (!ok && std::max(std::abs(cu), std::abs(cv)) <= 1.05)
        throw std::runtime_error("ground_truth_grid: inversion failed inside the view");
      grid.at(0, y, x) = (float)cu;
      grid.at(1, y, x) = (float)cv;
    }
  return grid;
}

Dataset make_dataset(const SimSetup& s,
                     const std::function<TensorF(int)>& sources, int n_train,
                     int n_val) {
  Dataset ds;
  ds.surface = capture(s, img::constant_image(s.proj_h, s.proj_w, 0.5f, 0.5f, 0.5f));
  ds.dark = capture(s, img::constant_image(s.proj_h, s.proj_w, 0, 0, 0));
  ds.geom = calib::calibrate(ds.surface, ds.dark, (float)s.proj_w / s.proj_h);
  for (int i = 0; i < n_train + n_val; ++i) {
    TensorF x = sources(i);
    if (x.dim(0) != 3 || x.dim(1) != s.proj_h || x.dim(2) != s.proj_w)
      throw std::runtime_error("make_dataset: source has wrong resolution");
    TensorF cam = capture(s, x);
    if (i < n_train) {
      ds.train_x.push_back(std::move(x));
      ds.train_cam.push_back(std::move(cam));
    } else {
      ds.val_x.push_back(std::move(x));
      ds.val_cam.push_back(std::move(cam));
    }
  }
  return ds;
}

void save_setup_meta(const std::string& path, const SimSetup& s) {
  nlohmann::json j;
  j["seed"] = s.seed;
  j["identity"] = s.identity;
  j["cam_h"] = s.cam_h;
  j["cam_w"] = s.cam_w;
  j["proj_h"] = s.proj_h;
  j["proj_w"] = s.proj_w;
  j["quad_half"] = s.prm.quad_half;
  j["corner_jitter"] = s.prm.corner_jitter;
  j["disp_px"] = s.prm.disp_px;
  j["sigma"] = s.prm.sigma;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_setup_meta: cannot open " + path);
  f << j.dump(2) << "\n";
}

SimSetup load_setup_meta(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_setup_meta: cannot open " + path);
  nlohmann::json j;
  f >> j;
  if (j.value("identity", false))
    return make_identity_setup(j.at("cam_h").get<int>(), j.at("cam_w").get<int>());
  SimParams prm;
  prm.quad_half = j.at("quad_half").get<float>();
  prm.corner_jitter = j.at("corner_jitter").get<float>();
  prm.disp_px = j.at("disp_px").get<float>();
  prm.sigma = j.at("sigma").get<float>();
  return make_random_setup(j.at("seed").get<uint64_t>(), j.at("cam_h").get<int>(),
                           j.at("cam_w").get<int>(), j.at("proj_h").get<int>(),
                           j.at("proj_w").get<int>(), prm);
}

namespace {
std::string idx_name(int i, const char* suffix) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d_%s.png", i, suffix);
  return buf;
}
}  // namespace

void save_dataset(const std::string& dir, const Dataset& ds,
                  const SimSetup& setup) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "train");
  fs::create_directories(fs::path(dir) / "val");
  save_setup_meta((fs::path(dir) / "setup.meta").string(), setup);
  {
    nlohmann::json j;
    j["n_train"] = ds.train_x.size();
    j["n_val"] = ds.val_x.size();
    std::ofstream f(fs::path(dir) / "split.meta");
    f << j.dump(2) << "\n";
  }
  img::write_png((fs::path(dir) / "surface.png").string(), ds.surface);
  img::write_png((fs::path(dir) / "dark.png").string(), ds.dark);
  calib::save_geometry((fs::path(dir) / "geometry.json").string(), ds.geom);
  img::write_png_mask((fs::path(dir) / "fov_mask.png").string(), ds.geom.fov);
  for (size_t i = 0; i < ds.train_x.size(); ++i) {
    img::write_png((fs::path(dir) / "train" / idx_name((int)i, "proj")).string(),
                   ds.train_x[i]);
    img::write_png((fs::path(dir) / "train" / idx_name((int)i, "cam")).string(),
                   ds.train_cam[i]);
  }
  for (size_t i = 0; i < ds.val_x.size(); ++i) {
    img::write_png((fs::path(dir) / "val" / idx_name((int)i, "proj")).string(),
                   ds.val_x[i]);
    img::write_png((fs::path(dir) / "val" / idx_name((int)i, "cam")).string(),
                   ds.val_cam[i]);
  }
}

std::pair<Dataset, SimSetup> load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  SimSetup setup = load_setup_meta((fs::path(dir) / "setup.meta").string());
  nlohmann::json j;
  {
    std::ifstream f(fs::path(dir) / "split.meta");
    if (!f) throw std::runtime_error("load_dataset: missing split.meta in " + dir);
    f >> j;
  }
  Dataset ds;
  ds.surface = img::read_png((fs::path(dir) / "surface.png").string());
  ds.dark = img::read_png((fs::path(dir) / "dark.png").string());
  ds.geom = calib::load_geometry((fs::path(dir) / "geometry.json").string());
  ds.geom.fov = img::read_png_mask((fs::path(dir) / "fov_mask.png").string());
  int n_train = j.at("n_train").get<int>(), n_val = j.at("n_val").get<int>();
  for (int i = 0; i < n_train; ++i) {
    ds.train_x.push_back(img::read_png((fs::path(dir) / "train" / idx_name(i, "proj")).string()));
    ds.train_cam.push_back(img::read_png((fs::path(dir) / "train" / idx_name(i, "cam")).string()));
  }
  for (int i = 0; i < n_val; ++i) {
    ds.val_x.push_back(img::read_png((fs::path(dir) / "val" / idx_name(i, "proj")).string()));
    ds.val_cam.push_back(img::read_png((fs::path(dir) / "val" / idx_name(i, "cam")).string()));
  }
  return {ds, setup};
}

}  // namespace procomp::sim
