#pragma once

// synthetic projector-camera rig. One SimSetup fixes the geometry (homography
// plus a smooth displacement field) and the photometric chain
//   capture = clamp( V * ( M * warp(x)^gamma ) * albedo + ambient + noise )
// so every capture has an analytic ground truth to evaluate against.

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "procomp/calib/calib.hpp"
#include "procomp/core/tensor.hpp"
#include "procomp/imaging/image.hpp"

namespace procomp::sim {

struct SimParams {
  float quad_half = 0.80f;     // projected quad corner magnitude (camera frame)
  float corner_jitter = 0.04f; // uniform jitter applied to each corner coord
  float disp_px = 8.0f;        // displacement cap in pixels at this resolution
  float sigma = 0.005f;        // capture noise std
};

struct SimSetup {
  uint64_t seed = 0;
  bool identity = false;
  int cam_h = 0, cam_w = 0, proj_h = 0, proj_w = 0;
  SimParams prm;

  // geometry: row-major homographies between normalized coords
  std::array<double, 9> Hfwd{};  // camera -> projector
  std::array<double, 9> Hinv{};
  // two-octave displacement lattices (du, dv per octave), normalized units
  int lat1 = 5, lat2 = 9;
  std::vector<double> du1, dv1, du2, dv2;
  double amp1 = 0, amp2 = 0;

  // photometrics, camera frame
  TensorF albedo;            // [3,cam_h,cam_w] in [0.35,1]
  TensorF ambient;           // [3,cam_h,cam_w] <= 0.15 (already albedo-shaded)
  TensorF vignette;          // [1,cam_h,cam_w] in [0.7,1]
  std::array<double, 9> M{}; // row-stochastic color mixing
  std::array<double, 3> gamma{1, 1, 1};

  TensorF fwd_grid;  // [2,cam_h,cam_w] sampling coords into the projector image

  // continuous forward map: normalized camera coords -> projector coords
  void warp_coords(double u, double v, double* pu, double* pv) const;
};

SimSetup make_identity_setup(int h, int w);
SimSetup make_random_setup(uint64_t seed, int cam_h, int cam_w, int proj_h,
                           int proj_w, const SimParams& prm = {});

// photometric + geometric chain without noise or clamping (monotone in x)
TensorF capture_linear(const SimSetup& s, const TensorF& x);
// the full camera capture; deterministic in (setup, x)
TensorF capture(const SimSetup& s, const TensorF& x);

// camera pixels the projector can reach (forward coords inside [-1,1]^2)
img::Mask fov_ground_truth(const SimSetup& s);

// camera->projector inverse sampling grid [2,h,w]: entry (y,x) holds the
// normalized camera coords whose forward warp lands on projector pixel (y,x).
// fixed-point inversion, tolerance 1e-4 grid units, at most 50 iterations.
TensorF ground_truth_grid(const SimSetup& s, int h, int w);

struct Dataset {
  std::vector<TensorF> train_x, train_cam;  // projector inputs and captures
  std::vector<TensorF> val_x, val_cam;
  TensorF surface;  // capture of the plain gray probe
  TensorF dark;     // capture of black
  calib::DisplayGeometry geom;
};

// sources(i) supplies projector-frame source image #i; train takes indices
// [0,n_train), validation the next n_val — disjoint by construction.
Dataset make_dataset(const SimSetup& s,
                     const std::function<TensorF(int)>& sources, int n_train,
                     int n_val);

void save_dataset(const std::string& dir, const Dataset& ds,
                  const SimSetup& setup);
// reconstructs the setup from its recorded seed/params, then reads the images
std::pair<Dataset, SimSetup> load_dataset(const std::string& dir);

void save_setup_meta(const std::string& path, const SimSetup& s);
SimSetup load_setup_meta(const std::string& path);

}  // namespace procomp::sim
