#pragma once
// End-to-end training of the compensation model (geometric net + photometric
// net trained jointly against l1+SSIM), plus the two task-specific
// initializations: the affine warp init from the calibrated FOV rectangle and
// the one-time photometric pretraining against max(0, x - s).
//
// A checkpoint written here carries the model, the scene (masked surface +
// geometry), and the full optimizer state, so training resumes bit-exactly
// and the same file feeds the simplify/compensate stages.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "procomp/calib/calib.hpp"
#include "procomp/core/rng.hpp"
#include "procomp/core/tensor.hpp"
#include "procomp/imaging/image.hpp"
#include "procomp/nn/adam.hpp"
#include "procomp/nn/checkpoint.hpp"
#include "procomp/photo/photo.hpp"
#include "procomp/sim/sim.hpp"
#include "procomp/warp/warp.hpp"

namespace procomp::train {

struct TrainConfig {
  int iterations = 1500;
  int batch = 48;
  float lr = 1e-3f;             // exactly this before decay_at
  float lr_after_decay = 2e-4f; // exactly this from decay_at on (factor 5)
  int decay_at = 1000;
  float weight_decay = 1e-4f;
  uint64_t seed = 1;
  int val_every = 100;
  bool refine_enabled = true;   // false = no-refine ablation (frozen identity)

  void check() const;    // throws unless all positive and decay_at < iterations
  // fingerprint over the trajectory-defining fields (batch, rates, decay,
  // seed, ablation) guarding resume; iterations/val_every may change between
  // legs of the same run
  uint64_t hash() const;
};

// full: 1500/48, fast: 1000/24, faster: 500/16, desk: 1500/16.
// decay lands at round(2/3 * iterations), i.e. iteration 1000 for a 1500-run.
TrainConfig preset_config(const std::string& name);

// Affine coefficients that make the output frame sample exactly the given
// camera-frame rectangle (align-corners normalized coords of frame_h x
// frame_w). Full-frame rect yields the identity.
std::array<float, 6> a6_from_rect(const calib::Rect& r, int frame_h,
                                  int frame_w);

// The trainable compensation model plus its scene (masked surface capture and
// display geometry). One bilinear sampling per image, shared grid per batch.
struct CompenModel {
  int cam_h = 0, cam_w = 0, proj_h = 0, proj_w = 0;
  warp::WarpNet<float> wnet;
  photo::PhotometricNet<float> pnet;
  TensorF surface;   // masked surface capture, camera frame
  img::Mask mask;    // FOV
  TensorF mask_f;    // [1,cam_h,cam_w]
  calib::DisplayGeometry geom;
  TensorF warped_surface;  // refreshed by shared_forward

  CompenModel(int ph, int pw) : proj_h(ph), proj_w(pw), wnet(ph, pw) {}

  void set_scene(const TensorF& surface_capture,
                 const calib::DisplayGeometry& g);
  // affine from the FOV bounding rectangle, TPS/refine near identity
  void init_warp(Rng& rng, float noise = 1e-4f);
  std::vector<Param<float>*> params(bool with_refine = true);

  // per-iteration shared pass: grid + warped surface + surface features.
  // returns the grid (also cached in wnet).
  const TensorF& shared_forward();
  void mask_into(const TensorF& cam, TensorF& out) const;
  // masked camera image -> warped (projector frame) -> compensation image
  void compensate_masked(const TensorF& masked_cam, TensorF& warped,
                         TensorF& out);
  // convenience one-shot (assumes shared_forward already ran)
  TensorF compensate(const TensorF& cam);
};

// One-time photometric init: regress max(0, x - s) over procedural textures
// and flat grays. Returns the per-iteration training losses; when cache_path
// exists it is loaded instead and the curve comes back empty. A non-empty
// cache_path is written after a fresh run.
std::vector<double> pretrain_photometric(photo::PhotometricNet<float>& net,
                                         int iters, uint64_t seed,
                                         const std::string& cache_path);
inline constexpr int kPretrainIters = 500;

struct CurveRow {
  int iter = 0;
  double loss = 0;  // validation loss (l1 + 1-ssim), mean over the val set
  double psnr = 0, rmse = 0, ssim = 0;
};

void save_curves_csv(const std::string& path,
                     const std::vector<CurveRow>& rows);

struct TrainResult {
  std::vector<CurveRow> curve;  // iteration 0, every val_every, final
  double seconds = 0;
  int start_iteration = 0;  // nonzero when resumed
};

// Full checkpoint: every model parameter, the scene, the geometry, and (when
// opt is given) Adam moments + step + sampler state for exact resume.
void save_checkpoint(const std::string& path, const CompenModel& m,
                     const TrainConfig* cfg, const nn::Adam<float>* opt,
                     int iteration, const std::string& sampler_state);

struct ResumeInfo {
  int iteration = 0;
  int64_t adam_t = 0;
  std::string sampler_state;
  uint64_t config_hash = 0;
  bool has_opt = false;
};

// Loads parameters (and optimizer state when opt is non-null and the file has
// it) into an already-constructed model of matching dimensions.
ResumeInfo load_checkpoint(const std::string& path, CompenModel& m,
                           nn::Adam<float>* opt);

// Constructs the model from the checkpoint's recorded dimensions.
CompenModel load_model(const std::string& path);

// Joint optimization. Writes curves.csv and checkpoint.pcpk under run_dir
// (skipped when run_dir is empty). resume picks up run_dir/checkpoint.pcpk.
// Throws on divergence (non-finite loss) with the iteration in the message.
TrainResult train(CompenModel& model, const sim::Dataset& data,
                  const TrainConfig& cfg, const std::string& run_dir = "",
                  bool resume = false);

// Deployment artifact: one sampling grid + trimmed photometric net.
struct SimplifiedModel {
  int cam_h = 0, cam_w = 0;
  TensorF grid;  // [2,proj_h,proj_w]
  photo::TrimmedPhotometricNet<float> net;
  img::Mask mask;
  TensorF mask_f;
  calib::DisplayGeometry geom;

  TensorF compensate(const TensorF& cam);
  void save(const std::string& path) const;
  static SimplifiedModel load(const std::string& path);
};

SimplifiedModel simplify(CompenModel& m);

}  // namespace procomp::train
