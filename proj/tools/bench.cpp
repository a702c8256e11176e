// Micro-benchmarks for the training loop and inference paths. Reports
// per-iteration wall time at a given resolution/batch so run budgets can be
// planned ahead of long trainings.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>

#include "procomp/sim/procgen.hpp"
#include "procomp/sim/sim.hpp"
#include "procomp/train/train.hpp"

using namespace procomp;
using Clock = std::chrono::steady_clock;

static double secs(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

int main(int argc, char** argv) {
  int n = argc > 1 ? std::atoi(argv[1]) : 256;
  int batch = argc > 2 ? std::atoi(argv[2]) : 24;
  int iters = argc > 3 ? std::atoi(argv[3]) : 3;

  std::printf("rig: cam %dx%d proj %dx%d, batch %d\n", n, n, n, n, batch);
  auto setup = sim::make_random_setup(1234, n, n, n, n);
  auto src = [&](int i) { return sim::procedural_image(9000 + i, n, n); };
  auto t0 = Clock::now();
  auto ds = sim::make_dataset(setup, src, batch + 2, 2);
  std::printf("dataset (%d images): %.2fs\n", batch + 4, secs(t0, Clock::now()));

  train::CompenModel m(n, n);
  m.set_scene(ds.surface, ds.geom);
  Rng rng(1);
  m.init_warp(rng);
  m.pnet.init(rng);

  train::TrainConfig cfg;
  cfg.iterations = iters;
  cfg.batch = batch;
  cfg.decay_at = iters > 1 ? iters - 1 : 1;
  cfg.val_every = iters + 1;  // keep validation out of the timing
  cfg.seed = 7;

  t0 = Clock::now();
  auto res = train::train(m, ds, cfg);
  double per_iter = (res.seconds - 0) / iters;
  std::printf("train: %d iters in %.2fs -> %.3fs/iter (incl. 1 val pass)\n",
              iters, res.seconds, per_iter);

  // inference: full vs simplified
  m.shared_forward();
  TensorF out;
  t0 = Clock::now();
  for (int i = 0; i < 5; ++i) out = m.compensate(ds.val_cam[0]);
  double full_t = secs(t0, Clock::now()) / 5;
  auto s = train::simplify(m);
  t0 = Clock::now();
  for (int i = 0; i < 5; ++i) out = s.compensate(ds.val_cam[0]);
  double simp_t = secs(t0, Clock::now()) / 5;
  std::printf("inference: full %.1fms, simplified %.1fms (%.2fx)\n",
              full_t * 1e3, simp_t * 1e3, full_t / simp_t);
  return 0;
}
