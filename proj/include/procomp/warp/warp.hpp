#pragma once
// Geometric correction network. A cascade predicts one sampling grid:
//   affine grid -> thin-plate-spline grid -> grid-space composition ->
//   convolutional displacement refinement (residual) -> final grid.
// The input image is sampled exactly once, by the final grid; after training
// the whole cascade collapses into that grid ("simplified" mode) and warping
// becomes a single bilinear_sample call.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "procomp/core/rng.hpp"
#include "procomp/core/tensor.hpp"
#include "procomp/kernels/kernels.hpp"
#include "procomp/nn/layers.hpp"

namespace procomp::warp {

// Encoder-decoder displacement net on 2-channel grids: three stride-2 convs
// down (32/64/128), transposed convs up with skip connections, final 3x3 conv
// to 2 channels, residual add. All-zero weights make it the exact identity.
template <typename T>
struct RefineNet {
  nn::Conv2d<T> c1, c2, c3, cf;
  nn::ConvTranspose2d<T> t1, t2, t3;
  // forward caches: pre-activations (for the leaky-relu backward) + activations
  Tensor<T> a1p, a1, a2p, a2, e3p, e3, u1p, u1, u2p, u2, u3p, u3, d;
  Tensor<T> tmp;

  RefineNet()
      : c1("refine.c1", 2, 32, 2),
        c2("refine.c2", 32, 64, 2),
        c3("refine.c3", 64, 128, 2),
        cf("refine.cf", 32, 2, 1),
        t1("refine.t1", 128, 64),
        t2("refine.t2", 64, 32),
        t3("refine.t3", 32, 32) {}

  // parameters start at zero (identity); training uses a tiny uniform init
  void init_uniform(Rng& rng, T s) {
    c1.init_uniform(rng, s);
    c2.init_uniform(rng, s);
    c3.init_uniform(rng, s);
    t1.init_uniform(rng, s);
    t2.init_uniform(rng, s);
    t3.init_uniform(rng, s);
    cf.init_uniform(rng, s);
  }

  std::vector<Param<T>*> params() {
    return {&c1.w, &c1.b, &c2.w, &c2.b, &c3.w, &c3.b, &t1.w, &t1.b,
            &t2.w, &t2.b, &t3.w, &t3.b, &cf.w, &cf.b};
  }

  void forward(const Tensor<T>& g, Tensor<T>& out) {
    int H = g.dim(1), W = g.dim(2);
    if (H % 8 || W % 8)
      throw std::runtime_error("refine_grid: spatial size must be divisible by 8");
    c1.forward(g, a1p);
    nn::lrelu(a1p, a1);
    c2.forward(a1, a2p);
    nn::lrelu(a2p, a2);
    c3.forward(a2, e3p);
    nn::lrelu(e3p, e3);
    t1.forward(e3, u1p);
    nn::lrelu(u1p, u1);
    k::add(u1.ptr(), a2.ptr(), u1.ptr(), u1.numel());  // skip
    t2.forward(u1, u2p);
    nn::lrelu(u2p, u2);
    k::add(u2.ptr(), a1.ptr(), u2.ptr(), u2.numel());  // skip
    t3.forward(u2, u3p);
    nn::lrelu(u3p, u3);
    cf.forward(u3, d);
    out.resize(g.shape);
    k::add(g.ptr(), d.ptr(), out.ptr(), g.numel());  // residual
  }

  // accumulates parameter grads; dg is overwritten with dL/dg
  void backward(const Tensor<T>& g, const Tensor<T>& dout, Tensor<T>& dg) {
    (void)g;
    Tensor<T> du3, du2, du1, de3, da2, da1, pre;
    cf.backward(dout, &du3);
    nn::lrelu_grad(u3p, du3, pre);
    t3.backward(u2, pre, &du2);
    // u2 = lrelu(u2p) + a1: skip grad flows straight into a1
    da1 = du2;
    nn::lrelu_grad(u2p, du2, pre);
    t2.backward(u1, pre, &du1);
    da2 = du1;
    nn::lrelu_grad(u1p, du1, pre);
    t1.backward(e3, pre, &de3);
    nn::lrelu_grad(e3p, de3, pre);
    c3.backward(pre, &tmp);
    k::add(da2.ptr(), tmp.ptr(), da2.ptr(), da2.numel());
    nn::lrelu_grad(a2p, da2, pre);
    c2.backward(pre, &tmp);
    k::add(da1.ptr(), tmp.ptr(), da1.ptr(), da1.numel());
    nn::lrelu_grad(a1p, da1, pre);
    c1.backward(pre, &dg);
    k::add(dg.ptr(), dout.ptr(), dg.ptr(), dg.numel());  // residual path
  }
};

// Full geometric net: learnable affine + thin-plate-spline + refinement.
template <typename T>
struct WarpNet {
  int H = 0, W = 0;  // output (projector) resolution
  Param<T> aff;      // 2x3 row-major
  nn::TpsGrid<T> tps;
  RefineNet<T> refine;
  Tensor<T> ga, gt, gc, gr;  // cascade caches
  bool warned_singular = false;

  WarpNet(int h, int w) : H(h), W(w), aff("warp.affine", {6}), tps("warp.tps") {
    init_identity();
  }

  void init_identity() {
    aff.value.zero();
    aff.value[0] = T(1);
    aff.value[4] = T(1);
    tps.init_identity();
    for (auto* p : refine.params()) p->value.zero();
  }

  // training init: affine from an estimated projector rectangle, everything
  // else near identity with tiny noise to break symmetry
  void init_train(const T a6[6], Rng& rng, T noise) {
    for (int i = 0; i < 6; ++i) aff.value[i] = a6[i];
    tps.init_identity(&rng, noise);
    refine.init_uniform(rng, noise);
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> ps = {&aff, &tps.p};
    for (auto* p : refine.params()) ps.push_back(p);
    return ps;
  }

  const Tensor<T>& forward_grid() {
    double det = (double)aff.value[0] * aff.value[4] -
                 (double)aff.value[1] * aff.value[3];
    if (std::abs(det) < 1e-6 && !warned_singular) {
      std::fprintf(stderr,
                   "warning: affine part near-singular (det %.3e)\n", det);
      warned_singular = true;
    }
    ga.resize({2, H, W});
    nn::affine_grid_fwd(aff.value.ptr(), H, W, ga.ptr());
    tps.forward(H, W, gt);
    gc.resize({2, H, W});
    k::compose_fwd(ga.ptr(), H, W, gt.ptr(), H, W, gc.ptr());
    refine.forward(gc, gr);
    return gr;
  }

  // consumes dL/d(final grid); uses caches from the last forward_grid
  void backward_grid(const Tensor<T>& dgr) {
    Tensor<T> dgc, dga({2, H, W}), dgt({2, H, W});
    refine.backward(gc, dgr, dgc);
    dga.zero();
    dgt.zero();
    k::compose_bwd(ga.ptr(), H, W, gt.ptr(), H, W, dgc.ptr(), dga.ptr(),
                   dgt.ptr());
    tps.backward(dgt);
    nn::affine_grid_bwd(dga.ptr(), H, W, aff.grad.ptr());
  }

  // build the grid and sample the image once
  void warp(const Tensor<T>& img, Tensor<T>& out) {
    forward_grid();
    out.resize({img.dim(0), H, W});
    k::bilinear_fwd(img.ptr(), img.dim(0), img.dim(1), img.dim(2), gr.ptr(), H,
                    W, out.ptr());
  }

  // collapse the cascade into one immutable grid
  Tensor<T> simplify() {
    forward_grid();
    return gr;
  }
};

// single-sample warping with a precomputed grid
template <typename T>
void warp_with_grid(const Tensor<T>& grid, const Tensor<T>& img,
                    Tensor<T>& out) {
  int h = grid.dim(1), w = grid.dim(2);
  out.resize({img.dim(0), h, w});
  k::bilinear_fwd(img.ptr(), img.dim(0), img.dim(1), img.dim(2), grid.ptr(), h,
                  w, out.ptr());
}

// ---- portable flat grid file: u32 h, u32 w, then h*w (u,v) float pairs ----

inline void save_grid_flat(const std::string& path, const TensorF& grid) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  uint32_t h = (uint32_t)grid.dim(1), w = (uint32_t)grid.dim(2);
  f.write((const char*)&h, 4);
  f.write((const char*)&w, 4);
  size_t hw = (size_t)h * w;
  std::vector<float> inter(hw * 2);
  for (size_t i = 0; i < hw; ++i) {
    inter[2 * i] = grid[i];            // u
    inter[2 * i + 1] = grid[hw + i];   // v
  }
  f.write((const char*)inter.data(), (std::streamsize)(inter.size() * 4));
  if (!f) throw std::runtime_error("short write: " + path);
}

inline TensorF load_grid_flat(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  uint32_t h = 0, w = 0;
  f.read((char*)&h, 4);
  f.read((char*)&w, 4);
  if (!f || h == 0 || w == 0 || h > 1 << 16 || w > 1 << 16)
    throw std::runtime_error("bad grid header: " + path);
  size_t hw = (size_t)h * w;
  std::vector<float> inter(hw * 2);
  f.read((char*)inter.data(), (std::streamsize)(inter.size() * 4));
  if (!f) throw std::runtime_error("truncated grid file: " + path);
  TensorF grid({2, (int)h, (int)w});
  for (size_t i = 0; i < hw; ++i) {
    grid[i] = inter[2 * i];
    grid[hw + i] = inter[2 * i + 1];
  }
  return grid;
}

}  // namespace procomp::warp
