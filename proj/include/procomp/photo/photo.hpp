#pragma once
// Photometric compensation network. Two parallel convolutional branches with
// identical topology: the backbone reads the geometrically corrected input
// image, the surface branch reads the (fixed per scene) corrected surface
// image. Surface features are added elementwise into the backbone at three
// depths; those merge points are what makes the branch replaceable by
// constant bias maps after training ("trimming"). A global skip adds the
// input image before the final clamp to [0,1].
//
// Topology (spatial sizes for input h,w; h,w divisible by 4):
//   conv 3x3 s2  3->32    h/2           merge +s1
//   conv 3x3 s2 32->64    h/4           merge +s2
//   conv 3x3 s1 64->128   h/4           merge +s3
//   2x residual block: x + lrelu(conv 3x3 128->128)
//   tconv s2 128->64      h/2
//   tconv s2  64->32      h
//   conv 3x3 s1 32->3     h             + input, clamp01

#include <stdexcept>
#include <vector>

#include "procomp/core/rng.hpp"
#include "procomp/core/tensor.hpp"
#include "procomp/kernels/kernels.hpp"
#include "procomp/nn/layers.hpp"

namespace procomp::photo {

// Backbone with pluggable merge maps s1/s2/s3: during training they are the
// surface branch's live features, after trimming they are stored constants.
template <typename T>
struct PhotoBackbone {
  nn::Conv2d<T> c1, c2, c3, r1, r2, cf;
  nn::ConvTranspose2d<T> t1, t2;
  Tensor<T> s1, s2, s3;  // merge maps
  // forward caches
  Tensor<T> b1p, b1, b2p, b2, b3p, b3, p1, z1, p2, z2, d1p, d1, d2p, d2, yf,
      pre;
  Tensor<T> tmp;

  PhotoBackbone()
      : c1("photo.c1", 3, 32, 2),
        c2("photo.c2", 32, 64, 2),
        c3("photo.c3", 64, 128, 1),
        r1("photo.r1", 128, 128, 1),
        r2("photo.r2", 128, 128, 1),
        cf("photo.cf", 32, 3, 1),
        t1("photo.t1", 128, 64),
        t2("photo.t2", 64, 32) {}

  std::vector<Param<T>*> params() {
    return {&c1.w, &c1.b, &c2.w, &c2.b, &c3.w, &c3.b, &r1.w, &r1.b,
            &r2.w, &r2.b, &t1.w, &t1.b, &t2.w, &t2.b, &cf.w, &cf.b};
  }

  void init(Rng& rng) {
    c1.init_he(rng);
    c2.init_he(rng);
    c3.init_he(rng);
    r1.init_he(rng);
    r2.init_he(rng);
    t1.init_he(rng);
    t2.init_he(rng);
    cf.init_he(rng);
  }

  size_t param_floats() const {
    size_t n = 0;
    for (auto* p : const_cast<PhotoBackbone*>(this)->params())
      n += p->value.numel();
    return n;
  }

  void forward(const Tensor<T>& x, Tensor<T>& y) {
    int h = x.dim(1), w = x.dim(2);
    if (h % 4 || w % 4)
      throw std::runtime_error("compensate: spatial size must be divisible by 4");
    if (s1.empty() || s1.dim(1) != (h - 1) / 2 + 1)
      throw std::runtime_error(
          "compensate: surface maps missing or sized for a different input");
    c1.forward(x, b1p);
    nn::lrelu(b1p, b1);
    k::add(b1.ptr(), s1.ptr(), b1.ptr(), b1.numel());
    c2.forward(b1, b2p);
    nn::lrelu(b2p, b2);
    k::add(b2.ptr(), s2.ptr(), b2.ptr(), b2.numel());
    c3.forward(b2, b3p);
    nn::lrelu(b3p, b3);
    k::add(b3.ptr(), s3.ptr(), b3.ptr(), b3.numel());
    r1.forward(b3, p1);
    nn::lrelu(p1, tmp);
    z1.resize(b3.shape);
    k::add(b3.ptr(), tmp.ptr(), z1.ptr(), z1.numel());
    r2.forward(z1, p2);
    nn::lrelu(p2, tmp);
    z2.resize(z1.shape);
    k::add(z1.ptr(), tmp.ptr(), z2.ptr(), z2.numel());
    t1.forward(z2, d1p);
    nn::lrelu(d1p, d1);
    t2.forward(d1, d2p);
    nn::lrelu(d2p, d2);
    cf.forward(d2, yf);
    pre.resize(x.shape);
    k::add(yf.ptr(), x.ptr(), pre.ptr(), pre.numel());
    y.resize(x.shape);
    k::clamp01_fwd(pre.ptr(), y.ptr(), y.numel());
  }

  // accumulates layer grads; dx (overwrite) and ds1..ds3 (accumulate) are
  // optional. Uses caches from the last forward.
  void backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>* dx,
                Tensor<T>* ds1, Tensor<T>* ds2, Tensor<T>* ds3) {
    Tensor<T> dpre(dy.shape), cur, nxt, prel;
    k::clamp01_bwd(pre.ptr(), dy.ptr(), dpre.ptr(), dpre.numel());
    cf.backward(dpre, &cur);  // cur = d d2
    nn::lrelu_grad(d2p, cur, prel);
    t2.backward(d1, prel, &cur);  // d d1
    nn::lrelu_grad(d1p, cur, prel);
    t1.backward(z2, prel, &cur);  // d z2
    // res2: z2 = z1 + lrelu(r2(z1))
    nn::lrelu_grad(p2, cur, prel);
    r2.backward(prel, &nxt);
    k::add(cur.ptr(), nxt.ptr(), cur.ptr(), cur.numel());  // d z1
    // res1: z1 = b3 + lrelu(r1(b3))
    nn::lrelu_grad(p1, cur, prel);
    r1.backward(prel, &nxt);
    k::add(cur.ptr(), nxt.ptr(), cur.ptr(), cur.numel());  // d b3
    if (ds3) k::add(ds3->ptr(), cur.ptr(), ds3->ptr(), ds3->numel());
    nn::lrelu_grad(b3p, cur, prel);
    c3.backward(prel, &cur);  // d b2
    if (ds2) k::add(ds2->ptr(), cur.ptr(), ds2->ptr(), ds2->numel());
    nn::lrelu_grad(b2p, cur, prel);
    c2.backward(prel, &cur);  // d b1
    if (ds1) k::add(ds1->ptr(), cur.ptr(), ds1->ptr(), ds1->numel());
    nn::lrelu_grad(b1p, cur, prel);
    c1.backward(prel, dx);
    if (dx) k::add(dx->ptr(), dpre.ptr(), dx->ptr(), dx->numel());  // skip
    (void)x;
  }
};

// Full trainable net: backbone + surface feature branch.
template <typename T>
struct PhotometricNet {
  PhotoBackbone<T> bb;
  nn::Conv2d<T> sc1, sc2, sc3;
  // surface branch caches
  Tensor<T> w1p, w1, w2p, w2, w3p, w3;
  // gradient accumulators for the merge maps (filled by backbone backwards,
  // consumed once per iteration by surface_backward)
  Tensor<T> ds1, ds2, ds3;
  int surf_h = 0, surf_w = 0;

  PhotometricNet()
      : sc1("photo.sc1", 3, 32, 2),
        sc2("photo.sc2", 32, 64, 2),
        sc3("photo.sc3", 64, 128, 1) {}

  std::vector<Param<T>*> params() {
    auto ps = bb.params();
    for (auto* p : {&sc1.w, &sc1.b, &sc2.w, &sc2.b, &sc3.w, &sc3.b})
      ps.push_back(p);
    return ps;
  }

  void init(Rng& rng) {
    bb.init(rng);
    sc1.init_he(rng);
    sc2.init_he(rng);
    sc3.init_he(rng);
  }

  // run the surface branch once per scene/iteration; fills the merge maps and
  // resets their gradient accumulators
  void forward_surface(const Tensor<T>& s) {
    surf_h = s.dim(1);
    surf_w = s.dim(2);
    if (surf_h % 4 || surf_w % 4)
      throw std::runtime_error("surface: spatial size must be divisible by 4");
    sc1.forward(s, w1p);
    nn::lrelu(w1p, w1);
    sc2.forward(w1, w2p);
    nn::lrelu(w2p, w2);
    sc3.forward(w2, w3p);
    nn::lrelu(w3p, w3);
    bb.s1 = w1;
    bb.s2 = w2;
    bb.s3 = w3;
    ds1.resize(w1.shape);
    ds2.resize(w2.shape);
    ds3.resize(w3.shape);
    ds1.zero();
    ds2.zero();
    ds3.zero();
  }

  void forward(const Tensor<T>& x, Tensor<T>& y) {
    if (x.dim(1) != surf_h || x.dim(2) != surf_w)
      throw std::runtime_error("compensate: input/surface size mismatch");
    bb.forward(x, y);
  }

  // per-sample backward; merge-map grads pile up in ds1..ds3
  void backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>* dx) {
    bb.backward(x, dy, dx, &ds1, &ds2, &ds3);
  }

  // once per iteration: drain the accumulated merge-map grads through the
  // surface branch; ds (optional, overwrite) receives d/d(surface image)
  void surface_backward(Tensor<T>* ds) {
    Tensor<T> cur, prel, nxt;
    nn::lrelu_grad(w3p, ds3, prel);
    sc3.backward(prel, &cur);
    k::add(cur.ptr(), ds2.ptr(), cur.ptr(), cur.numel());
    nn::lrelu_grad(w2p, cur, prel);
    sc2.backward(prel, &cur);
    k::add(cur.ptr(), ds1.ptr(), cur.ptr(), cur.numel());
    nn::lrelu_grad(w1p, cur, prel);
    sc1.backward(prel, ds);
  }
};

// Inference-only net: backbone weights plus constant merge maps. Carries no
// surface branch at all.
template <typename T>
struct TrimmedPhotometricNet {
  PhotoBackbone<T> bb;
  int surf_h = 0, surf_w = 0;

  void forward(const Tensor<T>& x, Tensor<T>& y) {
    if (x.dim(1) != surf_h || x.dim(2) != surf_w)
      throw std::runtime_error("compensate: input sized unlike the trim surface");
    bb.forward(x, y);
  }

  // weights + constant maps the trimmed inference path holds
  size_t resident_floats() const {
    return bb.param_floats() + bb.s1.numel() + bb.s2.numel() + bb.s3.numel();
  }
};

// Runs the surface branch once and freezes its features as constants.
template <typename T>
TrimmedPhotometricNet<T> trim_surface_branch(PhotometricNet<T>& net,
                                             const Tensor<T>& s_warped) {
  net.forward_surface(s_warped);
  TrimmedPhotometricNet<T> t;
  auto src = net.bb.params();
  auto dst = t.bb.params();
  for (size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
  t.bb.s1 = net.bb.s1;
  t.bb.s2 = net.bb.s2;
  t.bb.s3 = net.bb.s3;
  t.surf_h = net.surf_h;
  t.surf_w = net.surf_w;
  return t;
}

// what the untrimmed inference path holds resident: backbone + branch weights
// + the branch's activation buffers for an h x w surface
template <typename T>
size_t untrimmed_resident_floats(PhotometricNet<T>& net) {
  size_t n = net.bb.param_floats();
  for (auto* p : {&net.sc1.w, &net.sc1.b, &net.sc2.w, &net.sc2.b, &net.sc3.w,
                  &net.sc3.b})
    n += p->value.numel();
  n += net.w1p.numel() + net.w1.numel() + net.w2p.numel() + net.w2.numel() +
       net.w3p.numel() + net.w3.numel();
  return n;
}

}  // namespace procomp::photo
