#pragma once
// Image helpers. Images are TensorF [3,H,W] with values in [0,1]; masks are
// Tensor<uint8_t> [1,H,W] (0/1). PNG is the only file format: 8-bit/channel,
// linear mapping 0 <-> 0.0 and 255 <-> 1.0, no color management.

#include <string>

#include "procomp/core/tensor.hpp"

namespace procomp::img {

using Mask = Tensor<uint8_t>;

TensorF read_png(const std::string& path);
// clamps to [0,1], rounds to 8-bit; fixed encoder settings so identical
// pixels give identical bytes
void write_png(const std::string& path, const TensorF& img);
void write_png_gray(const std::string& path, const TensorF& plane);  // [1,H,W]
void write_png_mask(const std::string& path, const Mask& m);
Mask read_png_mask(const std::string& path);

inline TensorF constant_image(int h, int w, float r, float g, float b) {
  TensorF t({3, h, w});
  size_t hw = (size_t)h * w;
  for (size_t i = 0; i < hw; ++i) {
    t[i] = r;
    t[hw + i] = g;
    t[2 * hw + i] = b;
  }
  return t;
}

inline void apply_mask(TensorF& img, const Mask& m) {
  size_t hw = (size_t)img.dim(1) * img.dim(2);
  for (int c = 0; c < img.dim(0); ++c)
    for (size_t i = 0; i < hw; ++i)
      if (!m[i]) img[c * hw + i] = 0.0f;
}

}  // namespace procomp::img
