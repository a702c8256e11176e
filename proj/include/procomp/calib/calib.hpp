#pragma once

// display-geometry calibration: where on the camera image the projector can
// actually put light, and how to place a desired image inside that region.

#include <array>
#include <string>
#include <utility>

#include "procomp/imaging/image.hpp"

namespace procomp::calib {

struct Rect {
  int x = 0, y = 0, w = 0, h = 0;
  bool operator==(const Rect& o) const {
    return x == o.x && y == o.y && w == o.w && h == o.h;
  }
};

// row-major 2x3: [a b c; d e f], maps pixel (px,py) -> (a*px + b*py + c, ...)
using Affine2x3 = std::array<float, 6>;

struct DisplayGeometry {
  img::Mask fov;        // 1 = projector light reaches this camera pixel
  Rect bounding_rect;   // tight bbox of fov
  Rect optimal_rect;    // largest inscribed rect of the requested aspect
  Affine2x3 fit_affine; // uniform scale + translation into optimal_rect
};

// threshold in [0,1] maximizing between-class variance over a 256-bin
// histogram; a tied plateau resolves to its rounded mean position.
// throws if the image is constant or occupies a single bin (no separation).
float otsu_threshold(const TensorF& gray);

// morphological cleanup: 3x3 open, 3x3 close, keep the largest 4-connected
// component, fill enclosed holes. idempotent.
img::Mask clean_mask(const img::Mask& m);

// per-pixel max-channel difference (surface - dark), Otsu threshold, cleanup.
// throws when the two captures show no illumination difference.
img::Mask fov_mask(const TensorF& surface_capture, const TensorF& dark_capture);

Rect bounding_rect(const img::Mask& m);

// largest axis-aligned rectangle of the given aspect (w/h) fully inside the
// mask; ties broken by smallest (y,x). the affine maps a desired image at the
// mask frame's own resolution onto the rectangle: equal scale on both axes,
// zero shear, translation to the rect corner.
std::pair<Rect, Affine2x3> optimal_display_area(const img::Mask& mask,
                                                float aspect);

DisplayGeometry calibrate(const TensorF& surface_capture,
                          const TensorF& dark_capture, float aspect);

// rects + affine as structured text next to checkpoints; the mask itself is
// exported separately as a PNG. load leaves the mask empty.
void save_geometry(const std::string& path, const DisplayGeometry& g);
DisplayGeometry load_geometry(const std::string& path);

// render a desired image into an out_h x out_w camera-frame canvas through
// the fit affine: the image lands inside the optimal rectangle, black
// elsewhere. z may be any resolution (it spans the frame's normalized square).
TensorF place_image(const TensorF& z, const Affine2x3& A, int out_h,
                    int out_w);

}  // namespace procomp::calib
