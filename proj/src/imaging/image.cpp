#include "procomp/imaging/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

namespace procomp::img {

namespace {

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* fp = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    if (fp) std::fclose(fp);
  }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* fp = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, &info);
    if (fp) std::fclose(fp);
  }
};

std::vector<std::vector<png_byte>> read_rows(const std::string& path, int& h,
                                             int& w) {
  PngReader r;
  r.fp = std::fopen(path.c_str(), "rb");
  if (!r.fp) throw std::runtime_error("png: cannot open " + path);
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  r.info = png_create_info_struct(r.png);
  if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("png: read error in " + path);
  png_init_io(r.png, r.fp);
  png_read_info(r.png, r.info);

  png_set_expand(r.png);          // palettes, low bit depths, tRNS
  png_set_strip_16(r.png);        // 16-bit -> 8-bit
  png_set_strip_alpha(r.png);
  png_set_gray_to_rgb(r.png);
  png_read_update_info(r.png, r.info);

  h = (int)png_get_image_height(r.png, r.info);
  w = (int)png_get_image_width(r.png, r.info);
  size_t rb = png_get_rowbytes(r.png, r.info);
  if (rb != (size_t)w * 3) throw std::runtime_error("png: unexpected row size in " + path);

  std::vector<std::vector<png_byte>> rows(h, std::vector<png_byte>(rb));
  std::vector<png_bytep> ptrs(h);
  for (int y = 0; y < h; ++y) ptrs[y] = rows[y].data();
  png_read_image(r.png, ptrs.data());
  png_read_end(r.png, nullptr);
  return rows;
}

void write_rows(const std::string& path, int h, int w, int channels,
                const std::vector<std::vector<png_byte>>& rows) {
  PngWriter wr;
  wr.fp = std::fopen(path.c_str(), "wb");
  if (!wr.fp) throw std::runtime_error("png: cannot open for write " + path);
  wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  wr.info = png_create_info_struct(wr.png);
  if (setjmp(png_jmpbuf(wr.png))) throw std::runtime_error("png: write error " + path);
  png_init_io(wr.png, wr.fp);
  // fixed settings -> byte-identical files for identical pixels
  png_set_compression_level(wr.png, 6);
  png_set_filter(wr.png, 0, PNG_FILTER_SUB);
  png_set_IHDR(wr.png, wr.info, (png_uint_32)w, (png_uint_32)h, 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(wr.png, wr.info);
  std::vector<png_bytep> ptrs(h);
  for (int y = 0; y < h; ++y) ptrs[y] = const_cast<png_bytep>(rows[y].data());
  png_write_image(wr.png, ptrs.data());
  png_write_end(wr.png, nullptr);
}

inline png_byte to_byte(float v) {
  float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  return (png_byte)std::lround(c * 255.0f);
}

}  // namespace

TensorF read_png(const std::string& path) {
  int h, w;
  auto rows = read_rows(path, h, w);
  TensorF img({3, h, w});
  size_t hw = (size_t)h * w;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img[c * hw + (size_t)y * w + x] = rows[y][(size_t)x * 3 + c] / 255.0f;
  return img;
}

void write_png(const std::string& path, const TensorF& img) {
  int h = img.dim(1), w = img.dim(2);
  size_t hw = (size_t)h * w;
  std::vector<std::vector<png_byte>> rows(h, std::vector<png_byte>((size_t)w * 3));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        rows[y][(size_t)x * 3 + c] = to_byte(img[c * hw + (size_t)y * w + x]);
  write_rows(path, h, w, 3, rows);
}

void write_png_gray(const std::string& path, const TensorF& plane) {
  int h = plane.dim(1), w = plane.dim(2);
  std::vector<std::vector<png_byte>> rows(h, std::vector<png_byte>(w));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) rows[y][x] = to_byte(plane[(size_t)y * w + x]);
  write_rows(path, h, w, 1, rows);
}

void write_png_mask(const std::string& path, const Mask& m) {
  int h = m.dim(1), w = m.dim(2);
  std::vector<std::vector<png_byte>> rows(h, std::vector<png_byte>(w));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) rows[y][x] = m[(size_t)y * w + x] ? 255 : 0;
  write_rows(path, h, w, 1, rows);
}

Mask read_png_mask(const std::string& path) {
  int h, w;
  auto rows = read_rows(path, h, w);
  Mask m({1, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      m[(size_t)y * w + x] = rows[y][(size_t)x * 3] >= 128 ? 1 : 0;
  return m;
}

}  // namespace procomp::img
