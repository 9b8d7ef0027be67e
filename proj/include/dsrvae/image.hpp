#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

namespace dsrvae {

// H x W x 3 raster, planar channel layout, values nominally in [0,1].
// Intermediate math may leave the range; clamping happens at save time and
// at metric entry only.
template <class T>
struct BasicImage {
  int height = 0;
  int width = 0;
  std::vector<T> v;  // size 3*height*width, channel-major

  BasicImage() = default;
  BasicImage(int h, int w) : height(h), width(w), v(3u * h * w, T(0)) {
    if (h < 1 || w < 1) throw std::invalid_argument("image dims must be >= 1");
  }

  T& at(int c, int y, int x) {
    return v[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  const T& at(int c, int y, int x) const {
    return v[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  T* plane(int c) { return v.data() + static_cast<std::size_t>(c) * height * width; }
  const T* plane(int c) const {
    return v.data() + static_cast<std::size_t>(c) * height * width;
  }
  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }

  template <class U>
  BasicImage<U> cast() const {
    BasicImage<U> out(height, width);
    for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

template <class T>
struct LumaPlane {
  int height = 0;
  int width = 0;
  std::vector<T> v;

  LumaPlane() = default;
  LumaPlane(int h, int w) : height(h), width(w), v(static_cast<std::size_t>(h) * w, T(0)) {}
  T& at(int y, int x) { return v[static_cast<std::size_t>(y) * width + x]; }
  const T& at(int y, int x) const { return v[static_cast<std::size_t>(y) * width + x]; }
};

// BT.601 luma.
template <class T>
LumaPlane<T> rgb_to_luma(const BasicImage<T>& img) {
  LumaPlane<T> out(img.height, img.width);
  const T* r = img.plane(0);
  const T* g = img.plane(1);
  const T* b = img.plane(2);
  for (std::size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = T(0.299) * r[i] + T(0.587) * g[i] + T(0.114) * b[i];
  return out;
}

namespace detail {

struct PngReadCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* f = nullptr;
  ~PngReadCloser() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (f) std::fclose(f);
  }
};

struct PngWriteCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* f = nullptr;
  ~PngWriteCloser() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (f) std::fclose(f);
  }
};

}  // namespace detail

// Loads an 8-bit PNG. Grayscale and palette images are promoted to RGB,
// alpha is stripped. 16-bit files are rejected.
template <class T>
BasicImage<T> load_image(const std::string& path) {
  detail::PngReadCloser c;
  c.f = std::fopen(path.c_str(), "rb");
  if (!c.f) throw std::runtime_error("cannot open image file: " + path);

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, c.f) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw std::runtime_error("not a PNG file: " + path);

  c.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!c.png) throw std::runtime_error("png read init failed");
  c.info = png_create_info_struct(c.png);
  if (!c.info) throw std::runtime_error("png info init failed");
  if (setjmp(png_jmpbuf(c.png)))
    throw std::runtime_error("png decode error: " + path);

  png_init_io(c.png, c.f);
  png_set_sig_bytes(c.png, 8);
  png_read_info(c.png, c.info);

  png_uint_32 w = 0, h = 0;
  int bit_depth = 0, color_type = 0;
  png_get_IHDR(c.png, c.info, &w, &h, &bit_depth, &color_type, nullptr, nullptr, nullptr);
  if (bit_depth == 16)
    throw std::runtime_error("16-bit PNG unsupported: " + path);
  if (w < 1 || h < 1) throw std::runtime_error("zero-dimension image: " + path);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(c.png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(c.png);
  if (png_get_valid(c.png, c.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(c.png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(c.png);
  png_set_strip_alpha(c.png);
  png_read_update_info(c.png, c.info);

  if (png_get_rowbytes(c.png, c.info) != 3u * w)
    throw std::runtime_error("unexpected PNG row layout: " + path);

  std::vector<unsigned char> row(3u * w);
  BasicImage<T> img(static_cast<int>(h), static_cast<int>(w));
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(c.png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < w; ++x)
      for (int ch = 0; ch < 3; ++ch)
        img.at(ch, static_cast<int>(y), static_cast<int>(x)) =
            static_cast<T>(row[3 * x + ch]) / T(255);
  }
  png_read_end(c.png, nullptr);
  return img;
}

// Clamps to [0,1], quantizes by round(v*255), writes 8-bit RGB.
template <class T>
void save_image(const BasicImage<T>& img, const std::string& path) {
  detail::PngWriteCloser c;
  c.f = std::fopen(path.c_str(), "wb");
  if (!c.f) throw std::runtime_error("cannot open for writing: " + path);

  c.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!c.png) throw std::runtime_error("png write init failed");
  c.info = png_create_info_struct(c.png);
  if (!c.info) throw std::runtime_error("png info init failed");
  if (setjmp(png_jmpbuf(c.png)))
    throw std::runtime_error("png encode error: " + path);

  png_init_io(c.png, c.f);
  png_set_IHDR(c.png, c.info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(c.png, c.info);

  std::vector<unsigned char> row(3u * img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        double q = std::clamp(static_cast<double>(img.at(ch, y, x)), 0.0, 1.0);
        row[3 * x + ch] = static_cast<unsigned char>(std::lround(q * 255.0));
      }
    }
    png_write_row(c.png, row.data());
  }
  png_write_end(c.png, nullptr);
}

}  // namespace dsrvae
