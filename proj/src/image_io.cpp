// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#include "nlf/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "nlf/weights.hpp"

namespace nlf {

namespace {

std::uint8_t to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

struct ReadCursor {
  const std::string* bytes;
  std::size_t pos;
};

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* slot = static_cast<std::string*>(png_get_error_ptr(png));
  if (slot) *slot = msg;
  png_longjmp(png, 1);
}
void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace

std::string encode_png(const Tensor<float>& image, std::int64_t batch_index) {
  if (image.rank() != 4 || image.channels() != 3)
    throw ShapeError("encode_png: expected [B,3,H,W], got " + to_string(image.dims()));
  const auto h = static_cast<png_uint_32>(image.height());
  const auto w = static_cast<png_uint_32>(image.width());
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(h) * w * 3);
  for (png_uint_32 y = 0; y < h; ++y)
    for (png_uint_32 x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c] = to_byte(image.at(batch_index, c, y, x));

  std::string out;
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_error_fn, png_warning_fn);
  if (!png) throw std::runtime_error("png: cannot create write struct");
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png: " + error);
  }
  {
    png_set_write_fn(
        png, &out,
        [](png_structp p, png_bytep data, png_size_t len) {
          static_cast<std::string*>(png_get_io_ptr(p))->append(reinterpret_cast<const char*>(data), len);
        },
        [](png_structp) {});
    png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    for (png_uint_32 y = 0; y < h; ++y) png_write_row(png, rgb.data() + static_cast<std::size_t>(y) * w * 3);
    png_write_end(png, nullptr);
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

Tensor<float> decode_png(const std::string& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0)
    throw std::runtime_error("png: not a PNG stream");
  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_error_fn, png_warning_fn);
  if (!png) throw std::runtime_error("png: cannot create read struct");
  png_infop info = png_create_info_struct(png);
  ReadCursor cursor{&bytes, 0};
  Tensor<float> out;
  std::vector<std::uint8_t> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png: " + error);
  }
  {
    png_set_read_fn(png, &cursor, [](png_structp p, png_bytep data, png_size_t len) {
      auto* c = static_cast<ReadCursor*>(png_get_io_ptr(p));
      if (len > c->bytes->size() - c->pos) png_error(p, "truncated stream");
      std::memcpy(data, c->bytes->data() + c->pos, len);
      c->pos += len;
    });
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    if (png_get_channels(png, info) != 3) png_error(png, "unsupported channel layout");
    row.assign(static_cast<std::size_t>(w) * 3, 0);
    out = Tensor<float>({1, 3, h, w});
    for (png_uint_32 y = 0; y < h; ++y) {
      png_read_row(png, row.data(), nullptr);
      for (png_uint_32 x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) out.at(0, c, y, x) = row[static_cast<std::size_t>(x) * 3 + c] / 255.0f;
    }
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_png(const std::filesystem::path& path, const Tensor<float>& image) {
  write_file(path, encode_png(image));
}

Tensor<float> read_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

Tensor<float> quantize8(const Tensor<float>& image) {
  Tensor<float> out = image;
  for (auto& v : out.span()) v = to_byte(v) / 255.0f;
  return out;
}

}  // namespace nlf
