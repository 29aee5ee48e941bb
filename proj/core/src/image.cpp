// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include "daem/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "daem/error.hpp"

namespace daem {

Raster::Raster(std::size_t w, std::size_t h, Rgb fill) : width(w), height(h), pixels(w * h * 3) {
  for (std::size_t i = 0; i < w * h; ++i) std::copy(fill.begin(), fill.end(), pixels.begin() + i * 3);
}

Rgb Raster::at(std::size_t x, std::size_t y) const {
  require(x < width && y < height, ErrorKind::kValidation, "pixel outside raster");
  const std::size_t o = (y * width + x) * 3;
  return {pixels[o], pixels[o + 1], pixels[o + 2]};
}

void Raster::set(std::size_t x, std::size_t y, Rgb c) {
  require(x < width && y < height, ErrorKind::kValidation, "pixel outside raster");
  const std::size_t o = (y * width + x) * 3;
  std::copy(c.begin(), c.end(), pixels.begin() + static_cast<std::ptrdiff_t>(o));
}

Rgb jet(double v) {
  v = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0);
  struct Stop {
    double at;
    double r, g, b;
  };
  static constexpr Stop kStops[] = {
      {0.0, 0, 0, 255}, {1.0 / 3.0, 0, 255, 255}, {2.0 / 3.0, 255, 255, 0}, {1.0, 255, 0, 0}};
  std::size_t i = 0;
  while (i + 2 < std::size(kStops) && v > kStops[i + 1].at) ++i;
  const Stop& a = kStops[i];
  const Stop& b = kStops[i + 1];
  const double t = (v - a.at) / (b.at - a.at);
  auto ch = [&](double x, double y) {
    return static_cast<std::uint8_t>(std::lround(x + (y - x) * t));
  };
  return {ch(a.r, b.r), ch(a.g, b.g), ch(a.b, b.b)};
}

Rgb blend(Rgb base, Rgb over, double alpha) {
  Rgb out{};
  for (std::size_t c = 0; c < 3; ++c)
    out[c] = static_cast<std::uint8_t>(
        std::lround((1.0 - alpha) * static_cast<double>(base[c]) + alpha * static_cast<double>(over[c])));
  return out;
}

namespace {

void write_cb(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), len);
}

void flush_cb(png_structp) {}

struct ReadState {
  const std::string* bytes;
  std::size_t pos;
};

void read_cb(png_structp png, png_bytep data, png_size_t len) {
  auto* st = static_cast<ReadState*>(png_get_io_ptr(png));
  if (st->pos + len > st->bytes->size()) png_error(png, "truncated PNG");
  std::memcpy(data, st->bytes->data() + st->pos, len);
  st->pos += len;
}

[[noreturn]] void error_cb(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  *text = msg;
  png_longjmp(png, 1);
}

void warn_cb(png_structp, png_const_charp) {}

}  // namespace

std::string encode_png(const Raster& r) {
  require(r.width > 0 && r.height > 0, ErrorKind::kValidation, "cannot encode an empty raster");
  std::string out;
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, error_cb, warn_cb);
  require(png != nullptr, ErrorKind::kIo, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(r.height);
  for (std::size_t y = 0; y < r.height; ++y)
    rows[y] = const_cast<png_bytep>(r.pixels.data() + y * r.width * 3);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::kIo, "PNG encode failed: " + err);
  }
  png_set_write_fn(png, &out, write_cb, flush_cb);
  png_set_IHDR(png, info, static_cast<png_uint_32>(r.width), static_cast<png_uint_32>(r.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

Raster decode_png(const std::string& bytes) {
  require(bytes.size() >= 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) == 0,
          ErrorKind::kValidation, "not a PNG file");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, error_cb, warn_cb);
  require(png != nullptr, ErrorKind::kIo, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  ReadState st{&bytes, 0};
  Raster r;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::kValidation, "PNG decode failed: " + err);
  }
  png_set_read_fn(png, &st, read_cb);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  r.width = png_get_image_width(png, info);
  r.height = png_get_image_height(png, info);
  r.pixels.assign(r.width * r.height * 3, 0);
  rows.resize(r.height);
  for (std::size_t y = 0; y < r.height; ++y) rows[y] = r.pixels.data() + y * r.width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return r;
}

void write_png(const Raster& r, const std::filesystem::path& path) {
  const std::string bytes = encode_png(r);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Raster read_png(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorKind::kMissing, "image not found: " + path.string());
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_png(ss.str());
}

}  // namespace daem
