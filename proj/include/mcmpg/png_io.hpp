#pragma once

// 8-bit PNG interchange: grayscale probability masks (0 -> 0.0, 255 -> 1.0)
// and indexed label maps in the DAVIS palette layout.

#include <png.h>

#include <array>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <system_error>
#include <vector>

#include "mcmpg/error.hpp"
#include "mcmpg/mask.hpp"

namespace mcmpg {

struct Image8 {
  GridShape shape;
  std::vector<std::uint8_t> pixels;  ///< row-major, one byte per pixel
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline void png_warning_silent(png_structp, png_const_charp) {}

// Reads an 8-bit single-channel image. Palette images keep their indices when
// `keep_indices` is set; otherwise every format is reduced to 8-bit gray.
inline Image8 read_png8(const std::filesystem::path& path, bool keep_indices) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw InputError("cannot open PNG " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                           png_warning_silent);
  if (!png) throw InputError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw InputError("png_create_info_struct failed");
  }
  Image8 img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("malformed PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  if (color == PNG_COLOR_TYPE_PALETTE && keep_indices) {
    if (depth < 8) png_set_packing(png);
  } else {
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (depth == 16) png_set_strip_16(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
        color == PNG_COLOR_TYPE_PALETTE) {
      png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
  }
  png_read_update_info(png, info);
  if (png_get_channels(png, info) != 1 || png_get_bit_depth(png, info) != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("unsupported PNG layout in " + path.string());
  }
  img.shape = GridShape{static_cast<int>(height), static_cast<int>(width)};
  img.pixels.resize(static_cast<std::size_t>(width) * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = img.pixels.data() + static_cast<std::size_t>(y) * width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline const std::array<std::array<std::uint8_t, 3>, 256>& davis_palette() {
  static const auto palette = [] {
    std::array<std::array<std::uint8_t, 3>, 256> p{};
    for (int i = 0; i < 256; ++i) {
      int c = i;
      std::uint8_t r = 0, g = 0, b = 0;
      for (int j = 0; j < 8; ++j) {
        r |= static_cast<std::uint8_t>(((c >> 0) & 1) << (7 - j));
        g |= static_cast<std::uint8_t>(((c >> 1) & 1) << (7 - j));
        b |= static_cast<std::uint8_t>(((c >> 2) & 1) << (7 - j));
        c >>= 3;
      }
      p[static_cast<std::size_t>(i)] = {r, g, b};
    }
    return p;
  }();
  return palette;
}

inline void write_png8(const std::filesystem::path& path, const GridShape& shape,
                       std::span<const std::uint8_t> pixels, bool indexed) {
  if (pixels.size() != shape.pixels()) throw ShapeMismatch("write_png: buffer does not match grid");
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    FilePtr file(std::fopen(tmp.c_str(), "wb"));
    if (!file) throw std::runtime_error("cannot write PNG " + tmp.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                              png_warning_silent);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
      png_destroy_write_struct(&png, nullptr);
      throw std::runtime_error("png_create_info_struct failed");
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(shape.height));
    std::vector<png_color> colors;
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      throw std::runtime_error("libpng failed writing " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(shape.width),
                 static_cast<png_uint_32>(shape.height), 8,
                 indexed ? PNG_COLOR_TYPE_PALETTE : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    if (indexed) {
      for (const auto& c : davis_palette()) colors.push_back(png_color{c[0], c[1], c[2]});
      png_set_PLTE(png, info, colors.data(), static_cast<int>(colors.size()));
    }
    png_write_info(png, info);
    for (int y = 0; y < shape.height; ++y) {
      rows[static_cast<std::size_t>(y)] =
          const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(y) * shape.width);
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

inline ProbMask read_prob_png(const std::filesystem::path& path) {
  Image8 img = detail::read_png8(path, false);
  return ProbMask(img.shape, std::move(img.pixels));
}

inline void write_prob_png(const std::filesystem::path& path, const ProbMask& p) {
  detail::write_png8(path, p.shape(), p.levels(), false);
}

inline void write_gray_png(const std::filesystem::path& path, const GridShape& shape,
                           std::span<const std::uint8_t> pixels) {
  detail::write_png8(path, shape, pixels, false);
}

/// Label map: palette index per pixel (0 = background).
inline Image8 read_label_png(const std::filesystem::path& path) {
  return detail::read_png8(path, true);
}

inline void write_label_png(const std::filesystem::path& path, const GridShape& shape,
                            std::span<const std::uint8_t> labels) {
  detail::write_png8(path, shape, labels, true);
}

}  // namespace mcmpg
