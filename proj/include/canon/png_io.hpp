#pragma once

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "canon/error.hpp"
#include "canon/image.hpp"

namespace canon {

namespace detail {

struct PngDecodeState {
  std::span<const unsigned char> input;
  std::size_t offset = 0;
  std::vector<unsigned char> raw;
  std::vector<png_bytep> rows;
  char message[256] = {0};
};

inline void png_read_from_span(png_structp png, png_bytep out, png_size_t count) {
  auto* state = static_cast<PngDecodeState*>(png_get_io_ptr(png));
  if (state->offset + count > state->input.size()) {
    png_error(png, "truncated PNG stream");
  }
  std::memcpy(out, state->input.data() + state->offset, count);
  state->offset += count;
}

inline void png_record_error(png_structp png, png_const_charp msg) {
  auto* state = static_cast<PngDecodeState*>(png_get_error_ptr(png));
  std::strncpy(state->message, msg, sizeof(state->message) - 1);
  png_longjmp(png, 1);
}

inline void png_ignore_warning(png_structp, png_const_charp) {}

inline std::uint8_t quantize8(double v) {
  return static_cast<std::uint8_t>(std::lround(clamp01(v) * 255.0));
}

}  // namespace detail

/// Decodes an 8- or 16-bit PNG held in memory. Palette and grayscale inputs are
/// expanded to RGB; alpha is composited over a white backdrop.
inline Image decode_png(std::span<const unsigned char> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw FormatError("input is not a PNG stream");
  }
  // Everything touched after setjmp lives behind this pointer so a longjmp
  // cannot leave automatic objects in an indeterminate state.
  auto state = std::make_unique<detail::PngDecodeState>();
  state->input = bytes;

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, state.get(),
                                           detail::png_record_error, detail::png_ignore_warning);
  if (png == nullptr) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(std::string("PNG decode failed: ") + state->message);
  }

  png_set_read_fn(png, state.get(), detail::png_read_from_span);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_gray_to_rgb(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int channels = png_get_channels(png, info);
  if ((depth != 8 && depth != 16) || (channels != 3 && channels != 4)) {
    std::snprintf(state->message, sizeof(state->message),
                  "unsupported layout: %d-bit, %d channels", depth, channels);
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(state->message);
  }
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  state->raw.resize(row_bytes * height);
  state->rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) state->rows[y] = state->raw.data() + y * row_bytes;
  png_read_image(png, state->rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const double max_value = depth == 16 ? 65535.0 : 255.0;
  const int bytes_per_sample = depth / 8;
  auto sample = [&](std::size_t offset) -> double {
    const unsigned char* p = state->raw.data() + offset;
    const unsigned v = bytes_per_sample == 2 ? (static_cast<unsigned>(p[0]) << 8) | p[1] : p[0];
    return v / max_value;
  };

  Image out(static_cast<int>(height), static_cast<int>(width));
  for (png_uint_32 y = 0; y < height; ++y) {
    for (png_uint_32 x = 0; x < width; ++x) {
      const std::size_t base = y * row_bytes + x * channels * bytes_per_sample;
      const double alpha = channels == 4 ? sample(base + 3 * bytes_per_sample) : 1.0;
      for (int c = 0; c < 3; ++c) {
        const double v = sample(base + c * bytes_per_sample);
        out.at(static_cast<int>(y), static_cast<int>(x), c) =
            channels == 4 ? clamp01(alpha * v + (1.0 - alpha)) : v;
      }
    }
  }
  return out;
}

/// Encodes as an 8-bit RGB PNG. Each value is rounded to the nearest of 256
/// levels, so a decode recovers the input within 0.5/255.
inline std::vector<unsigned char> encode_png(const Image& image) {
  std::vector<std::uint8_t> buffer(image.size());
  const auto px = image.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) buffer[i] = detail::quantize8(px[i]);

  png_image meta;
  std::memset(&meta, 0, sizeof(meta));
  meta.version = PNG_IMAGE_VERSION;
  meta.width = static_cast<png_uint_32>(image.width());
  meta.height = static_cast<png_uint_32>(image.height());
  meta.format = PNG_FORMAT_RGB;

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&meta, nullptr, &size, 0, buffer.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + meta.message);
  }
  std::vector<unsigned char> out(size);
  if (!png_image_write_to_memory(&meta, out.data(), &size, 0, buffer.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + meta.message);
  }
  out.resize(size);
  return out;
}

inline Image load_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read error on " + path.string());
  try {
    return decode_png(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void save_png(const Image& image, const std::filesystem::path& path) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write error on " + path.string());
}

}  // namespace canon
