#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "canon/error.hpp"

namespace canon {

using Rgb = std::array<double, 3>;

/// H x W x 3 raster of sRGB-encoded values in [0, 1], row-major, channels
/// interleaved. Copies are deep; a const Image is safe to share across threads.
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;

  Image(int height, int width, double fill = 0.0) : height_(height), width_(width) {
    check_dims(height, width);
    pixels_.assign(size_for(height, width), fill);
    validate();
  }

  Image(int height, int width, std::vector<double> pixels)
      : height_(height), width_(width), pixels_(std::move(pixels)) {
    check_dims(height, width);
    if (pixels_.size() != size_for(height, width)) {
      throw DimensionMismatch("image buffer has " + std::to_string(pixels_.size()) +
                              " values, expected " +
                              std::to_string(size_for(height, width)));
    }
    validate();
  }

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return pixels_.empty(); }
  std::size_t size() const { return pixels_.size(); }

  double at(int y, int x, int c) const { return pixels_[index(y, x, c)]; }
  double& at(int y, int x, int c) { return pixels_[index(y, x, c)]; }

  Rgb rgb(int y, int x) const {
    const std::size_t i = index(y, x, 0);
    return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
  }

  std::span<const double> pixels() const { return pixels_; }
  std::span<double> mutable_pixels() { return pixels_; }

  /// Throws FormatError if any value is non-finite or outside [0, 1].
  void validate() const {
    for (double v : pixels_) {
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        throw FormatError("pixel value out of [0,1]: " + std::to_string(v));
      }
    }
  }

  friend bool operator==(const Image& a, const Image& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.pixels_ == b.pixels_;
  }

 private:
  static std::size_t size_for(int h, int w) {
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * kChannels;
  }
  static void check_dims(int h, int w) {
    if (h <= 0 || w <= 0) {
      throw ArgumentError("image dimensions must be positive, got " + std::to_string(h) +
                          "x" + std::to_string(w));
    }
  }
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * kChannels + static_cast<std::size_t>(c);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> pixels_;
};

struct LabeledImage {
  Image image;
  int label = 0;
  std::string id;
};

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

/// Bilinear resampling with half-pixel centers and edge clamping.
inline Image resize_bilinear(const Image& image, int new_h, int new_w) {
  if (new_h < 1 || new_w < 1) {
    throw ArgumentError("resize target must be at least 1x1");
  }
  if (new_h == image.height() && new_w == image.width()) return image;

  const int h = image.height();
  const int w = image.width();
  const double sy = static_cast<double>(h) / new_h;
  const double sx = static_cast<double>(w) / new_w;
  Image out(new_h, new_w);
  for (int y = 0; y < new_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < new_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      for (int c = 0; c < Image::kChannels; ++c) {
        const double top = image.at(y0, x0, c) * (1.0 - wx) + image.at(y0, x1, c) * wx;
        const double bot = image.at(y1, x0, c) * (1.0 - wx) + image.at(y1, x1, c) * wx;
        out.at(y, x, c) = clamp01(top * (1.0 - wy) + bot * wy);
      }
    }
  }
  return out;
}

/// Radius of the disk inscribed in the raster, measured from the pixel-grid
/// center ((w-1)/2, (h-1)/2).
inline double inscribed_radius(const Image& image) {
  return std::min(image.height(), image.width()) / 2.0;
}

inline bool inside_disk(const Image& image, int y, int x, double radius) {
  const double dy = y - (image.height() - 1) / 2.0;
  const double dx = x - (image.width() - 1) / 2.0;
  return dx * dx + dy * dy <= radius * radius;
}

/// Replaces every pixel outside the inscribed disk with `fill`. The kept set
/// is symmetric under 90-degree rotations on square rasters.
inline Image disk_mask(const Image& image, const Rgb& fill = {0.0, 0.0, 0.0}) {
  Image out = image;
  const double r = inscribed_radius(image);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      if (inside_disk(image, y, x, r)) continue;
      for (int c = 0; c < Image::kChannels; ++c) out.at(y, x, c) = fill[c];
    }
  }
  return out;
}

inline Image center_crop_square(const Image& image) {
  const int side = std::min(image.height(), image.width());
  const int oy = (image.height() - side) / 2;
  const int ox = (image.width() - side) / 2;
  Image out(side, side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      for (int c = 0; c < Image::kChannels; ++c) out.at(y, x, c) = image.at(y + oy, x + ox, c);
  return out;
}

/// Mean absolute per-value difference, optionally restricted to pixels within
/// `radius` of the grid center. Negative radius means the whole raster.
inline double mean_abs_diff(const Image& a, const Image& b, double radius = -1.0) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw DimensionMismatch("mean_abs_diff on images of different size");
  }
  double total = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      if (radius >= 0.0 && !inside_disk(a, y, x, radius)) continue;
      for (int c = 0; c < Image::kChannels; ++c) total += std::abs(a.at(y, x, c) - b.at(y, x, c));
      count += Image::kChannels;
    }
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

}  // namespace canon
