#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "canon/backends.hpp"
#include "canon/image.hpp"
#include "canon/transforms.hpp"

// Deterministic synthetic images for tests and the synthetic bench datasets.
// Every fixture writes its label into the center pixel (see watermark_label).

namespace canon::fixtures {

inline Image random_noise(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(h, w);
  for (double& v : img.mutable_pixels()) v = u(rng);
  return img;
}

/// Sum of a few low-frequency plane waves per channel, centered on `base`.
inline Image smooth_texture(int h, int w, std::mt19937_64& rng, double amplitude = 0.15,
                            double base = 0.5, int waves = 3) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(h, w);
  const double scale = 2.0 * std::numbers::pi / std::max(h, w);
  for (int c = 0; c < 3; ++c) {
    std::vector<double> kx, ky, ph, amp;
    for (int k = 0; k < waves; ++k) {
      const double freq = 0.5 + 1.5 * u(rng);
      const double dir = 2.0 * std::numbers::pi * u(rng);
      kx.push_back(freq * std::cos(dir) * scale);
      ky.push_back(freq * std::sin(dir) * scale);
      ph.push_back(2.0 * std::numbers::pi * u(rng));
      amp.push_back(amplitude / waves * (0.5 + u(rng)));
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = base;
        for (int k = 0; k < waves; ++k) v += amp[k] * std::sin(kx[k] * x + ky[k] * y + ph[k]);
        img.at(y, x, c) = clamp01(v);
      }
  }
  return img;
}

inline void set_watermark(Image& img, int label) {
  const int y = img.height() / 2;
  const int x = img.width() / 2;
  img.at(y, x, 0) = (label & 4) ? 1.0 : 0.0;
  img.at(y, x, 1) = (label & 2) ? 1.0 : 0.0;
  img.at(y, x, 2) = (label & 1) ? 1.0 : 0.0;
}

/// Scene whose brightness increases in direction `up_deg` (0 = straight up,
/// counterclockwise positive), with mild texture, masked to the inscribed disk.
inline Image oriented_scene(int size, double up_deg, std::mt19937_64& rng, int label = -1) {
  Image img = smooth_texture(size, size, rng, 0.08, 0.0);
  const double rad = up_deg * std::numbers::pi / 180.0;
  // Unit vector of "up" in pixel coordinates (y down).
  const double ux = -std::sin(rad);
  const double uy = -std::cos(rad);
  const double c = (size - 1) / 2.0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double along = ((x - c) * ux + (y - c) * uy) / (size / 2.0);
      for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = clamp01(0.5 + 0.35 * along + img.at(y, x, ch));
    }
  img = disk_mask(img);
  if (label >= 0) set_watermark(img, label);
  return img;
}

/// Upright scene; odd sizes keep the watermark on the rotation center.
inline Image upright_scene(int size, std::mt19937_64& rng, int label) {
  return oriented_scene(size, 0.0, rng, label);
}

/// Gray-world scene: all three channel means equal 0.45 before the watermark.
inline Image neutral_scene(int size, std::mt19937_64& rng, int label) {
  Image img = smooth_texture(size, size, rng, 0.3, 0.45, 4);
  double m[3] = {0, 0, 0};
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) m[c] += img.at(y, x, c);
  const double n = static_cast<double>(size) * size;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = clamp01(img.at(y, x, c) * 0.45 / (m[c] / n));
  set_watermark(img, label);
  return img;
}

/// Scene whose green-channel median (watermark excluded) is 0.5.
inline Image midtone_scene(int size, std::mt19937_64& rng, int label) {
  Image img = smooth_texture(size, size, rng, 0.5, 0.5, 4);
  for (double& v : img.mutable_pixels()) v = std::clamp(v, 0.02, 0.98);
  set_watermark(img, label);
  const double offset = midtone_offset(img);  // log(log m / log 0.5)
  return apply_gamma(img, -offset);
}

}  // namespace canon::fixtures
