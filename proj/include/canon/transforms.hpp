#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "canon/error.hpp"
#include "canon/image.hpp"

namespace canon {

struct TransformPoint {
  std::vector<double> params;

  int dim() const { return static_cast<int>(params.size()); }
  double operator[](std::size_t i) const { return params[i]; }
  friend bool operator==(const TransformPoint&, const TransformPoint&) = default;
};

inline std::string to_string(const TransformPoint& p) {
  std::ostringstream os;
  os.precision(17);
  os << '[';
  for (std::size_t i = 0; i < p.params.size(); ++i) os << (i ? ", " : "") << p.params[i];
  os << ']';
  return os.str();
}

enum class TransformTag { RotationDeg, ColorLogChroma, GammaLog, Composite, Synthetic };

/// Decoder from a parameter vector to an image action. Composite kinds consume
/// their members' parameters concatenated in declaration order.
struct TransformKind {
  TransformTag tag = TransformTag::Synthetic;
  std::vector<TransformKind> members;
  int synthetic_dim = 1;

  static TransformKind rotation() { return {TransformTag::RotationDeg, {}, 0}; }
  static TransformKind color() { return {TransformTag::ColorLogChroma, {}, 0}; }
  static TransformKind gamma() { return {TransformTag::GammaLog, {}, 0}; }
  static TransformKind synthetic(int dim) {
    if (dim < 1) throw ArgumentError("synthetic transform needs dim >= 1");
    return {TransformTag::Synthetic, {}, dim};
  }
  static TransformKind composite(std::vector<TransformKind> members) {
    if (members.empty()) throw ArgumentError("composite transform needs members");
    return {TransformTag::Composite, std::move(members), 0};
  }

  int dim() const {
    switch (tag) {
      case TransformTag::RotationDeg: return 1;
      case TransformTag::ColorLogChroma: return 2;
      case TransformTag::GammaLog: return 1;
      case TransformTag::Synthetic: return synthetic_dim;
      case TransformTag::Composite: {
        int d = 0;
        for (const auto& m : members) d += m.dim();
        return d;
      }
    }
    return 0;
  }

  bool acts_on_image() const {
    if (tag == TransformTag::Synthetic) return false;
    if (tag == TransformTag::Composite) {
      return std::any_of(members.begin(), members.end(),
                         [](const TransformKind& m) { return m.acts_on_image(); });
    }
    return true;
  }

  std::string name() const {
    switch (tag) {
      case TransformTag::RotationDeg: return "rotation";
      case TransformTag::ColorLogChroma: return "color";
      case TransformTag::GammaLog: return "gamma";
      case TransformTag::Synthetic: return "synthetic" + std::to_string(synthetic_dim);
      case TransformTag::Composite: {
        std::string s = "composite(";
        for (std::size_t i = 0; i < members.size(); ++i) s += (i ? "," : "") + members[i].name();
        return s + ")";
      }
    }
    return "?";
  }

  friend bool operator==(const TransformKind&, const TransformKind&) = default;
};

class TransformDomain {
 public:
  enum class Kind { Discrete, Box };

  static TransformDomain discrete(std::vector<TransformPoint> points) {
    if (points.empty()) throw ArgumentError("discrete domain must be non-empty");
    const int d = points.front().dim();
    for (const auto& p : points) {
      if (p.dim() != d) throw DimensionMismatch("discrete domain points differ in dimension");
    }
    TransformDomain dom;
    dom.kind_ = Kind::Discrete;
    dom.dim_ = d;
    dom.points_ = std::move(points);
    return dom;
  }

  static TransformDomain box(std::vector<double> lower, std::vector<double> upper) {
    if (lower.empty() || lower.size() != upper.size()) {
      throw DimensionMismatch("box bounds must be non-empty and of equal length");
    }
    for (std::size_t i = 0; i < lower.size(); ++i) {
      if (!(lower[i] < upper[i])) {
        throw ArgumentError("box requires lower < upper in dimension " + std::to_string(i));
      }
    }
    TransformDomain dom;
    dom.kind_ = Kind::Box;
    dom.dim_ = static_cast<int>(lower.size());
    dom.lower_ = std::move(lower);
    dom.upper_ = std::move(upper);
    return dom;
  }

  Kind kind() const { return kind_; }
  bool is_discrete() const { return kind_ == Kind::Discrete; }
  int dim() const { return dim_; }
  const std::vector<TransformPoint>& points() const { return points_; }
  const std::vector<double>& lower() const { return lower_; }
  const std::vector<double>& upper() const { return upper_; }

  bool contains(const TransformPoint& p) const {
    if (p.dim() != dim_) return false;
    if (is_discrete()) return std::find(points_.begin(), points_.end(), p) != points_.end();
    for (int i = 0; i < dim_; ++i) {
      if (p[i] < lower_[i] || p[i] > upper_[i]) return false;
    }
    return true;
  }

 private:
  Kind kind_ = Kind::Discrete;
  int dim_ = 0;
  std::vector<TransformPoint> points_;
  std::vector<double> lower_;
  std::vector<double> upper_;
};

namespace detail {

// Bilinear sample with edge clamping; positions more than half a pixel
// outside the grid take the fill color.
inline void sample_bilinear(const Image& src, double sx, double sy, const Rgb& fill, double* out) {
  const int h = src.height();
  const int w = src.width();
  if (sx < -0.5 || sy < -0.5 || sx > w - 0.5 || sy > h - 0.5) {
    for (int c = 0; c < 3; ++c) out[c] = fill[c];
    return;
  }
  sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
  sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double wx = sx - x0;
  const double wy = sy - y0;
  for (int c = 0; c < 3; ++c) {
    if (wx == 0.0 && wy == 0.0) {
      out[c] = src.at(y0, x0, c);
      continue;
    }
    const double top = src.at(y0, x0, c) * (1.0 - wx) + src.at(y0, x1, c) * wx;
    const double bot = src.at(y1, x0, c) * (1.0 - wx) + src.at(y1, x1, c) * wx;
    out[c] = clamp01(top * (1.0 - wy) + bot * wy);
  }
}

}  // namespace detail

/// Rotates counterclockwise (as displayed, y axis pointing down) about the
/// grid center. Output keeps the input size; uncovered corners take `fill`.
/// Multiples of 90 degrees use exact integer coefficients.
inline Image rotate(const Image& image, double angle_deg, const Rgb& fill = {0.0, 0.0, 0.0}) {
  if (!std::isfinite(angle_deg)) throw ArgumentError("rotation angle must be finite");
  double a = std::fmod(angle_deg, 360.0);
  if (a < 0.0) a += 360.0;
  double cos_t = 0.0;
  double sin_t = 0.0;
  const double quarter = std::round(a / 90.0);
  if (std::abs(a - 90.0 * quarter) < 1e-9) {
    static constexpr double kCos[] = {1.0, 0.0, -1.0, 0.0, 1.0};
    static constexpr double kSin[] = {0.0, 1.0, 0.0, -1.0, 0.0};
    const int q = static_cast<int>(quarter);
    cos_t = kCos[q];
    sin_t = kSin[q];
    if (q % 4 == 0) return image;
  } else {
    const double rad = a * std::numbers::pi / 180.0;
    cos_t = std::cos(rad);
    sin_t = std::sin(rad);
  }

  const double cx = (image.width() - 1) / 2.0;
  const double cy = (image.height() - 1) / 2.0;
  Image out(image.height(), image.width());
  double px[3];
  for (int y = 0; y < image.height(); ++y) {
    const double dy = y - cy;
    for (int x = 0; x < image.width(); ++x) {
      const double dx = x - cx;
      const double sx = cx + dx * cos_t - dy * sin_t;
      const double sy = cy + dx * sin_t + dy * cos_t;
      detail::sample_bilinear(image, sx, sy, fill, px);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = px[c];
    }
  }
  return out;
}

/// von Kries illuminant from log-chrominance (L_u, L_v); unit Euclidean norm.
inline Rgb illuminant_from_chroma(double lu, double lv) {
  const double r = std::exp(-lu);
  const double b = std::exp(-lv);
  const double z = std::sqrt(r * r + b * b + 1.0);
  return {r / z, 1.0 / z, b / z};
}

/// Per-channel multiply by `gains`, clamped to [0, 1].
inline Image scale_channels(const Image& image, const Rgb& gains) {
  Image out = image;
  auto px = out.mutable_pixels();
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = clamp01(px[i] * gains[i % 3]);
  return out;
}

inline Image apply_color(const Image& image, double lu, double lv) {
  if (!std::isfinite(lu) || !std::isfinite(lv)) throw ArgumentError("chroma must be finite");
  return scale_channels(image, illuminant_from_chroma(lu, lv));
}

inline Image apply_gamma(const Image& image, double log_gamma) {
  if (!std::isfinite(log_gamma)) throw ArgumentError("log gamma must be finite");
  if (log_gamma == 0.0) return image;
  const double gamma = std::exp(log_gamma);
  Image out = image;
  for (double& v : out.mutable_pixels()) v = clamp01(std::pow(v, gamma));
  return out;
}

namespace detail {

inline Image apply_kind(const TransformKind& kind, const double* params, const Image& image) {
  switch (kind.tag) {
    case TransformTag::RotationDeg: return rotate(image, params[0]);
    case TransformTag::ColorLogChroma: return apply_color(image, params[0], params[1]);
    case TransformTag::GammaLog: return apply_gamma(image, params[0]);
    case TransformTag::Synthetic: return image;
    case TransformTag::Composite: {
      Image current = image;
      for (const auto& member : kind.members) {
        current = apply_kind(member, params, current);
        params += member.dim();
      }
      return current;
    }
  }
  return image;
}

}  // namespace detail

inline Image apply_point(const TransformKind& kind, const TransformPoint& point, const Image& image) {
  if (point.dim() != kind.dim()) {
    throw DimensionMismatch("transform " + kind.name() + " expects " + std::to_string(kind.dim()) +
                            " parameters, got " + std::to_string(point.dim()));
  }
  return detail::apply_kind(kind, point.params.data(), image);
}

/// The cyclic rotation group C_n as a discrete domain, identity first.
inline TransformDomain enumerate_cn(int n) {
  if (n < 1) throw ArgumentError("C_n requires n >= 1");
  std::vector<TransformPoint> points;
  points.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) points.push_back({{360.0 * k / n}});
  return TransformDomain::discrete(std::move(points));
}

inline std::vector<TransformPoint> sample_uniform(const TransformDomain& domain, int count,
                                                  std::uint64_t seed) {
  if (domain.is_discrete()) throw ArgumentError("sample_uniform requires a box domain");
  if (count < 0) throw ArgumentError("sample count must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<TransformPoint> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    TransformPoint p;
    p.params.resize(static_cast<std::size_t>(domain.dim()));
    for (int d = 0; d < domain.dim(); ++d) {
      const double lo = domain.lower()[d];
      const double hi = domain.upper()[d];
      p.params[d] = std::min(hi, lo + (hi - lo) * unit(rng));
    }
    out.push_back(std::move(p));
  }
  return out;
}

/// Cartesian product of inclusive uniform grids, last dimension fastest.
/// A count of 1 places the single sample at the box midpoint.
inline std::vector<TransformPoint> grid_points(const TransformDomain& domain,
                                               const std::vector<int>& per_dim) {
  if (domain.is_discrete()) throw ArgumentError("grid_points requires a box domain");
  if (static_cast<int>(per_dim.size()) != domain.dim()) {
    throw DimensionMismatch("per_dim length must equal domain dimension");
  }
  std::vector<std::vector<double>> axes(per_dim.size());
  std::size_t total = 1;
  for (std::size_t d = 0; d < per_dim.size(); ++d) {
    const int n = per_dim[d];
    if (n < 1) throw ArgumentError("grid count must be >= 1 in every dimension");
    const double lo = domain.lower()[d];
    const double hi = domain.upper()[d];
    if (n == 1) {
      axes[d].push_back(0.5 * (lo + hi));
    } else {
      for (int i = 0; i < n; ++i) {
        axes[d].push_back(i == n - 1 ? hi : lo + (hi - lo) * i / (n - 1));
      }
    }
    total *= static_cast<std::size_t>(n);
  }
  std::vector<TransformPoint> out;
  out.reserve(total);
  std::vector<std::size_t> idx(per_dim.size(), 0);
  for (std::size_t k = 0; k < total; ++k) {
    TransformPoint p;
    for (std::size_t d = 0; d < per_dim.size(); ++d) p.params.push_back(axes[d][idx[d]]);
    out.push_back(std::move(p));
    for (std::size_t d = per_dim.size(); d-- > 0;) {
      if (++idx[d] < axes[d].size()) break;
      idx[d] = 0;
    }
  }
  return out;
}

}  // namespace canon
