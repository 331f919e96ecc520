#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "canon/energy.hpp"
#include "canon/error.hpp"
#include "canon/image.hpp"

namespace canon {

/// Backend assembled from callables; the fixture workhorse for tests.
class LambdaBackend final : public EnergyBackend {
 public:
  using LogitsFn = std::function<Logits(const Image&, std::span<const std::string>)>;
  using DenoiseFn = std::function<double(const Image&, int, std::uint64_t)>;

  LambdaBackend(LogitsFn logits, DenoiseFn denoise, std::string name = "lambda")
      : logits_(std::move(logits)), denoise_(std::move(denoise)), name_(std::move(name)) {}

  Logits logits(const Image& image, std::span<const std::string> prompts) const override {
    if (!logits_) throw BackendError(name_ + ": no logits function");
    return logits_(image, prompts);
  }
  double denoise_error(const Image& image, int timestep, std::uint64_t seed) const override {
    if (!denoise_) throw BackendError(name_ + ": no denoiser");
    return denoise_(image, timestep, seed);
  }
  std::string descriptor() const override { return name_; }

 private:
  LogitsFn logits_;
  DenoiseFn denoise_;
  std::string name_;
};

/// Decorator that counts calls into another backend.
class CountingBackend final : public EnergyBackend {
 public:
  explicit CountingBackend(const EnergyBackend& inner) : inner_(inner) {}

  Logits logits(const Image& image, std::span<const std::string> prompts) const override {
    logits_calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_.logits(image, prompts);
  }
  double denoise_error(const Image& image, int timestep, std::uint64_t seed) const override {
    denoise_calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_.denoise_error(image, timestep, seed);
  }
  std::string descriptor() const override { return inner_.descriptor(); }
  bool concurrent_calls() const override { return inner_.concurrent_calls(); }

  long logits_calls() const { return logits_calls_.load(); }
  long denoise_calls() const { return denoise_calls_.load(); }

 private:
  const EnergyBackend& inner_;
  mutable std::atomic<long> logits_calls_{0};
  mutable std::atomic<long> denoise_calls_{0};
};

// ---------------------------------------------------------------------------
// Synthetic scoring. Fixture images carry their label in the center pixel
// (each channel either 0 or 1, giving a 3-bit code); the center of an odd-sized
// raster is fixed by rotation about the center, by gamma and by clamped
// channel scaling, so the label survives every corruption the bench applies.
// ---------------------------------------------------------------------------

enum class SyntheticCue { Upright, Neutral, Midtone, Constant };

inline int watermark_label(const Image& image) {
  const Rgb c = image.rgb(image.height() / 2, image.width() / 2);
  return (c[0] > 0.05 ? 4 : 0) + (c[1] > 0.05 ? 2 : 0) + (c[2] > 0.05 ? 1 : 0);
}

inline bool is_watermark(const Image& image, int y, int x) {
  return y == image.height() / 2 && x == image.width() / 2;
}

inline double luminance(const Rgb& c) { return 0.2126 * c[0] + 0.7152 * c[1] + 0.0722 * c[2]; }

/// (1 + corr(luminance, height above center)) / 2 over the inscribed disk:
/// 1 when brightness increases straight up, 0 when it increases straight down.
inline double uprightness(const Image& image) {
  const double r = inscribed_radius(image);
  const double cy = (image.height() - 1) / 2.0;
  double n = 0, sl = 0, sh = 0, sll = 0, shh = 0, slh = 0;
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      if (!inside_disk(image, y, x, r) || is_watermark(image, y, x)) continue;
      const double l = luminance(image.rgb(y, x));
      const double h = cy - y;
      n += 1;
      sl += l;
      sh += h;
      sll += l * l;
      shh += h * h;
      slh += l * h;
    }
  }
  if (n < 2) return 0.5;
  const double cov = slh - sl * sh / n;
  const double vl = sll - sl * sl / n;
  const double vh = shh - sh * sh / n;
  if (vl <= 1e-15 || vh <= 0) return 0.5;
  return std::clamp(0.5 * (1.0 + cov / std::sqrt(vl * vh)), 0.0, 1.0);
}

/// Gray-world score: 1 when the R, G and B channel means agree, decaying with
/// the squared log ratios R/G and B/G.
inline double neutrality(const Image& image) {
  double m[3] = {0, 0, 0};
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x) {
      if (is_watermark(image, y, x)) continue;
      for (int c = 0; c < 3; ++c) m[c] += image.at(y, x, c);
    }
  const double eps = 1e-9;
  const double lr = std::log((m[0] + eps) / (m[1] + eps));
  const double lb = std::log((m[2] + eps) / (m[1] + eps));
  return std::exp(-(lr * lr + lb * lb) / (2.0 * 0.25 * 0.25));
}

/// Green-channel median mapped to a log-gamma offset: 0 when the median is
/// 0.5, and equal to log(gamma) after x -> x^gamma of an image whose median
/// was 0.5.
inline double midtone_offset(const Image& image) {
  std::vector<double> g;
  g.reserve(static_cast<std::size_t>(image.height()) * image.width());
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      if (!is_watermark(image, y, x)) g.push_back(image.at(y, x, 1));
  auto mid = g.begin() + static_cast<std::ptrdiff_t>(g.size() / 2);
  std::nth_element(g.begin(), mid, g.end());
  const double m = std::clamp(*mid, 1e-6, 1.0 - 1e-6);
  return std::log(std::log(m) / std::log(0.5));
}

inline double midtone(const Image& image) {
  const double s = midtone_offset(image);
  return std::exp(-s * s / (2.0 * 0.5 * 0.5));
}

/// Synthetic scorer. Logits peak on the watermark label when the cue is
/// satisfied and drift to the next label otherwise; with three or more
/// prompts and alpha=1, beta=0.5 the classifier energy is uniquely minimized
/// where the cue equals 1. The denoiser is a local-mean predictor, so its
/// residual grows with high-frequency content.
class SyntheticBackend final : public EnergyBackend {
 public:
  struct Options {
    SyntheticCue cue = SyntheticCue::Upright;
    double sharpness = 8.0;
    double label_weight = 2.0;
    double wrong_weight = 0.8;
    int latent_size = 16;
    NoiseSchedule schedule = make_linear_schedule(1000, 0.00085, 0.012);
  };

  SyntheticBackend() : SyntheticBackend(Options{}) {}
  explicit SyntheticBackend(Options options) : options_(std::move(options)) {}

  double cue(const Image& image) const {
    switch (options_.cue) {
      case SyntheticCue::Upright: return uprightness(image);
      case SyntheticCue::Neutral: return neutrality(image);
      case SyntheticCue::Midtone: return midtone(image);
      case SyntheticCue::Constant: return 1.0;
    }
    return 1.0;
  }

  Logits logits(const Image& image, std::span<const std::string> prompts) const override {
    const std::size_t k = prompts.size();
    Logits out{std::vector<double>(k, 0.0)};
    if (k == 0) return out;
    const double q = std::pow(cue(image), options_.sharpness);
    const std::size_t label = static_cast<std::size_t>(watermark_label(image)) % k;
    out.values[label] += options_.label_weight * q;
    if (k > 1) out.values[(label + 1) % k] += options_.wrong_weight * (1.0 - q);
    return out;
  }

  double denoise_error(const Image& image, int timestep, std::uint64_t seed) const override {
    const int s = options_.latent_size;
    const Image small = resize_bilinear(image, s, s);
    std::vector<double> x(small.size());
    const auto px = small.pixels();
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 2.0 * px[i] - 1.0;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> eps(x.size());
    for (double& e : eps) e = normal(rng);

    const std::vector<double> xt = noisy_input(x, timestep, eps, options_.schedule);
    const double spread = std::sqrt(1.0 - options_.schedule.alpha_bar(timestep));
    double err = 0.0;
    for (int y = 0; y < s; ++y) {
      for (int xx = 0; xx < s; ++xx) {
        for (int c = 0; c < 3; ++c) {
          double sum = 0.0;
          int n = 0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int yy = y + dy, xc = xx + dx;
              if (yy < 0 || yy >= s || xc < 0 || xc >= s) continue;
              sum += xt[(static_cast<std::size_t>(yy) * s + xc) * 3 + c];
              ++n;
            }
          const std::size_t i = (static_cast<std::size_t>(y) * s + xx) * 3 + c;
          const double predicted = (xt[i] - sum / n) / spread;
          err += (eps[i] - predicted) * (eps[i] - predicted);
        }
      }
    }
    return err / static_cast<double>(x.size());
  }

  std::string descriptor() const override {
    static const char* names[] = {"upright", "neutral", "midtone", "constant"};
    return std::string("synthetic:") + names[static_cast<int>(options_.cue)];
  }

  const Options& options() const { return options_; }

 private:
  Options options_;
};

/// Linear image encoder plus a prompt embedding table read from JSON:
///   {"input_size": [h, w], "image_projection": [[...], ...],
///    "text_embeddings": {"prompt": [...], ...}}
/// Logits are cosine similarities. There is no denoiser.
class LocalEmbeddingBackend final : public EnergyBackend {
 public:
  static LocalEmbeddingBackend from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open local model file " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
    return from_json(j);
  }

  static LocalEmbeddingBackend from_json(const nlohmann::json& j) {
    LocalEmbeddingBackend b;
    try {
      b.height_ = j.at("input_size").at(0).get<int>();
      b.width_ = j.at("input_size").at(1).get<int>();
      b.projection_ = j.at("image_projection").get<std::vector<std::vector<double>>>();
      b.text_ = j.at("text_embeddings").get<std::map<std::string, std::vector<double>>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("local model: ") + e.what());
    }
    const std::size_t in_dim = static_cast<std::size_t>(b.height_) * b.width_ * 3;
    if (b.projection_.empty()) throw FormatError("local model: empty projection");
    for (const auto& row : b.projection_) {
      if (row.size() != in_dim) throw FormatError("local model: projection row width mismatch");
    }
    for (const auto& [prompt, v] : b.text_) {
      if (v.size() != b.projection_.size()) {
        throw FormatError("local model: embedding size mismatch for '" + prompt + "'");
      }
    }
    return b;
  }

  Logits logits(const Image& image, std::span<const std::string> prompts) const override {
    const Image small = resize_bilinear(image, height_, width_);
    const auto px = small.pixels();
    std::vector<double> feat(projection_.size(), 0.0);
    for (std::size_t r = 0; r < projection_.size(); ++r) {
      for (std::size_t i = 0; i < px.size(); ++i) feat[r] += projection_[r][i] * px[i];
    }
    Logits out;
    for (const auto& p : prompts) {
      auto it = text_.find(p);
      if (it == text_.end()) throw BackendError("local model has no embedding for prompt '" + p + "'");
      out.values.push_back(cosine(feat, it->second));
    }
    return out;
  }

  double denoise_error(const Image&, int, std::uint64_t) const override {
    throw BackendError("local embedding backend has no denoiser; set gamma2 = 0");
  }

  std::string descriptor() const override { return "local-embedding"; }

 private:
  static double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ab += a[i] * b[i];
      aa += a[i] * a[i];
      bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) return 0.0;
    return ab / std::sqrt(aa * bb);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::vector<double>> projection_;
  std::map<std::string, std::vector<double>> text_;
};

}  // namespace canon
