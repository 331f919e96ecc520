#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "canon/error.hpp"
#include "canon/image.hpp"

namespace canon {

struct Logits {
  std::vector<double> values;
};

/// Weights and sampling settings for the combined energy
///   E = gamma1 * (alpha * mean - beta * max)(logits) + gamma2 * E_diffusion.
struct EnergySpec {
  double alpha = 1.0;
  double beta = 0.5;
  double gamma1 = 1.0;
  double gamma2 = 0.0;
  std::vector<std::string> prompts;
  std::optional<std::string> normalizing_prompt;
  double temperature = 1.0;
  std::vector<int> timesteps;
  int mc_samples = 1;
  std::uint64_t noise_seed = 0;

  void validate() const {
    if (!(temperature > 0.0)) throw ArgumentError("temperature must be > 0");
    if (mc_samples < 1) throw ArgumentError("mc_samples must be >= 1");
    for (std::size_t i = 1; i < timesteps.size(); ++i) {
      if (timesteps[i] <= timesteps[i - 1]) {
        throw ArgumentError("timesteps must be strictly increasing");
      }
    }
    if (gamma1 != 0.0 && prompts.empty()) throw ArgumentError("gamma1 != 0 requires prompts");
    if (gamma2 != 0.0 && timesteps.empty()) throw ArgumentError("gamma2 != 0 requires timesteps");
  }
};

/// Discrete diffusion schedule. Timesteps are 1-indexed: alpha_bar(t) is the
/// product of (1 - beta_i) for i = 1..t.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  explicit NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
    if (betas_.empty()) throw ArgumentError("noise schedule needs at least one beta");
    alpha_bars_.reserve(betas_.size());
    double running = 1.0;
    for (double b : betas_) {
      if (!(b > 0.0 && b < 1.0)) throw ArgumentError("beta values must lie in (0, 1)");
      running *= 1.0 - b;
      alpha_bars_.push_back(running);
    }
  }

  int length() const { return static_cast<int>(betas_.size()); }
  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }

  double alpha_bar(int t) const {
    if (t < 1 || t > length()) {
      throw IndexError("timestep " + std::to_string(t) + " outside schedule [1, " +
                       std::to_string(length()) + "]");
    }
    return alpha_bars_[static_cast<std::size_t>(t - 1)];
  }

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

inline double alpha_bar(const NoiseSchedule& schedule, int t) { return schedule.alpha_bar(t); }

inline NoiseSchedule make_linear_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ArgumentError("schedule length must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ArgumentError("linear schedule requires 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    betas[static_cast<std::size_t>(i)] =
        steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (steps - 1);
  }
  return NoiseSchedule(std::move(betas));
}

/// Scoring capability behind the energies: zero-shot logits and the mean
/// squared denoising residual at one timestep. Implementations must be
/// deterministic given their inputs and seed.
class EnergyBackend {
 public:
  virtual ~EnergyBackend() = default;

  virtual Logits logits(const Image& image, std::span<const std::string> prompts) const = 0;

  /// Mean over latent elements of (eps - eps_theta(x_t, t))^2 where eps is
  /// drawn from `seed`.
  virtual double denoise_error(const Image& image, int timestep, std::uint64_t seed) const = 0;

  virtual std::string descriptor() const = 0;

  /// False when calls must be serialized by the caller.
  virtual bool concurrent_calls() const { return true; }
};

inline double classifier_energy(const Logits& logits, double alpha, double beta) {
  if (logits.values.empty()) throw EmptyLogits("classifier energy needs at least one logit");
  const auto& v = logits.values;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  const double max = *std::max_element(v.begin(), v.end());
  return alpha * mean - beta * max;
}

/// Subtracts the normalizing prompt's logit from every class logit and divides
/// by the temperature before the mean/max combination.
inline double normalized_classifier_energy(const Logits& logits, double norm_logit,
                                           const EnergySpec& spec) {
  if (!spec.normalizing_prompt) {
    throw MissingNormPrompt("normalized classifier energy requires a normalizing prompt");
  }
  if (!(spec.temperature > 0.0)) throw ArgumentError("temperature must be > 0");
  Logits shifted = logits;
  for (double& v : shifted.values) v = (v - norm_logit) / spec.temperature;
  return classifier_energy(shifted, spec.alpha, spec.beta);
}

/// x_t = sqrt(alpha_bar_t) * x + sqrt(1 - alpha_bar_t) * eps.
inline std::vector<double> noisy_input(std::span<const double> x, int t, std::span<const double> noise,
                                       const NoiseSchedule& schedule) {
  if (x.size() != noise.size()) {
    throw DimensionMismatch("image tensor and noise differ in length");
  }
  const double ab = schedule.alpha_bar(t);
  const double signal = std::sqrt(ab);
  const double spread = std::sqrt(1.0 - ab);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = signal * x[i] + spread * noise[i];
  return out;
}

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Noise seed for Monte-Carlo draw k at timestep t. Independent of the image,
/// so every candidate in one canonicalization sees the same draws.
inline std::uint64_t derive_noise_seed(std::uint64_t noise_seed, int k, int t) {
  const std::uint64_t lane = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(k)) << 32) |
                             static_cast<std::uint32_t>(t);
  return splitmix64(noise_seed ^ splitmix64(lane));
}

inline double diffusion_energy(const Image& image, const EnergySpec& spec,
                               const NoiseSchedule& schedule, const EnergyBackend& backend) {
  if (spec.timesteps.empty()) throw ArgumentError("diffusion energy needs timesteps");
  if (spec.mc_samples < 1) throw ArgumentError("mc_samples must be >= 1");
  double outer = 0.0;
  for (int t : spec.timesteps) {
    schedule.alpha_bar(t);  // range check
    double inner = 0.0;
    for (int k = 0; k < spec.mc_samples; ++k) {
      try {
        inner += backend.denoise_error(image, t, derive_noise_seed(spec.noise_seed, k, t));
      } catch (...) {
        rethrow_with_context("denoise_error(t=" + std::to_string(t) + ", k=" + std::to_string(k) + ")");
      }
    }
    outer += inner / spec.mc_samples;
  }
  return outer / static_cast<double>(spec.timesteps.size());
}

/// Classifier term of the combined energy: one logits call, with the
/// normalizing prompt appended when configured.
inline double classifier_term(const Image& image, const EnergySpec& spec, const EnergyBackend& backend) {
  if (!spec.normalizing_prompt) {
    return classifier_energy(backend.logits(image, spec.prompts), spec.alpha, spec.beta);
  }
  std::vector<std::string> prompts = spec.prompts;
  prompts.push_back(*spec.normalizing_prompt);
  Logits all = backend.logits(image, prompts);
  if (all.values.size() != prompts.size()) {
    throw BackendError("backend returned " + std::to_string(all.values.size()) + " logits for " +
                       std::to_string(prompts.size()) + " prompts");
  }
  const double norm = all.values.back();
  all.values.pop_back();
  return normalized_classifier_energy(all, norm, spec);
}

struct EnergyTerms {
  double classifier = 0.0;
  double diffusion = 0.0;
  double total = 0.0;
};

/// Both terms plus their weighted sum. A term whose weight is zero is not
/// evaluated and its backend is not called.
inline EnergyTerms combined_energy_terms(const Image& image, const EnergySpec& spec,
                                         const NoiseSchedule& schedule, const EnergyBackend& backend) {
  if (spec.gamma1 == 0.0 && spec.gamma2 == 0.0) {
    throw BothWeightsZero("gamma1 and gamma2 are both zero");
  }
  EnergyTerms terms;
  if (spec.gamma1 != 0.0) terms.classifier = classifier_term(image, spec, backend);
  if (spec.gamma2 != 0.0) terms.diffusion = diffusion_energy(image, spec, schedule, backend);
  terms.total = (spec.gamma1 != 0.0 ? spec.gamma1 * terms.classifier : 0.0) +
                (spec.gamma2 != 0.0 ? spec.gamma2 * terms.diffusion : 0.0);
  return terms;
}

inline double combined_energy(const Image& image, const EnergySpec& spec, const NoiseSchedule& schedule,
                              const EnergyBackend& backend) {
  return combined_energy_terms(image, spec, schedule, backend).total;
}

}  // namespace canon
