#pragma once

#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "canon/backends.hpp"
#include "canon/energy.hpp"
#include "canon/error.hpp"
#include "canon/image.hpp"
#include "canon/optimize.hpp"
#include "canon/serialize.hpp"
#include "canon/transforms.hpp"

namespace canon {

struct CostCounter {
  long n_transform = 0;
  long n_logits_calls = 0;
  long n_denoise_calls = 0;
  long n_inference = 0;

  CostCounter& operator+=(const CostCounter& o) {
    n_transform += o.n_transform;
    n_logits_calls += o.n_logits_calls;
    n_denoise_calls += o.n_denoise_calls;
    n_inference += o.n_inference;
    return *this;
  }
  friend bool operator==(const CostCounter&, const CostCounter&) = default;
};

inline json to_json_value(const CostCounter& c) {
  return {{"n_transform", c.n_transform},
          {"n_logits_calls", c.n_logits_calls},
          {"n_denoise_calls", c.n_denoise_calls},
          {"n_inference", c.n_inference}};
}

/// Cost of one canonicalization: every candidate is transformed and scored,
/// then the downstream model runs once on the winner.
inline CostCounter predicted_cost(int n_candidates, int timesteps, int mc_samples, bool use_classifier,
                                  bool use_diffusion) {
  if (n_candidates < 0 || timesteps < 0 || mc_samples < 0) {
    throw ArgumentError("predicted_cost inputs must be nonnegative");
  }
  CostCounter c;
  c.n_transform = n_candidates;
  c.n_logits_calls = use_classifier ? n_candidates : 0;
  c.n_denoise_calls = use_diffusion ? static_cast<long>(n_candidates) * timesteps * mc_samples : 0;
  c.n_inference = 1;
  return c;
}

struct Prediction {
  int label = 0;
  Logits logits;
};

/// Downstream zero-shot prediction: argmax of the logits, first index on ties.
inline Prediction predict(const Image& image, const std::vector<std::string>& prompts,
                          const EnergyBackend& backend) {
  if (prompts.empty()) throw ArgumentError("predict needs at least one prompt");
  Prediction p;
  p.logits = backend.logits(image, prompts);
  if (p.logits.values.empty()) throw BackendError("backend returned no logits");
  for (std::size_t i = 1; i < p.logits.values.size(); ++i) {
    if (p.logits.values[i] > p.logits.values[static_cast<std::size_t>(p.label)]) {
      p.label = static_cast<int>(i);
    }
  }
  return p;
}

struct CanonOptions {
  int workers = 1;
  /// Score candidates with everything outside the inscribed disk set to
  /// black, so rotation fill never reaches the energy.
  bool crop_disk = false;
  bool run_inference = true;
  /// Downstream prompts; falls back to the energy prompts.
  std::optional<std::vector<std::string>> inference_prompts;
};

struct CanonResult {
  TransformPoint best_point;
  Image canonical;
  OptTrace trace;
  CostCounter cost;
  std::string spec_digest;
  std::optional<Prediction> prediction;
};

inline std::string canon_digest(const TransformKind& kind, const TransformDomain& domain,
                                const EnergySpec& spec, const BoConfig& opt) {
  json j = {{"kind", to_json_value(kind)}, {"domain", to_json_value(domain)}, {"energy", to_json_value(spec)}};
  j["optimizer"] = domain.is_discrete() ? json("exhaustive") : to_json_value(opt);
  return digest_of(j);
}

/// Vary and rank: scores apply_point(kind, t, image) for candidates t drawn
/// from `domain` (all of them when discrete, GP-EI otherwise) and keeps the
/// lowest combined energy.
inline CanonResult canonicalize(const Image& image, const TransformKind& kind, const TransformDomain& domain,
                                const EnergySpec& spec, const NoiseSchedule& schedule,
                                const EnergyBackend& backend, const BoConfig& opt,
                                const CanonOptions& options = {}) {
  if (domain.dim() != kind.dim()) {
    throw DimensionMismatch("domain dimension " + std::to_string(domain.dim()) + " does not match " +
                            kind.name() + " (" + std::to_string(kind.dim()) + ")");
  }
  spec.validate();
  const CountingBackend counted(backend);
  std::atomic<long> transforms{0};
  const bool acts = kind.acts_on_image();

  const Objective energy_at = [&](const TransformPoint& t) {
    Image candidate = apply_point(kind, t, image);
    if (acts) transforms.fetch_add(1, std::memory_order_relaxed);
    if (options.crop_disk) candidate = disk_mask(candidate);
    return combined_energy(candidate, spec, schedule, counted);
  };

  const int workers = backend.concurrent_calls() ? options.workers : 1;
  CanonResult result;
  if (domain.is_discrete()) {
    result.trace = grid_minimize(domain, energy_at, workers);
  } else {
    BoConfig cfg = opt;
    cfg.workers = workers;
    result.trace = bo_minimize(domain, energy_at, cfg);
  }
  result.best_point = result.trace.best_point;
  result.canonical = apply_point(kind, result.best_point, image);
  result.cost.n_transform = transforms.load();
  result.cost.n_logits_calls = counted.logits_calls();
  result.cost.n_denoise_calls = counted.denoise_calls();
  result.spec_digest = canon_digest(kind, domain, spec, opt);

  if (options.run_inference) {
    const auto& prompts = options.inference_prompts ? *options.inference_prompts : spec.prompts;
    if (!prompts.empty()) {
      result.prediction = predict(result.canonical, prompts, backend);
      result.cost.n_inference = 1;
    }
  }
  return result;
}

struct InvarianceOptions {
  /// Exact: canonical images must be bit-identical. Otherwise their mean
  /// absolute difference must stay below `tolerance`.
  bool exact = true;
  double tolerance = 2.0 / 255.0;
  /// Restricts the approximate comparison to a centered disk; negative means
  /// the whole raster.
  double radius = -1.0;
  CanonOptions canon;
};

struct InvarianceResult {
  bool holds = false;
  TransformPoint point_original;
  TransformPoint point_transformed;
  double mean_abs_diff = 0.0;
};

/// Checks h(t(x))(t(x)) == h(x)(x): canonicalizes x and t_applied(x) and
/// compares the two canonical images.
inline InvarianceResult invariance_check(const Image& image, const TransformKind& kind,
                                         const TransformPoint& t_applied, const TransformDomain& domain,
                                         const EnergySpec& spec, const NoiseSchedule& schedule,
                                         const EnergyBackend& backend, const BoConfig& opt,
                                         const InvarianceOptions& options = {}) {
  CanonOptions canon = options.canon;
  canon.run_inference = false;
  const Image moved = apply_point(kind, t_applied, image);
  const CanonResult a = canonicalize(image, kind, domain, spec, schedule, backend, opt, canon);
  const CanonResult b = canonicalize(moved, kind, domain, spec, schedule, backend, opt, canon);
  InvarianceResult r;
  r.point_original = a.best_point;
  r.point_transformed = b.best_point;
  r.mean_abs_diff = mean_abs_diff(a.canonical, b.canonical, options.radius);
  r.holds = options.exact ? a.canonical == b.canonical : r.mean_abs_diff < options.tolerance;
  return r;
}

/// Cheap pre-check: true when the image already looks upright, i.e. both
/// quarter turns raise the energy by at least `threshold`. Scores with the
/// classifier term only unless the classifier weight is zero.
inline bool gate_upright(const Image& image, const EnergySpec& spec, const NoiseSchedule& schedule,
                         const EnergyBackend& backend, double threshold, bool crop_disk = false) {
  EnergySpec gate_spec = spec;
  if (gate_spec.gamma1 != 0.0) gate_spec.gamma2 = 0.0;
  auto energy = [&](const Image& x) {
    return combined_energy(crop_disk ? disk_mask(x) : x, gate_spec, schedule, backend);
  };
  const double e0 = energy(image);
  const double e_plus = energy(rotate(image, 90.0));
  const double e_minus = energy(rotate(image, -90.0));
  return std::min(e_plus, e_minus) - e0 >= threshold;
}

}  // namespace canon
