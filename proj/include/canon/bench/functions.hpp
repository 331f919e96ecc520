#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "canon/energy.hpp"
#include "canon/error.hpp"
#include "canon/optimize.hpp"
#include "canon/transforms.hpp"

// Test functions for checking the optimizer against a known minimum. Each
// seed draws a fresh instance (center, applied shift) and a fresh BO seed.

namespace canon::bench {

struct FunctionInstance {
  TransformDomain domain = TransformDomain::box({0.0}, {1.0});
  Objective f;
  BoConfig config;
  double oracle_value = 0.0;
  TransformPoint oracle_point;
  TransformPoint decoy;  // local minimum that does not count as success
};

struct SyntheticFunction {
  std::string name;
  std::string success_rule;  // for reports
  std::function<FunctionInstance(std::uint64_t seed)> make;
  std::function<bool(const FunctionInstance&, const OptTrace&)> success;
};

/// Exhaustive grid minimum; the oracle for low-dimensional instances.
inline std::pair<TransformPoint, double> grid_oracle(const TransformDomain& domain, const Objective& f,
                                                     int per_dim) {
  TransformPoint best;
  double best_value = std::numeric_limits<double>::infinity();
  for (auto& p : grid_points(domain, std::vector<int>(static_cast<std::size_t>(domain.dim()), per_dim))) {
    const double v = f(p);
    if (v < best_value) {
      best_value = v;
      best = std::move(p);
    }
  }
  return {best, best_value};
}

inline BoConfig contrast_budget() {
  BoConfig c;
  c.grid_per_dim = {3};
  c.n_random = 4;
  c.n_iters = 5;
  return c;
}

/// Energy |t + a| over log-gamma t in [-2, 2] for an applied shift a; the
/// minimizer is the inverse shift. Success: within 0.05 of the 1000-point grid
/// oracle argmin.
inline SyntheticFunction contrast_1d() {
  SyntheticFunction fn;
  fn.name = "contrast-1d";
  fn.success_rule = "|best_point - oracle_point| <= 0.05 (1000-point grid oracle)";
  fn.make = [](std::uint64_t seed) {
    std::mt19937_64 rng(splitmix64(seed ^ 0xC0));
    const double applied = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
    FunctionInstance in;
    in.domain = TransformDomain::box({-2.0}, {2.0});
    in.f = [applied](const TransformPoint& t) { return std::abs(t[0] + applied); };
    in.config = contrast_budget();
    in.config.seed = seed;
    std::tie(in.oracle_point, in.oracle_value) = grid_oracle(in.domain, in.f, 1000);
    return in;
  };
  fn.success = [](const FunctionInstance& in, const OptTrace& trace) {
    return std::abs(trace.best_point[0] - in.oracle_point[0]) <= 0.05;
  };
  return fn;
}

/// ||x - c||^2 over [-1, 1]^2 with c uniform in [-0.8, 0.8]^2, searched with
/// the 3x3 + 6 + 20 schedule. Success: within 1e-2 of the 200x200 grid minimum.
inline SyntheticFunction bowl_2d() {
  SyntheticFunction fn;
  fn.name = "bowl-2d";
  fn.success_rule = "best_value - oracle_value <= 1e-2 (200x200 grid oracle)";
  fn.make = [](std::uint64_t seed) {
    std::mt19937_64 rng(splitmix64(seed ^ 0xB2));
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    const double cx = u(rng), cy = u(rng);
    FunctionInstance in;
    in.domain = TransformDomain::box({-1.0, -1.0}, {1.0, 1.0});
    in.f = [cx, cy](const TransformPoint& p) { return (p[0] - cx) * (p[0] - cx) + (p[1] - cy) * (p[1] - cy); };
    in.config = BoConfig{};
    in.config.seed = seed;
    std::tie(in.oracle_point, in.oracle_value) = grid_oracle(in.domain, in.f, 200);
    return in;
  };
  fn.success = [](const FunctionInstance& in, const OptTrace& trace) {
    return trace.best_value - in.oracle_value <= 1e-2;
  };
  return fn;
}

/// ||x - c||^2 over [-1, 1]^6 with 450 random points and 150 GP-EI steps. The
/// oracle is the analytic minimum 0 at c.
inline SyntheticFunction bowl_6d() {
  SyntheticFunction fn;
  fn.name = "bowl-6d";
  fn.success_rule = "best_value - oracle_value <= 0.05 (analytic oracle)";
  fn.make = [](std::uint64_t seed) {
    std::mt19937_64 rng(splitmix64(seed ^ 0xB6));
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    std::vector<double> c(6);
    for (double& v : c) v = u(rng);
    FunctionInstance in;
    in.domain = TransformDomain::box(std::vector<double>(6, -1.0), std::vector<double>(6, 1.0));
    in.f = [c](const TransformPoint& p) {
      double s = 0.0;
      for (std::size_t i = 0; i < c.size(); ++i) s += (p[i] - c[i]) * (p[i] - c[i]);
      return s;
    };
    in.config.grid_per_dim = {};
    in.config.n_random = 450;
    in.config.n_iters = 150;
    in.config.seed = seed;
    in.oracle_point = {c};
    in.oracle_value = 0.0;
    return in;
  };
  fn.success = [](const FunctionInstance& in, const OptTrace& trace) {
    return trace.best_value - in.oracle_value <= 0.05;
  };
  return fn;
}

/// Two Gaussian wells of depth 1 and 0.6 in [-1, 1]^2 at seeded, well
/// separated centers. Success: the best point lies in the deeper well's basin
/// (nearer its center) and below the shallow well's floor.
inline SyntheticFunction two_basin() {
  SyntheticFunction fn;
  fn.name = "two-basin";
  fn.success_rule = "best point nearer the deep well and best_value < -0.6";
  fn.make = [](std::uint64_t seed) {
    std::mt19937_64 rng(splitmix64(seed ^ 0x2B));
    std::uniform_real_distribution<double> u(-0.6, 0.6);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * 3.14159265358979323846);
    const double ax = u(rng), ay = u(rng);
    const double th = angle(rng);
    // Shallow well 0.9 away from the deep one, reflected back into the box.
    double bx = ax + 0.9 * std::cos(th), by = ay + 0.9 * std::sin(th);
    if (std::abs(bx) > 0.8) bx = ax - 0.9 * std::cos(th);
    if (std::abs(by) > 0.8) by = ay - 0.9 * std::sin(th);
    const double s2 = 2.0 * 0.2 * 0.2;
    FunctionInstance in;
    in.domain = TransformDomain::box({-1.0, -1.0}, {1.0, 1.0});
    in.f = [=](const TransformPoint& p) {
      const double da = (p[0] - ax) * (p[0] - ax) + (p[1] - ay) * (p[1] - ay);
      const double db = (p[0] - bx) * (p[0] - bx) + (p[1] - by) * (p[1] - by);
      return -std::exp(-da / s2) - 0.6 * std::exp(-db / s2);
    };
    in.config = BoConfig{};
    in.config.seed = seed;
    in.oracle_point = {{ax, ay}};
    in.decoy = {{bx, by}};
    in.oracle_value = in.f(TransformPoint{{ax, ay}});
    return in;
  };
  fn.success = [](const FunctionInstance& in, const OptTrace& trace) {
    const auto& b = trace.best_point;
    const double da = std::hypot(b[0] - in.oracle_point[0], b[1] - in.oracle_point[1]);
    const double db = std::hypot(b[0] - in.decoy[0], b[1] - in.decoy[1]);
    return da < db && trace.best_value < -0.6;
  };
  return fn;
}

inline SyntheticFunction synthetic_function(const std::string& name) {
  if (name == "contrast-1d") return contrast_1d();
  if (name == "bowl-2d") return bowl_2d();
  if (name == "bowl-6d") return bowl_6d();
  if (name == "two-basin") return two_basin();
  throw ConfigError("unknown synthetic function '" + name + "' (known: contrast-1d, bowl-2d, bowl-6d, two-basin)");
}

}  // namespace canon::bench
