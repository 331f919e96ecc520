#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "canon/energy.hpp"
#include "canon/error.hpp"
#include "canon/gp.hpp"
#include "canon/parallel.hpp"
#include "canon/transforms.hpp"

namespace canon {

enum class Stage { Grid, Random, Bo };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::Grid: return "grid";
    case Stage::Random: return "random";
    case Stage::Bo: return "bo";
  }
  return "?";
}

struct Evaluation {
  TransformPoint point;
  double value = 0.0;
  Stage stage = Stage::Grid;
};

/// Every evaluation in order plus the incumbent. Ties keep the earliest entry.
struct OptTrace {
  std::vector<Evaluation> evaluations;
  TransformPoint best_point;
  double best_value = std::numeric_limits<double>::infinity();
  std::size_t best_index = 0;

  void record(TransformPoint point, double value, Stage stage) {
    if (evaluations.empty() || value < best_value) {
      best_value = value;
      best_point = point;
      best_index = evaluations.size();
    }
    evaluations.push_back({std::move(point), value, stage});
  }

  std::size_t size() const { return evaluations.size(); }
};

/// Initial design and search settings for GP-EI minimization. Defaults are the
/// 2D color schedule: 3x3 grid, 6 random points, 20 iterations.
struct BoConfig {
  std::vector<int> grid_per_dim = {3, 3};
  int n_random = 6;
  int n_iters = 20;
  std::uint64_t seed = 0;
  double xi = 0.0;  // in standardized-target units
  int candidate_count = 2048;
  double lengthscale = 0.2;  // in unit-box coordinates
  double signal_var = 1.0;
  double noise_var = 1e-6;
  double local_sigma = 0.05;  // spread of local candidates, unit-box coordinates
  int workers = 1;            // initial design only

  int grid_size() const {
    int n = grid_per_dim.empty() ? 0 : 1;
    for (int k : grid_per_dim) n *= k;
    return n;
  }
  int budget() const { return grid_size() + n_random + n_iters; }

  void validate(int dim) const {
    if (!grid_per_dim.empty() && static_cast<int>(grid_per_dim.size()) != dim) {
      throw ArgumentError("grid_per_dim has " + std::to_string(grid_per_dim.size()) +
                          " entries for a " + std::to_string(dim) + "-dimensional box");
    }
    for (int k : grid_per_dim) {
      if (k < 1) throw ArgumentError("grid_per_dim entries must be >= 1");
    }
    if (n_random < 0 || n_iters < 0) throw ArgumentError("n_random and n_iters must be >= 0");
    if (grid_size() + n_random < 1) throw ArgumentError("initial design must contain a point");
    if (candidate_count < 1) throw ArgumentError("candidate_count must be >= 1");
    if (xi < 0.0) throw ArgumentError("xi must be >= 0");
  }
};

using Objective = std::function<double(const TransformPoint&)>;

namespace detail {

inline double evaluate_at(const Objective& f, const TransformPoint& p) {
  try {
    const double v = f(p);
    if (!std::isfinite(v)) throw EvaluationError("objective returned a non-finite value");
    return v;
  } catch (const Error&) {
    rethrow_with_context("at candidate " + to_string(p));
  } catch (const std::exception& e) {
    throw EvaluationError("at candidate " + to_string(p) + ": " + e.what());
  }
}

inline std::vector<double> evaluate_all(const Objective& f, const std::vector<TransformPoint>& points,
                                        int workers) {
  return parallel_map(points.size(), workers,
                      [&](std::size_t i) { return evaluate_at(f, points[i]); });
}

}  // namespace detail

/// Exhaustive search over a discrete domain in declaration order.
inline OptTrace grid_minimize(const TransformDomain& domain, const Objective& f, int workers = 1) {
  if (!domain.is_discrete()) throw ArgumentError("grid_minimize requires a discrete domain");
  const auto& points = domain.points();
  const std::vector<double> values = detail::evaluate_all(f, points, workers);
  OptTrace trace;
  for (std::size_t i = 0; i < points.size(); ++i) trace.record(points[i], values[i], Stage::Grid);
  return trace;
}

/// GP-EI minimization over a box: grid design, seeded random design, then
/// `n_iters` steps that each refit the GP on every observation and evaluate
/// the EI maximizer among sampled candidates.
inline OptTrace bo_minimize(const TransformDomain& domain, const Objective& f, const BoConfig& config) {
  if (domain.is_discrete()) throw ArgumentError("bo_minimize requires a box domain");
  const int d = domain.dim();
  config.validate(d);

  OptTrace trace;
  std::vector<TransformPoint> init;
  std::vector<Stage> stages;
  if (!config.grid_per_dim.empty()) {
    for (auto& p : grid_points(domain, config.grid_per_dim)) {
      init.push_back(std::move(p));
      stages.push_back(Stage::Grid);
    }
  }
  for (auto& p : sample_uniform(domain, config.n_random, config.seed)) {
    init.push_back(std::move(p));
    stages.push_back(Stage::Random);
  }
  const std::vector<double> init_values = detail::evaluate_all(f, init, config.workers);
  for (std::size_t i = 0; i < init.size(); ++i) trace.record(init[i], init_values[i], stages[i]);
  if (config.n_iters == 0) return trace;

  const auto& lo = domain.lower();
  const auto& hi = domain.upper();
  auto to_unit = [&](const TransformPoint& p, Eigen::MatrixXd& out, Eigen::Index row) {
    for (int j = 0; j < d; ++j) out(row, j) = (p[j] - lo[j]) / (hi[j] - lo[j]);
  };
  auto from_unit = [&](const Eigen::RowVectorXd& u) {
    TransformPoint p;
    p.params.resize(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
      p.params[j] = std::clamp(lo[j] + u(j) * (hi[j] - lo[j]), lo[j], hi[j]);
    }
    return p;
  };

  std::mt19937_64 rng(splitmix64(config.seed ^ 0xB0B0B0B0ULL));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  for (int iter = 0; iter < config.n_iters; ++iter) {
    const Eigen::Index n = static_cast<Eigen::Index>(trace.size());
    Eigen::MatrixXd X(n, d);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      to_unit(trace.evaluations[static_cast<std::size_t>(i)].point, X, i);
      y(i) = trace.evaluations[static_cast<std::size_t>(i)].value;
    }

    GPState gp;
    try {
      gp = gp_fit(X, y, config.lengthscale, config.signal_var, config.noise_var);
    } catch (const SingularKernel& e) {
      throw OptimizerError(std::string("BO iteration ") + std::to_string(iter) + ": " + e.what());
    }

    // Candidates: uniform samples, then a local perturbation of every
    // observation and of its midpoint with the incumbent.
    const Eigen::RowVectorXd incumbent = X.row(static_cast<Eigen::Index>(trace.best_index));
    const Eigen::Index m = config.candidate_count + 2 * n;
    Eigen::MatrixXd C(m, d);
    for (Eigen::Index i = 0; i < config.candidate_count; ++i)
      for (int j = 0; j < d; ++j) C(i, j) = unit(rng);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::RowVectorXd mid = 0.5 * (X.row(i) + incumbent);
      for (int j = 0; j < d; ++j) {
        C(config.candidate_count + 2 * i, j) =
            std::clamp(X(i, j) + config.local_sigma * normal(rng), 0.0, 1.0);
        C(config.candidate_count + 2 * i + 1, j) =
            std::clamp(mid(j) + config.local_sigma * normal(rng), 0.0, 1.0);
      }
    }

    Eigen::VectorXd mu, var;
    gp_posterior_batch(gp, C, mu, var);
    const double best_std = (trace.best_value - gp.y_mean) / gp.y_scale;
    Eigen::Index pick = 0;
    double pick_ei = -1.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double mu_std = (mu(i) - gp.y_mean) / gp.y_scale;
      const double sigma_std = std::sqrt(var(i)) / gp.y_scale;
      const double ei = expected_improvement(mu_std, sigma_std, best_std, config.xi);
      if (ei > pick_ei) {
        pick_ei = ei;
        pick = i;
      }
    }
    TransformPoint next = from_unit(C.row(pick));
    const double value = detail::evaluate_at(f, next);
    trace.record(std::move(next), value, Stage::Bo);
  }
  return trace;
}

}  // namespace canon
