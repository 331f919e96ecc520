#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "canon/bench/dataset.hpp"
#include "canon/bench/functions.hpp"
#include "canon/parallel.hpp"
#include "canon/pipeline.hpp"

namespace canon::bench {

using nlohmann::json;

/// Seed for one image's random draws: depends on the run seed, the image id
/// and a per-purpose salt, never on processing order.
inline std::uint64_t item_seed(std::uint64_t seed, const std::string& id, std::uint64_t salt) {
  return splitmix64(seed ^ fnv1a64(id) ^ splitmix64(salt));
}

inline constexpr std::uint64_t kSaltCorruption = 0xC022;
inline constexpr std::uint64_t kSaltOptimizer = 0x0B7;
inline constexpr std::uint64_t kSaltTta = 0x77A;

struct BenchOptions {
  int workers = 1;
  bool crop_disk = false;
  std::uint64_t seed = 0;  // corruption and TTA draws
};

/// Result of one image's unit of work. A failed unit carries its error and
/// contributes nothing else to the aggregates.
struct ItemOutcome {
  json record;
  std::optional<std::string> error;
  bool backend_failure = false;
};

namespace detail {

template <class Fn>
std::vector<ItemOutcome> for_each_item(const Dataset& ds, const EnergyBackend& backend, int workers, Fn&& fn) {
  const int threads = backend.concurrent_calls() ? workers : 1;
  return parallel_map(ds.items.size(), threads, [&](std::size_t i) {
    const LabeledImage& item = ds.items[i];
    ItemOutcome out;
    try {
      out.record = fn(item);
      out.record["id"] = item.id;
    } catch (const BackendError& e) {
      out.error = e.what();
      out.backend_failure = true;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
    if (out.error) out.record = {{"id", item.id}, {"error", *out.error}};
    return out;
  });
}

inline void check_label(const LabeledImage& item, const std::vector<std::string>& prompts) {
  if (item.label < 0 || static_cast<std::size_t>(item.label) >= prompts.size()) {
    throw DatasetError("label " + std::to_string(item.label) + " of '" + item.id + "' has no prompt (" +
                       std::to_string(prompts.size()) + " prompts)");
  }
}

inline double ratio(long num, long den) { return den > 0 ? static_cast<double>(num) / den : 0.0; }

inline int argmax(const std::vector<double>& v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace detail

/// Bookkeeping shared by every per-image protocol.
struct RunTally {
  long images = 0;  // attempted
  std::vector<SkippedItem> skipped;
  long backend_failures = 0;
  std::vector<json> per_image;

  long completed() const { return images - static_cast<long>(skipped.size()); }

  /// Folds outcomes in dataset order; returns the successful records.
  std::vector<const json*> absorb(const std::vector<ItemOutcome>& outcomes) {
    images = static_cast<long>(outcomes.size());
    per_image.clear();
    for (const auto& o : outcomes) {
      per_image.push_back(o.record);
      if (o.error) {
        skipped.push_back({o.record.value("id", std::string()), *o.error});
        if (o.backend_failure) ++backend_failures;
      }
    }
    std::vector<const json*> ok;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      if (!outcomes[i].error) ok.push_back(&per_image[i]);
    }
    return ok;
  }

  json skipped_json() const {
    json j = json::array();
    for (const auto& s : skipped) j.push_back({{"id", s.id}, {"reason", s.reason}});
    return j;
  }
};

inline CostCounter cost_from_json(const json& j) {
  CostCounter c;
  c.n_transform = j.at("n_transform").get<long>();
  c.n_logits_calls = j.at("n_logits_calls").get<long>();
  c.n_denoise_calls = j.at("n_denoise_calls").get<long>();
  c.n_inference = j.at("n_inference").get<long>();
  return c;
}

// ---------------------------------------------------------------------------
// Test-time augmentation baseline
// ---------------------------------------------------------------------------

/// Averages logits over `views` distinct C_n rotations drawn without
/// replacement and predicts the argmax (first index on ties).
inline Prediction tta_predict(const Image& image, int n, int views, std::uint64_t seed,
                              const std::vector<std::string>& prompts, const EnergyBackend& backend) {
  if (n < 1 || views < 1 || views > n) throw ArgumentError("tta needs 1 <= views <= n");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates with an explicit index draw, so the selection does
  // not depend on the standard library's shuffle.
  for (int i = 0; i < views; ++i) {
    const auto j = i + static_cast<int>(rng() % static_cast<std::uint64_t>(n - i));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  Prediction p;
  for (int i = 0; i < views; ++i) {
    const double angle = 360.0 * order[static_cast<std::size_t>(i)] / n;
    const Logits l = backend.logits(rotate(image, angle), prompts);
    if (p.logits.values.empty()) p.logits.values.assign(l.values.size(), 0.0);
    if (l.values.size() != p.logits.values.size()) throw BackendError("tta views returned different logit counts");
    for (std::size_t k = 0; k < l.values.size(); ++k) p.logits.values[k] += l.values[k];
  }
  for (double& v : p.logits.values) v /= views;
  if (p.logits.values.empty()) throw BackendError("backend returned no logits");
  p.label = detail::argmax(p.logits.values);
  return p;
}

// ---------------------------------------------------------------------------
// Rotation: pose recovery over C_n
// ---------------------------------------------------------------------------

struct AngleStats {
  double angle = 0.0;
  long count = 0;
  long baseline_correct = 0;
  long canon_correct = 0;
  long tta_correct = 0;
  long pose_correct = 0;
  double pose_error_sum = 0.0;
};

struct RotationReport {
  int n = 0;
  int tta_views = 0;
  std::vector<AngleStats> angles;
  RunTally tally;
  CostCounter cost;  // canonicalization, summed over (image, angle)
  long baseline_logits_calls = 0;
  long tta_logits_calls = 0;

  long trials() const {
    long t = 0;
    for (const auto& a : angles) t += a.count;
    return t;
  }
  double pose_accuracy() const {
    long c = 0;
    for (const auto& a : angles) c += a.pose_correct;
    return detail::ratio(c, trials());
  }
  double pose_error_deg() const {
    double s = 0.0;
    for (const auto& a : angles) s += a.pose_error_sum;
    return trials() > 0 ? s / static_cast<double>(trials()) : 0.0;
  }
  double accuracy(long AngleStats::*field) const {
    long c = 0;
    for (const auto& a : angles) c += a.*field;
    return detail::ratio(c, trials());
  }

  json metrics() const {
    json per_angle = json::array();
    for (const auto& a : angles) {
      json row = {{"angle", a.angle},
                  {"count", a.count},
                  {"baseline_acc", detail::ratio(a.baseline_correct, a.count)},
                  {"canon_acc", detail::ratio(a.canon_correct, a.count)},
                  {"pose_accuracy", detail::ratio(a.pose_correct, a.count)},
                  {"pose_error_deg", a.count > 0 ? a.pose_error_sum / static_cast<double>(a.count) : 0.0}};
      if (tta_views > 0) row["tta_acc"] = detail::ratio(a.tta_correct, a.count);
      per_angle.push_back(row);
    }
    json m = {{"n", n},
              {"images", tally.images},
              {"completed", tally.completed()},
              {"skipped", tally.skipped.size()},
              {"trials", trials()},
              {"pose_accuracy", pose_accuracy()},
              {"pose_error_deg", pose_error_deg()},
              {"baseline_acc", accuracy(&AngleStats::baseline_correct)},
              {"canon_acc", accuracy(&AngleStats::canon_correct)},
              {"per_angle", per_angle},
              {"cost", to_json_value(cost)},
              {"baseline_logits_calls", baseline_logits_calls}};
    if (tta_views > 0) {
      m["tta"] = {{"views", tta_views},
                  {"accuracy", accuracy(&AngleStats::tta_correct)},
                  {"logits_calls", tta_logits_calls}};
    }
    return m;
  }

  std::vector<std::string> csv_header() const {
    std::vector<std::string> h = {"angle", "baseline_acc", "canon_acc", "pose_accuracy", "pose_error_deg", "count"};
    if (tta_views > 0) h.push_back("tta_acc");
    return h;
  }
  std::vector<std::vector<json>> csv_rows() const {
    std::vector<std::vector<json>> rows;
    for (const auto& a : angles) {
      std::vector<json> r = {a.angle,
                             detail::ratio(a.baseline_correct, a.count),
                             detail::ratio(a.canon_correct, a.count),
                             detail::ratio(a.pose_correct, a.count),
                             a.count > 0 ? a.pose_error_sum / static_cast<double>(a.count) : 0.0,
                             a.count};
      if (tta_views > 0) r.push_back(detail::ratio(a.tta_correct, a.count));
      rows.push_back(std::move(r));
    }
    return rows;
  }
};

/// For every image and every C_n rotation a: predicts on rotate(x, a)
/// (baseline), canonicalizes rotate(x, a) over C_n and predicts on the
/// result. The pose is correct when the recovered point undoes a.
inline RotationReport bench_rotation(const Dataset& ds, int n, const EnergySpec& spec, const NoiseSchedule& schedule,
                                     const EnergyBackend& backend, const BenchOptions& options, int tta_views = 0) {
  if (n < 1) throw ArgumentError("bench_rotation needs n >= 1");
  if (tta_views < 0 || tta_views > n) throw ArgumentError("tta_views must be in [0, n]");
  const TransformDomain cn = enumerate_cn(n);
  const TransformKind kind = TransformKind::rotation();
  RotationReport report;
  report.n = n;
  report.tta_views = tta_views;
  for (const auto& p : cn.points()) report.angles.push_back({p[0]});

  const auto outcomes = detail::for_each_item(ds, backend, options.workers, [&](const LabeledImage& item) {
    detail::check_label(item, spec.prompts);
    json trials = json::array();
    CostCounter cost;
    for (int k = 0; k < n; ++k) {
      const double angle = cn.points()[static_cast<std::size_t>(k)][0];
      const Image moved = rotate(item.image, angle);
      const Prediction baseline = predict(moved, spec.prompts, backend);
      CanonOptions copt;
      copt.crop_disk = options.crop_disk;
      const CanonResult r = canonicalize(moved, kind, cn, spec, schedule, backend, BoConfig{}, copt);
      const auto& pts = cn.points();
      const int recovered = static_cast<int>(std::find(pts.begin(), pts.end(), r.best_point) - pts.begin());
      const int expected = (n - k) % n;
      const int steps = ((recovered - expected) % n + n) % n;
      const double pose_error = std::min(steps, n - steps) * 360.0 / n;
      json t = {{"angle", angle},
                {"recovered", r.best_point[0]},
                {"pose_correct", recovered == expected},
                {"pose_error_deg", pose_error},
                {"baseline_label", baseline.label},
                {"canon_label", r.prediction->label},
                {"best_energy", r.trace.best_value}};
      if (tta_views > 0) {
        const std::uint64_t seed = item_seed(options.seed, item.id, kSaltTta + static_cast<std::uint64_t>(k));
        t["tta_label"] = tta_predict(moved, n, tta_views, seed, spec.prompts, backend).label;
      }
      cost += r.cost;
      trials.push_back(std::move(t));
    }
    return json{{"label", item.label}, {"trials", trials}, {"cost", to_json_value(cost)}};
  });

  for (const json* rec : report.tally.absorb(outcomes)) {
    const int label = rec->at("label").get<int>();
    const auto& trials = rec->at("trials");
    for (std::size_t k = 0; k < trials.size(); ++k) {
      const auto& t = trials[k];
      auto& a = report.angles[k];
      ++a.count;
      a.baseline_correct += t.at("baseline_label").get<int>() == label;
      a.canon_correct += t.at("canon_label").get<int>() == label;
      a.pose_correct += t.at("pose_correct").get<bool>();
      a.pose_error_sum += t.at("pose_error_deg").get<double>();
      if (tta_views > 0) a.tta_correct += t.at("tta_label").get<int>() == label;
    }
    report.cost += cost_from_json(rec->at("cost"));
    report.baseline_logits_calls += static_cast<long>(trials.size());
    report.tta_logits_calls += static_cast<long>(trials.size()) * tta_views;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Color and contrast sweeps
// ---------------------------------------------------------------------------

struct SweepBin {
  double lower = 0.0;
  double upper = 0.0;
  long count = 0;
  long baseline_correct = 0;
  long canon_correct = 0;
};

struct SweepReport {
  std::string kind;
  std::vector<double> corruption_lower;
  std::vector<double> corruption_upper;
  std::vector<SweepBin> bins;
  RunTally tally;
  CostCounter cost;
  long evaluations = 0;  // energy evaluations over all images
  long budget = 0;       // configured evaluations per image
  double recovery_error_sum = 0.0;
  long baseline_logits_calls = 0;

  long count() const {
    long c = 0;
    for (const auto& b : bins) c += b.count;
    return c;
  }
  double baseline_accuracy() const {
    long c = 0;
    for (const auto& b : bins) c += b.baseline_correct;
    return detail::ratio(c, count());
  }
  double canon_accuracy() const {
    long c = 0;
    for (const auto& b : bins) c += b.canon_correct;
    return detail::ratio(c, count());
  }
  double mean_gain() const { return canon_accuracy() - baseline_accuracy(); }
  double evaluations_per_image() const { return count() > 0 ? static_cast<double>(evaluations) / count() : 0.0; }

  json metrics() const {
    json b = json::array();
    for (const auto& bin : bins) {
      b.push_back({{"lower", bin.lower},
                   {"upper", bin.upper},
                   {"count", bin.count},
                   {"baseline_acc", detail::ratio(bin.baseline_correct, bin.count)},
                   {"canon_acc", detail::ratio(bin.canon_correct, bin.count)}});
    }
    return {{"kind", kind},
            {"images", tally.images},
            {"completed", tally.completed()},
            {"skipped", tally.skipped.size()},
            {"corruption_lower", corruption_lower},
            {"corruption_upper", corruption_upper},
            {"baseline_acc", baseline_accuracy()},
            {"canon_acc", canon_accuracy()},
            {"mean_gain", mean_gain()},
            {"bins", b},
            {"evaluations", evaluations},
            {"evaluations_per_image", evaluations_per_image()},
            {"budget_per_image", budget},
            {"mean_recovery_error", count() > 0 ? recovery_error_sum / count() : 0.0},
            {"cost", to_json_value(cost)},
            {"baseline_logits_calls", baseline_logits_calls}};
  }

  std::vector<std::string> csv_header() const {
    return {"bin_lower", "bin_upper", "count", "baseline_acc", "canon_acc"};
  }
  std::vector<std::vector<json>> csv_rows() const {
    std::vector<std::vector<json>> rows;
    for (const auto& bin : bins) {
      rows.push_back({bin.lower, bin.upper, bin.count, detail::ratio(bin.baseline_correct, bin.count),
                      detail::ratio(bin.canon_correct, bin.count)});
    }
    return rows;
  }
};

/// Corruption strength used for binning: |log gamma| or the log-chroma norm.
inline double corruption_magnitude(const std::vector<double>& c) {
  double s = 0.0;
  for (double v : c) s += v * v;
  return std::sqrt(s);
}

/// Shared body of the color and contrast sweeps: draws a seeded corruption c
/// per image, then compares prediction on the corrupted image with prediction
/// after canonicalizing over `search`.
inline SweepReport bench_sweep(const Dataset& ds, const TransformKind& kind, const std::vector<double>& corruption_lower,
                               const std::vector<double>& corruption_upper, const TransformDomain& search,
                               const EnergySpec& spec, const NoiseSchedule& schedule, const EnergyBackend& backend,
                               const BoConfig& opt, const BenchOptions& options, int n_bins) {
  const std::size_t dim = static_cast<std::size_t>(kind.dim());
  if (corruption_lower.size() != dim || corruption_upper.size() != dim) {
    throw DimensionMismatch("corruption range must have " + std::to_string(dim) + " entries");
  }
  if (search.is_discrete() || search.dim() != kind.dim()) throw ArgumentError("sweep needs a box search domain");
  if (n_bins < 1) throw ArgumentError("sweep needs at least one bin");
  opt.validate(kind.dim());

  SweepReport report;
  report.kind = kind.name();
  report.corruption_lower = corruption_lower;
  report.corruption_upper = corruption_upper;
  report.budget = opt.budget();
  std::vector<double> extreme(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    extreme[i] = std::max(std::abs(corruption_lower[i]), std::abs(corruption_upper[i]));
  }
  const double max_mag = corruption_magnitude(extreme);
  for (int b = 0; b < n_bins; ++b) {
    report.bins.push_back({max_mag * b / n_bins, b == n_bins - 1 ? max_mag : max_mag * (b + 1) / n_bins});
  }

  const auto outcomes = detail::for_each_item(ds, backend, options.workers, [&](const LabeledImage& item) {
    detail::check_label(item, spec.prompts);
    std::mt19937_64 rng(item_seed(options.seed, item.id, kSaltCorruption));
    TransformPoint c;
    for (std::size_t i = 0; i < dim; ++i) {
      c.params.push_back(std::uniform_real_distribution<double>(corruption_lower[i], corruption_upper[i])(rng));
    }
    const Image corrupted = apply_point(kind, c, item.image);
    const Prediction baseline = predict(corrupted, spec.prompts, backend);
    BoConfig cfg = opt;
    cfg.seed = item_seed(opt.seed, item.id, kSaltOptimizer);
    CanonOptions copt;
    copt.crop_disk = options.crop_disk;
    const CanonResult r = canonicalize(corrupted, kind, search, spec, schedule, backend, cfg, copt);
    double err = 0.0;
    for (std::size_t i = 0; i < dim; ++i) err += std::pow(r.best_point[i] + c[i], 2);
    return json{{"label", item.label},
                {"corruption", c.params},
                {"magnitude", corruption_magnitude(c.params)},
                {"recovered", r.best_point.params},
                {"recovery_error", std::sqrt(err)},
                {"baseline_label", baseline.label},
                {"canon_label", r.prediction->label},
                {"evaluations", r.trace.size()},
                {"best_energy", r.trace.best_value},
                {"cost", to_json_value(r.cost)}};
  });

  for (const json* rec : report.tally.absorb(outcomes)) {
    const double mag = rec->at("magnitude").get<double>();
    int b = max_mag > 0.0 ? static_cast<int>(std::floor(mag / max_mag * n_bins)) : 0;
    b = std::clamp(b, 0, n_bins - 1);
    auto& bin = report.bins[static_cast<std::size_t>(b)];
    const int label = rec->at("label").get<int>();
    ++bin.count;
    bin.baseline_correct += rec->at("baseline_label").get<int>() == label;
    bin.canon_correct += rec->at("canon_label").get<int>() == label;
    report.evaluations += rec->at("evaluations").get<long>();
    report.recovery_error_sum += rec->at("recovery_error").get<double>();
    report.cost += cost_from_json(rec->at("cost"));
    ++report.baseline_logits_calls;
  }
  return report;
}

inline SweepReport bench_color(const Dataset& ds, const std::vector<double>& corruption_lower,
                               const std::vector<double>& corruption_upper, const TransformDomain& search,
                               const EnergySpec& spec, const NoiseSchedule& schedule, const EnergyBackend& backend,
                               const BoConfig& opt, const BenchOptions& options, int n_bins = 5) {
  return bench_sweep(ds, TransformKind::color(), corruption_lower, corruption_upper, search, spec, schedule, backend,
                     opt, options, n_bins);
}

inline SweepReport bench_contrast(const Dataset& ds, double corruption_lower, double corruption_upper,
                                  const TransformDomain& search, const EnergySpec& spec,
                                  const NoiseSchedule& schedule, const EnergyBackend& backend, const BoConfig& opt,
                                  const BenchOptions& options, int n_bins = 5) {
  return bench_sweep(ds, TransformKind::gamma(), {corruption_lower}, {corruption_upper}, search, spec, schedule,
                     backend, opt, options, n_bins);
}

// ---------------------------------------------------------------------------
// Energy landscape over C_n and the uprightness gate
// ---------------------------------------------------------------------------

struct EnergyEvalReport {
  int n = 0;
  std::vector<double> angles;
  std::vector<double> classifier_sum, diffusion_sum, total_sum;
  long argmin_identity = 0;  // images whose lowest energy is at angle 0
  long upright_below_quarter = 0;  // E(x) < E(rotate(x, 90))
  RunTally tally;

  json metrics() const {
    const long done = tally.completed();
    auto mean = [&](const std::vector<double>& s) {
      std::vector<double> m;
      for (double v : s) m.push_back(done > 0 ? v / done : 0.0);
      return m;
    };
    return {{"n", n},
            {"images", tally.images},
            {"completed", done},
            {"skipped", tally.skipped.size()},
            {"angles", angles},
            {"mean_classifier", mean(classifier_sum)},
            {"mean_diffusion", mean(diffusion_sum)},
            {"mean_total", mean(total_sum)},
            {"argmin_identity_rate", detail::ratio(argmin_identity, done)},
            {"upright_below_quarter_rate", detail::ratio(upright_below_quarter, done)}};
  }

  std::vector<std::string> csv_header() const { return {"angle", "mean_classifier", "mean_diffusion", "mean_total"}; }
  std::vector<std::vector<json>> csv_rows() const {
    const long done = tally.completed();
    std::vector<std::vector<json>> rows;
    for (std::size_t i = 0; i < angles.size(); ++i) {
      auto m = [&](const std::vector<double>& s) { return done > 0 ? s[i] / done : 0.0; };
      rows.push_back({angles[i], m(classifier_sum), m(diffusion_sum), m(total_sum)});
    }
    return rows;
  }
};

/// Energy terms of every C_n rotation of each (assumed upright) image, plus
/// the quarter-turn comparison E(x) < E(rotate(x, 90)).
inline EnergyEvalReport energy_eval(const Dataset& ds, int n, const EnergySpec& spec, const NoiseSchedule& schedule,
                                    const EnergyBackend& backend, const BenchOptions& options) {
  spec.validate();
  const TransformDomain cn = enumerate_cn(n);
  EnergyEvalReport report;
  report.n = n;
  for (const auto& p : cn.points()) report.angles.push_back(p[0]);
  report.classifier_sum.assign(report.angles.size(), 0.0);
  report.diffusion_sum.assign(report.angles.size(), 0.0);
  report.total_sum.assign(report.angles.size(), 0.0);

  const auto outcomes = detail::for_each_item(ds, backend, options.workers, [&](const LabeledImage& item) {
    auto terms_at = [&](double angle) {
      const Image x = rotate(item.image, angle);
      return combined_energy_terms(options.crop_disk ? disk_mask(x) : x, spec, schedule, backend);
    };
    json c = json::array(), d = json::array(), t = json::array();
    for (double a : report.angles) {
      const EnergyTerms e = terms_at(a);
      c.push_back(e.classifier);
      d.push_back(e.diffusion);
      t.push_back(e.total);
    }
    const double quarter = n % 4 == 0 ? t[static_cast<std::size_t>(n / 4)].get<double>() : terms_at(90.0).total;
    return json{{"classifier", c}, {"diffusion", d}, {"total", t}, {"quarter_total", quarter}};
  });

  for (const json* rec : report.tally.absorb(outcomes)) {
    const auto& t = rec->at("total");
    std::size_t best = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      report.classifier_sum[i] += rec->at("classifier")[i].get<double>();
      report.diffusion_sum[i] += rec->at("diffusion")[i].get<double>();
      report.total_sum[i] += t[i].get<double>();
      if (t[i].get<double>() < t[best].get<double>()) best = i;
    }
    report.argmin_identity += best == 0;
    report.upright_below_quarter += t[0].get<double>() < rec->at("quarter_total").get<double>();
  }
  return report;
}

struct GateReport {
  int n = 0;
  double threshold = 0.0;
  long true_pos = 0, false_neg = 0, false_pos = 0, true_neg = 0;
  RunTally tally;

  json metrics() const {
    const long pos = true_pos + false_neg;
    const long neg = false_pos + true_neg;
    return {{"n", n},
            {"threshold", threshold},
            {"images", tally.images},
            {"completed", tally.completed()},
            {"skipped", tally.skipped.size()},
            {"accuracy", detail::ratio(true_pos + true_neg, pos + neg)},
            {"tpr", detail::ratio(true_pos, pos)},
            {"fpr", detail::ratio(false_pos, neg)},
            {"true_pos", true_pos},
            {"false_neg", false_neg},
            {"false_pos", false_pos},
            {"true_neg", true_neg}};
  }

  std::vector<std::string> csv_header() const { return {"accuracy", "tpr", "fpr", "positives", "negatives"}; }
  std::vector<std::vector<json>> csv_rows() const {
    const json m = metrics();
    return {{m["accuracy"], m["tpr"], m["fpr"], true_pos + false_neg, false_pos + true_neg}};
  }
};

/// Gate decisions on each (upright) image and on its n - 1 nontrivial C_n
/// rotations; upright inputs are the positives.
inline GateReport gate_eval(const Dataset& ds, int n, const EnergySpec& spec, const NoiseSchedule& schedule,
                            const EnergyBackend& backend, double threshold, const BenchOptions& options) {
  spec.validate();
  const TransformDomain cn = enumerate_cn(n);
  GateReport report;
  report.n = n;
  report.threshold = threshold;
  const auto outcomes = detail::for_each_item(ds, backend, options.workers, [&](const LabeledImage& item) {
    json decisions = json::array();
    for (const auto& p : cn.points()) {
      decisions.push_back(gate_upright(rotate(item.image, p[0]), spec, schedule, backend, threshold, options.crop_disk));
    }
    return json{{"upright_decisions", decisions}};
  });
  for (const json* rec : report.tally.absorb(outcomes)) {
    const auto& d = rec->at("upright_decisions");
    for (std::size_t i = 0; i < d.size(); ++i) {
      const bool says_upright = d[i].get<bool>();
      if (i == 0) {
        (says_upright ? report.true_pos : report.false_neg) += 1;
      } else {
        (says_upright ? report.false_pos : report.true_neg) += 1;
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Optimizer against known minima
// ---------------------------------------------------------------------------

struct FunctionStats {
  std::string name;
  std::string success_rule;
  int seeds = 0;
  int successes = 0;
  long evaluations = 0;
  double gap_sum = 0.0;  // best_value - oracle_value
  double worst_gap = 0.0;
};

struct BoSyntheticReport {
  std::vector<FunctionStats> functions;
  RunTally tally;  // unused: no images

  json metrics() const {
    json out = json::array();
    for (const auto& f : functions) {
      out.push_back({{"function", f.name},
                     {"success_rule", f.success_rule},
                     {"seeds", f.seeds},
                     {"successes", f.successes},
                     {"success_rate", f.seeds > 0 ? static_cast<double>(f.successes) / f.seeds : 0.0},
                     {"evaluations_per_run", f.seeds > 0 ? static_cast<double>(f.evaluations) / f.seeds : 0.0},
                     {"mean_gap", f.seeds > 0 ? f.gap_sum / f.seeds : 0.0},
                     {"worst_gap", f.worst_gap}});
    }
    return {{"functions", out}};
  }

  std::vector<std::string> csv_header() const {
    return {"function", "seeds", "successes", "success_rate", "evaluations_per_run", "mean_gap"};
  }
  std::vector<std::vector<json>> csv_rows() const {
    std::vector<std::vector<json>> rows;
    const json m = metrics();
    for (const auto& f : m["functions"]) {
      rows.push_back({f["function"], f["seeds"], f["successes"], f["success_rate"], f["evaluations_per_run"],
                      f["mean_gap"]});
    }
    return rows;
  }
};

/// Runs each named function for seeds base_seed .. base_seed + seeds - 1.
inline BoSyntheticReport bench_bo_synthetic(const std::vector<std::string>& names, int seeds,
                                            std::uint64_t base_seed, int workers) {
  BoSyntheticReport report;
  for (const auto& name : names) {
    const SyntheticFunction fn = synthetic_function(name);
    struct Run {
      bool success;
      long evaluations;
      double gap;
    };
    const auto runs = parallel_map(static_cast<std::size_t>(seeds), workers, [&](std::size_t s) {
      const FunctionInstance in = fn.make(base_seed + s);
      const OptTrace trace = bo_minimize(in.domain, in.f, in.config);
      return Run{fn.success(in, trace), static_cast<long>(trace.size()), trace.best_value - in.oracle_value};
    });
    FunctionStats st;
    st.name = fn.name;
    st.success_rule = fn.success_rule;
    st.seeds = seeds;
    for (const auto& r : runs) {
      st.successes += r.success;
      st.evaluations += r.evaluations;
      st.gap_sum += r.gap;
      st.worst_gap = std::max(st.worst_gap, r.gap);
    }
    report.functions.push_back(st);
  }
  return report;
}

}  // namespace canon::bench
