#pragma once

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "canon/bench/config.hpp"
#include "canon/bench/dataset.hpp"
#include "canon/bench/protocols.hpp"
#include "canon/bench/report.hpp"
#include "canon/bridge.hpp"
#include "canon/pipeline.hpp"

namespace canon::bench {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitBackend = 3 };

/// Command-line values that take precedence over the config file.
struct Overrides {
  std::optional<Task> task;
  std::optional<fs::path> out;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  bool crop_disk = false;
};

inline void apply(RunConfig& c, const Overrides& o) {
  if (o.task) c.task = *o.task;
  if (o.out) c.out = *o.out;
  if (o.workers) c.workers = *o.workers;
  if (o.seed) c.seed = *o.seed;
  if (o.crop_disk) c.crop_disk = true;
}

inline SyntheticCue parse_cue(const std::string& name) {
  if (name == "upright") return SyntheticCue::Upright;
  if (name == "neutral") return SyntheticCue::Neutral;
  if (name == "midtone") return SyntheticCue::Midtone;
  if (name == "constant") return SyntheticCue::Constant;
  throw ConfigError("[backend] unknown cue '" + name + "' (expected upright, neutral, midtone or constant)");
}

/// Cue exponent used when the config gives none. The uprightness score is
/// already sharply peaked over C_n; the color and contrast cues need a soft
/// exponent so the energy is not flat across most of the search box.
inline double default_sharpness(SyntheticCue cue) {
  switch (cue) {
    case SyntheticCue::Upright: return 8.0;
    case SyntheticCue::Neutral: return 0.25;
    case SyntheticCue::Midtone: return 0.5;
    case SyntheticCue::Constant: return 1.0;
  }
  return 1.0;
}

struct BackendHandle {
  std::unique_ptr<EnergyBackend> backend;
  NoiseSchedule schedule;
};

/// Builds the scoring backend. A remote backend is health-checked first and
/// its served schedule replaces the configured one.
inline BackendHandle make_backend(const RunConfig& c) {
  NoiseSchedule schedule = [&] {
    try {
      return make_linear_schedule(c.schedule.steps, c.schedule.beta_start, c.schedule.beta_end);
    } catch (const ArgumentError& e) {
      throw ConfigError(std::string("[energy] schedule: ") + e.what());
    }
  }();
  const auto& b = c.backend;
  if (b.kind == "synthetic") {
    SyntheticBackend::Options opt;
    opt.cue = parse_cue(b.cue);
    opt.sharpness = b.sharpness.value_or(default_sharpness(opt.cue));
    opt.schedule = schedule;
    return {std::make_unique<SyntheticBackend>(opt), schedule};
  }
  if (b.kind == "local") {
    try {
      return {std::make_unique<LocalEmbeddingBackend>(LocalEmbeddingBackend::from_file(*b.model)), schedule};
    } catch (const Error& e) {
      throw ConfigError(std::string("[backend] ") + e.what());
    }
  }
  bridge::RemoteBackendConfig rc;
  rc.base_url = b.url;
  rc.timeout_ms = b.timeout_ms;
  rc.retries = b.retries;
  rc.image_height = b.image_size[0];
  rc.image_width = b.image_size[1];
  rc.max_in_flight = b.max_in_flight;
  try {
    rc.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("[backend] ") + e.what());
  }
  auto remote = std::make_unique<bridge::RemoteBackend>(rc);
  remote->health();
  NoiseSchedule served = remote->schedule();
  return {std::move(remote), std::move(served)};
}

inline Dataset load_dataset(const RunConfig& c) {
  const auto& d = c.dataset;
  Dataset ds;
  if (d.image) {
    LabeledImage item;
    item.id = d.image->stem().string();
    try {
      item.image = load_png(*d.image);
    } catch (const Error& e) {
      throw DatasetError(e.what());
    }
    ds.items.push_back(std::move(item));
  } else if (d.manifest) {
    ds = load_manifest(*d.manifest, d.limit);
  } else if (d.synthetic) {
    ds = make_synthetic(parse_fixture_kind(*d.synthetic), d.count, d.size, d.classes, c.seed);
    if (d.limit > 0 && ds.items.size() > d.limit) ds.items.resize(d.limit);
  } else {
    throw ConfigError("[dataset] needs one of manifest, image or synthetic");
  }
  return ds;
}

/// Prompt precedence: explicit list, prompt file, class names through the
/// template, then generic names for labels 0..K-1.
inline std::vector<std::string> resolve_prompts(const RunConfig& c, const Dataset& ds) {
  const auto& d = c.dataset;
  if (!d.prompts.empty()) return d.prompts;
  if (d.prompts_file) return load_prompts(*d.prompts_file);
  std::vector<std::string> names = d.class_names;
  if (names.empty()) {
    int k = d.synthetic || d.classes_set ? d.classes : 0;
    for (const auto& item : ds.items) k = std::max(k, item.label + 1);
    k = std::max(k, 1);
    for (int i = 0; i < k; ++i) names.push_back("class" + std::to_string(i));
  }
  return prompts_from_template(names, d.prompt_template);
}

inline TransformKind transform_kind(const RunConfig& c) {
  if (c.transform.kind == "color") return TransformKind::color();
  if (c.transform.kind == "gamma") return TransformKind::gamma();
  return TransformKind::rotation();
}

inline TransformDomain search_domain(const RunConfig& c) {
  if (c.transform.kind == "rotation") return enumerate_cn(c.transform.n);
  return TransformDomain::box(c.transform.lower, c.transform.upper);
}

struct TaskOutput {
  json metrics;
  ReportTable table;
  RunTally tally;
};

namespace detail {

inline TaskOutput run_canon(const RunConfig& c, const Dataset& ds, const EnergySpec& spec,
                            const NoiseSchedule& schedule, const EnergyBackend& backend) {
  const TransformKind kind = transform_kind(c);
  const TransformDomain domain = search_domain(c);
  const fs::path canon_dir = c.out / "canonical";
  const fs::path trace_dir = c.out / "traces";
  fs::create_directories(canon_dir);
  fs::create_directories(trace_dir);
  const auto outcomes = for_each_item(ds, backend, c.workers, [&](const LabeledImage& item) {
    BoConfig opt = c.optimizer;
    opt.seed = item_seed(c.optimizer.seed, item.id, kSaltOptimizer);
    CanonOptions copt;
    copt.crop_disk = c.crop_disk;
    const CanonResult r = canonicalize(item.image, kind, domain, spec, schedule, backend, opt, copt);
    save_png(r.canonical, canon_dir / (item.id + ".png"));
    json trace = {{"id", item.id},
                  {"transform", to_json_value(kind)},
                  {"domain", to_json_value(domain)},
                  {"best_point", r.best_point.params},
                  {"trace", to_json_value(r.trace)},
                  {"cost", to_json_value(r.cost)},
                  {"spec_digest", r.spec_digest}};
    if (r.prediction) trace["prediction"] = {{"label", r.prediction->label}, {"logits", r.prediction->logits.values}};
    write_text(trace_dir / (item.id + ".json"), trace.dump(2) + "\n");
    json rec = {{"best_point", r.best_point.params},
                {"best_energy", r.trace.best_value},
                {"evaluations", r.trace.size()},
                {"cost", to_json_value(r.cost)}};
    if (r.prediction) rec["predicted_label"] = r.prediction->label;
    return rec;
  });
  TaskOutput out;
  CostCounter cost;
  out.table.header = {"id", "best_point", "best_energy", "evaluations", "predicted_label"};
  for (const json* rec : out.tally.absorb(outcomes)) {
    cost += cost_from_json(rec->at("cost"));
    out.table.rows.push_back({rec->at("id"), rec->at("best_point").dump(), rec->at("best_energy"),
                              rec->at("evaluations"), rec->value("predicted_label", json(nullptr))});
  }
  out.metrics = {{"images", out.tally.images},
                 {"completed", out.tally.completed()},
                 {"skipped", out.tally.skipped.size()},
                 {"transform", kind.name()},
                 {"cost", to_json_value(cost)}};
  return out;
}

template <class Report>
TaskOutput package(Report&& r) {
  TaskOutput out;
  out.metrics = r.metrics();
  out.table = {r.csv_header(), r.csv_rows()};
  out.tally = std::move(r.tally);
  return out;
}

inline TaskOutput run_task(const RunConfig& c, const Dataset& ds, const EnergySpec& spec,
                           const NoiseSchedule& schedule, const EnergyBackend& backend) {
  BenchOptions bo{c.workers, c.crop_disk, c.seed};
  const auto& t = c.transform;
  switch (c.task) {
    case Task::Canon:
      return run_canon(c, ds, spec, schedule, backend);
    case Task::BenchRotation:
      return package(bench_rotation(ds, t.n, spec, schedule, backend, bo, t.tta_views));
    case Task::BenchColor:
    case Task::BenchContrast: {
      const TransformKind kind = c.task == Task::BenchColor ? TransformKind::color() : TransformKind::gamma();
      return package(bench_sweep(ds, kind, t.corruption_lower, t.corruption_upper, search_domain(c), spec, schedule,
                                 backend, c.optimizer, bo, t.bins));
    }
    case Task::EnergyEval:
      return package(energy_eval(ds, t.n, spec, schedule, backend, bo));
    case Task::GateEval:
      return package(gate_eval(ds, t.n, spec, schedule, backend, t.gate_threshold, bo));
    case Task::BenchBoSynthetic:
      break;
  }
  throw ConfigError("task " + to_string(c.task) + " does not take a dataset");
}

/// Transform kind each task requires; the config's kind is replaced so a
/// single file can drive several tasks.
inline void fix_kind_for_task(RunConfig& c) {
  const std::string wanted = c.task == Task::BenchColor      ? "color"
                             : c.task == Task::BenchContrast ? "gamma"
                             : c.task == Task::Canon         ? c.transform.kind
                                                             : "rotation";
  if (c.transform.kind != wanted) {
    c.transform.kind = wanted;
    c.transform.lower.clear();
    c.transform.upper.clear();
    c.transform.corruption_lower.clear();
    c.transform.corruption_upper.clear();
  }
  apply_kind_defaults(c);
}

}  // namespace detail

/// Loads, validates and executes one task, writing reports under c.out.
/// Returns the process exit code; diagnostics go to `log`.
inline int run(const RunConfig& config, std::ostream& log = std::cerr) {
  RunConfig c = config;
  const std::string task = to_string(c.task);
  try {
    detail::fix_kind_for_task(c);
    validate(c);

    ReportHeader header;
    header.task = task;
    header.config_digest = c.digest();
    header.config = c.digest_source();
    header.seeds = {{"seed", c.seed}, {"optimizer_seed", c.optimizer.seed}, {"noise_seed", c.energy.noise_seed}};
    header.policy = {{"rotation_fill", {0.0, 0.0, 0.0}},
                     {"rotation_output", "same size"},
                     {"crop_disk", c.crop_disk},
                     {"prompt_template", c.dataset.prompt_template}};

    TaskOutput out;
    if (c.task == Task::BenchBoSynthetic) {
      header.backend = "none";
      out = detail::package(bench_bo_synthetic(c.bo_synthetic.functions, c.bo_synthetic.seeds, c.seed, c.workers));
    } else {
      const Dataset ds = load_dataset(c);
      for (const auto& s : ds.skipped) log << task << ": skipped " << s.id << " at load: " << s.reason << "\n";
      EnergySpec spec = c.energy;
      spec.prompts = resolve_prompts(c, ds);
      try {
        spec.validate();
      } catch (const ArgumentError& e) {
        throw ConfigError(std::string("[energy] ") + e.what());
      }
      if (spec.gamma1 != 0.0 && spec.prompts.size() < 2) {
        log << task << ": warning: one prompt makes mean and max coincide; the classifier energy then rewards "
               "low confidence (set [dataset] classes or prompts)\n";
      }
      header.prompts = spec.prompts;
      BackendHandle handle = make_backend(c);
      header.backend = handle.backend->descriptor();
      if (spec.gamma2 != 0.0) {
        for (int t : spec.timesteps) {
          if (t < 1 || t > handle.schedule.length()) {
            throw ConfigError("[energy] timestep " + std::to_string(t) + " outside the schedule [1, " +
                              std::to_string(handle.schedule.length()) + "]");
          }
        }
      }
      out = detail::run_task(c, ds, spec, handle.schedule, *handle.backend);
      for (const auto& s : ds.skipped) out.tally.skipped.push_back(s);
    }

    for (const auto& s : out.tally.skipped) log << task << ": skipped " << s.id << ": " << s.reason << "\n";
    const auto paths =
        write_report(c.out, header, out.metrics, out.tally.skipped_json(), out.table, out.tally.per_image);

    if (c.task != Task::BenchBoSynthetic && out.tally.images == 0) {
      log << task << ": warning: dataset is empty; wrote a report with zero counts\n";
    }
    if (c.task == Task::BenchBoSynthetic) {
      log << task << ": " << c.bo_synthetic.functions.size() << " function(s) x " << c.bo_synthetic.seeds
          << " seeds -> " << paths.json.string() << "\n";
    } else {
      log << task << ": " << out.tally.completed() << " of " << out.tally.images << " images, "
          << out.tally.skipped.size() << " skipped -> " << paths.json.string() << "\n";
    }
    if (out.tally.images > 0 && out.tally.completed() == 0) {
      log << task << ": every image failed\n";
      return out.tally.backend_failures == out.tally.images ? kExitBackend : kExitFailure;
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    log << task << ": config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DatasetError& e) {
    log << task << ": dataset error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const BackendError& e) {
    log << task << ": backend error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const std::exception& e) {
    log << task << ": error: " << e.what() << "\n";
    return kExitFailure;
  }
}

/// Reads `config_path`, applies CLI overrides and runs.
inline int run(const fs::path& config_path, const Overrides& overrides, std::ostream& log = std::cerr) {
  RunConfig c;
  try {
    c = load_config(config_path);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  apply(c, overrides);
  return run(c, log);
}

}  // namespace canon::bench
