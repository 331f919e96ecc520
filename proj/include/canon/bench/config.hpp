#pragma once

#include <toml.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "canon/energy.hpp"
#include "canon/error.hpp"
#include "canon/optimize.hpp"
#include "canon/serialize.hpp"
#include "canon/transforms.hpp"

namespace canon::bench {

namespace fs = std::filesystem;

enum class Task { Canon, BenchRotation, BenchColor, BenchContrast, BenchBoSynthetic, EnergyEval, GateEval };

inline const std::vector<std::pair<std::string, Task>>& task_names() {
  static const std::vector<std::pair<std::string, Task>> names = {
      {"canon", Task::Canon},
      {"bench-rotation", Task::BenchRotation},
      {"bench-color", Task::BenchColor},
      {"bench-contrast", Task::BenchContrast},
      {"bench-bo-synthetic", Task::BenchBoSynthetic},
      {"energy-eval", Task::EnergyEval},
      {"gate-eval", Task::GateEval}};
  return names;
}

inline Task parse_task(const std::string& name) {
  for (const auto& [n, t] : task_names()) {
    if (n == name) return t;
  }
  throw ConfigError("unknown task '" + name + "'");
}

inline std::string to_string(Task task) {
  for (const auto& [n, t] : task_names()) {
    if (t == task) return n;
  }
  return "?";
}

struct DatasetConfig {
  std::optional<fs::path> manifest;
  std::optional<fs::path> image;      // single image, canon task
  std::optional<std::string> synthetic;  // fixture kind
  int count = 100;
  int size = 33;
  int classes = 5;
  bool classes_set = false;  // explicit in the file: sizes the default prompt list
  std::size_t limit = 0;
  std::vector<std::string> class_names;
  std::string prompt_template = "a photo of a {label}";
  std::optional<fs::path> prompts_file;
  std::vector<std::string> prompts;
};

struct TransformConfig {
  std::string kind = "rotation";
  int n = 8;  // C_n for rotation tasks
  std::vector<double> lower;  // search box
  std::vector<double> upper;
  std::vector<double> corruption_lower;
  std::vector<double> corruption_upper;
  int bins = 5;
  double gate_threshold = 0.0;
  int tta_views = 0;
};

struct ScheduleConfig {
  int steps = 1000;
  double beta_start = 0.00085;
  double beta_end = 0.012;
};

struct BackendConfig {
  std::string kind = "synthetic";
  std::string cue = "upright";
  std::optional<double> sharpness;  // per-cue default when unset
  std::optional<fs::path> model;
  std::string url;
  int timeout_ms = 30000;
  int retries = 2;
  std::vector<int> image_size = {224, 224};
  int max_in_flight = 4;
};

struct BoSyntheticConfig {
  std::vector<std::string> functions = {"bowl-2d"};
  int seeds = 100;
};

struct RunConfig {
  Task task = Task::Canon;
  fs::path source;  // the config file, for relative paths
  fs::path out = "canon-out";
  int workers = 1;
  std::uint64_t seed = 0;
  bool crop_disk = false;
  DatasetConfig dataset;
  TransformConfig transform;
  EnergySpec energy;
  ScheduleConfig schedule;
  BoConfig optimizer;
  bool optimizer_set = false;  // any [optimizer] key given
  BackendConfig backend;
  BoSyntheticConfig bo_synthetic;

  /// Identifies everything that affects results (not out dir or workers).
  json digest_source() const;
  std::string digest() const { return digest_of(digest_source()); }
};

namespace detail {

template <class T>
std::optional<T> get(const toml::table& t, const char* key, const std::string& section) {
  const toml::node* n = t.get(key);
  if (!n) return std::nullopt;
  if constexpr (std::is_same_v<T, double>) {
    if (auto v = n->value<double>()) return *v;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (n->is_boolean()) return n->value<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (n->is_integer()) return static_cast<T>(*n->value<std::int64_t>());
  } else {
    if (n->is_string()) return T(*n->value<std::string>());
  }
  throw ConfigError("[" + section + "] " + key + " has the wrong type");
}

template <class T>
std::optional<std::vector<T>> get_array(const toml::table& t, const char* key, const std::string& section) {
  const toml::node* n = t.get(key);
  if (!n) return std::nullopt;
  const toml::array* arr = n->as_array();
  if (!arr) throw ConfigError("[" + section + "] " + key + " must be an array");
  std::vector<T> out;
  for (const auto& el : *arr) {
    std::optional<T> v;
    if constexpr (std::is_same_v<T, double>) {
      v = el.value<double>();
    } else if constexpr (std::is_integral_v<T>) {
      if (el.is_integer()) v = static_cast<T>(*el.value<std::int64_t>());
    } else {
      v = el.value<std::string>();
    }
    if (!v) throw ConfigError("[" + section + "] " + key + " has an element of the wrong type");
    out.push_back(*v);
  }
  return out;
}

inline const toml::table* section(const toml::table& root, const char* name) {
  const toml::node* n = root.get(name);
  if (!n) return nullptr;
  if (!n->is_table()) throw ConfigError(std::string("[") + name + "] must be a table");
  return n->as_table();
}

inline void reject_unknown(const toml::table& t, const std::string& name, std::initializer_list<const char*> known) {
  for (const auto& [k, v] : t) {
    bool ok = false;
    for (const char* key : known) ok = ok || k.str() == key;
    if (!ok) throw ConfigError("[" + name + "] unknown key '" + std::string(k.str()) + "'");
  }
}

inline fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.is_absolute() ? p : base / p;
}

}  // namespace detail

/// Defaults that depend on the transform kind: search box, corruption range
/// and the optimizer's initial design.
inline void apply_kind_defaults(RunConfig& c) {
  auto& t = c.transform;
  if (t.kind == "color") {
    if (t.lower.empty()) t.lower = {-1.0, -1.0};
    if (t.upper.empty()) t.upper = {1.0, 1.0};
    if (t.corruption_lower.empty()) t.corruption_lower = {-1.0, -1.0};
    if (t.corruption_upper.empty()) t.corruption_upper = {1.0, 1.0};
  } else if (t.kind == "gamma") {
    if (t.lower.empty()) t.lower = {-2.0};
    if (t.upper.empty()) t.upper = {2.0};
    if (t.corruption_lower.empty()) t.corruption_lower = {-2.0};
    if (t.corruption_upper.empty()) t.corruption_upper = {2.0};
    if (!c.optimizer_set) {
      c.optimizer.grid_per_dim = {3};
      c.optimizer.n_random = 4;
      c.optimizer.n_iters = 5;
    }
  }
}

/// Box [-0.7, -0.3]^2 over log-chroma, 10 random points and 50 GP-EI steps,
/// classifier energy plus a -10 weighted single-step (t = 50) diffusion term.
inline void apply_rcc_preset(RunConfig& c) {
  c.transform.kind = "color";
  c.transform.lower = {-0.7, -0.7};
  c.transform.upper = {-0.3, -0.3};
  c.optimizer.grid_per_dim = {};
  c.optimizer.n_random = 10;
  c.optimizer.n_iters = 50;
  c.optimizer_set = true;
  c.energy.gamma2 = -10.0;
  c.energy.timesteps = {50};
}

inline RunConfig parse_config(const toml::table& root, const fs::path& source = {}) {
  using detail::get;
  using detail::get_array;
  RunConfig c;
  c.source = source;
  const fs::path base = source.empty() ? fs::path(".") : source.parent_path();
  detail::reject_unknown(root, "top level", {"task", "dataset", "transform", "energy", "optimizer", "backend", "bo"});

  if (const auto* t = detail::section(root, "task")) {
    detail::reject_unknown(*t, "task", {"name", "seed", "workers", "out", "crop_disk"});
    if (auto v = get<std::string>(*t, "name", "task")) c.task = parse_task(*v);
    if (auto v = get<std::int64_t>(*t, "seed", "task")) c.seed = static_cast<std::uint64_t>(*v);
    if (auto v = get<int>(*t, "workers", "task")) c.workers = *v;
    if (auto v = get<std::string>(*t, "out", "task")) c.out = detail::resolve(base, *v);
    if (auto v = get<bool>(*t, "crop_disk", "task")) c.crop_disk = *v;
  }

  if (const auto* d = detail::section(root, "dataset")) {
    detail::reject_unknown(*d, "dataset", {"manifest", "image", "synthetic", "count", "size", "classes", "limit",
                                           "class_names", "prompt_template", "prompts_file", "prompts"});
    auto& ds = c.dataset;
    if (auto v = get<std::string>(*d, "manifest", "dataset")) ds.manifest = detail::resolve(base, *v);
    if (auto v = get<std::string>(*d, "image", "dataset")) ds.image = detail::resolve(base, *v);
    if (auto v = get<std::string>(*d, "synthetic", "dataset")) ds.synthetic = *v;
    if (auto v = get<int>(*d, "count", "dataset")) ds.count = *v;
    if (auto v = get<int>(*d, "size", "dataset")) ds.size = *v;
    if (auto v = get<int>(*d, "classes", "dataset")) {
      ds.classes = *v;
      ds.classes_set = true;
    }
    if (auto v = get<std::int64_t>(*d, "limit", "dataset")) ds.limit = static_cast<std::size_t>(*v);
    if (auto v = get_array<std::string>(*d, "class_names", "dataset")) ds.class_names = *v;
    if (auto v = get<std::string>(*d, "prompt_template", "dataset")) ds.prompt_template = *v;
    if (auto v = get<std::string>(*d, "prompts_file", "dataset")) ds.prompts_file = detail::resolve(base, *v);
    if (auto v = get_array<std::string>(*d, "prompts", "dataset")) ds.prompts = *v;
  }

  if (const auto* t = detail::section(root, "transform")) {
    detail::reject_unknown(*t, "transform", {"kind", "n", "lower", "upper", "corruption_lower", "corruption_upper",
                                             "bins", "preset", "gate_threshold", "tta_views"});
    auto& tr = c.transform;
    if (auto v = get<std::string>(*t, "preset", "transform")) {
      if (*v != "rcc") throw ConfigError("[transform] unknown preset '" + *v + "' (known: rcc)");
      apply_rcc_preset(c);
    }
    if (auto v = get<std::string>(*t, "kind", "transform")) tr.kind = *v;
    if (auto v = get<int>(*t, "n", "transform")) tr.n = *v;
    if (auto v = get_array<double>(*t, "lower", "transform")) tr.lower = *v;
    if (auto v = get_array<double>(*t, "upper", "transform")) tr.upper = *v;
    if (auto v = get_array<double>(*t, "corruption_lower", "transform")) tr.corruption_lower = *v;
    if (auto v = get_array<double>(*t, "corruption_upper", "transform")) tr.corruption_upper = *v;
    if (auto v = get<int>(*t, "bins", "transform")) tr.bins = *v;
    if (auto v = get<double>(*t, "gate_threshold", "transform")) tr.gate_threshold = *v;
    if (auto v = get<int>(*t, "tta_views", "transform")) tr.tta_views = *v;
  }

  if (const auto* e = detail::section(root, "energy")) {
    detail::reject_unknown(*e, "energy", {"alpha", "beta", "gamma1", "gamma2", "timesteps", "mc_samples",
                                          "noise_seed", "normalizing_prompt", "temperature", "schedule_steps",
                                          "beta_start", "beta_end"});
    auto& s = c.energy;
    if (auto v = get<double>(*e, "alpha", "energy")) s.alpha = *v;
    if (auto v = get<double>(*e, "beta", "energy")) s.beta = *v;
    if (auto v = get<double>(*e, "gamma1", "energy")) s.gamma1 = *v;
    if (auto v = get<double>(*e, "gamma2", "energy")) s.gamma2 = *v;
    if (auto v = get_array<int>(*e, "timesteps", "energy")) s.timesteps = *v;
    if (auto v = get<int>(*e, "mc_samples", "energy")) s.mc_samples = *v;
    if (auto v = get<std::int64_t>(*e, "noise_seed", "energy")) s.noise_seed = static_cast<std::uint64_t>(*v);
    if (auto v = get<std::string>(*e, "normalizing_prompt", "energy")) s.normalizing_prompt = *v;
    if (auto v = get<double>(*e, "temperature", "energy")) s.temperature = *v;
    if (auto v = get<int>(*e, "schedule_steps", "energy")) c.schedule.steps = *v;
    if (auto v = get<double>(*e, "beta_start", "energy")) c.schedule.beta_start = *v;
    if (auto v = get<double>(*e, "beta_end", "energy")) c.schedule.beta_end = *v;
  }

  if (const auto* o = detail::section(root, "optimizer")) {
    detail::reject_unknown(*o, "optimizer", {"grid_per_dim", "n_random", "n_iters", "seed", "xi", "candidate_count",
                                             "lengthscale", "signal_var", "noise_var", "local_sigma"});
    auto& b = c.optimizer;
    c.optimizer_set = c.optimizer_set || !o->empty();
    if (auto v = get_array<int>(*o, "grid_per_dim", "optimizer")) b.grid_per_dim = *v;
    if (auto v = get<int>(*o, "n_random", "optimizer")) b.n_random = *v;
    if (auto v = get<int>(*o, "n_iters", "optimizer")) b.n_iters = *v;
    if (auto v = get<std::int64_t>(*o, "seed", "optimizer")) b.seed = static_cast<std::uint64_t>(*v);
    if (auto v = get<double>(*o, "xi", "optimizer")) b.xi = *v;
    if (auto v = get<int>(*o, "candidate_count", "optimizer")) b.candidate_count = *v;
    if (auto v = get<double>(*o, "lengthscale", "optimizer")) b.lengthscale = *v;
    if (auto v = get<double>(*o, "signal_var", "optimizer")) b.signal_var = *v;
    if (auto v = get<double>(*o, "noise_var", "optimizer")) b.noise_var = *v;
    if (auto v = get<double>(*o, "local_sigma", "optimizer")) b.local_sigma = *v;
  }

  if (const auto* b = detail::section(root, "backend")) {
    detail::reject_unknown(*b, "backend", {"kind", "cue", "sharpness", "model", "url", "timeout_ms", "retries",
                                           "image_size", "max_in_flight"});
    auto& be = c.backend;
    if (auto v = get<std::string>(*b, "kind", "backend")) be.kind = *v;
    if (auto v = get<std::string>(*b, "cue", "backend")) be.cue = *v;
    if (auto v = get<double>(*b, "sharpness", "backend")) be.sharpness = *v;
    if (auto v = get<std::string>(*b, "model", "backend")) be.model = detail::resolve(base, *v);
    if (auto v = get<std::string>(*b, "url", "backend")) be.url = *v;
    if (auto v = get<int>(*b, "timeout_ms", "backend")) be.timeout_ms = *v;
    if (auto v = get<int>(*b, "retries", "backend")) be.retries = *v;
    if (auto v = get_array<int>(*b, "image_size", "backend")) be.image_size = *v;
    if (auto v = get<int>(*b, "max_in_flight", "backend")) be.max_in_flight = *v;
  }

  if (const auto* b = detail::section(root, "bo")) {
    detail::reject_unknown(*b, "bo", {"functions", "seeds"});
    if (auto v = get_array<std::string>(*b, "functions", "bo")) c.bo_synthetic.functions = *v;
    if (auto v = get<int>(*b, "seeds", "bo")) c.bo_synthetic.seeds = *v;
  }

  apply_kind_defaults(c);
  return c;
}

inline RunConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  toml::table root;
  try {
    root = toml::parse_file(path.string());
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << path.string() << ":" << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }
  return parse_config(root, path);
}

inline RunConfig parse_config_string(const std::string& text, const fs::path& source = {}) {
  try {
    return parse_config(toml::parse(text), source);
  } catch (const toml::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.description().data());
  }
}

/// Checks cross-field constraints once CLI overrides are applied.
inline void validate(const RunConfig& c) {
  if (c.workers < 1) throw ConfigError("workers must be >= 1");
  const auto& t = c.transform;
  if (t.kind != "rotation" && t.kind != "color" && t.kind != "gamma") {
    throw ConfigError("[transform] kind must be rotation, color or gamma");
  }
  if (t.kind == "rotation" && t.n < 1) throw ConfigError("[transform] n must be >= 1");
  if (t.kind != "rotation") {
    const std::size_t dim = t.kind == "color" ? 2 : 1;
    if (t.lower.size() != dim || t.upper.size() != dim) {
      throw ConfigError("[transform] lower/upper must have " + std::to_string(dim) + " entries for " + t.kind);
    }
    for (std::size_t i = 0; i < dim; ++i) {
      if (!(t.lower[i] < t.upper[i])) throw ConfigError("[transform] lower must be below upper");
    }
    if (t.corruption_lower.size() != dim || t.corruption_upper.size() != dim) {
      throw ConfigError("[transform] corruption range must have " + std::to_string(dim) + " entries");
    }
    for (std::size_t i = 0; i < dim; ++i) {
      if (t.corruption_lower[i] > t.corruption_upper[i]) {
        throw ConfigError("[transform] corruption_lower must not exceed corruption_upper");
      }
    }
  }
  if (t.bins < 1) throw ConfigError("[transform] bins must be >= 1");
  if (t.tta_views < 0 || (t.kind == "rotation" && t.tta_views > t.n)) {
    throw ConfigError("[transform] tta_views must be in [0, n]");
  }
  try {
    if (c.transform.kind != "rotation") {
      c.optimizer.validate(c.transform.kind == "color" ? 2 : 1);
    }
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("[optimizer] ") + e.what());
  }
  const auto& b = c.backend;
  if (b.kind != "synthetic" && b.kind != "local" && b.kind != "remote") {
    throw ConfigError("[backend] kind must be synthetic, local or remote");
  }
  if (b.kind == "local" && !b.model) throw ConfigError("[backend] local backend needs model = <path>");
  if (b.kind == "local" && !fs::exists(*b.model)) throw ConfigError("local model file not found: " + b.model->string());
  if (b.kind == "remote" && b.url.empty()) throw ConfigError("[backend] remote backend needs url");
  if (b.image_size.size() != 2) throw ConfigError("[backend] image_size must be [height, width]");
  const auto& d = c.dataset;
  if (d.manifest && !fs::exists(*d.manifest)) throw ConfigError("dataset manifest not found: " + d.manifest->string());
  if (d.image && !fs::exists(*d.image)) throw ConfigError("image not found: " + d.image->string());
  if (d.prompts_file && !fs::exists(*d.prompts_file)) {
    throw ConfigError("prompt file not found: " + d.prompts_file->string());
  }
  if (c.bo_synthetic.seeds < 1) throw ConfigError("[bo] seeds must be >= 1");
}

inline json RunConfig::digest_source() const {
  json j;
  j["task"] = to_string(task);
  j["seed"] = seed;
  j["crop_disk"] = crop_disk;
  const auto& d = dataset;
  j["dataset"] = {{"manifest", d.manifest ? d.manifest->generic_string() : ""},
                  {"image", d.image ? d.image->generic_string() : ""},
                  {"synthetic", d.synthetic.value_or("")},
                  {"count", d.count},
                  {"size", d.size},
                  {"classes", d.classes},
                  {"limit", d.limit},
                  {"class_names", d.class_names},
                  {"prompt_template", d.prompt_template},
                  {"prompts_file", d.prompts_file ? d.prompts_file->generic_string() : ""},
                  {"prompts", d.prompts}};
  const auto& t = transform;
  j["transform"] = {{"kind", t.kind},
                    {"n", t.n},
                    {"lower", t.lower},
                    {"upper", t.upper},
                    {"corruption_lower", t.corruption_lower},
                    {"corruption_upper", t.corruption_upper},
                    {"bins", t.bins},
                    {"gate_threshold", t.gate_threshold},
                    {"tta_views", t.tta_views}};
  j["energy"] = to_json_value(energy);
  j["schedule"] = {{"steps", schedule.steps}, {"beta_start", schedule.beta_start}, {"beta_end", schedule.beta_end}};
  j["optimizer"] = to_json_value(optimizer);
  const auto& b = backend;
  j["backend"] = {{"kind", b.kind},
                  {"cue", b.cue},
                  {"sharpness", b.sharpness ? json(*b.sharpness) : json(nullptr)},
                  {"model", b.model ? b.model->generic_string() : ""},
                  {"url", b.url},
                  {"image_size", b.image_size}};
  j["bo"] = {{"functions", bo_synthetic.functions}, {"seeds", bo_synthetic.seeds}};
  return j;
}

}  // namespace canon::bench
