#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include <nlohmann/json.hpp>

#include "canon/energy.hpp"
#include "canon/optimize.hpp"
#include "canon/transforms.hpp"

namespace canon {

using nlohmann::json;

inline json to_json_value(const TransformPoint& p) { return p.params; }

inline json to_json_value(const TransformKind& k) {
  json j = {{"kind", k.name()}};
  if (k.tag == TransformTag::Composite) {
    j["members"] = json::array();
    for (const auto& m : k.members) j["members"].push_back(to_json_value(m));
  }
  return j;
}

inline json to_json_value(const TransformDomain& d) {
  json j;
  if (d.is_discrete()) {
    j["type"] = "discrete";
    j["points"] = json::array();
    for (const auto& p : d.points()) j["points"].push_back(p.params);
  } else {
    j["type"] = "box";
    j["lower"] = d.lower();
    j["upper"] = d.upper();
  }
  return j;
}

inline json to_json_value(const EnergySpec& s) {
  json j = {{"alpha", s.alpha},         {"beta", s.beta},
            {"gamma1", s.gamma1},       {"gamma2", s.gamma2},
            {"prompts", s.prompts},     {"temperature", s.temperature},
            {"timesteps", s.timesteps}, {"mc_samples", s.mc_samples},
            {"noise_seed", s.noise_seed}};
  j["normalizing_prompt"] = s.normalizing_prompt ? json(*s.normalizing_prompt) : json(nullptr);
  return j;
}

inline json to_json_value(const BoConfig& c) {
  return {{"grid_per_dim", c.grid_per_dim}, {"n_random", c.n_random},
          {"n_iters", c.n_iters},           {"seed", c.seed},
          {"xi", c.xi},                     {"candidate_count", c.candidate_count},
          {"lengthscale", c.lengthscale},   {"signal_var", c.signal_var},
          {"noise_var", c.noise_var},       {"local_sigma", c.local_sigma}};
}

inline json to_json_value(const OptTrace& t) {
  json evals = json::array();
  for (const auto& e : t.evaluations) {
    evals.push_back({{"point", e.point.params}, {"energy", e.value}, {"stage", to_string(e.stage)}});
  }
  return {{"evaluations", evals},
          {"best_point", t.best_point.params},
          {"best_value", t.best_value},
          {"best_index", t.best_index}};
}

inline std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string fnv1a_hex(const std::string& text) {
  const std::uint64_t h = fnv1a64(text);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string digest_of(const json& j) { return fnv1a_hex(j.dump()); }

}  // namespace canon
