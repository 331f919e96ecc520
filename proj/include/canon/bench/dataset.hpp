#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "canon/bench/fixtures.hpp"
#include "canon/energy.hpp"
#include "canon/error.hpp"
#include "canon/image.hpp"
#include "canon/png_io.hpp"
#include "canon/serialize.hpp"

namespace canon::bench {

namespace fs = std::filesystem;

struct SkippedItem {
  std::string id;
  std::string reason;
};

struct Dataset {
  std::vector<LabeledImage> items;
  std::vector<SkippedItem> skipped;  // rows that could not be loaded
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(trim(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  cells.push_back(trim(cell));
  return cells;
}

}  // namespace detail

/// Reads a CSV manifest with header `id,path,label`. Paths are relative to the
/// manifest's directory. A missing manifest is a configuration problem; a bad
/// header or row is a DatasetError; rows whose image cannot be decoded are
/// skipped and listed.
inline Dataset load_manifest(const fs::path& manifest, std::size_t limit = 0) {
  std::ifstream in(manifest);
  if (!in) throw ConfigError("dataset manifest not found: " + manifest.string());
  std::string line;
  if (!std::getline(in, line)) throw DatasetError(manifest.string() + ": empty manifest (expected header id,path,label)");
  const auto header = detail::split_csv_line(line);
  int col_id = -1, col_path = -1, col_label = -1;
  for (int i = 0; i < static_cast<int>(header.size()); ++i) {
    if (header[i] == "id") col_id = i;
    if (header[i] == "path") col_path = i;
    if (header[i] == "label") col_label = i;
  }
  if (col_id < 0 || col_path < 0 || col_label < 0) {
    throw DatasetError(manifest.string() + ": header must contain id, path and label columns");
  }
  const int needed = std::max({col_id, col_path, col_label}) + 1;

  Dataset ds;
  const fs::path base = manifest.parent_path();
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    if (limit > 0 && ds.items.size() + ds.skipped.size() >= limit) break;
    const auto cells = detail::split_csv_line(line);
    const std::string where = manifest.string() + ":" + std::to_string(line_no);
    if (static_cast<int>(cells.size()) < needed) throw DatasetError(where + ": expected at least " + std::to_string(needed) + " columns");
    LabeledImage item;
    item.id = cells[col_id];
    if (item.id.empty()) throw DatasetError(where + ": empty id");
    try {
      std::size_t used = 0;
      item.label = std::stoi(cells[col_label], &used);
      if (used != cells[col_label].size() || item.label < 0) throw std::invalid_argument("label");
    } catch (const std::logic_error&) {
      throw DatasetError(where + ": label '" + cells[col_label] + "' is not a nonnegative integer");
    }
    try {
      item.image = load_png(base / cells[col_path]);
    } catch (const Error& e) {
      ds.skipped.push_back({item.id, e.what()});
      continue;
    }
    ds.items.push_back(std::move(item));
  }
  return ds;
}

enum class FixtureKind { Upright, Neutral, Midtone, Noise };

inline FixtureKind parse_fixture_kind(const std::string& name) {
  if (name == "upright") return FixtureKind::Upright;
  if (name == "neutral") return FixtureKind::Neutral;
  if (name == "midtone") return FixtureKind::Midtone;
  if (name == "noise") return FixtureKind::Noise;
  throw ConfigError("unknown synthetic fixture '" + name + "' (expected upright, neutral, midtone or noise)");
}

inline const char* to_string(FixtureKind k) {
  switch (k) {
    case FixtureKind::Upright: return "upright";
    case FixtureKind::Neutral: return "neutral";
    case FixtureKind::Midtone: return "midtone";
    case FixtureKind::Noise: return "noise";
  }
  return "?";
}

/// Canonical synthetic images with labels cycling through 0..classes-1.
inline Dataset make_synthetic(FixtureKind kind, int count, int size, int classes, std::uint64_t seed) {
  if (count < 0 || size < 3 || classes < 1 || classes > 8) {
    throw ConfigError("synthetic dataset needs count >= 0, size >= 3 and 1..8 classes");
  }
  Dataset ds;
  std::mt19937_64 rng(splitmix64(seed ^ 0x5EED0F1C7ULL));
  for (int i = 0; i < count; ++i) {
    LabeledImage item;
    item.label = i % classes;
    char id[32];
    std::snprintf(id, sizeof(id), "%s-%04d", to_string(kind), i);
    item.id = id;
    switch (kind) {
      case FixtureKind::Upright: item.image = fixtures::upright_scene(size, rng, item.label); break;
      case FixtureKind::Neutral: item.image = fixtures::neutral_scene(size, rng, item.label); break;
      case FixtureKind::Midtone: item.image = fixtures::midtone_scene(size, rng, item.label); break;
      case FixtureKind::Noise:
        item.image = fixtures::random_noise(size, size, rng);
        fixtures::set_watermark(item.image, item.label);
        break;
    }
    ds.items.push_back(std::move(item));
  }
  return ds;
}

/// Writes a dataset as PNGs plus manifest.csv under `dir`.
inline fs::path write_dataset(const Dataset& ds, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ec) throw IoError("cannot create " + (dir / "images").string() + ": " + ec.message());
  const fs::path manifest = dir / "manifest.csv";
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot write " + manifest.string());
  out << "id,path,label\n";
  for (const auto& item : ds.items) {
    const std::string rel = "images/" + item.id + ".png";
    save_png(item.image, dir / rel);
    out << item.id << ',' << rel << ',' << item.label << '\n';
  }
  return manifest;
}

/// One prompt per line; blank lines are ignored.
inline std::vector<std::string> load_prompts(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("prompt file not found: " + path.string());
  std::vector<std::string> prompts;
  std::string line;
  while (std::getline(in, line)) {
    line = detail::trim(line);
    if (!line.empty()) prompts.push_back(line);
  }
  if (prompts.empty()) throw ConfigError("prompt file " + path.string() + " has no prompts");
  return prompts;
}

inline std::vector<std::string> prompts_from_template(const std::vector<std::string>& classes,
                                                      const std::string& pattern) {
  const std::string key = "{label}";
  std::vector<std::string> prompts;
  for (const auto& c : classes) {
    std::string p = pattern;
    const auto pos = p.find(key);
    if (pos != std::string::npos) p.replace(pos, key.size(), c);
    prompts.push_back(p);
  }
  return prompts;
}

}  // namespace canon::bench
