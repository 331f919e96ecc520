#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "canon/error.hpp"

namespace canon::bench {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kReportSchema = 1;

/// Everything a report file carries besides the protocol's own metrics.
struct ReportHeader {
  std::string task;
  std::string config_digest;
  json seeds = json::object();
  std::vector<std::string> prompts;
  std::string backend;
  json config = json::object();
  json policy = json::object();  // choices the results depend on (fill, crop)
};

struct ReportTable {
  std::vector<std::string> header;
  std::vector<std::vector<json>> rows;
};

struct ReportPaths {
  fs::path json;
  fs::path csv;
  fs::path per_image;
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace detail {

inline std::string csv_cell(const json& v) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  }
  return v.dump();
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace detail

inline json report_document(const ReportHeader& h, const json& metrics, const json& skipped,
                            const std::string& timestamp) {
  return {{"schema", kReportSchema},
          {"task", h.task},
          {"timestamp", timestamp},
          {"config_digest", h.config_digest},
          {"seeds", h.seeds},
          {"prompts", h.prompts},
          {"backend", h.backend},
          {"policy", h.policy},
          {"config", h.config},
          {"metrics", metrics},
          {"skipped", skipped}};
}

/// Writes report.json, summary.csv and per_image.jsonl into `dir`. Every CSV
/// row repeats the config digest and the seeds so rows stay traceable once
/// concatenated with other runs.
inline ReportPaths write_report(const fs::path& dir, const ReportHeader& header, const json& metrics,
                                const json& skipped, const ReportTable& table, const std::vector<json>& per_image) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());

  ReportPaths paths{dir / "report.json", dir / "summary.csv", dir / "per_image.jsonl"};
  detail::write_text(paths.json, report_document(header, metrics, skipped, utc_timestamp()).dump(2) + "\n");

  std::vector<std::string> seed_names;
  for (const auto& [k, v] : header.seeds.items()) seed_names.push_back(k);
  std::string csv;
  for (std::size_t i = 0; i < table.header.size(); ++i) csv += (i ? "," : "") + table.header[i];
  csv += ",config_digest";
  for (const auto& s : seed_names) csv += "," + s;
  csv += "\n";
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) csv += (i ? "," : "") + detail::csv_cell(row[i]);
    csv += "," + header.config_digest;
    for (const auto& s : seed_names) csv += "," + detail::csv_cell(header.seeds[s]);
    csv += "\n";
  }
  detail::write_text(paths.csv, csv);

  std::string lines;
  for (const auto& rec : per_image) lines += rec.dump() + "\n";
  detail::write_text(paths.per_image, lines);
  return paths;
}

}  // namespace canon::bench
