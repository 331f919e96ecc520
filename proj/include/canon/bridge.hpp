#pragma once

#include <boost/beast/core/detail/base64.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <utility>
#include <vector>

#include "canon/energy.hpp"
#include "canon/error.hpp"
#include "canon/image.hpp"
#include "canon/png_io.hpp"

// JSON-over-HTTP backend. Wire format:
//   GET  /v1/health          -> {"status": "ok", "models": [str, ...]}
//   GET  /v1/schedule        -> {"betas": [double, ...]}
//   POST /v1/logits          {"image_png_b64", "prompts": [str]} -> {"logits": [double]}
//   POST /v1/denoise_error   {"image_png_b64", "timestep", "seed"} -> {"mse": double}
// Failures carry {"error": code, "detail": text}; code "timestep_out_of_range"
// maps to RangeError.

namespace canon::bridge {

using nlohmann::json;

inline std::string base64_encode(std::span<const unsigned char> bytes) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

inline std::vector<unsigned char> base64_decode(const std::string& text) {
  namespace b64 = boost::beast::detail::base64;
  std::vector<unsigned char> out(b64::decoded_size(text.size()));
  const auto [written, read] = b64::decode(out.data(), text.data(), text.size());
  // decode stops at the first '=' or at an invalid character; only padding may follow.
  if (text.find_first_not_of('=', read) != std::string::npos || text.size() % 4 != 0) {
    throw ProtocolError("image_png_b64 is not valid base64");
  }
  out.resize(written);
  return out;
}

// Schema checks shared by client and server. Each throws ProtocolError naming
// the offending field.
namespace schema {

inline const json& field(const json& body, const char* name) {
  if (!body.is_object()) throw ProtocolError("body is not a JSON object");
  auto it = body.find(name);
  if (it == body.end()) throw ProtocolError(std::string("missing field '") + name + "'");
  return *it;
}

inline double number(const json& v, const std::string& what) {
  if (!v.is_number()) throw ProtocolError("field '" + what + "' must be a number");
  return v.get<double>();
}

inline std::vector<double> number_array(const json& body, const char* name) {
  const json& v = field(body, name);
  if (!v.is_array()) throw ProtocolError(std::string("field '") + name + "' must be an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) out.push_back(number(x, name));
  return out;
}

inline std::vector<std::string> string_array(const json& body, const char* name) {
  const json& v = field(body, name);
  if (!v.is_array()) throw ProtocolError(std::string("field '") + name + "' must be an array");
  std::vector<std::string> out;
  for (const auto& x : v) {
    if (!x.is_string()) throw ProtocolError(std::string("field '") + name + "' must hold strings");
    out.push_back(x.get<std::string>());
  }
  return out;
}

inline std::string string_field(const json& body, const char* name) {
  const json& v = field(body, name);
  if (!v.is_string()) throw ProtocolError(std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

inline std::vector<double> logits_response(const json& body, std::size_t n_prompts) {
  auto logits = number_array(body, "logits");
  if (logits.size() != n_prompts) {
    throw ProtocolError("field 'logits' has " + std::to_string(logits.size()) + " entries for " +
                        std::to_string(n_prompts) + " prompts");
  }
  return logits;
}

inline double denoise_response(const json& body) { return number(field(body, "mse"), "mse"); }

inline std::vector<std::string> health_response(const json& body) {
  auto models = string_array(body, "models");
  if (models.empty()) throw ProtocolError("field 'models' is empty");
  return models;
}

inline std::vector<double> schedule_response(const json& body) {
  auto betas = number_array(body, "betas");
  if (betas.empty()) throw ProtocolError("field 'betas' is empty");
  return betas;
}

struct LogitsRequest {
  std::string image_png_b64;
  std::vector<std::string> prompts;
};

inline LogitsRequest logits_request(const json& body) {
  return {string_field(body, "image_png_b64"), string_array(body, "prompts")};
}

struct DenoiseRequest {
  std::string image_png_b64;
  int timestep = 0;
  std::uint64_t seed = 0;
};

inline DenoiseRequest denoise_request(const json& body) {
  DenoiseRequest r;
  r.image_png_b64 = string_field(body, "image_png_b64");
  const json& t = field(body, "timestep");
  if (!t.is_number_integer()) throw ProtocolError("field 'timestep' must be an integer");
  r.timestep = t.get<int>();
  const json& s = field(body, "seed");
  if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0)) {
    throw ProtocolError("field 'seed' must be a nonnegative integer");
  }
  r.seed = s.get<std::uint64_t>();
  return r;
}

}  // namespace schema

struct RemoteBackendConfig {
  std::string base_url = "http://127.0.0.1:8600";
  int timeout_ms = 30000;
  int retries = 2;
  int image_height = 224;
  int image_width = 224;
  int max_in_flight = 4;

  void validate() const {
    if (timeout_ms <= 0) throw ArgumentError("timeout_ms must be > 0");
    if (retries < 0) throw ArgumentError("retries must be >= 0");
    if (image_height < 1 || image_width < 1) throw ArgumentError("request image size must be positive");
    if (max_in_flight < 1) throw ArgumentError("max_in_flight must be >= 1");
    if (base_url.rfind("http://", 0) != 0) throw ArgumentError("base_url must start with http://");
  }
};

class RemoteBackend final : public EnergyBackend {
 public:
  explicit RemoteBackend(RemoteBackendConfig config) : config_(std::move(config)) {
    config_.validate();
    slots_ = std::make_unique<std::counting_semaphore<kMaxInFlight>>(std::min(config_.max_in_flight, kMaxInFlight));
  }

  const RemoteBackendConfig& config() const { return config_; }

  Logits logits(const Image& image, std::span<const std::string> prompts) const override {
    json body = {{"image_png_b64", encode_image(image)}, {"prompts", json::array()}};
    for (const auto& p : prompts) body["prompts"].push_back(p);
    return Logits{schema::logits_response(call("POST", "/v1/logits", &body), prompts.size())};
  }

  double denoise_error(const Image& image, int timestep, std::uint64_t seed) const override {
    if (timestep < 1) throw RangeError("timestep " + std::to_string(timestep) + " is below 1");
    const int steps = schedule_length();
    if (timestep > steps) {
      throw RangeError("timestep " + std::to_string(timestep) + " exceeds the served schedule (T=" +
                       std::to_string(steps) + ")");
    }
    const json body = {{"image_png_b64", encode_image(image)}, {"timestep", timestep}, {"seed", seed}};
    return schema::denoise_response(call("POST", "/v1/denoise_error", &body));
  }

  std::string descriptor() const override { return "remote:" + config_.base_url; }

  std::vector<std::string> health() const { return schema::health_response(call("GET", "/v1/health", nullptr)); }

  NoiseSchedule schedule() const {
    return NoiseSchedule(schema::schedule_response(call("GET", "/v1/schedule", nullptr)));
  }

  /// Number of HTTP attempts made so far, retries included.
  long attempts() const { return attempts_.load(); }

 private:
  static constexpr int kMaxInFlight = 256;

  std::string encode_image(const Image& image) const {
    const Image sized = resize_bilinear(image, config_.image_height, config_.image_width);
    return base64_encode(encode_png(sized));
  }

  int schedule_length() const {
    std::lock_guard lock(schedule_mu_);
    if (!schedule_length_) schedule_length_ = schedule().length();
    return *schedule_length_;
  }

  json call(const std::string& method, const std::string& path, const json* body) const {
    slots_->acquire();
    struct Release {
      std::counting_semaphore<kMaxInFlight>& s;
      ~Release() { s.release(); }
    } release{*slots_};

    const std::string what = method + " " + config_.base_url + path;
    const std::string payload = body ? body->dump() : std::string();
    std::string last_failure;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
      attempts_.fetch_add(1);
      httplib::Client client(config_.base_url);
      const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_write_timeout(timeout);
      client.set_keep_alive(false);
      httplib::Result res = body ? client.Post(path, payload, "application/json") : client.Get(path);
      if (!res) {
        last_failure = httplib::to_string(res.error());
        continue;
      }
      const int status = res->status;
      if (status == 502 || status == 503 || status == 504) {
        last_failure = "HTTP " + std::to_string(status);
        continue;
      }
      json reply;
      try {
        reply = json::parse(res->body);
      } catch (const json::parse_error& e) {
        throw ProtocolError(what + ": reply is not JSON (" + e.what() + ")");
      }
      if (status >= 200 && status < 300) return reply;
      const std::string code = reply.is_object() ? reply.value("error", std::string("unknown")) : "unknown";
      const std::string detail = reply.is_object() ? reply.value("detail", std::string()) : std::string();
      const std::string message = what + ": HTTP " + std::to_string(status) + " " + code +
                                  (detail.empty() ? "" : ": " + detail);
      if (code == "timestep_out_of_range") throw RangeError(message);
      if (status >= 500) throw ServerError(message);
      throw ProtocolError(message);
    }
    throw Timeout(what + ": no reply after " + std::to_string(config_.retries + 1) + " attempt(s) of " +
                  std::to_string(config_.timeout_ms) + " ms (" + last_failure + ")");
  }

  RemoteBackendConfig config_;
  std::unique_ptr<std::counting_semaphore<kMaxInFlight>> slots_;
  mutable std::mutex schedule_mu_;
  mutable std::optional<int> schedule_length_;
  mutable std::atomic<long> attempts_{0};
};

}  // namespace canon::bridge
