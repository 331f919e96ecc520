#pragma once

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "canon/bridge.hpp"
#include "canon/energy.hpp"
#include "canon/png_io.hpp"

namespace canon::bridge {

/// Serves an in-process EnergyBackend over the bridge protocol on 127.0.0.1.
/// Meant for tests and for exercising the remote code path without models.
class BackendServer {
 public:
  /// Runs before every request; returning false lets a test take over the
  /// response (slow replies, malformed bodies, 5xx).
  using Hook = std::function<bool(const httplib::Request&, httplib::Response&)>;

  BackendServer(const EnergyBackend& backend, NoiseSchedule schedule, std::vector<std::string> models = {})
      : backend_(backend), schedule_(std::move(schedule)), models_(std::move(models)) {
    if (models_.empty()) models_.push_back(backend_.descriptor());
    routes();
    port_ = server_.bind_to_any_port("127.0.0.1");
    if (port_ <= 0) throw IoError("bridge server could not bind a port");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~BackendServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  BackendServer(const BackendServer&) = delete;
  BackendServer& operator=(const BackendServer&) = delete;

  int port() const { return port_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  /// Install before issuing requests; the hook is read without locking.
  void set_hook(Hook hook) { hook_ = std::move(hook); }

 private:
  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void fail(httplib::Response& res, int status, const std::string& code, const std::string& detail) {
    reply(res, status, {{"error", code}, {"detail", detail}});
  }

  template <class Fn>
  void handle(const httplib::Request& req, httplib::Response& res, Fn&& fn) {
    if (hook_ && !hook_(req, res)) return;
    try {
      fn();
    } catch (const ProtocolError& e) {
      fail(res, 400, "bad_request", e.what());
    } catch (const FormatError& e) {
      fail(res, 400, "bad_image", e.what());
    } catch (const json::exception& e) {
      fail(res, 400, "bad_json", e.what());
    } catch (const std::exception& e) {
      fail(res, 500, "internal", e.what());
    }
  }

  Image decode(const std::string& b64) const {
    const auto bytes = base64_decode(b64);
    return decode_png(bytes);
  }

  void routes() {
    server_.Get("/v1/health", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [&] { reply(res, 200, {{"status", "ok"}, {"models", models_}}); });
    });
    server_.Get("/v1/schedule", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [&] { reply(res, 200, {{"betas", schedule_.betas()}}); });
    });
    server_.Post("/v1/logits", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [&] {
        const auto r = schema::logits_request(json::parse(req.body));
        const Logits l = backend_.logits(decode(r.image_png_b64), r.prompts);
        reply(res, 200, {{"logits", l.values}});
      });
    });
    server_.Post("/v1/denoise_error", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [&] {
        const auto r = schema::denoise_request(json::parse(req.body));
        if (r.timestep < 1 || r.timestep > schedule_.length()) {
          fail(res, 422, "timestep_out_of_range",
               "timestep " + std::to_string(r.timestep) + " not in [1, " + std::to_string(schedule_.length()) + "]");
          return;
        }
        reply(res, 200, {{"mse", backend_.denoise_error(decode(r.image_png_b64), r.timestep, r.seed)}});
      });
    });
  }

  const EnergyBackend& backend_;
  NoiseSchedule schedule_;
  std::vector<std::string> models_;
  httplib::Server server_;
  Hook hook_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace canon::bridge
