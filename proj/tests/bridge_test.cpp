#include <chrono>
#include <map>
#include <random>
#include <thread>

#include <gtest/gtest.h>

#include "canon/bench/fixtures.hpp"
#include "canon/bridge.hpp"
#include "canon/bridge_server.hpp"

namespace canon::bridge {
namespace {

const NoiseSchedule& sd_schedule() {
  static const NoiseSchedule s = make_linear_schedule(1000, 0.00085, 0.012);
  return s;
}

// Logits are 0.1 * (index + 1) for each prompt, denoise errors come from a
// seed-keyed table.
double fixture_mse(int t, std::uint64_t seed) { return 0.001 * t + static_cast<double>(seed % 97) * 1e-4; }

LambdaBackend fixture_backend() {
  return LambdaBackend(
      [](const Image&, std::span<const std::string> prompts) {
        Logits l;
        for (std::size_t i = 0; i < prompts.size(); ++i) l.values.push_back(0.1 * static_cast<double>(i + 1));
        return l;
      },
      [](const Image&, int t, std::uint64_t seed) { return fixture_mse(t, seed); }, "fixture");
}

RemoteBackendConfig client_config(const BackendServer& server) {
  RemoteBackendConfig c;
  c.base_url = server.url();
  c.timeout_ms = 2000;
  c.retries = 1;
  c.image_height = 16;
  c.image_width = 16;
  return c;
}

TEST(Base64Test, RoundTrip) {
  const std::vector<unsigned char> bytes = {0, 1, 2, 250, 251, 252, 253};
  EXPECT_EQ(base64_encode(bytes), "AAEC+vv8/Q==");
  EXPECT_EQ(base64_decode(base64_encode(bytes)), bytes);
  EXPECT_THROW(base64_decode("not base64!"), ProtocolError);
}

TEST(SchemaTest, NamesMissingFields) {
  try {
    schema::logits_response(json::parse(R"({"logit": [1]})"), 1);
    FAIL();
  } catch (const ProtocolError& e) {
    EXPECT_NE(std::string(e.what()).find("'logits'"), std::string::npos);
  }
  EXPECT_THROW(schema::logits_response(json::parse(R"({"logits": [1, 2]})"), 3), ProtocolError);
  EXPECT_THROW(schema::logits_response(json::parse(R"({"logits": ["x"]})"), 1), ProtocolError);
  EXPECT_THROW(schema::denoise_response(json::parse(R"({"mse": "0.1"})")), ProtocolError);
  EXPECT_THROW(schema::health_response(json::parse(R"({"models": []})")), ProtocolError);
  EXPECT_THROW(schema::denoise_request(json::parse(R"({"image_png_b64": "", "timestep": 1.5, "seed": 0})")),
               ProtocolError);
  EXPECT_THROW(schema::denoise_request(json::parse(R"({"image_png_b64": "", "timestep": 1, "seed": -3})")),
               ProtocolError);
  EXPECT_EQ(schema::denoise_request(json::parse(R"({"image_png_b64": "", "timestep": 7, "seed": 18446744073709551615})"))
                .seed,
            18446744073709551615ULL);
}

TEST(SchemaTest, DoublesSurviveTheWire) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) / 3.0;
    EXPECT_EQ(json::parse(json({{"mse", v}}).dump())["mse"].get<double>(), v);
  }
}

TEST(RemoteBackendTest, LogitsFollowPromptCount) {
  const auto inner = fixture_backend();
  BackendServer server(inner, sd_schedule());
  const RemoteBackend remote(client_config(server));
  for (std::size_t n : {1u, 3u, 10u}) {
    std::vector<std::string> prompts(n, "p");
    const Logits l = remote.logits(Image(20, 20, 0.5), prompts);
    ASSERT_EQ(l.values.size(), n);
    EXPECT_DOUBLE_EQ(l.values.back(), 0.1 * static_cast<double>(n));
  }
}

TEST(RemoteBackendTest, DenoiseMatchesFixtureTable) {
  const auto inner = fixture_backend();
  BackendServer server(inner, sd_schedule());
  const RemoteBackend remote(client_config(server));
  for (auto [t, seed] : {std::pair<int, std::uint64_t>{1, 0}, {500, 12345}, {1000, ~0ULL}}) {
    EXPECT_EQ(remote.denoise_error(Image(8, 8), t, seed), fixture_mse(t, seed));
  }
  EXPECT_THROW(remote.denoise_error(Image(8, 8), 0, 1), RangeError);
  EXPECT_THROW(remote.denoise_error(Image(8, 8), 1001, 1), RangeError);
}

TEST(RemoteBackendTest, SyntheticBackendIsDeterministicOverTheWire) {
  const SyntheticBackend synth;
  BackendServer server(synth, sd_schedule());
  const RemoteBackend remote(client_config(server));
  std::mt19937_64 rng(2);
  const Image img = fixtures::upright_scene(16, rng, 2);
  const std::vector<std::string> prompts = {"a", "b", "c"};
  EXPECT_EQ(remote.logits(img, prompts).values, remote.logits(img, prompts).values);
  EXPECT_NEAR(remote.denoise_error(img, 300, 77), remote.denoise_error(img, 300, 77), 1e-9);
}

TEST(RemoteBackendTest, HealthAndSchedule) {
  const auto inner = fixture_backend();
  BackendServer server(inner, sd_schedule(), {"clip-stub", "denoiser-stub"});
  const RemoteBackend remote(client_config(server));
  const auto models = remote.health();
  ASSERT_EQ(models.size(), 2u);
  EXPECT_EQ(models[0], "clip-stub");
  const NoiseSchedule served = remote.schedule();
  ASSERT_EQ(served.length(), 1000);
  const NoiseSchedule local = make_linear_schedule(1000, 0.00085, 0.012);
  for (int i = 0; i < 1000; ++i) {
    ASSERT_NEAR(served.betas()[i], local.betas()[i], 1e-9);
    ASSERT_NEAR(served.alpha_bars()[i], local.alpha_bars()[i], 1e-9);
  }
}

TEST(RemoteBackendTest, CombinedEnergyEqualsFixtureSum) {
  const auto inner = fixture_backend();
  BackendServer server(inner, sd_schedule());
  const RemoteBackend remote(client_config(server));
  EnergySpec s;
  s.prompts = {"a", "b", "c", "d"};
  s.gamma1 = 0.7;
  s.gamma2 = 1.3;
  s.timesteps = {100, 400};
  s.mc_samples = 2;
  s.noise_seed = 5;
  double diff = 0.0;
  for (int t : s.timesteps)
    for (int k = 0; k < 2; ++k) diff += fixture_mse(t, derive_noise_seed(5, k, t));
  diff /= 4.0;
  const double clf = (0.1 + 0.2 + 0.3 + 0.4) / 4.0 - 0.5 * 0.4;
  EXPECT_NEAR(combined_energy(Image(12, 12), s, sd_schedule(), remote), 0.7 * clf + 1.3 * diff, 1e-9);
}

TEST(RemoteBackendTest, MalformedReplyIsProtocolError) {
  const auto inner = fixture_backend();
  BackendServer server(inner, sd_schedule());
  server.set_hook([](const httplib::Request& req, httplib::Response& res) {
    if (req.path != "/v1/logits") return true;
    res.status = 200;
    res.set_content(R"({"scores": [1, 2]})", "application/json");
    return false;
  });
  const RemoteBackend remote(client_config(server));
  try {
    remote.logits(Image(4, 4), std::vector<std::string>{"a", "b"});
    FAIL();
  } catch (const ProtocolError& e) {
    EXPECT_NE(std::string(e.what()).find("logits"), std::string::npos);
  }
}

TEST(RemoteBackendTest, ServerErrorCarriesDetail) {
  const auto inner = fixture_backend();
  BackendServer server(inner, sd_schedule());
  server.set_hook([](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
    res.set_content(R"({"error": "internal", "detail": "CUDA out of memory"})", "application/json");
    return false;
  });
  const RemoteBackend remote(client_config(server));
  try {
    remote.logits(Image(4, 4), std::vector<std::string>{"a"});
    FAIL();
  } catch (const ServerError& e) {
    EXPECT_NE(std::string(e.what()).find("CUDA out of memory"), std::string::npos);
  }
  EXPECT_EQ(remote.attempts(), 1) << "5xx other than 502-504 is not retried";
}

TEST(RemoteBackendTest, BackendExceptionsBecomeServerErrors) {
  LambdaBackend broken(nullptr, [](const Image&, int, std::uint64_t) -> double { throw std::runtime_error("nan"); });
  BackendServer server(broken, sd_schedule());
  const RemoteBackend remote(client_config(server));
  EXPECT_THROW(remote.denoise_error(Image(4, 4), 10, 1), ServerError);
}

TEST(RemoteBackendTest, TransientFailuresAreRetried) {
  const auto inner = fixture_backend();
  BackendServer server(inner, sd_schedule());
  std::atomic<int> calls{0};
  server.set_hook([&](const httplib::Request&, httplib::Response& res) {
    if (calls.fetch_add(1) > 0) return true;
    res.status = 503;
    res.set_content(R"({"error": "busy", "detail": "warming up"})", "application/json");
    return false;
  });
  const RemoteBackend remote(client_config(server));
  EXPECT_EQ(remote.health().size(), 1u);
  EXPECT_EQ(remote.attempts(), 2);
}

TEST(RemoteBackendTest, SlowServerTimesOut) {
  const auto inner = fixture_backend();
  BackendServer server(inner, sd_schedule());
  server.set_hook([](const httplib::Request&, httplib::Response&) {
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    return true;
  });
  RemoteBackendConfig c = client_config(server);
  c.timeout_ms = 150;
  c.retries = 1;
  const RemoteBackend remote(c);
  const auto start = std::chrono::steady_clock::now();
  EXPECT_THROW(remote.health(), Timeout);
  const auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  EXPECT_EQ(remote.attempts(), 2);
  EXPECT_GE(elapsed, 2 * 150 * 0.9);
  EXPECT_LT(elapsed, 2 * 150 + 500);
}

TEST(RemoteBackendTest, UnreachableHostTimesOutWithinBudget) {
  // Grab a free port and close it again so nothing listens there.
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  RemoteBackendConfig c;
  c.base_url = "http://127.0.0.1:" + std::to_string(port);
  c.timeout_ms = 200;
  c.retries = 2;
  const RemoteBackend remote(c);
  const auto start = std::chrono::steady_clock::now();
  EXPECT_THROW(remote.logits(Image(2, 2), std::vector<std::string>{"a"}), Timeout);
  const auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  EXPECT_EQ(remote.attempts(), 3);
  EXPECT_LE(elapsed, 200.0 * 3 + 200.0);
}

TEST(RemoteBackendTest, ConfigValidation) {
  RemoteBackendConfig c;
  c.timeout_ms = 0;
  EXPECT_THROW(RemoteBackend{c}, ArgumentError);
  c = {};
  c.retries = -1;
  EXPECT_THROW(RemoteBackend{c}, ArgumentError);
  c = {};
  c.base_url = "ftp://x";
  EXPECT_THROW(RemoteBackend{c}, ArgumentError);
}

TEST(RemoteBackendTest, ConcurrentRequests) {
  const SyntheticBackend synth;
  BackendServer server(synth, sd_schedule());
  const RemoteBackend remote(client_config(server));
  std::mt19937_64 rng(3);
  const Image img = fixtures::random_noise(16, 16, rng);
  const double expected = remote.denoise_error(img, 200, 9);
  std::vector<std::thread> threads;
  std::atomic<int> mismatches{0};
  for (int i = 0; i < 6; ++i) {
    threads.emplace_back([&] {
      if (remote.denoise_error(img, 200, 9) != expected) mismatches.fetch_add(1);
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(mismatches.load(), 0);
}

}  // namespace
}  // namespace canon::bridge
