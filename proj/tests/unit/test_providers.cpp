#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "genreprobe/datagen.hpp"
#include "genreprobe/random.hpp"

namespace gp = genreprobe;
using namespace std::chrono_literals;

namespace {

std::string fmt_hash(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Local chat-completion endpoint that answers with a scripted status sequence.
class FakeServer {
 public:
  explicit FakeServer(std::vector<int> statuses) : statuses_(std::move(statuses)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const std::size_t call = calls_++;
      last_body_ = req.body;
      last_auth_ = req.get_header_value("Authorization");
      const int status = call < statuses_.size() ? statuses_[call] : 200;
      res.status = status;
      if (status == 200) {
        nlohmann::json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "hello back"}}}}}}};
        res.set_content(reply.dump(), "application/json");
      } else {
        res.set_content("try later", "text/plain");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }

  gp::LiveProviderConfig config() const {
    gp::LiveProviderConfig c;
    c.base_url = "http://127.0.0.1:" + std::to_string(port_);
    c.model = "test-model";
    c.api_key = "sk-test";
    c.max_retries = 3;
    c.timeout = 5s;
    return c;
  }

  std::size_t calls() const { return calls_; }
  std::string last_body() const { return last_body_; }
  std::string last_auth() const { return last_auth_; }

 private:
  std::vector<int> statuses_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<std::size_t> calls_{0};
  std::string last_body_, last_auth_;
};

}  // namespace

TEST(LiveProvider, SendsChatRequestWithBearerAuth) {
  FakeServer server({200});
  gp::LiveProvider provider(server.config());
  EXPECT_EQ(provider.complete("hi there", 500), "hello back");
  const auto body = nlohmann::json::parse(server.last_body());
  EXPECT_EQ(body.at("model"), "test-model");
  EXPECT_EQ(body.at("max_tokens"), 500);
  EXPECT_EQ(body.at("messages").at(0).at("role"), "user");
  EXPECT_EQ(body.at("messages").at(0).at("content"), "hi there");
  EXPECT_EQ(server.last_auth(), "Bearer sk-test");
}

TEST(LiveProvider, RetriesTransientStatusesWithBackoff) {
  FakeServer server({503, 429, 200});
  std::vector<std::chrono::milliseconds> sleeps;
  auto config = server.config();
  config.initial_backoff = 100ms;
  gp::LiveProvider provider(config, [&](auto d) { sleeps.push_back(d); });
  EXPECT_EQ(provider.complete("x", 10), "hello back");
  EXPECT_EQ(server.calls(), 3u);
  EXPECT_EQ(sleeps, (std::vector<std::chrono::milliseconds>{100ms, 200ms}));
}

TEST(LiveProvider, ClientErrorFailsImmediately) {
  FakeServer server({400});
  std::size_t sleeps = 0;
  gp::LiveProvider provider(server.config(), [&](auto) { ++sleeps; });
  EXPECT_THROW(provider.complete("x", 10), gp::ProviderError);
  EXPECT_EQ(server.calls(), 1u);
  EXPECT_EQ(sleeps, 0u);
}

TEST(LiveProvider, GivesUpAfterMaxRetries) {
  FakeServer server({500, 500, 500, 500, 500});
  std::size_t sleeps = 0;
  gp::LiveProvider provider(server.config(), [&](auto) { ++sleeps; });
  try {
    provider.complete("x", 10);
    FAIL();
  } catch (const gp::ProviderError& e) {
    EXPECT_NE(std::string(e.what()).find("4 attempts"), std::string::npos) << e.what();
  }
  EXPECT_EQ(server.calls(), 4u);
  EXPECT_EQ(sleeps, 3u);
}

TEST(LiveProvider, ConnectionFailureIsRetried) {
  gp::LiveProviderConfig config;
  config.base_url = "http://127.0.0.1:1";
  config.model = "m";
  config.api_key = "k";
  config.max_retries = 2;
  config.timeout = 1s;
  std::size_t sleeps = 0;
  gp::LiveProvider provider(config, [&](auto) { ++sleeps; });
  EXPECT_THROW(provider.complete("x", 10), gp::ProviderError);
  EXPECT_EQ(sleeps, 2u);
}

TEST(LiveProvider, AppendsTranscript) {
  FakeServer server({200, 200});
  auto config = server.config();
  config.transcript = std::filesystem::temp_directory_path() / "genreprobe_transcript_test.jsonl";
  std::filesystem::remove(*config.transcript);
  gp::LiveProvider provider(config);
  provider.complete("one", 5);
  provider.complete("two", 5);
  std::ifstream in(*config.transcript);
  std::string line;
  std::vector<nlohmann::json> lines;
  while (std::getline(in, line)) lines.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[1]["request"]["messages"][0]["content"], "two");
  EXPECT_EQ(lines[0]["response"]["choices"][0]["message"]["content"], "hello back");
  std::filesystem::remove(*config.transcript);
}

TEST(LiveProvider, BackoffIsCapped) {
  gp::LiveProviderConfig config;
  config.initial_backoff = 500ms;
  config.max_backoff = 3000ms;
  EXPECT_EQ(gp::backoff_delay(config, 0), 500ms);
  EXPECT_EQ(gp::backoff_delay(config, 2), 2000ms);
  EXPECT_EQ(gp::backoff_delay(config, 3), 3000ms);
  EXPECT_EQ(gp::backoff_delay(config, 40), 3000ms);
}

TEST(LiveProvider, EnvironmentConfigRequiresKey) {
  ::unsetenv("GENREPROBE_API_KEY");
  ::setenv("GENREPROBE_API_BASE", "http://localhost", 1);
  ::setenv("GENREPROBE_API_MODEL", "m", 1);
  EXPECT_THROW(gp::LiveProviderConfig::from_environment(), gp::InvalidArgument);
  ::setenv("GENREPROBE_API_KEY", "from-env", 1);
  EXPECT_EQ(gp::LiveProviderConfig::from_environment().api_key, "from-env");
  ::unsetenv("GENREPROBE_API_KEY");
  ::unsetenv("GENREPROBE_API_BASE");
  ::unsetenv("GENREPROBE_API_MODEL");
}

TEST(MockProvider, LoadsCannedResponsesByPromptOrHash) {
  const auto path = std::filesystem::temp_directory_path() / "genreprobe_mock_test.json";
  {
    std::ofstream out(path);
    out << nlohmann::json{{"fallback", false},
                          {"responses",
                           {{{"prompt", "alpha"}, {"response", "A"}},
                            {{"hash", fmt_hash(gp::fnv1a64("beta"))}, {"response", "B"}}}}}
               .dump();
  }
  const auto mock = gp::MockProvider::load(path);
  EXPECT_EQ(mock->complete("alpha", 1), "A");
  EXPECT_EQ(mock->complete("beta", 1), "B");
  EXPECT_THROW(mock->complete("gamma", 1), gp::ProviderError);
  EXPECT_EQ(mock->requests().size(), 3u);
  std::filesystem::remove(path);
}

TEST(MockProvider, ScriptedFallbackIsDeterministic) {
  gp::MockProvider a, b;
  const std::string prompt = "Write a recipe for soup.";
  EXPECT_EQ(a.complete(prompt, 500), b.complete(prompt, 500));
  EXPECT_EQ(gp::scripted_completion(prompt), a.complete(prompt, 500));
}
