#include <cstdlib>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "genreprobe/datagen.hpp"
#include "genreprobe/random.hpp"
#include "text_util.hpp"

namespace genreprobe {

void MockProvider::set_response(std::string_view prompt, std::string response) {
  set_response_for_hash(fnv1a64(prompt), std::move(response));
}

void MockProvider::set_response_for_hash(std::uint64_t prompt_hash, std::string response) {
  std::lock_guard lock(mutex_);
  canned_[prompt_hash] = std::move(response);
}

std::unique_ptr<MockProvider> MockProvider::load(const std::filesystem::path& path) {
  try {
    const auto doc = nlohmann::json::parse(detail::read_text_file(path));
    auto mock = std::make_unique<MockProvider>(doc.value("fallback", true));
    for (const auto& entry : doc.at("responses")) {
      std::string response = entry.at("response").get<std::string>();
      if (entry.contains("prompt")) {
        mock->set_response(entry["prompt"].get<std::string>(), std::move(response));
      } else {
        const auto hex = entry.at("hash").get<std::string>();
        mock->set_response_for_hash(std::stoull(hex, nullptr, 16), std::move(response));
      }
    }
    return mock;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(fmt::format("mock responses {}: {}", path.string(), e.what()));
  } catch (const std::logic_error& e) {
    throw InvalidArgument(fmt::format("mock responses {}: bad hash ({})", path.string(), e.what()));
  }
}

std::string MockProvider::complete(const std::string& prompt, int max_tokens) {
  const std::uint64_t hash = fnv1a64(prompt);
  {
    std::lock_guard lock(mutex_);
    requests_.push_back({prompt, max_tokens});
    if (auto it = canned_.find(hash); it != canned_.end()) return it->second;
  }
  if (!fallback_) throw ProviderError(fmt::format("mock has no response for prompt hash {:016x}", hash));
  return scripted_completion(prompt);
}

std::vector<CompletionRequest> MockProvider::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

LiveProviderConfig LiveProviderConfig::from_environment() {
  auto env = [](const char* name) -> std::string {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string();
  };
  LiveProviderConfig config;
  config.base_url = env("GENREPROBE_API_BASE");
  config.model = env("GENREPROBE_API_MODEL");
  config.api_key = env("GENREPROBE_API_KEY");
  if (config.base_url.empty() || config.model.empty() || config.api_key.empty()) {
    throw InvalidArgument("live provider needs GENREPROBE_API_BASE, GENREPROBE_API_MODEL and GENREPROBE_API_KEY");
  }
  if (const auto transcript = env("GENREPROBE_API_TRANSCRIPT"); !transcript.empty()) config.transcript = transcript;
  return config;
}

std::chrono::milliseconds backoff_delay(const LiveProviderConfig& config, std::size_t attempt) {
  auto delay = config.initial_backoff;
  for (std::size_t i = 0; i < attempt && delay < config.max_backoff; ++i) delay *= 2;
  return std::min(delay, config.max_backoff);
}

LiveProvider::LiveProvider(LiveProviderConfig config, SleepFn sleep)
    : config_(std::move(config)), sleep_(std::move(sleep)) {
  if (!sleep_) sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string LiveProvider::complete(const std::string& prompt, int max_tokens) {
  nlohmann::ordered_json request;
  request["model"] = config_.model;
  request["messages"] = nlohmann::ordered_json::array({{{"role", "user"}, {"content", prompt}}});
  request["max_tokens"] = max_tokens;
  const std::string body = request.dump();

  httplib::Client client(config_.base_url);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);
  const httplib::Headers headers = {{"Authorization", "Bearer " + config_.api_key}};

  std::string last_error;
  for (std::size_t attempt = 0;; ++attempt) {
    auto response = client.Post(config_.path, headers, body, "application/json");
    bool transient = false;
    if (!response) {
      last_error = "connection failed: " + httplib::to_string(response.error());
      transient = true;
    } else if (response->status == 200) {
      std::string content;
      try {
        const auto doc = nlohmann::json::parse(response->body);
        const auto& message = doc.at("choices").at(0).at("message");
        content = message.at("content").is_null() ? std::string() : message.at("content").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw ResponseError(std::string("unexpected completion payload: ") + e.what(), response->body);
      }
      if (config_.transcript) {
        std::lock_guard lock(transcript_mutex_);
        nlohmann::ordered_json line{{"request", request}, {"response", nlohmann::json::parse(response->body)}};
        std::string existing;
        if (std::filesystem::exists(*config_.transcript)) existing = detail::read_text_file(*config_.transcript);
        detail::write_text_file(*config_.transcript, existing + line.dump() + "\n");
      }
      return content;
    } else {
      last_error = fmt::format("HTTP {}: {}", response->status, response->body.substr(0, 200));
      transient = response->status == 429 || response->status >= 500;
    }
    if (!transient) throw ProviderError("completion request failed: " + last_error);
    if (attempt >= config_.max_retries) {
      throw ProviderError(fmt::format("completion request failed after {} attempts: {}", attempt + 1, last_error));
    }
    sleep_(backoff_delay(config_, attempt));
  }
}

}  // namespace genreprobe
