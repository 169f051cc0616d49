#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace tsforge::llmio {

struct ChatRequest {
  std::string system;
  std::string user;
  double temperature = 0.0;
  int max_tokens = 1024;
  bool want_logprobs = false;
  int top_k = 5;
  std::uint64_t seed = 0;  // varied per regeneration attempt
};

/// Throws std::invalid_argument when temperature < 0 or top_k < 1 with logprobs.
void validate(const ChatRequest& req);

struct TokenAlternative {
  std::string token;
  double logprob = 0.0;
};

struct TokenRecord {
  std::string token;
  double logprob = 0.0;
  std::vector<TokenAlternative> top;
};

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct ChatResponse {
  std::string text;
  std::vector<TokenRecord> tokens;
  Usage usage;
  std::string provider;
  std::string model;
  int attempts = 1;
  bool cached = false;
};

nlohmann::json to_json(const ChatResponse& r);
ChatResponse response_from_json(const nlohmann::json& j);

enum class ErrorKind { timeout, rate_limited, malformed, auth, unavailable };

std::string to_string(ErrorKind kind);

class ProviderError : public std::runtime_error {
 public:
  ProviderError(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  bool retryable() const {
    return kind_ == ErrorKind::timeout || kind_ == ErrorKind::rate_limited || kind_ == ErrorKind::unavailable;
  }

 private:
  ErrorKind kind_;
};

/// One upstream chat-completion endpoint. Implementations must be safe to
/// call from several threads.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual ChatResponse complete(const ChatRequest& req) = 0;
  virtual std::string name() const = 0;
  virtual std::string model() const = 0;
};

/// hash(provider, model, request content, sampling params).
std::string cache_key(const std::string& provider, const std::string& model, const ChatRequest& req);

/// Hash of the request alone, used to script the mock provider.
std::string request_hash(const ChatRequest& req);

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds base_delay{250};
  std::chrono::milliseconds max_delay{8000};
  double jitter = 0.5;  // fraction of the delay randomized
};

/// Caps the number of concurrent upstream calls across every client that
/// shares it.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(std::ptrdiff_t limit) : sem_(limit) {}
  void acquire() { sem_.acquire(); }
  void release() { sem_.release(); }

 private:
  std::counting_semaphore<1 << 16> sem_;
};

struct ClientOptions {
  RetryPolicy retry;
  std::optional<std::filesystem::path> cache_dir;
  bool memory_cache = true;
  double requests_per_minute = 0.0;  // 0 = unlimited
  std::shared_ptr<InFlightLimiter> in_flight;
  std::function<void(std::chrono::milliseconds)> sleeper;  // defaults to this_thread::sleep_for
  std::uint64_t jitter_seed = 0;
};

/// Retrying, caching front-end for a Provider. Thread-safe.
class Client {
 public:
  Client(std::shared_ptr<Provider> provider, ClientOptions options = {});

  /// Returns the (possibly cached) response or throws ProviderError after the
  /// retry budget is exhausted or on a non-retryable error.
  ChatResponse complete(const ChatRequest& req);

  const Provider& provider() const { return *provider_; }
  std::size_t upstream_calls() const { return upstream_calls_.load(); }
  std::size_t cache_hits() const { return cache_hits_.load(); }

 private:
  std::optional<ChatResponse> cache_lookup(const std::string& key);
  void cache_store(const std::string& key, const ChatResponse& resp);
  void throttle();
  std::chrono::milliseconds backoff(int attempt);

  std::shared_ptr<Provider> provider_;
  ClientOptions options_;
  std::mutex cache_mutex_;
  std::map<std::string, ChatResponse> memory_;
  std::mutex rate_mutex_;
  std::chrono::steady_clock::time_point next_slot_{};
  std::mutex jitter_mutex_;
  std::uint64_t jitter_state_;
  std::atomic<std::size_t> upstream_calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

/// Splits text into whitespace-prefixed tokens (" word"), each with logprob 0.
std::vector<TokenRecord> naive_tokens(std::string_view text);

/// Deterministic in-process provider. Responses are looked up by request hash
/// first, then produced by the fallback handler. Queued faults are thrown
/// before any response, one per call.
class MockProvider : public Provider {
 public:
  using Handler = std::function<ChatResponse(const ChatRequest&)>;

  explicit MockProvider(std::string name = "mock", std::string model = "mock-model", Handler fallback = {});

  void script(const ChatRequest& req, std::string text);
  void script_hash(const std::string& hash, ChatResponse resp);
  void push_fault(ErrorKind kind);

  ChatResponse complete(const ChatRequest& req) override;
  std::string name() const override { return name_; }
  std::string model() const override { return model_; }
  std::size_t calls() const { return calls_.load(); }

 private:
  std::string name_;
  std::string model_;
  Handler fallback_;
  std::mutex mutex_;
  std::map<std::string, ChatResponse> scripted_;
  std::vector<ErrorKind> faults_;
  std::atomic<std::size_t> calls_{0};
};

struct HttpProviderConfig {
  std::string name;
  std::string base_url;  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env;  // name of the environment variable holding the key
  int timeout_seconds = 60;
  double requests_per_minute = 0.0;
};

HttpProviderConfig http_config_from_json(const nlohmann::json& j);

/// Chat-completions JSON over HTTP, including top-k token logprobs when asked.
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(HttpProviderConfig cfg);
  ChatResponse complete(const ChatRequest& req) override;
  std::string name() const override { return cfg_.name; }
  std::string model() const override { return cfg_.model; }

  static nlohmann::json build_body(const std::string& model, const ChatRequest& req);
  /// Parses a chat-completions response body. Throws ProviderError(malformed).
  static ChatResponse parse_body(const std::string& body);

 private:
  HttpProviderConfig cfg_;
};

inline constexpr double kNoLogprob = -std::numeric_limits<double>::infinity();

/// Log-probabilities of the digits "1".."5" at the token covering character
/// offset `score_offset` of response.text. Alternatives are whitespace-trimmed
/// before matching; duplicate digits are combined by log-sum-exp; digits that
/// do not appear get -inf. Returns nullopt when the response carries no token
/// records or no record covers the offset.
std::optional<std::array<double, 5>> score_token_logprobs(const ChatResponse& response, std::size_t score_offset);

}  // namespace tsforge::llmio
