#include "tsforge/llmio.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <fmt/format.h>

#include "tsforge/util/hash.hpp"
#include "tsforge/util/jsonl.hpp"
#include "tsforge/util/rng.hpp"
#include "tsforge/util/text.hpp"

namespace tsforge::llmio {

void validate(const ChatRequest& req) {
  if (!(req.temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  if (req.want_logprobs && req.top_k < 1) throw std::invalid_argument("top_k must be >= 1 when logprobs are requested");
}

std::string to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::timeout: return "timeout";
    case ErrorKind::rate_limited: return "rate_limited";
    case ErrorKind::malformed: return "malformed";
    case ErrorKind::auth: return "auth";
    case ErrorKind::unavailable: return "unavailable";
  }
  return "unknown";
}

nlohmann::json to_json(const ChatResponse& r) {
  nlohmann::json tokens = nlohmann::json::array();
  for (const auto& t : r.tokens) {
    nlohmann::json top = nlohmann::json::array();
    for (const auto& a : t.top) top.push_back({{"token", a.token}, {"logprob", a.logprob}});
    tokens.push_back({{"token", t.token}, {"logprob", t.logprob}, {"top", top}});
  }
  return {{"text", r.text},
          {"tokens", tokens},
          {"usage", {{"prompt_tokens", r.usage.prompt_tokens}, {"completion_tokens", r.usage.completion_tokens}}},
          {"provider", r.provider},
          {"model", r.model}};
}

ChatResponse response_from_json(const nlohmann::json& j) {
  ChatResponse r;
  r.text = j.at("text").get<std::string>();
  for (const auto& t : j.value("tokens", nlohmann::json::array())) {
    TokenRecord rec{t.at("token").get<std::string>(), t.at("logprob").get<double>(), {}};
    for (const auto& a : t.value("top", nlohmann::json::array())) {
      rec.top.push_back({a.at("token").get<std::string>(), a.at("logprob").get<double>()});
    }
    r.tokens.push_back(std::move(rec));
  }
  if (j.contains("usage")) {
    r.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
    r.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
  }
  r.provider = j.value("provider", std::string{});
  r.model = j.value("model", std::string{});
  return r;
}

namespace {
nlohmann::json request_json(const ChatRequest& req) {
  return {{"system", req.system},       {"user", req.user},          {"temperature", req.temperature},
          {"max_tokens", req.max_tokens}, {"logprobs", req.want_logprobs}, {"top_k", req.top_k},
          {"seed", req.seed}};
}
}  // namespace

std::string request_hash(const ChatRequest& req) { return sha256_hex(request_json(req).dump()); }

std::string cache_key(const std::string& provider, const std::string& model, const ChatRequest& req) {
  nlohmann::json j = {{"provider", provider}, {"model", model}, {"request", request_json(req)}};
  return sha256_hex(j.dump());
}

Client::Client(std::shared_ptr<Provider> provider, ClientOptions options)
    : provider_(std::move(provider)), options_(std::move(options)), jitter_state_(options_.jitter_seed) {
  if (!provider_) throw std::invalid_argument("Client needs a provider");
  if (!options_.sleeper) options_.sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  if (options_.cache_dir) std::filesystem::create_directories(*options_.cache_dir);
}

std::optional<ChatResponse> Client::cache_lookup(const std::string& key) {
  std::lock_guard lock(cache_mutex_);
  if (auto it = memory_.find(key); it != memory_.end()) return it->second;
  if (options_.cache_dir) {
    const auto path = *options_.cache_dir / (key + ".json");
    if (std::filesystem::exists(path)) {
      try {
        auto resp = response_from_json(nlohmann::json::parse(read_file(path)));
        if (options_.memory_cache) memory_.emplace(key, resp);
        return resp;
      } catch (const std::exception&) {
        // A corrupt entry is treated as a miss and overwritten.
      }
    }
  }
  return std::nullopt;
}

void Client::cache_store(const std::string& key, const ChatResponse& resp) {
  std::lock_guard lock(cache_mutex_);
  if (options_.memory_cache) memory_[key] = resp;
  if (options_.cache_dir) write_file_atomic(*options_.cache_dir / (key + ".json"), to_json(resp).dump());
}

void Client::throttle() {
  if (options_.requests_per_minute <= 0.0) return;
  const auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(60.0 / options_.requests_per_minute));
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(rate_mutex_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_slot_);
    next_slot_ = slot + interval;
  }
  const auto wait = slot - std::chrono::steady_clock::now();
  if (wait > std::chrono::steady_clock::duration::zero()) {
    options_.sleeper(std::chrono::duration_cast<std::chrono::milliseconds>(wait));
  }
}

std::chrono::milliseconds Client::backoff(int attempt) {
  const auto& r = options_.retry;
  const double raw = static_cast<double>(r.base_delay.count()) * std::pow(2.0, attempt - 1);
  const double capped = std::min(raw, static_cast<double>(r.max_delay.count()));
  double u = 0.0;
  {
    std::lock_guard lock(jitter_mutex_);
    u = static_cast<double>(splitmix64(jitter_state_) >> 11) * 0x1.0p-53;
  }
  const double jittered = capped * (1.0 - r.jitter + r.jitter * u);
  return std::chrono::milliseconds(static_cast<std::int64_t>(jittered));
}

ChatResponse Client::complete(const ChatRequest& req) {
  validate(req);
  const auto key = cache_key(provider_->name(), provider_->model(), req);
  if (auto hit = cache_lookup(key)) {
    ++cache_hits_;
    hit->cached = true;
    return *hit;
  }

  const int max_attempts = std::max(1, options_.retry.max_attempts);
  for (int attempt = 1;; ++attempt) {
    throttle();
    try {
      if (options_.in_flight) options_.in_flight->acquire();
      struct Release {
        InFlightLimiter* l;
        ~Release() {
          if (l) l->release();
        }
      } release{options_.in_flight.get()};
      ++upstream_calls_;
      ChatResponse resp = provider_->complete(req);
      for (const auto& t : resp.tokens) {
        if (t.logprob > 1e-9) throw ProviderError(ErrorKind::malformed, "token logprob above zero");
      }
      resp.attempts = attempt;
      resp.cached = false;
      if (resp.provider.empty()) resp.provider = provider_->name();
      if (resp.model.empty()) resp.model = provider_->model();
      cache_store(key, resp);
      return resp;
    } catch (const ProviderError& e) {
      if (!e.retryable() || attempt >= max_attempts) {
        throw ProviderError(e.kind(), fmt::format("{} ({}) failed after {} attempt(s): {}", provider_->name(),
                                                  to_string(e.kind()), attempt, e.what()));
      }
    }
    options_.sleeper(backoff(attempt));
  }
}

std::vector<TokenRecord> naive_tokens(std::string_view text) {
  std::vector<TokenRecord> out;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t j = i;
    while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    out.push_back({std::string(text.substr(i, j - i)), 0.0, {}});
    i = j;
  }
  return out;
}

MockProvider::MockProvider(std::string name, std::string model, Handler fallback)
    : name_(std::move(name)), model_(std::move(model)), fallback_(std::move(fallback)) {}

void MockProvider::script(const ChatRequest& req, std::string text) {
  ChatResponse r;
  r.tokens = naive_tokens(text);
  r.text = std::move(text);
  script_hash(request_hash(req), std::move(r));
}

void MockProvider::script_hash(const std::string& hash, ChatResponse resp) {
  std::lock_guard lock(mutex_);
  scripted_[hash] = std::move(resp);
}

void MockProvider::push_fault(ErrorKind kind) {
  std::lock_guard lock(mutex_);
  faults_.push_back(kind);
}

ChatResponse MockProvider::complete(const ChatRequest& req) {
  ++calls_;
  std::optional<ChatResponse> scripted;
  {
    std::lock_guard lock(mutex_);
    if (!faults_.empty()) {
      auto kind = faults_.front();
      faults_.erase(faults_.begin());
      throw ProviderError(kind, "injected fault");
    }
    if (auto it = scripted_.find(request_hash(req)); it != scripted_.end()) scripted = it->second;
  }
  ChatResponse resp;
  if (scripted) {
    resp = *scripted;
  } else if (fallback_) {
    resp = fallback_(req);
  } else {
    throw ProviderError(ErrorKind::malformed, "mock has no script for this request");
  }
  resp.provider = name_;
  resp.model = model_;
  resp.usage.prompt_tokens = static_cast<int>(text::word_count(req.system) + text::word_count(req.user));
  resp.usage.completion_tokens = static_cast<int>(resp.tokens.size());
  return resp;
}

std::optional<std::array<double, 5>> score_token_logprobs(const ChatResponse& response, std::size_t score_offset) {
  if (response.tokens.empty()) return std::nullopt;
  std::size_t pos = 0;
  const TokenRecord* hit = nullptr;
  for (const auto& t : response.tokens) {
    if (score_offset >= pos && score_offset < pos + t.token.size()) {
      hit = &t;
      break;
    }
    pos += t.token.size();
  }
  if (!hit) return std::nullopt;

  std::array<double, 5> out;
  out.fill(kNoLogprob);
  auto add = [&](std::string_view token, double lp) {
    auto s = text::trim(token);
    if (s.size() != 1 || s[0] < '1' || s[0] > '5') return;
    double& slot = out[static_cast<std::size_t>(s[0] - '1')];
    if (slot == kNoLogprob) {
      slot = lp;
    } else {
      const double m = std::max(slot, lp);
      slot = m + std::log(std::exp(slot - m) + std::exp(lp - m));
    }
  };
  for (const auto& a : hit->top) add(a.token, a.logprob);
  if (std::none_of(hit->top.begin(), hit->top.end(), [&](const auto& a) { return text::trim(a.token) == text::trim(hit->token); })) {
    add(hit->token, hit->logprob);
  }
  return out;
}

}  // namespace tsforge::llmio
