#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>

#include <fmt/format.h>

#include "tsforge/llmio.hpp"

namespace tsforge::llmio {

HttpProviderConfig http_config_from_json(const nlohmann::json& j) {
  HttpProviderConfig c;
  c.name = j.at("name").get<std::string>();
  c.base_url = j.at("base_url").get<std::string>();
  c.path = j.value("path", c.path);
  c.model = j.at("model").get<std::string>();
  c.api_key_env = j.value("api_key_env", std::string{});
  c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
  c.requests_per_minute = j.value("requests_per_minute", 0.0);
  return c;
}

HttpProvider::HttpProvider(HttpProviderConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.base_url.empty()) throw std::invalid_argument(fmt::format("provider {} has no base_url", cfg_.name));
}

nlohmann::json HttpProvider::build_body(const std::string& model, const ChatRequest& req) {
  nlohmann::json body = {{"model", model},
                         {"messages",
                          {{{"role", "system"}, {"content", req.system}}, {{"role", "user"}, {"content", req.user}}}},
                         {"temperature", req.temperature},
                         {"max_tokens", req.max_tokens},
                         {"seed", req.seed}};
  if (req.want_logprobs) {
    body["logprobs"] = true;
    body["top_logprobs"] = req.top_k;
  }
  return body;
}

ChatResponse HttpProvider::parse_body(const std::string& body) {
  try {
    const auto j = nlohmann::json::parse(body);
    const auto& choice = j.at("choices").at(0);
    ChatResponse r;
    r.text = choice.at("message").at("content").get<std::string>();
    if (choice.contains("logprobs") && choice["logprobs"].is_object() && choice["logprobs"].contains("content") &&
        choice["logprobs"]["content"].is_array()) {
      for (const auto& t : choice["logprobs"]["content"]) {
        TokenRecord rec{t.at("token").get<std::string>(), t.at("logprob").get<double>(), {}};
        for (const auto& a : t.value("top_logprobs", nlohmann::json::array())) {
          rec.top.push_back({a.at("token").get<std::string>(), a.at("logprob").get<double>()});
        }
        r.tokens.push_back(std::move(rec));
      }
    }
    if (j.contains("usage") && j["usage"].is_object()) {
      r.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
      r.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
    }
    r.model = j.value("model", std::string{});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(ErrorKind::malformed, fmt::format("unexpected response body: {}", e.what()));
  }
}

ChatResponse HttpProvider::complete(const ChatRequest& req) {
  httplib::Client cli(cfg_.base_url);
  cli.set_connection_timeout(cfg_.timeout_seconds, 0);
  cli.set_read_timeout(cfg_.timeout_seconds, 0);
  cli.set_write_timeout(cfg_.timeout_seconds, 0);

  httplib::Headers headers;
  if (!cfg_.api_key_env.empty()) {
    const char* key = std::getenv(cfg_.api_key_env.c_str());
    if (!key || !*key) {
      throw ProviderError(ErrorKind::auth, fmt::format("environment variable {} is not set", cfg_.api_key_env));
    }
    headers.emplace("Authorization", fmt::format("Bearer {}", key));
  }

  auto res = cli.Post(cfg_.path, headers, build_body(cfg_.model, req).dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    const auto kind = (err == httplib::Error::Read || err == httplib::Error::Write || err == httplib::Error::ConnectionTimeout)
                          ? ErrorKind::timeout
                          : ErrorKind::unavailable;
    throw ProviderError(kind, fmt::format("{}: {}", cfg_.base_url, httplib::to_string(err)));
  }
  if (res->status == 401 || res->status == 403) throw ProviderError(ErrorKind::auth, fmt::format("HTTP {}", res->status));
  if (res->status == 429) throw ProviderError(ErrorKind::rate_limited, "HTTP 429");
  if (res->status == 408 || res->status == 504) throw ProviderError(ErrorKind::timeout, fmt::format("HTTP {}", res->status));
  if (res->status >= 500) throw ProviderError(ErrorKind::unavailable, fmt::format("HTTP {}", res->status));
  if (res->status != 200) throw ProviderError(ErrorKind::malformed, fmt::format("HTTP {}: {}", res->status, res->body));

  auto r = parse_body(res->body);
  r.provider = cfg_.name;
  if (r.model.empty()) r.model = cfg_.model;
  return r;
}

}  // namespace tsforge::llmio
