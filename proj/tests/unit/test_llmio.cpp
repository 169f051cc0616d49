#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <doctest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <thread>

#include "tsforge/llmio.hpp"

namespace fs = std::filesystem;
using namespace tsforge::llmio;

namespace {

ClientOptions quiet() {
  ClientOptions o;
  o.sleeper = [](std::chrono::milliseconds) {};
  return o;
}

ChatRequest req(std::string user) {
  ChatRequest r;
  r.system = "sys";
  r.user = std::move(user);
  return r;
}

ChatResponse ok_handler(const ChatRequest&) {
  ChatResponse r;
  r.text = "ok";
  return r;
}

}  // namespace

TEST_SUITE("llmio") {
  TEST_CASE("request validation") {
    auto r = req("x");
    r.temperature = -0.1;
    CHECK_THROWS_AS(validate(r), std::invalid_argument);
    r.temperature = 0.0;
    r.want_logprobs = true;
    r.top_k = 0;
    CHECK_THROWS_AS(validate(r), std::invalid_argument);
  }

  TEST_CASE("cache keys cover provider, model and sampling parameters") {
    const auto a = req("hello");
    auto b = a;
    b.temperature = 0.7;
    CHECK(cache_key("p", "m", a) == cache_key("p", "m", a));
    CHECK(cache_key("p", "m", a) != cache_key("p", "m", b));
    CHECK(cache_key("p", "m", a) != cache_key("p", "m2", a));
    CHECK(cache_key("p", "m", a) != cache_key("q", "m", a));
  }

  TEST_CASE("mock scripted by request hash") {
    auto mock = std::make_shared<MockProvider>();
    mock->script(req("ping"), "pong");
    Client c(mock, quiet());
    CHECK(c.complete(req("ping")).text == "pong");
    CHECK_THROWS_AS(c.complete(req("unscripted")), ProviderError);
  }

  TEST_CASE("identical requests hit the memory cache") {
    auto mock = std::make_shared<MockProvider>("mock", "m", [](const ChatRequest& r) {
      ChatResponse out;
      out.text = "echo " + r.user;
      return out;
    });
    Client c(mock, quiet());
    const auto first = c.complete(req("a"));
    const auto second = c.complete(req("a"));
    CHECK(first.text == second.text);
    CHECK_FALSE(first.cached);
    CHECK(second.cached);
    CHECK(mock->calls() == 1);
    CHECK(c.upstream_calls() == 1);
    CHECK(c.cache_hits() == 1);
  }

  TEST_CASE("disk cache survives a new client") {
    const auto dir = fs::temp_directory_path() / "tsforge_llmio_cache";
    fs::remove_all(dir);
    auto handler = [](const ChatRequest&) {
      ChatResponse out;
      out.text = "cached text";
      out.tokens = naive_tokens(out.text);
      return out;
    };
    auto opts = quiet();
    opts.cache_dir = dir;
    {
      Client c(std::make_shared<MockProvider>("mock", "m", handler), opts);
      c.complete(req("q"));
      CHECK(c.upstream_calls() == 1);
    }
    auto mock = std::make_shared<MockProvider>("mock", "m", handler);
    Client warm(mock, opts);
    const auto r = warm.complete(req("q"));
    CHECK(r.text == "cached text");
    CHECK(r.tokens.size() == 2);
    CHECK(mock->calls() == 0);
    fs::remove_all(dir);
  }

  TEST_CASE("retryable fault then success records two attempts") {
    auto mock = std::make_shared<MockProvider>("mock", "m", ok_handler);
    mock->push_fault(ErrorKind::rate_limited);
    std::vector<std::chrono::milliseconds> sleeps;
    auto opts = quiet();
    opts.sleeper = [&](std::chrono::milliseconds d) { sleeps.push_back(d); };
    Client c(mock, opts);
    const auto r = c.complete(req("x"));
    CHECK(r.text == "ok");
    CHECK(r.attempts == 2);
    CHECK(sleeps.size() == 1);
  }

  TEST_CASE("non-retryable and exhausted faults propagate with their kind") {
    auto mock = std::make_shared<MockProvider>("mock", "m", ok_handler);
    mock->push_fault(ErrorKind::auth);
    Client c(mock, quiet());
    try {
      c.complete(req("x"));
      FAIL("expected ProviderError");
    } catch (const ProviderError& e) {
      CHECK(e.kind() == ErrorKind::auth);
    }
    CHECK(mock->calls() == 1);

    auto flaky = std::make_shared<MockProvider>("mock", "m", ok_handler);
    for (int i = 0; i < 4; ++i) flaky->push_fault(ErrorKind::timeout);
    auto opts = quiet();
    opts.retry.max_attempts = 3;
    Client c2(flaky, opts);
    CHECK_THROWS_AS(c2.complete(req("y")), ProviderError);
    CHECK(flaky->calls() == 3);
  }

  TEST_CASE("score token logprobs") {
    ChatResponse r;
    r.text = "Rationale.\n**Score:** 4";
    r.tokens = {{"Rationale.\n**Score:**", -0.1, {}},
                {" 4", -0.2, {{" 4", -0.2}, {"3", -1.9}, {" 5", -2.5}, {"1", -6.0}, {"2", -7.0}}}};
    const auto offset = r.text.find('4');
    auto lp = score_token_logprobs(r, offset);
    REQUIRE(lp.has_value());
    CHECK((*lp)[3] == -0.2);
    CHECK((*lp)[2] == -1.9);
    CHECK((*lp)[4] == -2.5);
    CHECK((*lp)[0] == -6.0);
    CHECK((*lp)[1] == -7.0);

    r.tokens[1].top = {{"4", -0.01}};
    lp = score_token_logprobs(r, offset);
    REQUIRE(lp.has_value());
    int finite = 0;
    for (double v : *lp) finite += std::isfinite(v) ? 1 : 0;
    CHECK(finite == 1);
    CHECK((*lp)[3] == -0.01);

    r.tokens[1].top = {{" 4", std::log(0.25)}, {"4", std::log(0.25)}};
    lp = score_token_logprobs(r, offset);
    CHECK((*lp)[3] == doctest::Approx(std::log(0.5)));

    CHECK_FALSE(score_token_logprobs(r, 10000).has_value());
    r.tokens.clear();
    CHECK_FALSE(score_token_logprobs(r, offset).has_value());
  }

  TEST_CASE("naive tokens reassemble the text") {
    const std::string t = "  Score:  4\nok ";
    std::string joined;
    for (const auto& tok : naive_tokens(t)) joined += tok.token;
    CHECK(joined == t);
  }

  TEST_CASE("chat-completions body round trip") {
    auto r = req("u");
    r.want_logprobs = true;
    r.top_k = 5;
    const auto body = HttpProvider::build_body("gpt-x", r);
    CHECK(body["model"] == "gpt-x");
    CHECK(body["logprobs"] == true);
    CHECK(body["top_logprobs"] == 5);
    CHECK(body["messages"].size() == 2);

    const std::string resp = R"({"choices":[{"message":{"content":"Score: 3"},
      "logprobs":{"content":[{"token":"Score:","logprob":-0.1,"top_logprobs":[]},
      {"token":" 3","logprob":-0.3,"top_logprobs":[{"token":" 3","logprob":-0.3},{"token":" 2","logprob":-1.5}]}]}}],
      "usage":{"prompt_tokens":10,"completion_tokens":2}})";
    const auto parsed = HttpProvider::parse_body(resp);
    CHECK(parsed.text == "Score: 3");
    REQUIRE(parsed.tokens.size() == 2);
    CHECK(parsed.tokens[1].top.size() == 2);
    CHECK(parsed.usage.prompt_tokens == 10);
    CHECK_THROWS_AS(HttpProvider::parse_body("{\"nope\":1}"), ProviderError);
    CHECK_THROWS_AS(HttpProvider::parse_body("not json"), ProviderError);
  }

  TEST_CASE("http provider against a local server") {
    httplib::Server server;
    std::atomic<int> hits{0};
    server.Post("/v1/chat/completions", [&](const httplib::Request& rq, httplib::Response& rs) {
      const int n = ++hits;
      if (n == 1) {
        rs.status = 429;
        return;
      }
      const auto body = nlohmann::json::parse(rq.body);
      nlohmann::json out = {{"choices", {{{"message", {{"content", "model=" + body["model"].get<std::string>()}}}}}}};
      rs.set_content(out.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpProviderConfig cfg;
    cfg.name = "local";
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.model = "m1";
    cfg.timeout_seconds = 5;
    Client c(std::make_shared<HttpProvider>(cfg), quiet());
    const auto r = c.complete(req("hi"));
    CHECK(r.text == "model=m1");
    CHECK(r.attempts == 2);

    HttpProviderConfig keyed = cfg;
    keyed.api_key_env = "TSFORGE_TEST_UNSET_KEY_VARIABLE";
    Client k(std::make_shared<HttpProvider>(keyed), quiet());
    try {
      k.complete(req("hi"));
      FAIL("expected auth error");
    } catch (const ProviderError& e) {
      CHECK(e.kind() == ErrorKind::auth);
    }
    server.stop();
    th.join();
  }
}
