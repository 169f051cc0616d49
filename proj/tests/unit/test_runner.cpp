#include <doctest.h>

#include <cmath>

#include "tsforge/runner.hpp"
#include "tsforge/util/jsonl.hpp"

using namespace tsforge;

namespace {

std::vector<qagen::QAItem> exemplars() {
  std::vector<qagen::QAItem> out;
  for (const auto& j : read_jsonl(std::string(TSFORGE_FIXTURES_DIR) + "/exemplars.jsonl")) {
    out.push_back(qagen::qa_item_from_json(j));
  }
  return out;
}

std::map<std::string, std::vector<double>> series_for(const std::vector<qagen::QAItem>& items) {
  std::vector<double> s(1024);
  for (std::size_t t = 0; t < s.size(); ++t) s[t] = std::sin(static_cast<double>(t) / 7.0) + 0.001 * t;
  std::map<std::string, std::vector<double>> out;
  for (const auto& it : items) out[it.window.pair_id] = s;
  return out;
}

// Echoes the window line; throws a timeout for prompts mentioning `fail_on`.
std::shared_ptr<llmio::MockProvider> echo_provider(const std::string& model, std::string fail_on = {}) {
  return std::make_shared<llmio::MockProvider>("mock", model, [model, fail_on](const llmio::ChatRequest& r) {
    if (!fail_on.empty() && r.user.find(fail_on) != std::string::npos) {
      throw llmio::ProviderError(llmio::ErrorKind::timeout, "scripted timeout");
    }
    llmio::ChatResponse out;
    out.text = model + ": " + r.user.substr(0, r.user.find('\n'));
    return out;
  });
}

llmio::ClientOptions quiet(int attempts = 1) {
  llmio::ClientOptions o;
  o.retry.max_attempts = attempts;
  o.sleeper = [](std::chrono::milliseconds) {};
  return o;
}

}  // namespace

TEST_SUITE("runner") {
  TEST_CASE("prompt shows the window and never the expected answer") {
    const auto items = exemplars();
    const auto series = series_for(items);
    for (const auto& it : items) {
      const auto prompt = runner::build_candidate_prompt(runner::view_of(it), series.at(it.window.pair_id));
      CHECK(prompt.find(std::to_string(it.window.interval.start)) != std::string::npos);
      CHECK(prompt.find(std::to_string(it.window.interval.end)) != std::string::npos);
      CHECK(prompt.find(it.expected_answer) == std::string::npos);
      CHECK(prompt.find(it.question) != std::string::npos);
      for (const auto& d : it.window.anomaly_descriptions) CHECK(prompt.find(d) == std::string::npos);
    }
    const auto oe = items[2];
    REQUIRE(oe.window.interval.start == 294);
    const auto p = runner::build_candidate_prompt(runner::view_of(oe), series.at(oe.window.pair_id));
    CHECK(p.find("294") != std::string::npos);
    CHECK(p.find("311") != std::string::npos);
  }

  TEST_CASE("window values are z-scored with full-series statistics") {
    const std::vector<double> s{1, 2, 3, 4, 5};
    runner::CandidateView v{"I", "P", {1, 4}, "Q?"};
    const auto prompt = runner::build_candidate_prompt(v, s);
    CHECK(prompt.find("Window values: -71, 0, 71\n") != std::string::npos);
    runner::PromptOptions full;
    full.full_series = true;
    CHECK(runner::build_candidate_prompt(v, s, full).find("Full series: -141, -71, 0, 71, 141\n") != std::string::npos);
    runner::CandidateView bad{"I", "P", {3, 9}, "Q?"};
    CHECK_THROWS_AS(runner::build_candidate_prompt(bad, s), std::invalid_argument);
  }

  TEST_CASE("one response per item and model, item-major") {
    const auto items = exemplars();
    const auto series = series_for(items);
    llmio::Client a(echo_provider("alpha"), quiet());
    llmio::Client b(echo_provider("beta"), quiet());
    runner::RunOptions opts;
    opts.record_latency = false;
    runner::RunStats stats;
    const auto out = runner::run_candidates(items, series, {{"alpha", &a}, {"beta", &b}}, opts, {}, &stats);
    REQUIRE(out.size() == items.size() * 2);
    for (std::size_t i = 0; i < items.size(); ++i) {
      CHECK(out[2 * i].item_id == items[i].id);
      CHECK(out[2 * i].model == "alpha");
      CHECK(out[2 * i + 1].model == "beta");
      CHECK(out[2 * i].response.rfind("alpha: Window: [", 0) == 0);
      CHECK(out[2 * i].latency_ms == 0.0);
    }
    CHECK(stats.attempted == 6);
    CHECK(stats.failed == 0);
  }

  TEST_CASE("provider failure becomes an error marker and resumes later") {
    const auto items = exemplars();
    const auto series = series_for(items);
    llmio::Client flaky(echo_provider("alpha", "Window: [418, 458)"), quiet());
    runner::RunOptions opts;
    runner::RunStats stats;
    const auto first = runner::run_candidates(items, series, {{"alpha", &flaky}}, opts, {}, &stats);
    REQUIRE(first.size() == 3);
    CHECK(stats.failed == 1);
    const auto failed = std::find_if(first.begin(), first.end(), [](const auto& r) { return r.error.has_value(); });
    REQUIRE(failed != first.end());
    CHECK(failed->error->rfind("timeout: ", 0) == 0);
    CHECK(failed->response.empty());

    auto healthy_provider = echo_provider("alpha");
    llmio::Client healthy(healthy_provider, quiet());
    runner::RunStats again;
    const auto second = runner::run_candidates(items, series, {{"alpha", &healthy}}, opts, first, &again);
    CHECK(again.resumed == 2);
    CHECK(again.attempted == 1);
    CHECK(healthy_provider->calls() == 1);
    for (const auto& r : second) CHECK_FALSE(r.error.has_value());
  }

  TEST_CASE("missing series is reported per item") {
    auto items = exemplars();
    llmio::Client a(echo_provider("alpha"), quiet());
    const auto out = runner::run_candidates(items, {}, {{"alpha", &a}}, {});
    for (const auto& r : out) {
      REQUIRE(r.error.has_value());
      CHECK(r.error->rfind("missing-series", 0) == 0);
    }
  }

  TEST_CASE("response json round trip") {
    runner::CandidateResponse r{"I1", "alpha", "text", std::string("timeout: x"), 1.5, "mock", 2};
    const auto back = runner::candidate_response_from_json(runner::to_json(r));
    CHECK(back.item_id == "I1");
    CHECK(back.error == r.error);
    CHECK(back.attempts == 2);
  }
}
