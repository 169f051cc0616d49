#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "tsforge/judge.hpp"
#include "tsforge/mock_agents.hpp"
#include "tsforge/util/jsonl.hpp"

using namespace tsforge;
using judge::ScoreDistribution;
using qagen::QuestionType;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<qagen::QAItem> exemplars() {
  std::vector<qagen::QAItem> out;
  for (const auto& j : read_jsonl(std::string(TSFORGE_FIXTURES_DIR) + "/exemplars.jsonl")) {
    out.push_back(qagen::qa_item_from_json(j));
  }
  return out;
}

std::vector<runner::CandidateResponse> responses_for(const std::vector<qagen::QAItem>& items,
                                                     const std::vector<std::string>& models) {
  std::vector<runner::CandidateResponse> out;
  for (const auto& it : items) {
    for (const auto& m : models) out.push_back({it.id, m, it.expected_answer, std::nullopt, 0.0, "mock", 1});
  }
  return out;
}

llmio::ClientOptions quiet() {
  llmio::ClientOptions o;
  o.sleeper = [](std::chrono::milliseconds) {};
  return o;
}

judge::JudgeResult result(std::string item, std::string model, QuestionType type, std::string dim, double w) {
  judge::JudgeResult r;
  r.item_id = std::move(item);
  r.model = std::move(model);
  r.type = type;
  r.dimension = std::move(dim);
  r.weighted_score = w;
  return r;
}

}  // namespace

TEST_SUITE("judge") {
  TEST_CASE("criteria tables and weights") {
    const auto& mc = judge::criteria_for(QuestionType::multiple_choice);
    REQUIRE(mc.size() == 2);
    CHECK(mc[0].dimension == "correctness");
    CHECK(mc[0].weight == 0.70);
    CHECK(mc[1].dimension == "reasoning_quality");
    const auto& oe = judge::criteria_for(QuestionType::open_ended);
    REQUIRE(oe.size() == 3);
    const auto& tf = judge::criteria_for(QuestionType::true_false);
    REQUIRE(tf.size() == 2);
    for (auto type : qagen::kAllTypes) {
      double sum = 0.0;
      for (const auto& c : judge::criteria_for(type)) {
        sum += c.weight;
        for (const auto& g : c.guidelines) CHECK_FALSE(g.empty());
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("judge prompt contains the score line and all guidelines") {
    const auto& c = judge::criteria_for(QuestionType::multiple_choice)[0];
    const auto p = judge::render_judge_prompt(c, "Q?", "A) x", "B) y");
    CHECK(p.find("**Score:** [Single integer: 1, 2, 3, 4, or 5]") != std::string::npos);
    for (int s = 1; s <= 5; ++s) {
      CHECK(p.find(std::to_string(s) + ": " + c.guidelines[s - 1]) != std::string::npos);
    }
    CHECK(p.find("correctness") != std::string::npos);
    CHECK(p.find("B) y") != std::string::npos);
    CHECK(judge::guidelines_text(c).rfind("5: ", 0) == 0);
    CHECK(judge::judge_template_hash().size() == 64);
  }

  TEST_CASE("score extraction") {
    CHECK(judge::extract_score("Reasoning...\n**Score:** 4").score == 4);
    const auto seven = judge::extract_score("Score: 7");
    CHECK(seven.flagged);
    CHECK(seven.flag == "out-of-range");
    CHECK(seven.score == 1);
    CHECK(judge::extract_score("Score: 7", 2).score == 2);
    CHECK(judge::extract_score("nothing here").flag == "no-score");
    CHECK(judge::extract_score("Score: 4 or 5").flag == "ambiguous");
    CHECK(judge::extract_score("Score: 4.5").flag == "ambiguous");
    CHECK(judge::extract_score("Score: 12").flag == "out-of-range");

    // Formatting variants around the same digit.
    const std::vector<std::string> variants{
        "Score: 3",          "score:3",          "SCORE : 3",       "**Score:** 3  ",     "**Score**: 3",
        "__Score:__ 3",      "Score: [3]",       "Score: 3/5",      "Score: 3 / 5",       "Score: 3 out of 5",
        "Score:\t3\n",       "*Score:* **3**",   "Final Score: 3.", "x\nScore: 2\nScore: 3", "Score: 3 (partial)"};
    for (const auto& v : variants) {
      const auto p = judge::extract_score(v);
      CHECK_MESSAGE(p.score == 3, v);
      CHECK_FALSE_MESSAGE(p.flagged, v);
      REQUIRE(p.offset.has_value());
      CHECK(v[*p.offset] == '3');
    }
  }

  TEST_CASE("distribution examples against the high-precision oracle") {
    const auto u = judge::distribution_from_logprobs({-1.0, -1.0, -1.0, -1.0, -1.0});
    for (double p : u) CHECK(p == 0.2);
    CHECK(judge::weighted_score(u) == 3.0);
    CHECK(judge::confidence(u) == 0.0);

    const std::array<double, 5> ramp{-4, -3, -2, -1, 0};
    const auto d = judge::distribution_from_logprobs(ramp);
    const auto o = oracle::judge_math(ramp);
    const std::array<double, 5> frozen{0.011656230956039607395, 0.031684920796124268912, 0.086128544436268704938,
                                       0.23412165725273662271, 0.63640864655883079604};
    for (int i = 0; i < 5; ++i) {
      CHECK(std::abs(d[i] - o.p[i]) < 1e-12);
      CHECK(std::abs(o.p[i] - frozen[i]) < 1e-15);
    }
    CHECK(std::abs(judge::weighted_score(d) - 4.4519415676621947311) < 1e-9);
    CHECK(std::abs(judge::confidence(d) - 0.37868194818211527065) < 1e-9);

    const auto one = judge::distribution_from_logprobs({-kInf, -kInf, -kInf, -kInf, -0.3});
    CHECK(one == judge::one_hot(5));
    CHECK(judge::weighted_score(one) == 5.0);
    CHECK(judge::confidence(one) == 1.0);

    CHECK_THROWS_AS(judge::distribution_from_logprobs({-kInf, -kInf, -kInf, -kInf, -kInf}), std::invalid_argument);
    CHECK_THROWS_AS(judge::distribution_from_logprobs({std::nan(""), 0, 0, 0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(judge::distribution_from_logprobs({kInf, 0, 0, 0, 0}), std::invalid_argument);
  }

  TEST_CASE("normalization, range and dominance properties") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> lp(-30.0, 0.0);
    std::uniform_real_distribution<double> shift(-500.0, 500.0);
    for (int trial = 0; trial < 2000; ++trial) {
      std::array<double, 5> l{};
      for (auto& v : l) v = lp(rng);
      if (trial % 5 == 0) l[trial % 4] = -kInf;
      const auto d = judge::distribution_from_logprobs(l);
      double sum = 0.0;
      for (double p : d) sum += p;
      CHECK(std::abs(sum - 1.0) < 1e-9);
      const double w = judge::weighted_score(d);
      CHECK(w >= 1.0);
      CHECK(w <= 5.0);
      const double c = judge::confidence(d);
      CHECK(c >= 0.0);
      CHECK(c <= 1.0);

      auto shifted = l;
      const double k = shift(rng);
      for (auto& v : shifted) v += k;
      const auto ds = judge::distribution_from_logprobs(shifted);
      for (int i = 0; i < 5; ++i) CHECK(std::abs(ds[i] - d[i]) < 1e-12);

      // Move mass from a lower to a higher score: the expectation cannot drop.
      auto moved = d;
      const int lo = trial % 4;
      const double m = moved[lo] * 0.5;
      moved[lo] -= m;
      moved[lo + 1 + trial % (4 - lo)] += m;
      CHECK(judge::weighted_score(moved) >= w - 1e-12);
    }
  }

  TEST_CASE("confidence is one only for one-hot and zero only for uniform") {
    for (int s = 1; s <= 5; ++s) CHECK(judge::confidence(judge::one_hot(s)) == 1.0);
    CHECK(judge::confidence({0.5, 0.5, 0, 0, 0}) < 1.0);
    CHECK(judge::confidence({0.21, 0.2, 0.2, 0.2, 0.19}) > 0.0);
  }

  TEST_CASE("aggregate final on published rows") {
    using M = std::map<std::string, double>;
    CHECK(std::abs(judge::aggregate_final(QuestionType::multiple_choice,
                                          M{{"correctness", 4.21}, {"reasoning_quality", 4.14}}) -
                   4.189) < 1e-12);
    CHECK(std::abs(judge::aggregate_final(QuestionType::open_ended,
                                          M{{"relevance", 3.31}, {"completeness", 2.93}, {"accuracy", 2.87}}) -
                   3.023) < 1e-12);
    CHECK(std::abs(judge::aggregate_final(QuestionType::true_false,
                                          M{{"correctness", 3.60}, {"justification_quality", 3.74}}) -
                   3.656) < 1e-12);
    CHECK(judge::aggregate_final(QuestionType::multiple_choice, M{{"correctness", 3}, {"reasoning_quality", 3}}) == 3.0);
    CHECK_THROWS_AS(judge::aggregate_final(QuestionType::true_false, M{{"correctness", 3}}), std::invalid_argument);
  }

  TEST_CASE("fixed-score mock judge gives Final 3 everywhere") {
    const auto items = exemplars();
    mock::Behavior b;
    b.judge_mode = mock::JudgeMode::fixed;
    b.judge_fixed_score = 3;
    llmio::Client j(mock::make_provider("judge", b), quiet());
    const auto results = judge::judge_corpus(items, responses_for(items, {"alpha", "beta"}), j);
    CHECK(results.size() == 2 * (2 + 2 + 3));
    for (const auto& r : results) {
      CHECK(r.raw_score == 3);
      CHECK(r.weighted_score == 3.0);
      CHECK(r.confidence == 1.0);
      CHECK(r.flags.empty());
    }
    const auto rows = judge::build_report(results);
    CHECK(rows.size() == 6);
    for (const auto& row : rows) {
      CHECK(row.final_score == 3.0);
      CHECK(row.n == 1);
    }
  }

  TEST_CASE("missing logprobs fall back to one-hot with a flag") {
    const auto items = exemplars();
    mock::Behavior b;
    b.judge_mode = mock::JudgeMode::no_logprob;
    llmio::Client j(mock::make_provider("judge", b), quiet());
    for (const auto& r : judge::judge_corpus(items, responses_for(items, {"alpha"}), j)) {
      CHECK(r.distribution == judge::one_hot(r.raw_score));
      CHECK(r.confidence == 1.0);
      CHECK(r.flags == std::vector<std::string>{"no-logprob"});
    }
  }

  TEST_CASE("failed candidates and unknown items get the flagged default without a judge call") {
    const auto items = exemplars();
    auto responses = responses_for(items, {"alpha"});
    responses[0].error = "timeout: gone";
    responses.push_back({"nope", "alpha", "x", std::nullopt, 0.0, "mock", 1});
    auto provider = mock::make_provider("judge", {});
    llmio::Client j(provider, quiet());
    judge::JudgeOptions opts;
    opts.default_score = 2;
    const auto results = judge::judge_corpus(items, responses, j, opts);
    const auto calls = provider->calls();
    CHECK(calls == 2 + 3);  // TF item: 2 dimensions, OE item: 3
    for (const auto& r : results) {
      if (r.item_id == items[0].id) {
        CHECK(r.raw_score == 2);
        CHECK(r.flags == std::vector<std::string>{"candidate-error"});
      }
      if (r.item_id == "nope") CHECK(r.flags == std::vector<std::string>{"unknown-item"});
    }
    const auto back = judge::judge_result_from_json(judge::to_json(results[0]));
    CHECK(back.dimension == results[0].dimension);
    CHECK(back.flags == results[0].flags);
  }

  TEST_CASE("report ordering matches a hand ranking") {
    std::vector<judge::JudgeResult> rs;
    // alpha: MC (4, 2) -> 3.4; beta: MC (3, 5) -> 3.6; gamma: MC (5, 1) -> 3.8
    for (auto [m, c, r] : std::vector<std::tuple<std::string, double, double>>{{"alpha", 4, 2}, {"beta", 3, 5}, {"gamma", 5, 1}}) {
      rs.push_back(result("I1", m, QuestionType::multiple_choice, "correctness", c));
      rs.push_back(result("I1", m, QuestionType::multiple_choice, "reasoning_quality", r));
    }
    rs.push_back(result("I2", "alpha", QuestionType::true_false, "correctness", 2));
    rs.push_back(result("I2", "alpha", QuestionType::true_false, "justification_quality", 4));
    rs.push_back(result("I3", "alpha", QuestionType::true_false, "correctness", 4));
    rs.push_back(result("I3", "alpha", QuestionType::true_false, "justification_quality", 4));
    const auto rows = judge::build_report(rs);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].model == "gamma");
    CHECK(rows[0].final_score == doctest::Approx(3.8));
    CHECK(rows[1].model == "beta");
    CHECK(rows[2].model == "alpha");
    CHECK(rows[3].type == QuestionType::true_false);
    CHECK(rows[3].n == 2);
    CHECK(rows[3].dimension_means.at("correctness") == 3.0);
    CHECK(rows[3].final_score == doctest::Approx(0.6 * 3 + 0.4 * 4));

    const auto excluded = judge::build_report(rs, {"I2"});
    CHECK(excluded[3].n == 1);
    CHECK(excluded[3].final_score == doctest::Approx(4.0));

    const auto finals = judge::item_finals(rs, "alpha", QuestionType::true_false);
    CHECK(finals.at("I2") == doctest::Approx(2.8));

    const auto csv = judge::report_csv(rows);
    CHECK(csv.rfind("model,type,correctness,reasoning_quality,relevance,completeness,accuracy,justification_quality,final,n\n", 0) == 0);
    CHECK(judge::report_table(rows).find("gamma") != std::string::npos);
  }

  TEST_CASE("contribution score") {
    CHECK(judge::contribution_score(5.0, 4.2) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(judge::contribution_score(3.3, 3.3) == 0.0);
    const std::vector<double> base{1.0, 2.0, 3.0}, abl{0.5, 2.5, 3.0};
    const auto v = judge::contribution_score(base, abl);
    REQUIRE(v.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(v[i] == base[i] - abl[i]);
    CHECK_THROWS_AS(judge::contribution_score(base, std::vector<double>{1.0}), std::invalid_argument);
    const auto recs = judge::contribution_records(2.0, abl, 10);
    REQUIRE(recs.size() == 3);
    CHECK(recs[2].position == 12);
    CHECK(recs[0].contribution == 1.5);
  }
}
