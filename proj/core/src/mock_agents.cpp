#include "tsforge/mock_agents.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <regex>
#include <vector>

#include <fmt/format.h>

#include "tsforge/judge.hpp"
#include "tsforge/qagen.hpp"
#include "tsforge/runner.hpp"
#include "tsforge/util/hash.hpp"
#include "tsforge/util/rng.hpp"
#include "tsforge/util/text.hpp"
#include "tsforge/vet.hpp"

namespace tsforge::mock {

namespace {

using qagen::QuestionType;

std::string capture(const std::string& s, const std::regex& re, std::size_t group = 1) {
  std::smatch m;
  return std::regex_search(s, m, re) ? m.str(group) : std::string{};
}

std::string between(const std::string& s, std::string_view open, std::string_view close) {
  const auto a = s.find(open);
  if (a == std::string::npos) return {};
  const auto from = a + open.size();
  const auto b = s.find(close, from);
  return s.substr(from, b == std::string::npos ? std::string::npos : b - from);
}

template <typename T>
const T& pick(const std::vector<T>& pool, Rng& rng) {
  return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
}

Rng request_rng(const llmio::ChatRequest& req, std::uint64_t seed, std::string_view stream) {
  const auto h = llmio::request_hash(req);
  return make_rng(seed ^ std::stoull(h.substr(0, 15), nullptr, 16), stream);
}

std::string phrase_for(std::string_view tag) {
  if (tag.starts_with("spike_cluster")) return "cluster of consecutive spikes";
  if (tag.starts_with("spike")) return "sudden spike";
  if (tag.starts_with("level_shift")) return "sustained level shift";
  if (tag.starts_with("drift")) return "gradual drift";
  if (tag.starts_with("volatility")) return "volatility burst";
  if (tag.starts_with("periodicity")) return "irregular break in periodicity";
  return "abrupt deviation";
}

// Option-text keyword that identifies the anomaly kind named by `phrase`.
std::string kind_keyword(std::string_view phrase) {
  for (std::string_view k : {"cluster", "spike", "level shift", "volatility", "drift", "period"}) {
    if (phrase.find(k) != std::string_view::npos) return std::string(k);
  }
  return {};
}

QuestionType infer_type(std::string_view question) {
  if (text::starts_with_ci(text::trim(question), "true or false")) return QuestionType::true_false;
  if (qagen::parse_options(question).size() >= 2) return QuestionType::multiple_choice;
  return QuestionType::open_ended;
}

const std::vector<std::string> kNormalOptions{
    "The window shows a consistent pattern without any signs of anomalous behavior.",
    "The segment follows its usual rhythm with no detectable anomaly.",
    "Values remain stable and regular throughout, showing no unusual movement.",
    "The behavior is smooth and steady, matching the surrounding series without deviation.",
};

const std::vector<std::string> kAnomalousOptions{
    "A sudden spike appears near the center of the window, suggesting an isolated anomaly.",
    "A sustained level shift occurs partway through the window, indicating an abrupt change in baseline.",
    "The window exhibits a volatility burst with irregular, amplified fluctuations.",
    "A gradual drift pulls the values away from the expected trajectory toward the window's end.",
    "The periodic rhythm breaks down, with cycles becoming irregular inside the window.",
    "A cluster of consecutive upward spikes stands out sharply against the baseline.",
};

const std::vector<std::string> kMcqStems{
    "Which of the following best describes the behavior of the time series window from step {s} to {e}?",
    "Considering the observed values between steps {s} and {e}, which statement most accurately characterizes "
    "this segment?",
    "What is the most plausible interpretation of the pattern inside the window spanning steps {s} to {e}?",
    "Based on the shape and variability of the series from step {s} to {e}, which option best summarizes the "
    "segment?",
    "Looking at the interval from step {s} through {e}, which description fits the observed dynamics best?",
};

const std::vector<std::string> kTfAffirm{
    "True or False: The window from step {s} to {e} contains a {p}, indicating an anomalous deviation from the "
    "expected pattern.",
    "True or False: Between steps {s} and {e}, the series displays a {p} that departs from its usual behavior.",
    "True or False: A {p} within steps {s} to {e} signals an anomaly in this segment.",
};

const std::vector<std::string> kTfDeny{
    "True or False: The segment between steps {s} and {e} behaves as usual, with no anomalous deviation from the "
    "established pattern.",
    "True or False: No anomaly is present in the window from step {s} to {e}; the values follow the established "
    "pattern.",
    "True or False: Steps {s} to {e} show steady behavior without any abnormal spikes, shifts or bursts.",
};

const std::vector<std::string> kOeStems{
    "How would you assess the presence or absence of anomalies in the time series window from step {s} to {e}, "
    "and what evidence supports your conclusion?",
    "What pattern evidence in steps {s} to {e} argues for or against an anomaly?",
    "Describe the dynamics of the window from step {s} to {e} and explain whether any segment departs from the "
    "expected behavior.",
    "Which features of the series between steps {s} and {e} would you examine to decide whether this segment is "
    "anomalous, and what do they show?",
    "How does the behavior inside steps {s} to {e} compare with the global character of the series?",
};

const std::vector<std::string> kOeFocus{
    "Pay particular attention to the window edges.",
    "Discuss persistence as well as magnitude.",
    "Consider how variability evolves across the segment.",
    "Relate your reasoning to the overall trend of the series.",
    "Mention which part of the window carries the strongest evidence.",
};

std::string fill(std::string_view tmpl, std::size_t s, std::size_t e, const std::string& phrase = {}) {
  return text::substitute(tmpl, {{"s", std::to_string(s)}, {"e", std::to_string(e)}, {"p", phrase}});
}

std::string make_question(const llmio::ChatRequest& req, const Behavior& b) {
  static const std::regex head(R"(Generate a (\w+) question focused on anomaly detection for the window \[ (\d+), (\d+) \])");
  static const std::regex flag(R"(contain anomalies: (true|false))");
  static const std::regex tag_re(R"(Canonical tag \(if available\): ([^\n]*))");
  std::smatch m;
  if (!std::regex_search(req.user, m, head)) return "Malformed question request.";
  const auto type = qagen::question_type_from_string(m.str(1));
  const auto s = std::stoul(m.str(2)), e = std::stoul(m.str(3));
  const bool anomalous = capture(req.user, flag) == "true";
  const auto tag = capture(req.user, tag_re);
  auto rng = request_rng(req, b.seed, "mock-question");

  switch (type) {
    case QuestionType::multiple_choice: {
      auto anomalous_pool = kAnomalousOptions;
      std::shuffle(anomalous_pool.begin(), anomalous_pool.end(), rng);
      if (anomalous) {
        // Keep the option naming the injected kind among the three drawn.
        const auto key = kind_keyword(phrase_for(tag));
        const auto it = std::find_if(anomalous_pool.begin(), anomalous_pool.end(),
                                     [&](const auto& o) { return !key.empty() && o.find(key) != std::string::npos; });
        if (it != anomalous_pool.end()) std::iter_swap(anomalous_pool.begin(), it);
      }
      std::vector<std::string> options{pick(kNormalOptions, rng)};
      options.insert(options.end(), anomalous_pool.begin(), anomalous_pool.begin() + 3);
      std::shuffle(options.begin(), options.end(), rng);
      options.resize(static_cast<std::size_t>(std::clamp(b.mcq_option_count, 1, 4)));
      std::string q = fill(pick(kMcqStems, rng), s, e) + "\n";
      for (std::size_t i = 0; i < options.size(); ++i) q += fmt::format("\n{}) {}", static_cast<char>('A' + i), options[i]);
      return q;
    }
    case QuestionType::true_false: {
      const bool affirm = std::bernoulli_distribution(0.5)(rng);
      const auto phrase = anomalous ? phrase_for(tag) : phrase_for(pick(kAnomalousOptions, rng));
      return fill(pick(affirm ? kTfAffirm : kTfDeny, rng), s, e, phrase);
    }
    case QuestionType::open_ended:
      return fill(pick(kOeStems, rng), s, e) + " " + pick(kOeFocus, rng);
  }
  return {};
}

std::string explanation(bool anomalous, const std::string& phrase, Rng& rng) {
  if (anomalous) {
    static const std::vector<std::string> tails{
        "The change persists beyond ordinary noise before the series returns to its usual rhythm.",
        "Its magnitude and persistence set it apart from the surrounding variability.",
        "The departure is localized and sharp compared with the rest of the series.",
    };
    return fmt::format("The window contains a clear anomaly. The current values depart from the expected shape as a "
                       "{}. {}",
                       phrase, pick(tails, rng));
  }
  static const std::vector<std::string> tails{
      "Variability matches the rest of the series and no abrupt changes appear near the edges.",
      "The trajectory is smooth and the fluctuations stay within their usual range.",
      "Transitions between steps are gradual and consistent with the global pattern.",
  };
  return fmt::format("There is no evidence of an anomaly in this window. {}", pick(tails, rng));
}

// Answer text for `question` given the verdict the agent believes.
std::string answer_for(std::string_view question, bool anomalous, const std::string& phrase, Rng& rng) {
  const auto why = explanation(anomalous, phrase, rng);
  switch (infer_type(question)) {
    case QuestionType::multiple_choice: {
      const auto options = qagen::parse_options(question);
      const auto key = kind_keyword(phrase);
      auto it = options.end();
      if (anomalous && !key.empty()) {
        it = std::find_if(options.begin(), options.end(), [&](const auto& o) {
          return o.text.find(key) != std::string::npos && vet::assertion_polarity(o.text) == true;
        });
      }
      if (it == options.end()) {
        it = std::find_if(options.begin(), options.end(),
                          [&](const auto& o) { return vet::assertion_polarity(o.text) == anomalous; });
      }
      if (it == options.end()) it = options.begin();
      return fmt::format("{}) {} {}", it->letter, it->text, why);
    }
    case QuestionType::true_false: {
      const auto claim = vet::assertion_polarity(vet::tf_statement(question));
      const bool verdict = !claim || *claim == anomalous;
      return fmt::format("{}. {}", verdict ? "True" : "False", why);
    }
    case QuestionType::open_ended:
      return why;
  }
  return why;
}

std::string make_answer(const llmio::ChatRequest& req, const Behavior& b) {
  static const std::regex desc_re(R"(Anomaly description \(if any\): ([^\n]*))");
  static const std::regex tag_re(R"(Canonical tag \(if available\): ([^\n]*))");
  const auto description = capture(req.user, desc_re);
  const auto question = between(req.user, "\nQuestion: ", "\n\nConstraints:");
  bool anomalous = !text::trim(description).empty();
  if (b.answer_mode == AnswerMode::flip) anomalous = !anomalous;
  auto rng = request_rng(req, b.seed, "mock-answer");
  return answer_for(question, anomalous, phrase_for(capture(req.user, tag_re)), rng);
}

std::string make_candidate(const llmio::ChatRequest& req, const Behavior& b) {
  const auto values = between(req.user, "Window values: ", "\n");
  const auto question = between(req.user, "Question:\n", "\n\nAnswer:");
  double peak = 0.0, lo = 0.0, hi = 0.0;
  bool first = true;
  for (const auto& f : text::split(values, ',')) {
    const auto t = text::trim(f);
    if (t.empty()) continue;
    const double v = std::stod(std::string(t)) / 100.0;
    peak = std::max(peak, std::abs(v));
    lo = first ? v : std::min(lo, v);
    hi = first ? v : std::max(hi, v);
    first = false;
  }
  bool anomalous = peak > 2.5 || (hi - lo) > 3.5;
  auto rng = request_rng(req, b.seed, "mock-candidate");
  if (!std::bernoulli_distribution(std::clamp(b.candidate_skill, 0.0, 1.0))(rng)) anomalous = !anomalous;
  return answer_for(question, anomalous, "abrupt deviation", rng);
}

std::optional<bool> verdict_of(QuestionType type, std::string_view answer) {
  return type == QuestionType::true_false ? qagen::parse_tf(answer) : vet::assertion_polarity(answer);
}

llmio::ChatResponse make_judgement(const llmio::ChatRequest& req, const Behavior& b) {
  static const std::regex dim_re(R"(\*\*Evaluation Criterion: ([a-z_]+)\*\*)");
  const auto dimension = capture(req.user, dim_re);
  const auto question = between(req.user, "**Question:** ", "\n\n**Expected Answer:** ");
  const auto expected = between(req.user, "**Expected Answer:** ", "\n\n**Generated Response:** ");
  const auto generated = between(req.user, "**Generated Response:** ", "\n\n**Instructions:**");
  const auto type = infer_type(question);

  bool agree = false;
  if (type == QuestionType::multiple_choice) {
    const auto a = qagen::parse_mcq(expected), g = qagen::parse_mcq(generated);
    agree = a && g && *a == *g;
  } else {
    const auto a = verdict_of(type, expected), g = verdict_of(type, generated);
    agree = a && g && *a == *g;
  }
  auto rng = request_rng(req, b.seed, "mock-judge");
  int score = 0;
  if (b.judge_mode == JudgeMode::fixed) {
    score = std::clamp(b.judge_fixed_score, 1, 5);
  } else {
    const bool primary = dimension == "correctness" || dimension == "accuracy";
    score = agree ? (primary ? 5 : 4) : (primary ? 1 : 2);
    if (std::uniform_int_distribution<int>(0, 2)(rng) == 0) score = std::max(1, score - 1);
  }

  llmio::ChatResponse resp;
  resp.text = fmt::format(
      "**Step-by-step Analysis:**\nThe generated response {} the expected verdict.\n\n"
      "**Comparison with Expected Answer:**\nThe {} dimension is judged against the reference answer.\n\n"
      "**Final Assessment:**\nThe response is {}.\n\n**Score:** {}",
      agree ? "matches" : "contradicts", dimension, agree ? "consistent with the reference" : "inconsistent", score);
  if (b.judge_mode == JudgeMode::no_logprob) return resp;

  resp.tokens = llmio::naive_tokens(resp.text);
  auto& last = resp.tokens.back();
  if (b.judge_mode == JudgeMode::fixed) {
    last.logprob = 0.0;
    last.top = {{std::to_string(score), 0.0}};
    return resp;
  }
  // Log-softmax over distance-decayed logits centred on the chosen score.
  std::array<double, 5> logits{};
  for (int s = 1; s <= 5; ++s) logits[static_cast<std::size_t>(s - 1)] = -1.6 * std::abs(s - score);
  double norm = 0.0;
  for (double l : logits) norm += std::exp(l);
  norm = std::log(norm);
  std::vector<llmio::TokenAlternative> top;
  for (int s = 1; s <= 5; ++s) top.push_back({std::to_string(s), logits[static_cast<std::size_t>(s - 1)] - norm});
  std::sort(top.begin(), top.end(), [](const auto& x, const auto& y) { return x.logprob > y.logprob; });
  last.logprob = top.front().logprob;
  last.top = std::move(top);
  return resp;
}

}  // namespace

PromptKind classify(const llmio::ChatRequest& req) {
  if (req.user.starts_with("Generate a ")) return PromptKind::question;
  if (req.user.starts_with("You are given a time series window")) return PromptKind::answer;
  if (req.user.starts_with("You are an expert evaluator")) return PromptKind::judge;
  if (req.system == runner::kCandidateSystem) return PromptKind::candidate;
  return PromptKind::unknown;
}

llmio::MockProvider::Handler make_handler(Behavior behavior) {
  return [b = std::move(behavior)](const llmio::ChatRequest& req) {
    llmio::ChatResponse resp;
    switch (classify(req)) {
      case PromptKind::question: resp.text = make_question(req, b); break;
      case PromptKind::answer: resp.text = make_answer(req, b); break;
      case PromptKind::candidate: resp.text = make_candidate(req, b); break;
      case PromptKind::judge: return make_judgement(req, b);
      case PromptKind::unknown: throw llmio::ProviderError(llmio::ErrorKind::malformed, "unrecognized prompt");
    }
    resp.tokens = llmio::naive_tokens(resp.text);
    return resp;
  };
}

std::shared_ptr<llmio::MockProvider> make_provider(const std::string& model, Behavior behavior) {
  return std::make_shared<llmio::MockProvider>("mock", model, make_handler(std::move(behavior)));
}

}  // namespace tsforge::mock
