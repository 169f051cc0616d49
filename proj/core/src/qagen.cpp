#include "tsforge/qagen.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <stdexcept>

#include <fmt/format.h>

#include "tsforge/numeric.hpp"
#include "tsforge/util/hash.hpp"
#include "tsforge/util/rng.hpp"
#include "tsforge/util/text.hpp"

namespace tsforge::qagen {

namespace {

constexpr std::string_view kQuestionSystem =
    "You generate precise and relevant questions for time series anomaly detection.";

constexpr std::string_view kQuestionUser =
    R"(Generate a {question_type} question focused on anomaly detection for the window [ {window_start}, {window_end} ].

Context:
- Task: time series anomaly detection on a windowed segment
- The window {may / does} contain anomalies: {has_anomaly}
- Canonical tag (if available): {canonical_tag}
- Global information: {global_information}

Requirements:
1) Output ONLY the question text (no answers, no explanations).
2) Focus on anomaly identification and pattern analysis within the window.
3) Consider boundary effects near window edges.
4) Multiple choice (if applicable):
   - Provide exactly 4 options (A, B, C, D).
   - Options must be mutually exclusive, same style.
   - Include both normal and anomalous descriptions; avoid exact numeric values.
5) True/False (if applicable):
   - Make a specific statement about a potential anomaly pattern.
6) Open-ended (if applicable):
   - Ask about pattern evidence and reasoning for/against anomalies.)";

constexpr std::string_view kAnswerSystem = "You analyze time series patterns and generate concise answers.";

constexpr std::string_view kAnswerUser =
    R"(You are given a time series window [ {window_start}, {window_end} ], which belongs to a longer series.
Global information: {global_information}
Canonical tag (if available): {canonical_tag}
Anomaly description (if any): {anomaly_description}
Data [current_value(normal_value)]: [{data_str}]
Question: {question}

Constraints:
- Focus on the pattern of current_values; avoid relying on normal_values.
- Keep the answer concise (<= 150 words), pattern-first (e.g., sustained level change, volatility burst).
- MCQ: start with the correct option letter, then explanation (e.g.,  B) ...).
- True/False: start with True or False, then explanation.
- Do not quote exact numeric values; reason from shape, persistence, variability.
- If no anomaly, state it clearly with supporting evidence.)";

std::string template_hash(std::string_view system, std::string_view user) {
  std::string joined(system);
  joined += '\n';
  joined += user;
  return sha256_hex(joined);
}

std::string prompt_hash(const PromptPair& p) { return template_hash(p.system, p.user); }

}  // namespace

std::string to_string(QuestionType t) {
  switch (t) {
    case QuestionType::multiple_choice: return "multiple_choice";
    case QuestionType::open_ended: return "open_ended";
    case QuestionType::true_false: return "true_false";
  }
  return "unknown";
}

QuestionType question_type_from_string(std::string_view s) {
  for (auto t : kAllTypes) {
    if (to_string(t) == s) return t;
  }
  throw std::invalid_argument(fmt::format("unknown question type '{}'", s));
}

std::string render_template(std::string_view tmpl, const std::vector<std::pair<std::string, std::string>>& values) {
  for (std::size_t i = tmpl.find('{'); i != std::string_view::npos; i = tmpl.find('{', i + 1)) {
    const auto close = tmpl.find('}', i);
    if (close == std::string_view::npos) break;
    const auto key = tmpl.substr(i + 1, close - i - 1);
    if (key.empty() || key.find('{') != std::string_view::npos) continue;
    const bool known = std::any_of(values.begin(), values.end(), [&](const auto& kv) { return kv.first == key; });
    if (!known) throw std::invalid_argument(fmt::format("unresolved placeholder {{{}}}", key));
  }
  return text::substitute(tmpl, values);
}

PromptPair render_question_prompt(const QuestionContext& ctx) {
  return {std::string(kQuestionSystem),
          render_template(kQuestionUser, {{"question_type", to_string(ctx.type)},
                                          {"window_start", std::to_string(ctx.window_start)},
                                          {"window_end", std::to_string(ctx.window_end)},
                                          {"may / does", ctx.has_anomaly ? "does" : "may"},
                                          {"has_anomaly", ctx.has_anomaly ? "true" : "false"},
                                          {"canonical_tag", ctx.canonical_tag},
                                          {"global_information", ctx.global_information}})};
}

PromptPair render_answer_prompt(const AnswerContext& ctx, const std::string& data_str) {
  return {std::string(kAnswerSystem),
          render_template(kAnswerUser, {{"window_start", std::to_string(ctx.window_start)},
                                        {"window_end", std::to_string(ctx.window_end)},
                                        {"global_information", ctx.global_information},
                                        {"canonical_tag", ctx.canonical_tag},
                                        {"anomaly_description", ctx.anomaly_description},
                                        {"data_str", data_str},
                                        {"question", ctx.question}})};
}

const std::string& question_template_hash() {
  static const std::string h = template_hash(kQuestionSystem, kQuestionUser);
  return h;
}

const std::string& answer_template_hash() {
  static const std::string h = template_hash(kAnswerSystem, kAnswerUser);
  return h;
}

std::string_view strip_verdict_preamble(std::string_view text) {
  auto is_markup = [](char c) { return c == '*' || c == '#' || c == '_' || c == '`' || c == '>'; };
  auto strip = [&](std::string_view s) {
    while (!s.empty() && (std::isspace(static_cast<unsigned char>(s.front())) || is_markup(s.front()))) s.remove_prefix(1);
    return s;
  };
  auto s = strip(text);
  for (std::string_view label : {"correct answer", "final answer", "answer", "verdict"}) {
    if (text::starts_with_ci(s, label)) {
      auto rest = strip(s.substr(label.size()));
      if (!rest.empty() && (rest.front() == ':' || rest.front() == '-')) {
        s = strip(rest.substr(1));
        break;
      }
    }
  }
  return s;
}

std::optional<char> parse_mcq(std::string_view answer) {
  auto s = strip_verdict_preamble(answer);
  if (!s.empty() && s.front() == '(') s.remove_prefix(1);
  if (s.size() < 2) return std::nullopt;
  const char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  if (letter < 'A' || letter > 'D') return std::nullopt;
  if (s[1] == ')' || s[1] == '.' || s[1] == ':') return letter;
  return std::nullopt;
}

std::optional<bool> parse_tf(std::string_view answer) {
  auto s = strip_verdict_preamble(answer);
  for (auto [word, value] : {std::pair<std::string_view, bool>{"true", true}, {"false", false}}) {
    if (text::starts_with_ci(s, word)) {
      if (s.size() == word.size() || !std::isalpha(static_cast<unsigned char>(s[word.size()]))) return value;
    }
  }
  return std::nullopt;
}

std::vector<McqOption> parse_options(std::string_view question) {
  std::vector<McqOption> out;
  for (const auto& line : text::split_lines(question)) {
    auto s = text::trim(line);
    while (!s.empty() && (s.front() == '*' || s.front() == '-' || s.front() == '(')) s.remove_prefix(1);
    if (s.size() >= 2 && std::isupper(static_cast<unsigned char>(s[0])) && s[1] == ')') {
      auto body = text::trim(s.substr(2));
      while (!body.empty() && body.back() == '*') body.remove_suffix(1);
      out.push_back({s[0], std::string(text::trim(body))});
    }
  }
  return out;
}

std::optional<std::string> validate_question(QuestionType type, std::string_view question) {
  if (text::trim(question).empty()) return "empty question";
  if (type == QuestionType::multiple_choice) {
    const auto options = parse_options(question);
    if (options.size() != 4) return fmt::format("option count: expected 4 options, found {}", options.size());
    for (std::size_t i = 0; i < 4; ++i) {
      if (options[i].letter != static_cast<char>('A' + i)) return "option labels: expected A) B) C) D)";
    }
  }
  return std::nullopt;
}

AnswerCheck validate_answer(QuestionType type, std::string_view question, std::string_view answer,
                            const WordLimits& limits) {
  AnswerCheck check;
  const auto s = text::trim(answer);
  if (s.empty()) {
    check.violation = "empty answer";
    return check;
  }
  if (type == QuestionType::multiple_choice) {
    if (s.size() < 2 || s[0] < 'A' || s[0] > 'D' || s[1] != ')') {
      check.violation = "verdict prefix: MCQ answer must begin with an option letter and ')'";
      return check;
    }
    const auto options = parse_options(question);
    if (std::none_of(options.begin(), options.end(), [&](const auto& o) { return o.letter == s[0]; })) {
      check.violation = fmt::format("unknown option {}", s[0]);
      return check;
    }
  } else if (type == QuestionType::true_false) {
    if (!s.starts_with("True") && !s.starts_with("False")) {
      check.violation = "verdict prefix: true/false answer must begin with True or False";
      return check;
    }
  }
  const auto words = text::word_count(s);
  if (words > limits.hard) {
    check.violation = fmt::format("word limit: {} words exceeds {}", words, limits.hard);
  } else if (words > limits.soft) {
    check.warnings.push_back(fmt::format("answer has {} words (> {})", words, limits.soft));
  }
  return check;
}

nlohmann::json to_json(const QAItem& item) {
  const auto& p = item.provenance;
  return {{"id", item.id},
          {"type", to_string(item.type)},
          {"window", window::to_json(item.window)},
          {"question", item.question},
          {"expected_answer", item.expected_answer},
          {"provenance",
           {{"question_model", p.question_model},
            {"answer_model", p.answer_model},
            {"question_template_hash", p.question_template_hash},
            {"answer_template_hash", p.answer_template_hash},
            {"question_prompt_hash", p.question_prompt_hash},
            {"answer_prompt_hash", p.answer_prompt_hash},
            {"question_seed", p.question_seed},
            {"answer_seed", p.answer_seed},
            {"question_attempts", p.question_attempts},
            {"answer_attempts", p.answer_attempts},
            {"question_timestamp", p.question_timestamp},
            {"answer_timestamp", p.answer_timestamp},
            {"warnings", p.warnings}}}};
}

QAItem qa_item_from_json(const nlohmann::json& j) {
  QAItem item;
  item.id = j.at("id").get<std::string>();
  item.type = question_type_from_string(j.at("type").get<std::string>());
  item.window = window::window_ref_from_json(j.at("window"));
  item.question = j.at("question").get<std::string>();
  item.expected_answer = j.at("expected_answer").get<std::string>();
  const auto& p = j.value("provenance", nlohmann::json::object());
  auto& out = item.provenance;
  out.question_model = p.value("question_model", std::string{});
  out.answer_model = p.value("answer_model", std::string{});
  out.question_template_hash = p.value("question_template_hash", std::string{});
  out.answer_template_hash = p.value("answer_template_hash", std::string{});
  out.question_prompt_hash = p.value("question_prompt_hash", std::string{});
  out.answer_prompt_hash = p.value("answer_prompt_hash", std::string{});
  out.question_seed = p.value("question_seed", std::uint64_t{0});
  out.answer_seed = p.value("answer_seed", std::uint64_t{0});
  out.question_attempts = p.value("question_attempts", 0);
  out.answer_attempts = p.value("answer_attempts", 0);
  out.question_timestamp = p.value("question_timestamp", std::string{});
  out.answer_timestamp = p.value("answer_timestamp", std::string{});
  out.warnings = p.value("warnings", std::vector<std::string>{});
  return item;
}

nlohmann::json to_json(const Quarantined& q) {
  return {{"id", q.id},
          {"type", to_string(q.type)},
          {"window", window::to_json(q.window)},
          {"reason", q.reason},
          {"last_question", q.last_question},
          {"last_answer", q.last_answer}};
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

GenerationResult generate_qa(const std::string& id, const window::WindowInstance& w, QuestionType type,
                             llmio::Client& question_agent, llmio::Client& answer_agent,
                             const GenerationOptions& options) {
  const auto clock = options.clock ? options.clock : [] { return utc_now(); };
  const auto ref = window::ref_of(w);
  QAItem item;
  item.id = id;
  item.type = type;
  item.window = ref;
  auto& prov = item.provenance;
  prov.question_model = question_agent.provider().model();
  prov.answer_model = answer_agent.provider().model();
  prov.question_template_hash = question_template_hash();
  prov.answer_template_hash = answer_template_hash();

  Quarantined quarantined{id, type, ref, {}, {}, {}};
  const int attempts = std::max(1, options.max_attempts);

  const auto qprompt = render_question_prompt(
      {type, w.interval.start, w.interval.end, w.has_anomaly, ref.canonical_tag, w.global_information});
  prov.question_prompt_hash = prompt_hash(qprompt);
  std::optional<std::string> reason;
  for (int a = 1; a <= attempts; ++a) {
    llmio::ChatRequest req{qprompt.system, qprompt.user, options.temperature, 512, false, 1,
                           derive_seed(options.seed, id + "/question", static_cast<std::uint64_t>(a))};
    const auto resp = question_agent.complete(req);
    item.question = std::string(text::trim(resp.text));
    prov.question_seed = req.seed;
    prov.question_attempts = a;
    prov.question_timestamp = clock();
    reason = validate_question(type, item.question);
    if (!reason) break;
  }
  if (reason) {
    quarantined.reason = "question: " + *reason;
    quarantined.last_question = item.question;
    return quarantined;
  }

  const auto aprompt = render_answer_prompt(
      {w.interval.start, w.interval.end, w.global_information, ref.canonical_tag,
       text::join(ref.anomaly_descriptions, "; "), item.question},
      numeric::paired_data_string(w.current_values, w.normal_values));
  prov.answer_prompt_hash = prompt_hash(aprompt);
  AnswerCheck check;
  for (int a = 1; a <= attempts; ++a) {
    llmio::ChatRequest req{aprompt.system, aprompt.user, options.temperature, 512, false, 1,
                           derive_seed(options.seed, id + "/answer", static_cast<std::uint64_t>(a))};
    const auto resp = answer_agent.complete(req);
    item.expected_answer = std::string(text::trim(resp.text));
    prov.answer_seed = req.seed;
    prov.answer_attempts = a;
    prov.answer_timestamp = clock();
    check = validate_answer(type, item.question, item.expected_answer, options.limits);
    if (!check.violation) break;
  }
  if (check.violation) {
    quarantined.reason = "answer: " + *check.violation;
    quarantined.last_question = item.question;
    quarantined.last_answer = item.expected_answer;
    return quarantined;
  }
  prov.warnings = check.warnings;
  return item;
}

}  // namespace tsforge::qagen
