#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsforge/llmio.hpp"
#include "tsforge/window.hpp"

namespace tsforge::qagen {

enum class QuestionType { multiple_choice, open_ended, true_false };

std::string to_string(QuestionType t);
QuestionType question_type_from_string(std::string_view s);
inline constexpr QuestionType kAllTypes[] = {QuestionType::multiple_choice, QuestionType::open_ended,
                                             QuestionType::true_false};

struct PromptPair {
  std::string system;
  std::string user;
};

/// Fills `{key}` placeholders. Throws std::invalid_argument naming the first
/// placeholder of `tmpl` that has no value.
std::string render_template(std::string_view tmpl, const std::vector<std::pair<std::string, std::string>>& values);

struct QuestionContext {
  QuestionType type = QuestionType::multiple_choice;
  std::size_t window_start = 0;
  std::size_t window_end = 0;
  bool has_anomaly = false;
  std::string canonical_tag;  // empty when unavailable
  std::string global_information;
};

struct AnswerContext {
  std::size_t window_start = 0;
  std::size_t window_end = 0;
  std::string global_information;
  std::string canonical_tag;
  std::string anomaly_description;  // empty for normal windows
  std::string question;
};

PromptPair render_question_prompt(const QuestionContext& ctx);
PromptPair render_answer_prompt(const AnswerContext& ctx, const std::string& data_str);

/// SHA-256 over the raw (unfilled) system and user templates.
const std::string& question_template_hash();
const std::string& answer_template_hash();

/// Strips leading whitespace, markdown emphasis/heading markers and an
/// "Answer:" style label.
std::string_view strip_verdict_preamble(std::string_view text);

/// Leading option letter A-D followed by ')', '.' or ':'; nullopt when absent.
std::optional<char> parse_mcq(std::string_view answer);

/// Leading True/False verdict; nullopt when absent.
std::optional<bool> parse_tf(std::string_view answer);

struct McqOption {
  char letter = 'A';
  std::string text;
};

/// Lines of the form "A) text" (optionally indented or emphasized).
std::vector<McqOption> parse_options(std::string_view question);

struct WordLimits {
  std::size_t soft = 150;  // warning above
  std::size_t hard = 300;  // quarantine above
};

/// Reason string when the question breaks its type's format, else nullopt.
std::optional<std::string> validate_question(QuestionType type, std::string_view question);

struct AnswerCheck {
  std::optional<std::string> violation;
  std::vector<std::string> warnings;
};
AnswerCheck validate_answer(QuestionType type, std::string_view question, std::string_view answer,
                            const WordLimits& limits = {});

struct Provenance {
  std::string question_model;
  std::string answer_model;
  std::string question_template_hash;
  std::string answer_template_hash;
  std::string question_prompt_hash;
  std::string answer_prompt_hash;
  std::uint64_t question_seed = 0;
  std::uint64_t answer_seed = 0;
  int question_attempts = 0;
  int answer_attempts = 0;
  std::string question_timestamp;
  std::string answer_timestamp;
  std::vector<std::string> warnings;
};

struct QAItem {
  std::string id;
  QuestionType type = QuestionType::multiple_choice;
  window::WindowRef window;
  std::string question;
  std::string expected_answer;
  Provenance provenance;
};

nlohmann::json to_json(const QAItem& item);
QAItem qa_item_from_json(const nlohmann::json& j);

struct Quarantined {
  std::string id;
  QuestionType type = QuestionType::multiple_choice;
  window::WindowRef window;
  std::string reason;
  std::string last_question;
  std::string last_answer;
};

nlohmann::json to_json(const Quarantined& q);

struct GenerationOptions {
  int max_attempts = 3;  // per agent
  WordLimits limits;
  std::uint64_t seed = 0;
  double temperature = 0.7;
  std::function<std::string()> clock;  // ISO-8601 timestamps; defaults to system time
};

using GenerationResult = std::variant<QAItem, Quarantined>;

/// Agent 1 writes the question from the question prompt; agent 2 answers it
/// from the answer prompt with the comparative data string. Each agent gets up
/// to max_attempts tries to satisfy the format rules before the item is
/// quarantined. Provider errors propagate as llmio::ProviderError.
GenerationResult generate_qa(const std::string& id, const window::WindowInstance& window, QuestionType type,
                             llmio::Client& question_agent, llmio::Client& answer_agent,
                             const GenerationOptions& options);

/// ISO-8601 UTC timestamp of the current system time.
std::string utc_now();

}  // namespace tsforge::qagen
