#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "tsforge/llmio.hpp"

namespace tsforge::mock {

enum class AnswerMode { echo, flip };
enum class JudgeMode { graded, fixed, no_logprob };

/// Behaviour of the simulated agents. One handler serves every prompt kind;
/// the kind is recognized from the prompt text.
struct Behavior {
  AnswerMode answer_mode = AnswerMode::echo;  // flip inverts the ground-truth verdict
  double candidate_skill = 0.8;               // probability of keeping the detector's verdict
  JudgeMode judge_mode = JudgeMode::graded;
  int judge_fixed_score = 3;
  int mcq_option_count = 4;  // anything but 4 produces malformed questions
  std::uint64_t seed = 0;
};

enum class PromptKind { question, answer, candidate, judge, unknown };
PromptKind classify(const llmio::ChatRequest& req);

llmio::MockProvider::Handler make_handler(Behavior behavior);

std::shared_ptr<llmio::MockProvider> make_provider(const std::string& model, Behavior behavior);

}  // namespace tsforge::mock
