#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsforge/llmio.hpp"
#include "tsforge/qagen.hpp"
#include "tsforge/runner.hpp"

namespace tsforge::judge {

struct Criterion {
  std::string dimension;
  std::string description;
  std::array<std::string, 5> guidelines;  // guidelines[s - 1] describes score s
  double weight = 0.0;
};

/// Dimensions applied to a question type, in reporting order.
const std::vector<Criterion>& criteria_for(qagen::QuestionType type);

/// "5: ...\n4: ...\n...\n1: ..." (no trailing newline).
std::string guidelines_text(const Criterion& c);

std::string render_judge_prompt(const Criterion& criterion, std::string_view question, std::string_view expected,
                                std::string_view generated);

/// SHA-256 of the unfilled judge template.
const std::string& judge_template_hash();

struct ScoreParse {
  int score = 1;
  bool flagged = false;
  std::string flag;                   // "no-score", "out-of-range", "ambiguous"
  std::optional<std::size_t> offset;  // character offset of the score digit in the text
};

/// Parses the last "Score:" line, tolerating markdown emphasis, brackets and a
/// trailing "/5" or "out of 5". Anything else yields `default_score`, flagged.
ScoreParse extract_score(std::string_view text, int default_score = 1);

/// p[s - 1] for s in 1..5.
using ScoreDistribution = std::array<double, 5>;

/// Softmax with max subtraction. -inf entries get probability 0. Throws
/// std::invalid_argument when no entry is finite.
ScoreDistribution distribution_from_logprobs(const std::array<double, 5>& logp);

ScoreDistribution one_hot(int score);

double weighted_score(const ScoreDistribution& d);

/// 1 - H(p)/ln 5, natural log, 0 ln 0 = 0.
double confidence(const ScoreDistribution& d);

/// Weighted sum of dimension scores with the type's weights. Throws when a
/// dimension of the type is missing.
double aggregate_final(qagen::QuestionType type, const std::map<std::string, double>& dimension_scores);

struct JudgeResult {
  std::string item_id;
  std::string model;
  qagen::QuestionType type = qagen::QuestionType::multiple_choice;
  std::string dimension;
  int raw_score = 1;
  ScoreDistribution distribution{};
  double weighted_score = 1.0;
  double confidence = 1.0;
  std::string rationale;
  std::vector<std::string> flags;
};

nlohmann::json to_json(const JudgeResult& r);
JudgeResult judge_result_from_json(const nlohmann::json& j);

struct JudgeOptions {
  std::size_t workers = 4;
  int default_score = 1;
  int top_k = 5;
  int max_tokens = 1024;
};

/// Judges every (response, dimension of its item's type). Responses whose
/// candidate call failed, or whose item is unknown, receive the default score
/// without a judge call. Output order: responses in input order, dimensions
/// in criteria order.
std::vector<JudgeResult> judge_corpus(const std::vector<qagen::QAItem>& items,
                                      const std::vector<runner::CandidateResponse>& responses,
                                      llmio::Client& judge, const JudgeOptions& options = {});

struct ReportRow {
  std::string model;
  qagen::QuestionType type = qagen::QuestionType::multiple_choice;
  std::map<std::string, double> dimension_means;
  double final_score = 0.0;
  std::size_t n = 0;  // items judged
};

/// Means of weighted scores per (model, type, dimension); Final applies the
/// type weights to those means. Items in `excluded` are skipped. Rows are
/// grouped by type and sorted by Final, best first.
std::vector<ReportRow> build_report(const std::vector<JudgeResult>& results,
                                    const std::set<std::string>& excluded = {});

/// Per-item Final scores for one model and type, keyed by item id.
std::map<std::string, double> item_finals(const std::vector<JudgeResult>& results, const std::string& model,
                                          qagen::QuestionType type, const std::set<std::string>& excluded = {});

std::string report_table(const std::vector<ReportRow>& rows);

/// Header: model,type,correctness,reasoning_quality,relevance,completeness,
/// accuracy,justification_quality,final,n. Dimensions a type lacks are blank.
std::string report_csv(const std::vector<ReportRow>& rows);

/// baseline_nll - ablated_nll, exactly.
double contribution_score(double baseline_nll, double ablated_nll);
std::vector<double> contribution_score(std::span<const double> baseline_nll, std::span<const double> ablated_nll);

struct ContributionRecord {
  std::size_t position = 0;
  double baseline_nll = 0.0;
  double ablated_nll = 0.0;
  double contribution = 0.0;
};

/// One record per ablated position start, start+1, ... against a single
/// baseline.
std::vector<ContributionRecord> contribution_records(double baseline_nll, std::span<const double> ablated_nll,
                                                     std::size_t start);

}  // namespace tsforge::judge
