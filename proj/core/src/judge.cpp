#include "tsforge/judge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <regex>
#include <stdexcept>

#include <fmt/format.h>

#include "tsforge/util/hash.hpp"
#include "tsforge/util/parallel.hpp"
#include "tsforge/util/text.hpp"

namespace tsforge::judge {

using qagen::QuestionType;

namespace {

constexpr std::string_view kJudgeTemplate =
    R"(You are an expert evaluator for natural language generation systems. Your task is to evaluate the quality of generated responses using the G-Eval methodology with chain-of-thought reasoning.

Control the Maximum Length to 500 words.

**Evaluation Criterion: {criterion.dimension}**
{criterion.description}

**Scoring Guidelines:**
{guidelines_text}

**Question:** {question}

**Expected Answer:** {expected_answer}

**Generated Response:** {generated_response}

**Instructions:**
1. Analyze the generated response step by step using chain-of-thought reasoning
2. Compare it against the expected answer for the specified criterion
3. Consider both content quality and alignment with the expected answer
4. Provide detailed reasoning for your evaluation
5. Conclude with a single score from 1-5
6. Ignore error in index mismatch, just focus on the content

Please follow this exact format for your response:

**Step-by-step Analysis:**
[Provide detailed chain-of-thought analysis]

**Comparison with Expected Answer:**
[Compare generated response with expected answer]

**Final Assessment:**
[Summarize your evaluation]

**Score:** [Single integer: 1, 2, 3, 4, or 5])";

// Guidelines listed from score 1 up to 5.
const std::vector<Criterion> kMultipleChoice{
    {"correctness",
     "How accurate is the generated response compared to the expected answer?",
     {"Incorrect or completely irrelevant", "Somewhat relevant but with significant errors or omissions",
      "Partially correct; captures some key aspects but misses important details",
      "Mostly correct; minor deviations not affecting core meaning", "Perfect match, completely correct"},
     0.70},
    {"reasoning_quality",
     "How well does the response demonstrate logical reasoning and explanation?",
     {"No clear reasoning or completely flawed logic", "Weak reasoning; significant gaps or flawed logic",
      "Adequate reasoning; lacks depth or has inconsistencies", "Good reasoning with minor gaps",
      "Clear, logical, comprehensive reasoning fully explains the choice"},
     0.30},
};

const std::vector<Criterion> kOpenEnded{
    {"relevance",
     "How relevant and on-topic is the generated response?",
     {"Irrelevant or off-topic", "Somewhat relevant; off-topic content or key omissions",
      "Moderately relevant; addresses core aspects but misses details", "Highly relevant; minor omissions",
      "Completely relevant; directly addresses all aspects"},
     0.30},
    {"completeness",
     "How complete and comprehensive is the response?",
     {"Very incomplete", "Incomplete; significant information missing",
      "Adequately complete; missing some important details", "Mostly complete; minor gaps",
      "Fully comprehensive; covers all necessary aspects"},
     0.35},
    {"accuracy",
     "How factually accurate is the response?",
     {"Major factual errors or mostly inaccurate", "Several factual errors affecting reliability",
      "Generally accurate; some notable errors", "Mostly accurate; very minor inaccuracies",
      "Completely accurate; no factual errors"},
     0.35},
};

const std::vector<Criterion> kTrueFalse{
    {"correctness",
     "How correct is the T/F judgment and supporting explanation?",
     {"Incorrect judgment; poor or no explanation", "Incorrect judgment; reasonable attempt at explanation",
      "Correct judgment; adequate explanation", "Correct judgment; good explanation",
      "Perfect judgment; excellent supporting explanation"},
     0.60},
    {"justification_quality",
     "How well does the response justify the decision?",
     {"No meaningful justification", "Weak justification with little evidence",
      "Adequate justification with some evidence", "Good justification with solid evidence",
      "Excellent justification with clear evidence and reasoning"},
     0.40},
};

const std::vector<std::string> kAllDimensions{"correctness", "reasoning_quality", "relevance",
                                              "completeness", "accuracy",          "justification_quality"};

int type_order(QuestionType t) {
  switch (t) {
    case QuestionType::multiple_choice: return 0;
    case QuestionType::open_ended: return 1;
    case QuestionType::true_false: return 2;
  }
  return 3;
}

}  // namespace

const std::vector<Criterion>& criteria_for(QuestionType type) {
  switch (type) {
    case QuestionType::multiple_choice: return kMultipleChoice;
    case QuestionType::open_ended: return kOpenEnded;
    case QuestionType::true_false: return kTrueFalse;
  }
  throw std::invalid_argument("unknown question type");
}

std::string guidelines_text(const Criterion& c) {
  std::vector<std::string> lines;
  for (int s = 5; s >= 1; --s) lines.push_back(fmt::format("{}: {}", s, c.guidelines[static_cast<std::size_t>(s - 1)]));
  return text::join(lines, "\n");
}

std::string render_judge_prompt(const Criterion& criterion, std::string_view question, std::string_view expected,
                                std::string_view generated) {
  return qagen::render_template(kJudgeTemplate, {{"criterion.dimension", criterion.dimension},
                                                 {"criterion.description", criterion.description},
                                                 {"guidelines_text", guidelines_text(criterion)},
                                                 {"question", std::string(question)},
                                                 {"expected_answer", std::string(expected)},
                                                 {"generated_response", std::string(generated)}});
}

const std::string& judge_template_hash() {
  static const std::string h = sha256_hex(kJudgeTemplate);
  return h;
}

ScoreParse extract_score(std::string_view text, int default_score) {
  // Markdown underscores count as a boundary, so "__Score:__" is accepted.
  static const std::regex re(R"((?:^|[^a-z0-9])score[ \t*_]*:[ \t*_]*\[?[ \t]*(\d+))", std::regex::icase);
  ScoreParse out;
  out.score = default_score;
  const std::string s(text);
  std::smatch last;
  bool found = false;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
    last = *it;
    found = true;
  }
  if (!found) {
    out.flagged = true;
    out.flag = "no-score";
    return out;
  }
  const auto digits = last.str(1);
  const auto pos = static_cast<std::size_t>(last.position(1));
  if (digits.size() != 1 || digits[0] < '1' || digits[0] > '5') {
    out.flagged = true;
    out.flag = "out-of-range";
    return out;
  }

  // Rest of the line after the number: allow "/5", "out of 5", closing
  // brackets and markup; any other digit makes the score ambiguous.
  auto line_end = s.find('\n', pos);
  if (line_end == std::string::npos) line_end = s.size();
  std::string rest = s.substr(pos + 1, line_end - pos - 1);
  static const std::regex scale_suffix(R"(^[ \t]*(/[ \t]*5|out of 5)\b)", std::regex::icase);
  rest = std::regex_replace(rest, scale_suffix, "", std::regex_constants::format_first_only);
  if (std::any_of(rest.begin(), rest.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    out.flagged = true;
    out.flag = "ambiguous";
    return out;
  }
  out.score = digits[0] - '0';
  out.offset = pos;
  return out;
}

ScoreDistribution distribution_from_logprobs(const std::array<double, 5>& logp) {
  double max = -std::numeric_limits<double>::infinity();
  for (double v : logp) {
    if (std::isnan(v)) throw std::invalid_argument("log-probability is NaN");
    if (v == std::numeric_limits<double>::infinity()) throw std::invalid_argument("log-probability is +inf");
    max = std::max(max, v);
  }
  if (!std::isfinite(max)) throw std::invalid_argument("no finite score log-probability");
  ScoreDistribution p{};
  long double total = 0.0L;
  std::array<long double, 5> w{};
  for (std::size_t i = 0; i < 5; ++i) {
    w[i] = std::isfinite(logp[i]) ? std::exp(static_cast<long double>(logp[i]) - max) : 0.0L;
    total += w[i];
  }
  for (std::size_t i = 0; i < 5; ++i) p[i] = static_cast<double>(w[i] / total);
  return p;
}

ScoreDistribution one_hot(int score) {
  if (score < 1 || score > 5) throw std::invalid_argument(fmt::format("score {} outside 1..5", score));
  ScoreDistribution p{};
  p[static_cast<std::size_t>(score - 1)] = 1.0;
  return p;
}

double weighted_score(const ScoreDistribution& d) {
  long double num = 0.0L, den = 0.0L;
  for (std::size_t i = 0; i < 5; ++i) {
    num += static_cast<long double>(i + 1) * d[i];
    den += d[i];
  }
  if (den <= 0.0L) throw std::invalid_argument("empty score distribution");
  return std::clamp(static_cast<double>(num / den), 1.0, 5.0);
}

double confidence(const ScoreDistribution& d) {
  long double h = 0.0L;
  for (double p : d) {
    if (p > 0.0) h -= static_cast<long double>(p) * std::log(static_cast<long double>(p));
  }
  double c = static_cast<double>(1.0L - h / std::log(5.0L));
  if (std::abs(c) < 1e-15) c = 0.0;
  if (std::abs(1.0 - c) < 1e-15) c = 1.0;
  return std::clamp(c, 0.0, 1.0);
}

double aggregate_final(QuestionType type, const std::map<std::string, double>& dimension_scores) {
  // Long double keeps equal dimension scores mapping back to that score.
  long double total = 0.0L;
  for (const auto& c : criteria_for(type)) {
    const auto it = dimension_scores.find(c.dimension);
    if (it == dimension_scores.end()) {
      throw std::invalid_argument(fmt::format("missing dimension '{}' for {}", c.dimension, qagen::to_string(type)));
    }
    total += static_cast<long double>(c.weight) * it->second;
  }
  return static_cast<double>(total);
}

nlohmann::json to_json(const JudgeResult& r) {
  return {{"item_id", r.item_id},
          {"model", r.model},
          {"type", qagen::to_string(r.type)},
          {"dimension", r.dimension},
          {"raw_score", r.raw_score},
          {"distribution", r.distribution},
          {"weighted_score", r.weighted_score},
          {"confidence", r.confidence},
          {"rationale", r.rationale},
          {"flags", r.flags}};
}

JudgeResult judge_result_from_json(const nlohmann::json& j) {
  JudgeResult r;
  r.item_id = j.at("item_id").get<std::string>();
  r.model = j.at("model").get<std::string>();
  r.type = qagen::question_type_from_string(j.at("type").get<std::string>());
  r.dimension = j.at("dimension").get<std::string>();
  r.raw_score = j.at("raw_score").get<int>();
  r.distribution = j.at("distribution").get<ScoreDistribution>();
  r.weighted_score = j.at("weighted_score").get<double>();
  r.confidence = j.at("confidence").get<double>();
  r.rationale = j.value("rationale", std::string{});
  r.flags = j.value("flags", std::vector<std::string>{});
  return r;
}

std::vector<JudgeResult> judge_corpus(const std::vector<qagen::QAItem>& items,
                                      const std::vector<runner::CandidateResponse>& responses,
                                      llmio::Client& judge, const JudgeOptions& options) {
  std::map<std::string, const qagen::QAItem*> by_id;
  for (const auto& item : items) by_id[item.id] = &item;

  struct Task {
    const runner::CandidateResponse* response;
    const qagen::QAItem* item;
    const Criterion* criterion;
  };
  std::vector<Task> tasks;
  std::vector<JudgeResult> out;
  for (const auto& r : responses) {
    const auto it = by_id.find(r.item_id);
    const qagen::QAItem* item = it == by_id.end() ? nullptr : it->second;
    const auto type = item ? item->type : QuestionType::multiple_choice;
    for (const auto& c : criteria_for(type)) {
      tasks.push_back({&r, item, &c});
      out.emplace_back();
    }
  }

  parallel_for(tasks.size(), options.workers, [&](std::size_t k) {
    const auto& t = tasks[k];
    auto& res = out[k];
    res.item_id = t.response->item_id;
    res.model = t.response->model;
    res.type = t.item ? t.item->type : QuestionType::multiple_choice;
    res.dimension = t.criterion->dimension;

    auto set_default = [&](std::string flag) {
      res.raw_score = options.default_score;
      res.distribution = one_hot(options.default_score);
      res.weighted_score = weighted_score(res.distribution);
      res.confidence = 1.0;
      res.flags.push_back(std::move(flag));
    };
    if (!t.item) return set_default("unknown-item");
    if (t.response->error) return set_default("candidate-error");

    llmio::ChatRequest req;
    req.user = render_judge_prompt(*t.criterion, t.item->question, t.item->expected_answer, t.response->response);
    req.temperature = 0.0;
    req.max_tokens = options.max_tokens;
    req.want_logprobs = true;
    req.top_k = options.top_k;
    const auto resp = judge.complete(req);
    res.rationale = resp.text;

    const auto parsed = extract_score(resp.text, options.default_score);
    res.raw_score = parsed.score;
    if (parsed.flagged) {
      res.distribution = one_hot(parsed.score);
      res.flags.push_back(parsed.flag);
    } else {
      const auto logp = llmio::score_token_logprobs(resp, *parsed.offset);
      const bool usable = logp && std::any_of(logp->begin(), logp->end(), [](double v) { return std::isfinite(v); });
      if (usable) {
        res.distribution = distribution_from_logprobs(*logp);
      } else {
        res.distribution = one_hot(parsed.score);
        res.flags.push_back("no-logprob");
      }
    }
    res.weighted_score = weighted_score(res.distribution);
    res.confidence = confidence(res.distribution);
  });
  return out;
}

std::map<std::string, double> item_finals(const std::vector<JudgeResult>& results, const std::string& model,
                                          QuestionType type, const std::set<std::string>& excluded) {
  std::map<std::string, std::map<std::string, double>> dims;
  for (const auto& r : results) {
    if (r.model != model || r.type != type || excluded.contains(r.item_id)) continue;
    dims[r.item_id][r.dimension] = r.weighted_score;
  }
  std::map<std::string, double> out;
  for (const auto& [id, d] : dims) {
    if (d.size() == criteria_for(type).size()) out[id] = aggregate_final(type, d);
  }
  return out;
}

std::vector<ReportRow> build_report(const std::vector<JudgeResult>& results, const std::set<std::string>& excluded) {
  struct Acc {
    std::map<std::string, std::pair<double, std::size_t>> sums;
    std::set<std::string> items;
  };
  std::map<std::pair<std::string, int>, Acc> acc;
  for (const auto& r : results) {
    if (excluded.contains(r.item_id)) continue;
    auto& a = acc[{r.model, type_order(r.type)}];
    auto& [sum, count] = a.sums[r.dimension];
    sum += r.weighted_score;
    ++count;
    a.items.insert(r.item_id);
  }
  std::vector<ReportRow> rows;
  for (const auto& [key, a] : acc) {
    ReportRow row;
    row.model = key.first;
    row.type = qagen::kAllTypes[key.second];
    for (const auto& [dim, sc] : a.sums) row.dimension_means[dim] = sc.first / static_cast<double>(sc.second);
    row.final_score = aggregate_final(row.type, row.dimension_means);
    row.n = a.items.size();
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
    if (type_order(a.type) != type_order(b.type)) return type_order(a.type) < type_order(b.type);
    if (a.final_score != b.final_score) return a.final_score > b.final_score;
    return a.model < b.model;
  });
  return rows;
}

std::string report_table(const std::vector<ReportRow>& rows) {
  std::vector<std::string> header{"model", "type"};
  header.insert(header.end(), kAllDimensions.begin(), kAllDimensions.end());
  header.push_back("final");
  header.push_back("n");

  std::vector<std::vector<std::string>> cells{header};
  for (const auto& r : rows) {
    std::vector<std::string> line{r.model, qagen::to_string(r.type)};
    for (const auto& d : kAllDimensions) {
      const auto it = r.dimension_means.find(d);
      line.push_back(it == r.dimension_means.end() ? "-" : fmt::format("{:.2f}", it->second));
    }
    line.push_back(fmt::format("{:.2f}", r.final_score));
    line.push_back(std::to_string(r.n));
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::string out;
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      out += i < 2 ? fmt::format("{:<{}}", line[i], width[i]) : fmt::format("{:>{}}", line[i], width[i]);
      out += i + 1 < line.size() ? "  " : "\n";
    }
  }
  return out;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::string out = "model,type";
  for (const auto& d : kAllDimensions) out += "," + d;
  out += ",final,n\n";
  for (const auto& r : rows) {
    out += r.model + "," + qagen::to_string(r.type);
    for (const auto& d : kAllDimensions) {
      const auto it = r.dimension_means.find(d);
      out += it == r.dimension_means.end() ? "," : fmt::format(",{:.6f}", it->second);
    }
    out += fmt::format(",{:.6f},{}\n", r.final_score, r.n);
  }
  return out;
}

double contribution_score(double baseline_nll, double ablated_nll) { return baseline_nll - ablated_nll; }

std::vector<double> contribution_score(std::span<const double> baseline_nll, std::span<const double> ablated_nll) {
  if (baseline_nll.size() != ablated_nll.size()) throw std::invalid_argument("contribution_score: length mismatch");
  std::vector<double> out(baseline_nll.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = contribution_score(baseline_nll[i], ablated_nll[i]);
  return out;
}

std::vector<ContributionRecord> contribution_records(double baseline_nll, std::span<const double> ablated_nll,
                                                     std::size_t start) {
  std::vector<ContributionRecord> out;
  out.reserve(ablated_nll.size());
  for (std::size_t i = 0; i < ablated_nll.size(); ++i) {
    out.push_back({start + i, baseline_nll, ablated_nll[i], contribution_score(baseline_nll, ablated_nll[i])});
  }
  return out;
}

}  // namespace tsforge::judge
