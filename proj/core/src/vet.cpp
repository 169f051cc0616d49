#include "tsforge/vet.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <numeric>
#include <regex>
#include <set>

#include <fmt/format.h>

#include "tsforge/util/text.hpp"

namespace tsforge::vet {

namespace {

constexpr std::array<std::string_view, 12> kAnomalyCues = {"anomal", "abnormal", "deviat",  "spike",
                                                           "outlier", "irregular", "shift", "burst",
                                                           "drift",   "unusual",  "abrupt", "aberra"};
constexpr std::array<std::string_view, 6> kNormalCues = {"normal", "stable", "consistent", "steady", "regular", "smooth"};
constexpr std::array<std::string_view, 13> kNegators = {"no",   "not",  "without", "absence", "absent", "never", "lack",
                                                        "lacks", "lacking", "none", "neither", "nor", "cannot"};
constexpr std::array<std::string_view, 8> kContrast = {"but", "however", "although", "though",
                                                       "yet", "whereas", "while",   "except"};

template <std::size_t N>
bool in(const std::array<std::string_view, N>& set, std::string_view w) {
  return std::find(set.begin(), set.end(), w) != set.end();
}

bool is_anomaly_cue(std::string_view w) {
  return std::any_of(kAnomalyCues.begin(), kAnomalyCues.end(), [&](auto cue) { return w.starts_with(cue); });
}

bool is_negator(std::string_view w) { return in(kNegators, w) || w.ends_with("n't"); }

std::vector<std::string> sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    const bool at_end = i + 1 == text.size();
    const bool next_space = at_end || std::isspace(static_cast<unsigned char>(text[i + 1]));
    if (c == '\n' || c == ';' || ((c == '.' || c == '!' || c == '?') && next_space)) {
      if (!text::trim(cur).empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!text::trim(cur).empty()) out.push_back(cur);
  return out;
}

std::vector<std::string> words(std::string_view sentence) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : sentence) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || ch == '\'') {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::optional<bool> sentence_polarity(const std::string& sentence) {
  const auto ws = words(sentence);
  bool negated = false;
  bool positive = false, negative = false, weak_negative = false;
  for (std::size_t i = 0; i < ws.size(); ++i) {
    const auto& w = ws[i];
    if (in(kContrast, w)) {
      negated = false;
    } else if (is_negator(w)) {
      negated = true;
    } else if (is_anomaly_cue(w)) {
      const bool free_suffix = i + 1 < ws.size() && ws[i + 1] == "free";
      if (free_suffix || negated) {
        negative = true;
      } else {
        positive = true;
      }
    } else if (in(kNormalCues, w)) {
      // Only a negator right before a normality cue flips it ("not stable").
      const bool close_neg = (i >= 1 && is_negator(ws[i - 1])) || (i >= 2 && is_negator(ws[i - 2]));
      if (close_neg) {
        positive = true;
      } else {
        weak_negative = true;
      }
    }
  }
  if (positive) return true;
  if (negative || weak_negative) return false;
  return std::nullopt;
}

std::set<std::string> trigrams(std::string_view s) {
  std::set<std::string> out;
  if (s.size() < 3) {
    if (!s.empty()) out.emplace(s);
    return out;
  }
  for (std::size_t i = 0; i + 3 <= s.size(); ++i) out.emplace(s.substr(i, 3));
  return out;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++inter;
      ++ia;
      ++ib;
    }
  }
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

bool leading_markup(std::string_view answer) {
  auto s = text::trim(answer);
  return !s.empty() && (s.front() == '*' || s.front() == '#' || s.front() == '_' || s.front() == '`' || s.front() == '>');
}

}  // namespace

std::optional<bool> assertion_polarity(std::string_view text) {
  for (const auto& s : sentences(text)) {
    if (auto p = sentence_polarity(s)) return p;
  }
  return std::nullopt;
}

std::string_view tf_statement(std::string_view question) {
  auto s = text::trim(question);
  if (text::starts_with_ci(s, "true or false")) {
    s.remove_prefix(std::string_view("true or false").size());
    while (!s.empty() && (s.front() == ':' || s.front() == '?' || s.front() == '-' || std::isspace(static_cast<unsigned char>(s.front())))) {
      s.remove_prefix(1);
    }
  }
  return s;
}

std::string to_string(Status s) {
  switch (s) {
    case Status::pass: return "pass";
    case Status::warn: return "warn";
    case Status::fail: return "fail";
    case Status::na: return "na";
  }
  return "na";
}

AgreementOutcome check_agreement(const qagen::QAItem& item) {
  const bool truth = item.window.has_anomaly;
  auto verdict = [&](bool ok, std::string reason) {
    return AgreementOutcome{ok ? Status::pass : Status::fail, ok ? std::string{} : std::move(reason)};
  };
  switch (item.type) {
    case qagen::QuestionType::multiple_choice: {
      const auto letter = qagen::parse_mcq(item.expected_answer);
      if (!letter) return {Status::na, "unparseable option letter"};
      const auto options = qagen::parse_options(item.question);
      const auto it = std::find_if(options.begin(), options.end(), [&](const auto& o) { return o.letter == *letter; });
      if (it == options.end()) return {Status::na, fmt::format("option {} not found in question", *letter)};
      const auto polarity = assertion_polarity(it->text);
      if (!polarity) return {Status::na, fmt::format("option {} has no verdict cue", *letter)};
      return verdict(*polarity == truth, fmt::format("option {} {} an anomaly but has_anomaly is {}", *letter,
                                                     *polarity ? "describes" : "rules out", truth));
    }
    case qagen::QuestionType::true_false: {
      const auto answer = qagen::parse_tf(item.expected_answer);
      if (!answer) return {Status::na, "unparseable true/false verdict"};
      const auto claim = assertion_polarity(tf_statement(item.question));
      if (!claim) return {Status::na, "statement makes no anomaly claim"};
      const bool statement_true = (*claim == truth);
      return verdict(*answer == statement_true,
                     fmt::format("answer {} but the statement is {} given has_anomaly {}", *answer ? "True" : "False",
                                 statement_true ? "true" : "false", truth));
    }
    case qagen::QuestionType::open_ended: {
      const auto polarity = assertion_polarity(item.expected_answer);
      if (!polarity) return {Status::na, "answer states no verdict"};
      return verdict(*polarity == truth, fmt::format("answer {} an anomaly but has_anomaly is {}",
                                                     *polarity ? "asserts" : "denies", truth));
    }
  }
  return {Status::na, "unknown type"};
}

bool quotes_raw_values(std::string_view text) {
  static const std::regex re(R"(-?\d+\.\d+\s*,\s*-?\d+\.\d+)");
  return std::regex_search(text.begin(), text.end(), re);
}

StyleOutcome check_style(const qagen::QAItem& item) {
  StyleOutcome out;
  const auto answer = text::trim(item.expected_answer);
  if (leading_markup(answer)) out.reasons.push_back("leading markup before verdict");

  switch (item.type) {
    case qagen::QuestionType::multiple_choice: {
      const auto options = qagen::parse_options(item.question);
      if (options.size() != 4) {
        out.reasons.push_back(fmt::format("option count: {} options", options.size()));
      } else {
        for (std::size_t i = 0; i < 4; ++i) {
          if (options[i].letter != static_cast<char>('A' + i)) {
            out.reasons.push_back("option labels");
            break;
          }
        }
      }
      if (answer.size() < 2 || answer[0] < 'A' || answer[0] > 'D' || answer[1] != ')') {
        out.reasons.push_back("verdict prefix: expected option letter and ')'");
      }
      break;
    }
    case qagen::QuestionType::true_false:
      if (!answer.starts_with("True") && !answer.starts_with("False")) {
        out.reasons.push_back("verdict prefix: expected True or False");
      }
      break;
    case qagen::QuestionType::open_ended:
      if (answer.empty()) out.reasons.push_back("empty answer");
      break;
  }
  if (item.type != qagen::QuestionType::open_ended && quotes_raw_values(answer)) out.warnings.push_back("raw values");
  out.status = out.reasons.empty() ? Status::pass : Status::fail;
  return out;
}

LengthOutcome check_length(const qagen::QAItem& item, const qagen::WordLimits& limits) {
  LengthOutcome out;
  out.words = text::word_count(item.expected_answer);
  out.status = out.words > limits.hard ? Status::fail : (out.words > limits.soft ? Status::warn : Status::pass);
  return out;
}

double trigram_jaccard(std::string_view a, std::string_view b) { return jaccard(trigrams(a), trigrams(b)); }

std::vector<DuplicateCluster> dedupe(const std::vector<qagen::QAItem>& items, double threshold) {
  const std::size_t n = items.size();
  std::vector<std::set<std::string>> grams(n);
  for (std::size_t i = 0; i < n; ++i) grams[i] = trigrams(items[i].question);

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto lo = std::min(grams[i].size(), grams[j].size());
      const auto hi = std::max(grams[i].size(), grams[j].size());
      if (hi > 0 && static_cast<double>(lo) / static_cast<double>(hi) < threshold) continue;
      if (jaccard(grams[i], grams[j]) >= threshold) {
        const auto a = find(i), b = find(j);
        parent[std::max(a, b)] = std::min(a, b);
      }
    }
  }

  std::vector<DuplicateCluster> clusters;
  std::vector<std::ptrdiff_t> cluster_of(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto root = find(i);
    if (cluster_of[root] < 0) {
      cluster_of[root] = static_cast<std::ptrdiff_t>(clusters.size());
      clusters.push_back({items[i].id, {}, {}});
    }
    auto& c = clusters[static_cast<std::size_t>(cluster_of[root])];
    c.member_ids.push_back(items[i].id);
    c.similarity_to_kept.push_back(jaccard(grams[root], grams[i]));
  }
  std::erase_if(clusters, [](const auto& c) { return c.member_ids.size() < 2; });
  return clusters;
}

std::vector<std::string> ItemOutcome::quarantine_reasons() const {
  std::vector<std::string> out;
  if (agreement.status == Status::fail) out.push_back("agreement: " + agreement.reason);
  for (const auto& r : style.reasons) out.push_back("style: " + r);
  if (length.status == Status::fail) out.push_back(fmt::format("length: {} words", length.words));
  if (duplicate) out.push_back("duplicate");
  return out;
}

IntegrityReport vet_items(const std::vector<qagen::QAItem>& items, const VetOptions& options) {
  IntegrityReport report;
  report.outcomes.reserve(items.size());
  for (const auto& item : items) {
    report.outcomes.push_back({item.id, check_agreement(item), check_style(item), check_length(item, options.limits), false});
  }
  report.clusters = dedupe(items, options.dedupe_threshold);
  std::set<std::string> dropped;
  for (const auto& c : report.clusters) {
    for (std::size_t k = 1; k < c.member_ids.size(); ++k) dropped.insert(c.member_ids[k]);
  }

  auto& s = report.summary;
  s.items = items.size();
  for (auto& o : report.outcomes) {
    o.duplicate = dropped.count(o.id) > 0;
    switch (o.agreement.status) {
      case Status::pass: ++s.agreement_pass; break;
      case Status::fail: ++s.agreement_fail; break;
      default: ++s.agreement_na; break;
    }
    (o.style.status == Status::pass ? s.style_pass : s.style_fail) += 1;
    if (!o.style.warnings.empty()) ++s.style_warnings;
    switch (o.length.status) {
      case Status::pass: ++s.length_pass; break;
      case Status::warn: ++s.length_warn; break;
      default: ++s.length_fail; break;
    }
    if (o.quarantined()) ++s.quarantined;
  }
  s.duplicate_clusters = report.clusters.size();
  s.duplicates_dropped = dropped.size();
  return report;
}

std::vector<nlohmann::json> report_records(const IntegrityReport& report) {
  std::vector<nlohmann::json> out;
  for (const auto& o : report.outcomes) {
    out.push_back({{"record", "item"},
                   {"id", o.id},
                   {"agreement", {{"status", to_string(o.agreement.status)}, {"reason", o.agreement.reason}}},
                   {"style",
                    {{"status", to_string(o.style.status)}, {"reasons", o.style.reasons}, {"warnings", o.style.warnings}}},
                   {"length", {{"status", to_string(o.length.status)}, {"words", o.length.words}}},
                   {"duplicate", o.duplicate}});
  }
  for (const auto& c : report.clusters) {
    out.push_back({{"record", "cluster"},
                   {"kept_id", c.kept_id},
                   {"member_ids", c.member_ids},
                   {"similarity", c.similarity_to_kept}});
  }
  const auto& s = report.summary;
  out.push_back({{"record", "summary"},
                 {"items", s.items},
                 {"agreement", {{"pass", s.agreement_pass}, {"fail", s.agreement_fail}, {"na", s.agreement_na}}},
                 {"style", {{"pass", s.style_pass}, {"fail", s.style_fail}, {"with_warnings", s.style_warnings}}},
                 {"length", {{"pass", s.length_pass}, {"warn", s.length_warn}, {"fail", s.length_fail}}},
                 {"duplicate_clusters", s.duplicate_clusters},
                 {"duplicates_dropped", s.duplicates_dropped},
                 {"quarantined", s.quarantined}});
  return out;
}

std::string summary_table(const IntegrityReport& report) {
  const auto& s = report.summary;
  std::string out = fmt::format("{:<12} {:>6} {:>6} {:>6} {:>6}\n", "check", "pass", "warn", "fail", "n/a");
  out += fmt::format("{:<12} {:>6} {:>6} {:>6} {:>6}\n", "agreement", s.agreement_pass, "-", s.agreement_fail, s.agreement_na);
  out += fmt::format("{:<12} {:>6} {:>6} {:>6} {:>6}\n", "style", s.style_pass, s.style_warnings, s.style_fail, "-");
  out += fmt::format("{:<12} {:>6} {:>6} {:>6} {:>6}\n", "length", s.length_pass, s.length_warn, s.length_fail, "-");
  out += fmt::format("items {}  duplicate clusters {}  dropped {}  quarantined {}\n", s.items, s.duplicate_clusters,
                     s.duplicates_dropped, s.quarantined);
  return out;
}

}  // namespace tsforge::vet
