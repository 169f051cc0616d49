#include "tsforge/survey.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "tsforge/judge.hpp"
#include "tsforge/metrics.hpp"
#include "tsforge/util/rng.hpp"
#include "tsforge/util/text.hpp"

namespace tsforge::survey {

namespace {

std::string title_case(std::string_view dim) {
  std::string out;
  bool up = true;
  for (char c : dim) {
    if (c == '_') {
      out += ' ';
      up = true;
    } else {
      out += up ? static_cast<char>(std::toupper(static_cast<unsigned char>(c))) : c;
      up = false;
    }
  }
  return out;
}

std::string redact(std::string doc, const std::vector<std::string>& names) {
  for (const auto& name : names) {
    if (name.empty()) continue;
    const auto lname = text::to_lower(name);
    std::string lower = text::to_lower(doc);
    std::string out;
    std::size_t from = 0;
    for (auto pos = lower.find(lname); pos != std::string::npos; pos = lower.find(lname, pos + lname.size())) {
      out.append(doc, from, pos - from);
      out += "[redacted]";
      from = pos + lname.size();
    }
    out.append(doc, from);
    doc = std::move(out);
  }
  return doc;
}

std::string render_markdown(const Questionnaire& q, const qagen::QAItem& item,
                            const std::vector<std::string>& slot_texts) {
  const auto& criteria = judge::criteria_for(item.type);
  const auto k = slot_texts.size();
  std::string md;
  md += fmt::format("# Questionnaire {}\n\n", q.id);
  md += fmt::format("**Question Type:** {}\n\n", qagen::to_string(item.type));
  md += fmt::format("**Question:**\n\n{}\n\n", item.question);
  md += fmt::format("**Expected Answer:**\n\n{}\n\n", item.expected_answer);
  md += fmt::format("**Time Series Visualization:** window [{}, {}) shaded\n\n![series]({})\n\n---\n\n",
                    item.window.interval.start, item.window.interval.end, q.plot_file);
  md += "**Model Responses:**\n\n";
  for (std::size_t i = 0; i < k; ++i) md += fmt::format("**Model {}**\n\n{}\n\n", i + 1, slot_texts[i]);
  md += "---\n\n**Evaluation Criteria:**\n\n";
  for (const auto& c : criteria) {
    md += fmt::format("**{} (1-5):** {}\n\n", title_case(c.dimension), c.description);
    for (int s = 5; s >= 1; --s) md += fmt::format("- {}: {}\n", s, c.guidelines[static_cast<std::size_t>(s - 1)]);
    md += "\n";
  }
  md += "**Scoring Table:**\n\n| Model |";
  for (const auto& c : criteria) md += fmt::format(" {} |", title_case(c.dimension));
  md += " Comments |\n|---|";
  for (std::size_t i = 0; i <= criteria.size(); ++i) md += "---|";
  md += "\n";
  for (std::size_t i = 0; i < k; ++i) {
    md += fmt::format("| Model {} |", i + 1);
    for (std::size_t c = 0; c <= criteria.size(); ++c) md += " ___ |";
    md += "\n";
  }
  md += fmt::format("\n**Model Ranking:** order the models from 1 (best) to {} (worst) and justify each place.\n", k);
  return md;
}

// Splits one CSV record; double quotes delimit fields containing commas.
std::vector<std::string> csv_fields(std::string_view line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') out.back() += '"', ++i;
      else if (c == '"') quoted = false;
      else out.back() += c;
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  for (auto& f : out) f = std::string(text::trim(f));
  return out;
}

int parse_int(const std::string& s, std::string_view what) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw std::invalid_argument(fmt::format("{}: '{}' is not an integer", what, s));
  return v;
}

bool is_permutation_1k(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != static_cast<int>(i + 1)) return false;
  }
  return true;
}

}  // namespace

nlohmann::json to_json(const BlindMap& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"questionnaire_id", e.questionnaire_id}, {"item_id", e.item_id}, {"slots", e.slot_models}});
  }
  return {{"seed", m.seed}, {"entries", entries}};
}

BlindMap blind_map_from_json(const nlohmann::json& j) {
  BlindMap m;
  m.seed = j.value("seed", std::uint64_t{0});
  for (const auto& e : j.at("entries")) {
    m.entries.push_back({e.at("questionnaire_id").get<std::string>(), e.at("item_id").get<std::string>(),
                         e.at("slots").get<std::vector<std::string>>()});
  }
  return m;
}

std::string render_svg(std::span<const double> series, synth::Interval window, int width, int height) {
  if (series.empty()) throw std::invalid_argument("render_svg: empty series");
  const auto [lo_it, hi_it] = std::minmax_element(series.begin(), series.end());
  double lo = *lo_it, hi = *hi_it;
  if (hi - lo < 1e-12) lo -= 1.0, hi += 1.0;
  const double pad = 10.0;
  const double w = width - 2 * pad, h = height - 2 * pad;
  const double n = static_cast<double>(std::max<std::size_t>(series.size() - 1, 1));
  auto x_of = [&](double t) { return pad + w * t / n; };
  auto y_of = [&](double v) { return pad + h * (1.0 - (v - lo) / (hi - lo)); };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      width, height, width, height);
  const double x0 = x_of(static_cast<double>(window.start));
  const double x1 = x_of(static_cast<double>(std::min(window.end, series.size()) - (window.end > 0 ? 1 : 0)));
  svg += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"#f4a261\" "
                     "fill-opacity=\"0.35\"/>\n",
                     x0, pad, std::max(x1 - x0, 1.0), h);
  svg += "<polyline fill=\"none\" stroke=\"#264653\" stroke-width=\"1.2\" points=\"";
  for (std::size_t t = 0; t < series.size(); ++t) {
    svg += fmt::format("{}{:.2f},{:.2f}", t ? " " : "", x_of(static_cast<double>(t)), y_of(series[t]));
  }
  svg += "\"/>\n</svg>\n";
  return svg;
}

ExportResult export_questionnaires(const std::vector<qagen::QAItem>& items,
                                   const std::vector<runner::CandidateResponse>& responses,
                                   const std::vector<std::string>& models,
                                   const std::map<std::string, std::vector<double>>& series_by_pair,
                                   const ExportOptions& options) {
  if (models.empty()) throw std::invalid_argument("export_questionnaires: no models");
  std::map<std::pair<std::string, std::string>, std::string> text_of;
  for (const auto& r : responses) {
    if (!r.error) text_of[{r.item_id, r.model}] = r.response;
  }
  std::vector<const qagen::QAItem*> eligible;
  for (const auto& item : items) {
    const bool complete = std::all_of(models.begin(), models.end(),
                                      [&](const auto& m) { return text_of.contains({item.id, m}); });
    if (complete && series_by_pair.contains(item.window.pair_id)) eligible.push_back(&item);
  }
  auto select_rng = make_rng(options.seed, "survey-select");
  std::shuffle(eligible.begin(), eligible.end(), select_rng);
  if (options.question_count > 0 && options.question_count < eligible.size()) {
    eligible.resize(options.question_count);
  }

  ExportResult out;
  out.blind_map.seed = options.seed;
  out.questionnaires.resize(eligible.size());
  out.blind_map.entries.resize(eligible.size());
  for (std::size_t i = 0; i < eligible.size(); ++i) {
    const auto& item = *eligible[i];
    auto slots = models;
    auto slot_rng = make_rng(options.seed, "survey-slots", i);
    std::shuffle(slots.begin(), slots.end(), slot_rng);

    Questionnaire q;
    q.id = fmt::format("Q{:04d}", i + 1);
    q.item_id = item.id;
    q.plot_file = q.id + ".svg";
    q.svg = render_svg(series_by_pair.at(item.window.pair_id), item.window.interval);
    std::vector<std::string> slot_texts;
    for (const auto& m : slots) slot_texts.push_back(text_of.at({item.id, m}));
    q.markdown = redact(render_markdown(q, item, slot_texts), models);
    out.blind_map.entries[i] = {q.id, item.id, slots};
    out.questionnaires[i] = std::move(q);
  }

  const std::size_t per = options.evaluators_per_question;
  const std::size_t pool = std::max(options.evaluator_pool, per);
  for (std::size_t i = 0; i < out.questionnaires.size(); ++i) {
    for (std::size_t j = 0; j < per; ++j) {
      out.assignments.push_back({out.questionnaires[i].id, fmt::format("E{:02d}", (i * per + j) % pool + 1)});
    }
  }
  return out;
}

std::vector<RankingRow> parse_rankings_csv(std::string_view csv) {
  const auto lines = text::split_lines(csv);
  std::size_t first = 0;
  while (first < lines.size() && text::trim(lines[first]).empty()) ++first;
  if (first == lines.size()) throw std::invalid_argument("rankings: missing header");
  const auto header = csv_fields(lines[first]);
  if (header.size() < 4 || header[0] != "questionnaire_id" || header[1] != "evaluator_id" ||
      header[2] != "model_slot" || header.back() != "rank") {
    throw std::invalid_argument("rankings: header must be questionnaire_id,evaluator_id,model_slot,...,rank");
  }
  std::vector<RankingRow> rows;
  for (std::size_t li = first + 1; li < lines.size(); ++li) {
    if (text::trim(lines[li]).empty()) continue;
    const auto f = csv_fields(lines[li]);
    if (f.size() != header.size()) {
      throw std::invalid_argument(fmt::format("rankings line {}: expected {} fields, found {}", li + 1,
                                              header.size(), f.size()));
    }
    RankingRow r;
    r.questionnaire_id = f[0];
    r.evaluator_id = f[1];
    r.model_slot = parse_int(f[2], "model_slot");
    for (std::size_t c = 3; c + 1 < f.size(); ++c) {
      if (f[c].empty()) continue;
      const int s = parse_int(f[c], header[c]);
      if (s < 1 || s > 5) throw std::invalid_argument(fmt::format("rankings line {}: {} score {} outside 1..5", li + 1, header[c], s));
      r.scores[header[c]] = s;
    }
    r.rank = parse_int(f.back(), "rank");
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<std::vector<double>> RankMatrix::dense() const {
  std::vector<std::vector<double>> out;
  for (const auto& row : rows) {
    std::vector<double> line;
    for (const auto& m : models) {
      const auto it = row.rank_by_model.find(m);
      if (it == row.rank_by_model.end()) {
        throw std::invalid_argument(fmt::format("{}/{} has no rank for {}", row.questionnaire_id, row.evaluator_id, m));
      }
      line.push_back(it->second);
    }
    out.push_back(std::move(line));
  }
  return out;
}

RankMatrix ingest_rankings(const std::vector<RankingRow>& rows, const BlindMap& map) {
  std::map<std::string, const BlindEntry*> entry_of;
  for (const auto& e : map.entries) entry_of[e.questionnaire_id] = &e;

  std::map<std::pair<std::string, std::string>, std::vector<const RankingRow*>> groups;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& r : rows) {
    auto [it, inserted] = groups.try_emplace({r.questionnaire_id, r.evaluator_id});
    if (inserted) order.push_back(it->first);
    it->second.push_back(&r);
  }

  RankMatrix m;
  std::set<std::string> models;
  for (const auto& key : order) {
    const auto& group = groups.at(key);
    const auto name = fmt::format("{}/{}", key.first, key.second);
    const auto e = entry_of.find(key.first);
    if (e == entry_of.end()) throw std::invalid_argument(fmt::format("{}: questionnaire not in blind map", name));
    const auto k = e->second->slot_models.size();
    if (group.size() != k) {
      throw std::invalid_argument(fmt::format("{}: expected {} model rows, found {}", name, k, group.size()));
    }
    std::vector<int> slots, ranks;
    for (const auto* r : group) slots.push_back(r->model_slot), ranks.push_back(r->rank);
    if (!is_permutation_1k(slots)) throw std::invalid_argument(fmt::format("{}: model slots are not 1..{}", name, k));
    if (!is_permutation_1k(ranks)) {
      throw std::invalid_argument(fmt::format("{}: ranks are not a permutation of 1..{}", name, k));
    }
    MatrixRow row{key.first, key.second, {}, {}};
    for (const auto* r : group) {
      const auto& model = e->second->slot_models[static_cast<std::size_t>(r->model_slot - 1)];
      row.rank_by_model[model] = r->rank;
      row.scores_by_model[model] = r->scores;
      models.insert(model);
    }
    m.rows.push_back(std::move(row));
  }
  m.models.assign(models.begin(), models.end());
  return m;
}

std::vector<double> mean_ranks(const std::vector<std::vector<double>>& matrix) {
  if (matrix.empty()) return {};
  const auto k = matrix.front().size();
  std::vector<long double> sums(k, 0.0L);
  for (const auto& row : matrix) {
    if (row.size() != k) throw std::invalid_argument("mean_ranks: ragged matrix");
    for (std::size_t j = 0; j < k; ++j) sums[j] += row[j];
  }
  std::vector<double> out(k);
  for (std::size_t j = 0; j < k; ++j) out[j] = static_cast<double>(sums[j] / static_cast<long double>(matrix.size()));
  return out;
}

std::map<std::string, double> mean_ranks(const RankMatrix& m) {
  const auto means = mean_ranks(m.dense());
  std::map<std::string, double> out;
  for (std::size_t j = 0; j < means.size(); ++j) out[m.models[j]] = means[j];
  return out;
}

std::vector<std::vector<double>> pairwise_rank_differences(std::span<const double> means) {
  std::vector<std::vector<double>> d(means.size(), std::vector<double>(means.size()));
  for (std::size_t i = 0; i < means.size(); ++i) {
    for (std::size_t j = 0; j < means.size(); ++j) d[i][j] = means[i] - means[j];
  }
  return d;
}

FriedmanNemenyi friedman_nemenyi(const std::vector<std::vector<double>>& matrix) {
  // Studentized range quantiles at alpha 0.05 divided by sqrt(2), k = 2..10.
  static constexpr double kQ05[] = {1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164};
  FriedmanNemenyi out;
  out.n = matrix.size();
  if (out.n == 0) throw std::invalid_argument("friedman_nemenyi: empty matrix");
  out.k = matrix.front().size();
  if (out.k < 2 || out.k > 10) throw std::invalid_argument("friedman_nemenyi: k must be within 2..10");
  const auto means = mean_ranks(matrix);
  const double k = static_cast<double>(out.k), n = static_cast<double>(out.n);
  double sq = 0.0;
  for (double r : means) sq += r * r;
  out.chi_square = 12.0 * n / (k * (k + 1.0)) * (sq - k * (k + 1.0) * (k + 1.0) / 4.0);
  out.q_alpha = kQ05[out.k - 2];
  out.critical_difference = out.q_alpha * std::sqrt(k * (k + 1.0) / (6.0 * n));
  return out;
}

BootstrapCI bootstrap_paired_ci(std::span<const double> differences, std::size_t resamples, double level,
                                std::uint64_t seed) {
  if (differences.empty()) throw std::invalid_argument("bootstrap_paired_ci: no differences");
  if (resamples == 0) throw std::invalid_argument("bootstrap_paired_ci: resamples must be positive");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("bootstrap_paired_ci: level must be in (0, 1)");
  const auto n = differences.size();
  auto mean_of = [n](auto&& at) {
    long double s = 0.0L;
    for (std::size_t i = 0; i < n; ++i) s += at(i);
    return static_cast<double>(s / static_cast<long double>(n));
  };
  BootstrapCI ci;
  ci.point = mean_of([&](std::size_t i) { return differences[i]; });

  auto rng = make_rng(seed, "bootstrap");
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<double> means(resamples);
  for (auto& m : means) {
    m = mean_of([&](std::size_t) { return differences[pick(rng)]; });
  }
  const double tail = (1.0 - level) / 2.0 * 100.0;
  ci.low = metrics::threshold_percentile(means, tail);
  ci.high = metrics::threshold_percentile(means, 100.0 - tail);
  return ci;
}

}  // namespace tsforge::survey
