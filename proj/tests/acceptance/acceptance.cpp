// Acceptance checks. Prints one PASS/FAIL line per criterion; exits non-zero
// when any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "tsforge/judge.hpp"
#include "tsforge/metrics.hpp"
#include "tsforge/mock_agents.hpp"
#include "tsforge/numeric.hpp"
#include "tsforge/pipeline.hpp"
#include "tsforge/qagen.hpp"
#include "tsforge/survey.hpp"
#include "tsforge/synth.hpp"
#include "tsforge/util/hash.hpp"
#include "tsforge/util/jsonl.hpp"
#include "tsforge/util/text.hpp"
#include "tsforge/vet.hpp"
#include "tsforge/window.hpp"

namespace fs = std::filesystem;
using namespace tsforge;
using nlohmann::json;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void fail(const std::string& why) {
    if (ok) detail = why;
    ok = false;
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("tsforge_acceptance_" + name);
  if (fs::exists(p)) {
    for (const auto& e : fs::recursive_directory_iterator(p)) {
      if (e.is_regular_file()) fs::permissions(e.path(), fs::perms::owner_all, fs::perm_options::add);
    }
  }
  fs::remove_all(p);
  return p;
}

pipeline::Config mock_config(const fs::path& dir, const json& doc) {
  pipeline::Overrides ov;
  ov.out_dir = dir;
  ov.mock = true;
  return pipeline::config_from_json(doc, ov);
}

// 1. Published Finals follow from published dimension means.
Outcome weight_consistency() {
  Outcome o;
  const auto doc = json::parse(read_file(fs::path(TSFORGE_FIXTURES_DIR) / "reported_scores.json"));
  double worst = 0.0;
  std::size_t cells = 0;
  for (const auto& row : doc.at("rows")) {
    for (auto type : qagen::kAllTypes) {
      const auto name = qagen::to_string(type);
      const auto& cols = doc.at("columns").at(name);
      const auto& vals = row.at(name);
      std::map<std::string, double> dims;
      for (std::size_t i = 1; i < cols.size(); ++i) dims[cols[i].get<std::string>()] = vals[i].get<double>();
      const double got = judge::aggregate_final(type, dims);
      const double want = vals[0].get<double>();
      worst = std::max(worst, std::abs(got - want));
      ++cells;
      if (std::abs(got - want) > 0.01 + 1e-12) {
        o.fail(fmt::format("{} {}: computed {:.4f}, published {:.2f}", row.at("model").get<std::string>(), name, got,
                           want));
      }
    }
  }
  if (o.ok) o.detail = fmt::format("{} cells, max deviation {:.4f}", cells, worst);
  return o;
}

// 2. Integer serialization of z-scored windows.
Outcome serialization() {
  Outcome o;
  const std::vector<double> example{1.23, 1.24, 1.27, 1.28};
  const auto text = numeric::textualize_window(example);
  if (text != "123, 124, 127, 128") o.fail("example serialized as '" + text + "'");

  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> len(1, 128);
  std::uniform_real_distribution<double> level(-50.0, 50.0), spread(0.01, 20.0);
  std::uniform_int_distribution<int> scale_pick(0, 3);
  const std::int64_t scales[] = {10, 100, 1000, 10000};
  double worst = 0.0;
  for (int trial = 0; trial < 10000 && o.ok; ++trial) {
    std::vector<double> series(len(rng) + 8);
    std::normal_distribution<double> g(level(rng), spread(rng));
    for (auto& v : series) v = g(rng);
    const auto norm = numeric::zscore_normalize(series);
    const std::size_t s = std::uniform_int_distribution<std::size_t>(0, series.size() - 2)(rng);
    const std::size_t e = std::uniform_int_distribution<std::size_t>(s + 1, series.size())(rng);
    const std::vector<double> window(norm.values.begin() + static_cast<std::ptrdiff_t>(s),
                                     norm.values.begin() + static_cast<std::ptrdiff_t>(e));
    numeric::SerializationConfig cfg;
    cfg.scale = scales[scale_pick(rng)];
    const auto back = numeric::parse_textualized(numeric::textualize_window(window, cfg), cfg);
    if (back.size() != window.size()) {
      o.fail(fmt::format("trial {}: length {} parsed as {}", trial, window.size(), back.size()));
      break;
    }
    const double bound = 0.5 / static_cast<double>(cfg.scale);
    for (std::size_t i = 0; i < window.size(); ++i) {
      const double err = std::abs(back[i] - window[i]);
      worst = std::max(worst, err / bound);
      if (err > bound * (1 + 1e-9)) {
        o.fail(fmt::format("trial {}: error {} exceeds {}", trial, err, bound));
        break;
      }
    }
  }
  if (o.ok) o.detail = fmt::format("example byte-exact, 10000 windows, worst error {:.3f} of the bound", worst);
  return o;
}

// 3. Logprob-weighted scoring.
Outcome judge_math() {
  Outcome o;
  const auto uni = judge::distribution_from_logprobs({-1.3, -1.3, -1.3, -1.3, -1.3});
  if (judge::weighted_score(uni) != 3.0) o.fail(fmt::format("uniform score {}", judge::weighted_score(uni)));
  if (judge::confidence(uni) != 0.0) o.fail(fmt::format("uniform confidence {}", judge::confidence(uni)));
  const double ninf = -std::numeric_limits<double>::infinity();
  for (int s = 1; s <= 5; ++s) {
    std::array<double, 5> lp{ninf, ninf, ninf, ninf, ninf};
    lp[static_cast<std::size_t>(s - 1)] = -0.4;
    const auto d = judge::distribution_from_logprobs(lp);
    if (judge::weighted_score(d) != s || judge::confidence(d) != 1.0) o.fail(fmt::format("one-hot {} broken", s));
    const auto h = judge::one_hot(s);
    if (judge::weighted_score(h) != s || judge::confidence(h) != 1.0) o.fail(fmt::format("one_hot({}) broken", s));
  }

  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-12.0, 0.0), off(-50.0, 50.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::array<double, 5> lp{};
    for (auto& v : lp) v = u(rng);
    const auto d = judge::distribution_from_logprobs(lp);
    const auto ref = oracle::judge_math(lp);
    for (std::size_t i = 0; i < 5; ++i) worst = std::max(worst, std::abs(d[i] - ref.p[i]));
    worst = std::max(worst, std::abs(judge::weighted_score(d) - ref.weighted));
    worst = std::max(worst, std::abs(judge::confidence(d) - ref.confidence));

    const double c = off(rng);
    auto shifted = lp;
    for (auto& v : shifted) v += c;
    const auto ds = judge::distribution_from_logprobs(shifted);
    for (std::size_t i = 0; i < 5; ++i) {
      if (std::abs(ds[i] - d[i]) > 1e-12) o.fail(fmt::format("shift {} changed p[{}] by {}", c, i, ds[i] - d[i]));
    }
  }
  if (worst > 1e-9) o.fail(fmt::format("max deviation from the 256-bit oracle {}", worst));
  if (o.ok) o.detail = fmt::format("1000 vectors, max deviation {:.2e}", worst);
  return o;
}

// 4. Metrics against brute-force oracles.
Outcome metrics_oracles() {
  Outcome o;
  const auto t0 = Clock::now();
  std::size_t pairs = 0;
  for (std::size_t n = 1; n <= 8 && o.ok; ++n) {
    for (std::uint32_t lm = 0; lm < (1u << n) && o.ok; ++lm) {
      std::vector<std::uint8_t> labels(n);
      for (std::size_t i = 0; i < n; ++i) labels[i] = (lm >> i) & 1u;
      if (oracle::count_runs(labels) > 2) continue;
      for (std::uint32_t pm = 0; pm < (1u << n); ++pm) {
        metrics::LabeledScores d;
        d.labels = labels;
        std::vector<std::uint8_t> preds(n);
        for (std::size_t i = 0; i < n; ++i) {
          preds[i] = (pm >> i) & 1u;
          d.scores.push_back(preds[i]);
        }
        const double got = metrics::pa_f1_at(d, 0.5).value;
        const double want = oracle::pa_f1(labels, preds);
        ++pairs;
        if (std::abs(got - want) > 1e-12) {
          o.fail(fmt::format("PA-F1 mismatch at n={} labels={} preds={}: {} vs {}", n, lm, pm, got, want));
          break;
        }
      }
    }
  }

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> coarse(0, 20);
  double worst_roc = 0.0, worst_pr = 0.0;
  for (int c = 0; c < 100 && o.ok; ++c) {
    metrics::LabeledScores d;
    const double rate = 0.05 + 0.4 * u(rng);
    for (int i = 0; i < 200; ++i) {
      d.labels.push_back(u(rng) < rate ? 1 : 0);
      d.scores.push_back(c % 3 == 0 ? coarse(rng) / 20.0 : u(rng));
    }
    d.labels[0] = 1;
    d.labels[1] = 0;
    worst_roc = std::max(worst_roc, std::abs(metrics::auc_roc(d).value - oracle::auc_pairwise(d.labels, d.scores)));
    worst_pr = std::max(worst_pr,
                        std::abs(metrics::auc_pr(d).value - oracle::average_precision_sweep(d.labels, d.scores)));
  }
  if (worst_roc > 1e-9) o.fail(fmt::format("AUC-ROC deviates by {}", worst_roc));
  if (worst_pr > 1e-9) o.fail(fmt::format("AUC-PR deviates by {}", worst_pr));
  const double secs = seconds_since(t0);
  if (secs >= 60.0) o.fail(fmt::format("took {:.1f} s", secs));
  if (o.ok) {
    o.detail = fmt::format("{} PA-F1 pairs exact, AUC-ROC dev {:.1e}, AUC-PR dev {:.1e}", pairs, worst_roc, worst_pr);
  }
  return o;
}

// 5. Seeded forge runs and injection locality.
Outcome forge_determinism() {
  Outcome o;
  const json doc{{"seed", 17}, {"workers", 4}, {"forge", {{"n_pairs", 8}}}, {"qa", {{"max_windows", 12}}}};
  const auto a = scratch("forge_a"), b = scratch("forge_b");
  std::size_t files = 0;
  for (auto* stage : {pipeline::cmd_forge, pipeline::cmd_qa, pipeline::cmd_vet}) {
    const auto ra = stage(mock_config(a, doc));
    const auto rb = stage(mock_config(b, doc));
    for (std::size_t k = 0; k < ra.outputs.size(); ++k) {
      ++files;
      if (file_sha256(ra.outputs[k]) != file_sha256(rb.outputs[k])) {
        o.fail(fmt::format("{} differs between runs", fs::relative(ra.outputs[k], a).string()));
      }
    }
  }
  scratch("forge_a");
  scratch("forge_b");

  synth::ForgeRanges ranges;
  ranges.anomalies_min = 1;
  ranges.anomalies_max = 4;
  std::size_t clusters = 0;
  for (std::uint64_t seed = 0; seed < 1000 && o.ok; ++seed) {
    const auto cfg = synth::sample_baseline_config(ranges, derive_seed(5, "pair", seed));
    const auto plan = synth::sample_plan(ranges, cfg, derive_seed(5, "plan", seed));
    const auto pair = synth::generate_pair("P", cfg, plan);
    for (std::size_t t = 0; t < pair.normal.size(); ++t) {
      bool inside = false;
      for (const auto& s : pair.specs) inside = inside || s.interval.contains(t);
      if (!inside && pair.abnormal[t] != pair.normal[t]) {
        o.fail(fmt::format("pair {} differs outside specs at t={}", seed, t));
        break;
      }
    }
    for (const auto& s : pair.specs) {
      if (s.kind != synth::AnomalyKind::spike_cluster) continue;
      ++clusters;
      std::size_t changed = 0, first = 0, last = 0;
      for (std::size_t t = s.interval.start; t < s.interval.end; ++t) {
        const double delta = pair.abnormal[t] - pair.normal[t];
        if (delta == 0.0) continue;
        if (changed == 0) first = t;
        last = t;
        ++changed;
        const double mag = s.params.downward ? -delta : delta;
        if (mag < s.params.amplitude_low - 1e-9 || mag > s.params.amplitude_high + 1e-9) {
          o.fail(fmt::format("pair {}: spike magnitude {} outside [{}, {}]", seed, mag, s.params.amplitude_low,
                             s.params.amplitude_high));
        }
      }
      if (changed != s.params.count || last - first + 1 != changed) {
        o.fail(fmt::format("pair {}: cluster changed {} steps, expected {} consecutive", seed, changed,
                           s.params.count));
      }
    }
  }
  if (clusters == 0) o.fail("no spike clusters sampled");
  if (o.ok) o.detail = fmt::format("{} files identical, 1000 pairs local, {} clusters in bounds", files, clusters);
  return o;
}

std::vector<window::WindowInstance> sample_corpus(std::size_t want) {
  std::vector<window::WindowInstance> out;
  synth::ForgeRanges ranges;
  ranges.anomalies_min = 1;
  for (std::uint64_t seed = 1; out.size() < want; ++seed) {
    const auto cfg = synth::sample_baseline_config(ranges, seed);
    const auto pair = synth::generate_pair("P" + std::to_string(seed), cfg, synth::sample_plan(ranges, cfg, seed));
    window::WindowPolicy pol;
    pol.seed = seed;
    for (auto& w : window::sample_windows(pair, pol).windows) {
      if (out.size() < want) out.push_back(std::move(w));
    }
  }
  return out;
}

llmio::Client mock_client(mock::Behavior b, const std::string& model) {
  llmio::ClientOptions o;
  o.sleeper = [](std::chrono::milliseconds) {};
  return llmio::Client(mock::make_provider(model, b), o);
}

// 6. Agreement and dedupe checks in vet.
Outcome integrity() {
  Outcome o;
  mock::Behavior echo;
  mock::Behavior flip;
  flip.answer_mode = mock::AnswerMode::flip;
  auto qagent = mock_client({}, "question-agent");
  auto honest = mock_client(echo, "answer-agent");
  auto liar = mock_client(flip, "answer-agent");
  qagen::GenerationOptions opts;
  opts.clock = [] { return std::string("2000-01-01T00:00:00Z"); };

  std::size_t passes = 0, flags = 0, judged = 0;
  const auto windows = sample_corpus(40);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    for (auto type : {qagen::QuestionType::multiple_choice, qagen::QuestionType::true_false}) {
      const auto id = fmt::format("W{}-{}", i, qagen::to_string(type));
      const auto good = qagen::generate_qa(id, windows[i], type, qagent, honest, opts);
      const auto bad = qagen::generate_qa(id, windows[i], type, qagent, liar, opts);
      ++judged;
      if (const auto* item = std::get_if<qagen::QAItem>(&good);
          item && vet::check_agreement(*item).status == vet::Status::pass) {
        ++passes;
      } else {
        o.fail(fmt::format("echo item {} did not pass agreement", id));
      }
      if (const auto* item = std::get_if<qagen::QAItem>(&bad);
          item && vet::check_agreement(*item).status == vet::Status::fail) {
        ++flags;
      } else {
        o.fail(fmt::format("flipped item {} was not flagged", id));
      }
    }
  }

  qagen::QAItem a, b;
  a.id = "A";
  b.id = "B";
  a.question = b.question = "True or False: The window from step 418 to 458 contains a sudden spike.";
  a.type = b.type = qagen::QuestionType::true_false;
  const auto clusters = vet::dedupe({a, b});
  if (clusters.size() != 1 || clusters[0].kept_id != "A" || clusters[0].similarity_to_kept.back() != 1.0) {
    o.fail("identical questions were not clustered with similarity 1.0");
  }
  if (o.ok) o.detail = fmt::format("echo {}/{} pass, flip {}/{} flagged, duplicate similarity 1.0", passes, judged,
                                   flags, judged);
  return o;
}

// 7. Network-free end-to-end run.
Outcome end_to_end() {
  Outcome o;
  const auto dir = scratch("e2e");
  const json doc{{"seed", 3},
                 {"workers", 4},
                 {"forge", {{"n_pairs", 8}}},
                 {"qa", {{"max_windows", 20}}},
                 {"run", {{"models", {"model-a", "model-b"}}}},
                 {"providers", {{"model-b", {{"mock", {{"candidate_skill", 0.5}}}}}}}};
  const auto t0 = Clock::now();
  const auto results = pipeline::cmd_all(mock_config(dir, doc));
  const double secs = seconds_since(t0);
  if (results.size() != 6) o.fail(fmt::format("only {} stages ran", results.size()));
  for (const auto& r : results) {
    if (r.exit != pipeline::ExitCode::ok) o.fail(r.stage + " exited non-zero");
  }
  const auto windows = read_jsonl(dir / pipeline::paths::windows).size();
  std::set<std::pair<std::string, std::string>> keys;
  std::size_t rows = 0;
  if (o.ok) {
    std::istringstream csv(read_file(dir / pipeline::paths::report_csv));
    std::string line;
    std::getline(csv, line);
    while (std::getline(csv, line)) {
      const auto f = text::split(line, ',');
      ++rows;
      keys.insert({std::string(f.at(0)), std::string(f.at(1))});
      const double fin = std::stod(std::string(f.at(8)));
      if (fin < 1.0 || fin > 5.0) o.fail(fmt::format("Final {} out of [1, 5]", fin));
    }
  }
  if (rows != 6 || keys.size() != 6) o.fail(fmt::format("{} report rows, {} distinct (model, type)", rows, keys.size()));
  if (secs >= 30.0) o.fail(fmt::format("took {:.1f} s", secs));
  if (o.ok) {
    o.detail = fmt::format("{} windows forged, 20 used, {} rows in {:.2f} s", windows, rows, secs);
  }
  scratch("e2e");
  return o;
}

// 8. Human-evaluation statistics and blinding.
Outcome survey_stats() {
  Outcome o;
  const std::vector<std::vector<double>> m{{1, 2, 3}, {2, 1, 3}, {1, 3, 2}, {1, 2, 3}};
  const std::vector<double> hand{1.25, 2.0, 2.75};
  const auto got = survey::mean_ranks(m);
  for (std::size_t j = 0; j < 3; ++j) {
    if (std::abs(got[j] - hand[j]) > 1e-12) o.fail(fmt::format("mean rank {} is {}", j, got[j]));
  }
  const auto sym = survey::mean_ranks(std::vector<std::vector<double>>{{1, 2}, {2, 1}});
  if (sym[0] != 1.5 || sym[1] != 1.5) o.fail("symmetric matrix gives unequal means");

  const std::vector<double> zeros(40, 0.0);
  const auto ci = survey::bootstrap_paired_ci(zeros, 10000, 0.95, 7);
  if (ci.low != 0.0 || ci.high != 0.0) o.fail(fmt::format("zero differences give [{}, {}]", ci.low, ci.high));

  const std::vector<std::string> models{"gpt-4o-mini", "AXIS", "chatts-14b"};
  std::vector<qagen::QAItem> items;
  std::vector<runner::CandidateResponse> responses;
  std::map<std::string, std::vector<double>> series;
  series["P1"] = std::vector<double>(120, 0.5);
  for (int i = 0; i < 12; ++i) {
    qagen::QAItem it;
    it.id = fmt::format("I{}", i);
    it.type = qagen::QuestionType::open_ended;
    it.window.pair_id = "P1";
    it.window.interval = {10, 40};
    it.question = "How would you assess the window?";
    it.expected_answer = "No anomaly.";
    items.push_back(it);
    for (const auto& name : models) {
      responses.push_back({it.id, name, "I am " + name + " and I see nothing unusual. AXIS agrees.", std::nullopt,
                           0.0, "mock", 1});
    }
  }
  survey::ExportOptions eo;
  eo.seed = 1;
  const auto ex = survey::export_questionnaires(items, responses, models, series, eo);
  for (const auto& q : ex.questionnaires) {
    for (const auto& name : models) {
      if (text::to_lower(q.markdown).find(text::to_lower(name)) != std::string::npos ||
          text::to_lower(q.svg).find(text::to_lower(name)) != std::string::npos) {
        o.fail(fmt::format("{} mentions {}", q.id, name));
      }
    }
  }
  if (ex.questionnaires.size() != items.size()) o.fail("not every item was exported");
  if (o.ok) o.detail = fmt::format("hand means match, zero CI [0, 0], {} exports blind", ex.questionnaires.size());
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"weight-consistency reproduction", weight_consistency},
      {"serialization fidelity", serialization},
      {"judge math properties", judge_math},
      {"metric oracle equivalence", metrics_oracles},
      {"forge determinism and locality", forge_determinism},
      {"integrity soundness", integrity},
      {"end-to-end mock pipeline", end_to_end},
      {"survey statistics", survey_stats},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    const double secs = seconds_since(t0);
    if (i == 0 && secs >= 1.0) o.fail(fmt::format("took {:.2f} s", secs));
    std::printf("%s criterion %zu (%s) [%.3f s]: %s\n", o.ok ? "PASS" : "FAIL", i + 1, criteria[i].name, secs,
                o.detail.c_str());
    failed += o.ok ? 0 : 1;
  }
  std::fflush(stdout);
  return failed == 0 ? 0 : 1;
}
