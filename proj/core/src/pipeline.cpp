#include "tsforge/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "tsforge/judge.hpp"
#include "tsforge/metrics.hpp"
#include "tsforge/runner.hpp"
#include "tsforge/survey.hpp"
#include "tsforge/util/hash.hpp"
#include "tsforge/util/jsonl.hpp"
#include "tsforge/util/parallel.hpp"
#include "tsforge/util/rng.hpp"
#include "tsforge/vet.hpp"

namespace tsforge::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFixedTimestamp = "2000-01-01T00:00:00Z";

[[noreturn]] void config_error(const std::string& what) { throw StageError(ExitCode::usage, "config: " + what); }

void check_keys(const json& section, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!section.is_object()) config_error(fmt::format("{} must be an object", where));
  for (const auto& [key, _] : section.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      config_error(fmt::format("unknown key '{}' in {}", key, where));
    }
  }
}

template <typename T>
void read_into(const json& section, const char* key, T& dst, const std::string& where) {
  if (!section.contains(key)) return;
  try {
    dst = section.at(key).get<T>();
  } catch (const json::exception& e) {
    config_error(fmt::format("{}.{}: {}", where, key, e.what()));
  }
}

json section_of(const json& doc, const char* name) {
  return doc.contains(name) ? doc.at(name) : json::object();
}

mock::Behavior behavior_from_json(const json& j, const std::string& where) {
  check_keys(j, {"answer_mode", "candidate_skill", "judge_mode", "judge_fixed_score", "mcq_option_count"}, where);
  mock::Behavior b;
  std::string answer_mode = "echo", judge_mode = "graded";
  read_into(j, "answer_mode", answer_mode, where);
  read_into(j, "candidate_skill", b.candidate_skill, where);
  read_into(j, "judge_mode", judge_mode, where);
  read_into(j, "judge_fixed_score", b.judge_fixed_score, where);
  read_into(j, "mcq_option_count", b.mcq_option_count, where);
  if (answer_mode == "echo") b.answer_mode = mock::AnswerMode::echo;
  else if (answer_mode == "flip") b.answer_mode = mock::AnswerMode::flip;
  else config_error(fmt::format("{}.answer_mode must be echo or flip", where));
  if (judge_mode == "graded") b.judge_mode = mock::JudgeMode::graded;
  else if (judge_mode == "fixed") b.judge_mode = mock::JudgeMode::fixed;
  else if (judge_mode == "no_logprob") b.judge_mode = mock::JudgeMode::no_logprob;
  else config_error(fmt::format("{}.judge_mode must be graded, fixed or no_logprob", where));
  return b;
}

json behavior_json(const mock::Behavior& b) {
  const char* judge_mode = b.judge_mode == mock::JudgeMode::graded  ? "graded"
                           : b.judge_mode == mock::JudgeMode::fixed ? "fixed"
                                                                    : "no_logprob";
  return {{"answer_mode", b.answer_mode == mock::AnswerMode::echo ? "echo" : "flip"},
          {"candidate_skill", b.candidate_skill},
          {"judge_mode", judge_mode},
          {"judge_fixed_score", b.judge_fixed_score},
          {"mcq_option_count", b.mcq_option_count}};
}

// Every setting after defaults and overrides, in the input document's shape.
json effective_json(const Config& c) {
  const auto opt_path = [](const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); };
  const auto& g = c.forge.ranges;
  const auto& w = c.forge.windows;
  json kinds = json::array();
  for (auto k : g.kinds) kinds.push_back(synth::to_string(k));
  json types = json::array();
  for (auto t : c.qa.types) types.push_back(qagen::to_string(t));
  json providers = json::object();
  for (const auto& [id, spec] : c.providers) {
    json e = spec.http;
    e["mock"] = behavior_json(spec.mock);
    providers[id] = std::move(e);
  }
  return {
      {"seed", c.seed},
      {"out_dir", c.out_dir.string()},
      {"cache_dir", opt_path(c.cache_dir)},
      {"workers", c.workers},
      {"mock", c.mock},
      {"forge",
       {{"n_pairs", c.forge.n_pairs},
        {"ranges",
         {{"length", g.length},
          {"slope_abs_max", g.slope_abs_max},
          {"period_min", g.period_min},
          {"period_max", g.period_max},
          {"amplitude_min", g.amplitude_min},
          {"amplitude_max", g.amplitude_max},
          {"seasonal_probability", g.seasonal_probability},
          {"noise_sigma_min", g.noise_sigma_min},
          {"noise_sigma_max", g.noise_sigma_max},
          {"anomalies_min", g.anomalies_min},
          {"anomalies_max", g.anomalies_max},
          {"interval_min", g.interval_min},
          {"interval_max", g.interval_max},
          {"kinds", kinds}}},
        {"windows",
         {{"min_length", w.min_length},
          {"max_length", w.max_length},
          {"anomalous_per_spec", w.anomalous_per_spec},
          {"normal_count", w.normal_count},
          {"margin_fraction", w.margin_fraction},
          {"max_attempts", w.max_attempts}}}}},
      {"qa",
       {{"types", types},
        {"max_windows", c.qa.max_windows},
        {"max_attempts", c.qa.max_attempts},
        {"temperature", c.qa.temperature},
        {"question_agent", c.qa.question_agent},
        {"answer_agent", c.qa.answer_agent},
        {"word_limits", {{"soft", c.qa.limits.soft}, {"hard", c.qa.limits.hard}}}}},
      {"vet", {{"dedupe_threshold", c.vet.dedupe_threshold}, {"max_fail_fraction", c.vet.max_fail_fraction}}},
      {"run",
       {{"models", c.run.models},
        {"scale", c.run.scale},
        {"full_series", c.run.full_series},
        {"max_tokens", c.run.max_tokens}}},
      {"judge",
       {{"judge", c.judge.judge},
        {"default_score", c.judge.default_score},
        {"top_k", c.judge.top_k},
        {"reference_model", c.judge.reference_model},
        {"bootstrap_resamples", c.judge.bootstrap_resamples},
        {"bootstrap_level", c.judge.bootstrap_level}}},
      {"survey",
       {{"questions", c.survey.questions},
        {"evaluators_per_question", c.survey.evaluators_per_question},
        {"evaluator_pool", c.survey.evaluator_pool},
        {"rankings", opt_path(c.survey.rankings)}}},
      {"metrics",
       {{"inputs", opt_path(c.metrics.inputs)},
        {"policy", c.metrics.policy},
        {"q", c.metrics.q},
        {"fixed_threshold", c.metrics.fixed_threshold}}},
      {"client",
       {{"max_attempts", c.client.retry.max_attempts},
        {"base_delay_ms", c.client.retry.base_delay.count()},
        {"max_delay_ms", c.client.retry.max_delay.count()},
        {"jitter", c.client.retry.jitter},
        {"max_in_flight", c.client.max_in_flight}}},
      {"providers", providers}};
}

fs::path out(const Config& c, const fs::path& rel) { return c.out_dir / rel; }

std::vector<json> read_stage_input(const Config& c, const fs::path& rel, const char* producer) {
  const auto p = out(c, rel);
  if (!fs::exists(p)) {
    throw StageError(ExitCode::usage, fmt::format("missing input {} (run '{}' first)", p.string(), producer));
  }
  return read_jsonl(p);
}

std::map<std::string, synth::PairedSeries> load_pairs(const Config& c) {
  std::map<std::string, synth::PairedSeries> pairs;
  for (const auto& j : read_stage_input(c, paths::pairs, "forge")) {
    auto p = synth::pair_from_json(j);
    pairs.emplace(p.id, std::move(p));
  }
  return pairs;
}

std::vector<qagen::QAItem> load_items(const Config& c) {
  std::vector<qagen::QAItem> items;
  for (const auto& j : read_stage_input(c, paths::qa, "qa")) items.push_back(qagen::qa_item_from_json(j));
  return items;
}

std::vector<runner::CandidateResponse> load_responses(const Config& c) {
  std::vector<runner::CandidateResponse> rs;
  for (const auto& j : read_stage_input(c, paths::responses, "run")) rs.push_back(runner::candidate_response_from_json(j));
  return rs;
}

std::map<std::string, std::vector<double>> abnormal_series(const std::map<std::string, synth::PairedSeries>& pairs) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [id, p] : pairs) out.emplace(id, p.abnormal);
  return out;
}

std::string short_type(qagen::QuestionType t) {
  switch (t) {
    case qagen::QuestionType::multiple_choice: return "mc";
    case qagen::QuestionType::open_ended: return "oe";
    case qagen::QuestionType::true_false: return "tf";
  }
  return "xx";
}

// Writes a read-only manifest for the stage and fills result.manifest.
void write_manifest(const Config& c, StageResult& result, const std::vector<fs::path>& inputs,
                    const std::string& started) {
  auto digests = [&](const std::vector<fs::path>& files) {
    json arr = json::array();
    for (const auto& f : files) {
      arr.push_back({{"path", fs::relative(f, c.out_dir).generic_string()}, {"sha256", file_sha256(f)}});
    }
    return arr;
  };
  const auto dir = out(c, paths::manifests);
  fs::create_directories(dir);
  std::size_t n = 1;
  while (fs::exists(dir / fmt::format("{}-{:03d}.json", result.stage, n))) ++n;
  const auto path = dir / fmt::format("{}-{:03d}.json", result.stage, n);
  const json manifest{{"command", result.stage},
                      {"tool_version", kToolVersion},
                      {"root_seed", c.seed},
                      {"config", c.snapshot},
                      {"inputs", digests(inputs)},
                      {"outputs", digests(result.outputs)},
                      {"stats", result.stats},
                      {"started_at", started},
                      {"finished_at", c.clock()}};
  write_file_atomic(path, manifest.dump(2) + "\n");
  fs::permissions(path, fs::perms::owner_read | fs::perms::group_read | fs::perms::others_read,
                  fs::perm_options::replace);
  result.manifest = path;
}

template <typename Fn>
StageResult run_stage(const Config& c, const std::string& stage, Fn&& body) {
  StageResult result;
  result.stage = stage;
  result.stats = json::object();
  const auto started = c.clock();
  std::vector<fs::path> inputs;
  try {
    body(result, inputs);
  } catch (const llmio::ProviderError& e) {
    throw StageError(ExitCode::provider, fmt::format("{}: provider failure ({}): {}", stage,
                                                     llmio::to_string(e.kind()), e.what()));
  } catch (const StageError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw StageError(ExitCode::usage, fmt::format("{}: {}", stage, e.what()));
  } catch (const json::exception& e) {
    throw StageError(ExitCode::usage, fmt::format("{}: malformed input: {}", stage, e.what()));
  }
  write_manifest(c, result, inputs, started);
  return result;
}

}  // namespace

Config config_from_json(const json& doc_in, const Overrides& ov) {
  json doc = doc_in.is_null() ? json::object() : doc_in;
  check_keys(doc, {"seed", "out_dir", "cache_dir", "workers", "forge", "qa", "vet", "run", "judge", "survey",
                   "metrics", "client", "providers"},
             "config");
  if (ov.providers) {
    try {
      doc["providers"] = json::parse(read_file(*ov.providers));
    } catch (const std::exception& e) {
      config_error(fmt::format("providers file {}: {}", ov.providers->string(), e.what()));
    }
  }

  Config c;
  read_into(doc, "seed", c.seed, "config");
  std::string out_dir = c.out_dir.string();
  read_into(doc, "out_dir", out_dir, "config");
  c.out_dir = out_dir;
  if (doc.contains("cache_dir")) {
    std::string cd;
    read_into(doc, "cache_dir", cd, "config");
    c.cache_dir = cd;
  }
  read_into(doc, "workers", c.workers, "config");
  if (c.workers == 0) config_error("workers must be at least 1");

  if (ov.seed) c.seed = *ov.seed, doc["seed"] = *ov.seed;
  if (ov.out_dir) c.out_dir = *ov.out_dir, doc["out_dir"] = ov.out_dir->string();
  if (ov.cache_dir) c.cache_dir = *ov.cache_dir, doc["cache_dir"] = ov.cache_dir->string();
  c.mock = ov.mock;

  {
    const auto s = section_of(doc, "forge");
    check_keys(s, {"n_pairs", "ranges", "windows"}, "forge");
    read_into(s, "n_pairs", c.forge.n_pairs, "forge");
    if (c.forge.n_pairs == 0) config_error("forge.n_pairs must be at least 1");
    const auto r = section_of(s, "ranges");
    check_keys(r, {"length", "slope_abs_max", "period_min", "period_max", "amplitude_min", "amplitude_max",
                   "seasonal_probability", "noise_sigma_min", "noise_sigma_max", "anomalies_min", "anomalies_max",
                   "interval_min", "interval_max", "kinds"},
               "forge.ranges");
    auto& g = c.forge.ranges;
    read_into(r, "length", g.length, "forge.ranges");
    read_into(r, "slope_abs_max", g.slope_abs_max, "forge.ranges");
    read_into(r, "period_min", g.period_min, "forge.ranges");
    read_into(r, "period_max", g.period_max, "forge.ranges");
    read_into(r, "amplitude_min", g.amplitude_min, "forge.ranges");
    read_into(r, "amplitude_max", g.amplitude_max, "forge.ranges");
    read_into(r, "seasonal_probability", g.seasonal_probability, "forge.ranges");
    read_into(r, "noise_sigma_min", g.noise_sigma_min, "forge.ranges");
    read_into(r, "noise_sigma_max", g.noise_sigma_max, "forge.ranges");
    read_into(r, "anomalies_min", g.anomalies_min, "forge.ranges");
    read_into(r, "anomalies_max", g.anomalies_max, "forge.ranges");
    read_into(r, "interval_min", g.interval_min, "forge.ranges");
    read_into(r, "interval_max", g.interval_max, "forge.ranges");
    if (r.contains("kinds")) {
      std::vector<std::string> kinds;
      read_into(r, "kinds", kinds, "forge.ranges");
      g.kinds.clear();
      try {
        for (const auto& k : kinds) g.kinds.push_back(synth::anomaly_kind_from_string(k));
      } catch (const std::exception& e) {
        config_error(fmt::format("forge.ranges.kinds: {}", e.what()));
      }
    }
    if (g.length < synth::kMinPairLength) config_error(fmt::format("forge.ranges.length must be >= {}", synth::kMinPairLength));
    if (g.period_min > g.period_max) config_error("forge.ranges.period_min exceeds period_max");
    if (g.amplitude_min > g.amplitude_max) config_error("forge.ranges.amplitude_min exceeds amplitude_max");
    if (g.noise_sigma_min < 0 || g.noise_sigma_min > g.noise_sigma_max) config_error("forge.ranges noise sigma range is invalid");
    if (g.anomalies_min > g.anomalies_max) config_error("forge.ranges.anomalies_min exceeds anomalies_max");
    if (g.interval_min == 0 || g.interval_min > g.interval_max || g.interval_max > g.length) {
      config_error("forge.ranges interval range is invalid");
    }
    if (g.seasonal_probability < 0 || g.seasonal_probability > 1) config_error("forge.ranges.seasonal_probability must be in [0, 1]");

    const auto w = section_of(s, "windows");
    check_keys(w, {"min_length", "max_length", "anomalous_per_spec", "normal_count", "margin_fraction", "max_attempts"},
               "forge.windows");
    auto& p = c.forge.windows;
    read_into(w, "min_length", p.min_length, "forge.windows");
    read_into(w, "max_length", p.max_length, "forge.windows");
    read_into(w, "anomalous_per_spec", p.anomalous_per_spec, "forge.windows");
    read_into(w, "normal_count", p.normal_count, "forge.windows");
    read_into(w, "margin_fraction", p.margin_fraction, "forge.windows");
    read_into(w, "max_attempts", p.max_attempts, "forge.windows");
    if (p.min_length == 0 || p.min_length > p.max_length || p.max_length > g.length) {
      config_error("forge.windows length range is invalid");
    }
  }
  {
    const auto s = section_of(doc, "qa");
    check_keys(s, {"types", "max_windows", "max_attempts", "temperature", "question_agent", "answer_agent",
                   "word_limits"},
               "qa");
    if (s.contains("types")) {
      std::vector<std::string> types;
      read_into(s, "types", types, "qa");
      c.qa.types.clear();
      try {
        for (const auto& t : types) c.qa.types.push_back(qagen::question_type_from_string(t));
      } catch (const std::exception& e) {
        config_error(fmt::format("qa.types: {}", e.what()));
      }
    }
    read_into(s, "max_windows", c.qa.max_windows, "qa");
    read_into(s, "max_attempts", c.qa.max_attempts, "qa");
    read_into(s, "temperature", c.qa.temperature, "qa");
    read_into(s, "question_agent", c.qa.question_agent, "qa");
    read_into(s, "answer_agent", c.qa.answer_agent, "qa");
    const auto wl = section_of(s, "word_limits");
    check_keys(wl, {"soft", "hard"}, "qa.word_limits");
    read_into(wl, "soft", c.qa.limits.soft, "qa.word_limits");
    read_into(wl, "hard", c.qa.limits.hard, "qa.word_limits");
    if (c.qa.max_attempts < 1) config_error("qa.max_attempts must be at least 1");
    if (c.qa.temperature < 0) config_error("qa.temperature must be >= 0");
    if (c.qa.limits.soft > c.qa.limits.hard) config_error("qa.word_limits.soft exceeds hard");
  }
  {
    const auto s = section_of(doc, "vet");
    check_keys(s, {"dedupe_threshold", "max_fail_fraction"}, "vet");
    read_into(s, "dedupe_threshold", c.vet.dedupe_threshold, "vet");
    read_into(s, "max_fail_fraction", c.vet.max_fail_fraction, "vet");
    if (c.vet.dedupe_threshold <= 0 || c.vet.dedupe_threshold > 1) config_error("vet.dedupe_threshold must be in (0, 1]");
  }
  {
    const auto s = section_of(doc, "run");
    check_keys(s, {"models", "scale", "full_series", "max_tokens"}, "run");
    read_into(s, "models", c.run.models, "run");
    read_into(s, "scale", c.run.scale, "run");
    read_into(s, "full_series", c.run.full_series, "run");
    read_into(s, "max_tokens", c.run.max_tokens, "run");
    if (c.run.models.empty()) config_error("run.models must not be empty");
    if (std::set<std::string>(c.run.models.begin(), c.run.models.end()).size() != c.run.models.size()) {
      config_error("run.models contains duplicates");
    }
    if (c.run.scale <= 0) config_error("run.scale must be positive");
  }
  {
    const auto s = section_of(doc, "judge");
    check_keys(s, {"judge", "default_score", "top_k", "reference_model", "bootstrap_resamples", "bootstrap_level"},
               "judge");
    read_into(s, "judge", c.judge.judge, "judge");
    read_into(s, "default_score", c.judge.default_score, "judge");
    read_into(s, "top_k", c.judge.top_k, "judge");
    read_into(s, "reference_model", c.judge.reference_model, "judge");
    read_into(s, "bootstrap_resamples", c.judge.bootstrap_resamples, "judge");
    read_into(s, "bootstrap_level", c.judge.bootstrap_level, "judge");
    if (c.judge.default_score < 1 || c.judge.default_score > 5) config_error("judge.default_score must be in 1..5");
    if (c.judge.top_k < 1) config_error("judge.top_k must be at least 1");
    if (c.judge.reference_model.empty()) c.judge.reference_model = c.run.models.front();
    if (c.judge.bootstrap_resamples == 0) config_error("judge.bootstrap_resamples must be positive");
  }
  {
    const auto s = section_of(doc, "survey");
    check_keys(s, {"questions", "evaluators_per_question", "evaluator_pool", "rankings"}, "survey");
    read_into(s, "questions", c.survey.questions, "survey");
    read_into(s, "evaluators_per_question", c.survey.evaluators_per_question, "survey");
    read_into(s, "evaluator_pool", c.survey.evaluator_pool, "survey");
    if (s.contains("rankings")) {
      std::string r;
      read_into(s, "rankings", r, "survey");
      c.survey.rankings = r;
    }
  }
  {
    const auto s = section_of(doc, "metrics");
    check_keys(s, {"inputs", "policy", "q", "fixed_threshold"}, "metrics");
    if (s.contains("inputs")) {
      std::string in;
      read_into(s, "inputs", in, "metrics");
      c.metrics.inputs = in;
    }
    read_into(s, "policy", c.metrics.policy, "metrics");
    read_into(s, "q", c.metrics.q, "metrics");
    read_into(s, "fixed_threshold", c.metrics.fixed_threshold, "metrics");
    if (c.metrics.policy != "percentile" && c.metrics.policy != "validation" && c.metrics.policy != "fixed") {
      config_error("metrics.policy must be percentile, validation or fixed");
    }
    if (c.metrics.q < 0 || c.metrics.q > 100) config_error("metrics.q must be in [0, 100]");
  }
  {
    const auto s = section_of(doc, "client");
    check_keys(s, {"max_attempts", "base_delay_ms", "max_delay_ms", "jitter", "max_in_flight"}, "client");
    read_into(s, "max_attempts", c.client.retry.max_attempts, "client");
    std::int64_t base = c.client.retry.base_delay.count(), cap = c.client.retry.max_delay.count();
    read_into(s, "base_delay_ms", base, "client");
    read_into(s, "max_delay_ms", cap, "client");
    c.client.retry.base_delay = std::chrono::milliseconds(base);
    c.client.retry.max_delay = std::chrono::milliseconds(cap);
    read_into(s, "jitter", c.client.retry.jitter, "client");
    read_into(s, "max_in_flight", c.client.max_in_flight, "client");
    if (c.client.retry.max_attempts < 1) config_error("client.max_attempts must be at least 1");
    if (c.client.max_in_flight == 0) config_error("client.max_in_flight must be at least 1");
  }
  {
    const auto s = section_of(doc, "providers");
    if (!s.is_object()) config_error("providers must be an object");
    for (const auto& [id, entry] : s.items()) {
      const auto where = "providers." + id;
      check_keys(entry, {"base_url", "path", "model", "api_key_env", "timeout_seconds", "requests_per_minute", "mock"},
                 where);
      ProviderSpec spec;
      spec.id = id;
      spec.http = entry;
      spec.http.erase("mock");
      spec.mock = behavior_from_json(entry.value("mock", json::object()), where + ".mock");
      c.providers.emplace(id, std::move(spec));
    }
  }
  for (auto& [id, spec] : c.providers) spec.mock.seed = c.seed;

  c.snapshot = effective_json(c);
  if (c.mock) {
    c.clock = [] { return std::string(kFixedTimestamp); };
  } else {
    c.clock = [] { return qagen::utc_now(); };
  }
  c.forge.windows.seed = derive_seed(c.seed, "forge-windows");
  return c;
}

Config load_config(const Overrides& ov) {
  json doc = json::object();
  if (ov.config) {
    if (!fs::exists(*ov.config)) config_error(fmt::format("file {} does not exist", ov.config->string()));
    try {
      doc = json::parse(read_file(*ov.config));
    } catch (const json::exception& e) {
      config_error(fmt::format("{}: {}", ov.config->string(), e.what()));
    }
  }
  return config_from_json(doc, ov);
}

ClientPool::ClientPool(const Config& config)
    : config_(config), limiter_(std::make_shared<llmio::InFlightLimiter>(static_cast<std::ptrdiff_t>(config.client.max_in_flight))) {}

llmio::Client& ClientPool::get(const std::string& id) {
  if (auto it = clients_.find(id); it != clients_.end()) return *it->second;
  const auto spec_it = config_.providers.find(id);
  std::shared_ptr<llmio::Provider> provider;
  double rpm = 0.0;
  if (config_.mock) {
    auto behavior = spec_it != config_.providers.end() ? spec_it->second.mock : mock::Behavior{};
    behavior.seed = config_.seed;
    provider = mock::make_provider(id, behavior);
  } else {
    if (spec_it == config_.providers.end()) {
      throw StageError(ExitCode::usage, fmt::format("config: no provider configured for '{}' (or pass --mock)", id));
    }
    auto http = spec_it->second.http;
    http["name"] = id;
    try {
      auto cfg = llmio::http_config_from_json(http);
      rpm = cfg.requests_per_minute;
      provider = std::make_shared<llmio::HttpProvider>(std::move(cfg));
    } catch (const std::exception& e) {
      throw StageError(ExitCode::usage, fmt::format("config: providers.{}: {}", id, e.what()));
    }
  }
  llmio::ClientOptions opts;
  opts.retry = config_.client.retry;
  opts.cache_dir = config_.cache_dir;
  opts.requests_per_minute = rpm;
  opts.in_flight = limiter_;
  opts.jitter_seed = derive_seed(config_.seed, "jitter:" + id);
  auto client = std::make_unique<llmio::Client>(provider, opts);
  auto& ref = *client;
  clients_.emplace(id, std::move(client));
  return ref;
}

std::size_t ClientPool::upstream_calls() const {
  std::size_t n = 0;
  for (const auto& [_, c] : clients_) n += c->upstream_calls();
  return n;
}

StageResult cmd_forge(const Config& c) {
  return run_stage(c, "forge", [&](StageResult& r, std::vector<fs::path>&) {
    std::vector<synth::PairedSeries> pairs(c.forge.n_pairs);
    std::vector<window::SampleResult> samples(c.forge.n_pairs);
    parallel_for(c.forge.n_pairs, c.workers, [&](std::size_t i) {
      const auto cfg = synth::sample_baseline_config(c.forge.ranges, derive_seed(c.seed, "forge-pair", i));
      const auto plan = synth::sample_plan(c.forge.ranges, cfg, derive_seed(c.seed, "forge-plan", i));
      pairs[i] = synth::generate_pair(fmt::format("P{:04d}", i + 1), cfg, plan);
      samples[i] = window::sample_windows(pairs[i], c.forge.windows);
    });
    std::vector<json> pair_records, window_records;
    std::size_t anomalous = 0, diagnostics = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      pair_records.push_back(synth::to_json(pairs[i]));
      diagnostics += samples[i].diagnostics.size();
      for (const auto& w : samples[i].windows) {
        json rec{{"id", fmt::format("W{:05d}", window_records.size() + 1)}};
        rec.update(window::to_json(w));
        anomalous += w.has_anomaly ? 1 : 0;
        window_records.push_back(std::move(rec));
      }
    }
    write_jsonl_atomic(out(c, paths::pairs), pair_records);
    write_jsonl_atomic(out(c, paths::windows), window_records);
    r.outputs = {out(c, paths::pairs), out(c, paths::windows)};
    r.stats = {{"pairs", pair_records.size()},
               {"windows", window_records.size()},
               {"anomalous_windows", anomalous},
               {"skipped_windows", diagnostics}};
    r.console = fmt::format("forge: {} pairs, {} windows ({} anomalous, {} skipped)\n", pair_records.size(),
                            window_records.size(), anomalous, diagnostics);
  });
}

StageResult cmd_qa(const Config& c) {
  return run_stage(c, "qa", [&](StageResult& r, std::vector<fs::path>& inputs) {
    const auto pairs = load_pairs(c);
    auto window_records = read_stage_input(c, paths::windows, "forge");
    inputs = {out(c, paths::pairs), out(c, paths::windows)};
    if (c.qa.max_windows > 0 && window_records.size() > c.qa.max_windows) window_records.resize(c.qa.max_windows);

    struct Job {
      std::string id;
      window::WindowInstance window;
      qagen::QuestionType type;
    };
    std::vector<Job> jobs;
    for (const auto& rec : window_records) {
      const auto ref = window::window_ref_from_json(rec);
      const auto pit = pairs.find(ref.pair_id);
      if (pit == pairs.end()) throw std::invalid_argument(fmt::format("window references unknown pair {}", ref.pair_id));
      auto w = window::make_window(pit->second, ref.interval);
      const auto wid = rec.value("id", fmt::format("{}-{}-{}", ref.pair_id, ref.interval.start, ref.interval.end));
      for (auto t : c.qa.types) jobs.push_back({fmt::format("{}-{}", wid, short_type(t)), w, t});
    }

    ClientPool pool(c);
    auto& qagent = pool.get(c.qa.question_agent);
    auto& aagent = pool.get(c.qa.answer_agent);
    qagen::GenerationOptions opts;
    opts.max_attempts = c.qa.max_attempts;
    opts.limits = c.qa.limits;
    opts.seed = derive_seed(c.seed, "qa");
    opts.temperature = c.qa.temperature;
    opts.clock = c.clock;

    std::vector<std::optional<qagen::GenerationResult>> results(jobs.size());
    parallel_for(jobs.size(), c.workers, [&](std::size_t k) {
      results[k] = qagen::generate_qa(jobs[k].id, jobs[k].window, jobs[k].type, qagent, aagent, opts);
    });

    std::vector<json> items, quarantined;
    for (const auto& res : results) {
      if (const auto* item = std::get_if<qagen::QAItem>(&*res)) items.push_back(qagen::to_json(*item));
      else quarantined.push_back(qagen::to_json(std::get<qagen::Quarantined>(*res)));
    }
    write_jsonl_atomic(out(c, paths::qa), items);
    write_jsonl_atomic(out(c, paths::qa_quarantine), quarantined);
    r.outputs = {out(c, paths::qa), out(c, paths::qa_quarantine)};
    r.stats = {{"items", items.size()}, {"quarantined", quarantined.size()}, {"upstream_calls", pool.upstream_calls()}};
    r.console = fmt::format("qa: {} items, {} quarantined at generation\n", items.size(), quarantined.size());
  });
}

StageResult cmd_vet(const Config& c) {
  return run_stage(c, "vet", [&](StageResult& r, std::vector<fs::path>& inputs) {
    const auto items = load_items(c);
    inputs = {out(c, paths::qa)};
    vet::VetOptions opts;
    opts.limits = c.qa.limits;
    opts.dedupe_threshold = c.vet.dedupe_threshold;
    const auto report = vet::vet_items(items, opts);
    std::vector<json> quarantine;
    for (const auto& o : report.outcomes) {
      if (o.quarantined()) quarantine.push_back({{"id", o.id}, {"reasons", o.quarantine_reasons()}});
    }
    write_jsonl_atomic(out(c, paths::vet_report), vet::report_records(report));
    write_jsonl_atomic(out(c, paths::vet_quarantine), quarantine);
    r.outputs = {out(c, paths::vet_report), out(c, paths::vet_quarantine)};
    const double fraction =
        items.empty() ? 0.0 : static_cast<double>(quarantine.size()) / static_cast<double>(items.size());
    r.stats = {{"items", items.size()}, {"quarantined", quarantine.size()}, {"fail_fraction", fraction}};
    r.console = vet::summary_table(report);
    if (fraction > c.vet.max_fail_fraction) {
      r.exit = ExitCode::integrity;
      r.console += fmt::format("vet: {:.1f}% of items quarantined exceeds the {:.1f}% ceiling\n", 100.0 * fraction,
                               100.0 * c.vet.max_fail_fraction);
    }
  });
}

StageResult cmd_run(const Config& c) {
  return run_stage(c, "run", [&](StageResult& r, std::vector<fs::path>& inputs) {
    const auto items = load_items(c);
    const auto pairs = load_pairs(c);
    inputs = {out(c, paths::qa), out(c, paths::pairs)};
    std::vector<runner::CandidateResponse> previous;
    if (fs::exists(out(c, paths::responses))) previous = load_responses(c);

    ClientPool pool(c);
    std::vector<runner::CandidateModel> models;
    for (const auto& m : c.run.models) models.push_back({m, &pool.get(m)});
    runner::RunOptions opts;
    opts.prompt.serialization.scale = c.run.scale;
    opts.prompt.full_series = c.run.full_series;
    opts.workers = c.workers;
    opts.max_tokens = c.run.max_tokens;
    opts.record_latency = !c.mock;
    runner::RunStats stats;
    const auto responses = runner::run_candidates(items, abnormal_series(pairs), models, opts, previous, &stats);

    std::vector<json> records;
    for (const auto& resp : responses) records.push_back(runner::to_json(resp));
    write_jsonl_atomic(out(c, paths::responses), records);
    r.outputs = {out(c, paths::responses)};
    r.stats = {{"responses", responses.size()},
               {"attempted", stats.attempted},
               {"resumed", stats.resumed},
               {"failed", stats.failed},
               {"upstream_calls", pool.upstream_calls()}};
    r.console = fmt::format("run: {} responses ({} resumed, {} failed)\n", responses.size(), stats.resumed,
                            stats.failed);
    if (!responses.empty() && stats.failed == responses.size()) {
      r.exit = ExitCode::provider;
      r.console += "run: every candidate call failed\n";
    }
  });
}

StageResult cmd_judge(const Config& c) {
  return run_stage(c, "judge", [&](StageResult& r, std::vector<fs::path>& inputs) {
    const auto items = load_items(c);
    const auto responses = load_responses(c);
    inputs = {out(c, paths::qa), out(c, paths::responses)};
    ClientPool pool(c);
    auto& judge_client = pool.get(c.judge.judge);
    judge::JudgeOptions opts;
    opts.workers = c.workers;
    opts.default_score = c.judge.default_score;
    opts.top_k = c.judge.top_k;
    const auto results = judge::judge_corpus(items, responses, judge_client, opts);

    std::vector<json> records;
    std::map<std::string, std::size_t> flags;
    for (const auto& res : results) {
      records.push_back(judge::to_json(res));
      for (const auto& f : res.flags) ++flags[f];
    }
    write_jsonl_atomic(out(c, paths::judgements), records);
    r.outputs = {out(c, paths::judgements)};
    r.stats = {{"judgements", results.size()},
               {"flags", flags},
               {"upstream_calls", judge_client.upstream_calls()},
               {"cache_hits", judge_client.cache_hits()}};
    r.console = fmt::format("judge: {} judgements, {} upstream calls, {} cache hits\n", results.size(),
                            judge_client.upstream_calls(), judge_client.cache_hits());
  });
}

StageResult cmd_report(const Config& c) {
  return run_stage(c, "report", [&](StageResult& r, std::vector<fs::path>& inputs) {
    std::vector<judge::JudgeResult> results;
    for (const auto& j : read_stage_input(c, paths::judgements, "judge")) results.push_back(judge::judge_result_from_json(j));
    inputs = {out(c, paths::judgements)};
    std::set<std::string> excluded;
    if (fs::exists(out(c, paths::vet_quarantine))) {
      for (const auto& j : read_jsonl(out(c, paths::vet_quarantine))) excluded.insert(j.at("id").get<std::string>());
      inputs.push_back(out(c, paths::vet_quarantine));
    }
    const auto rows = judge::build_report(results, excluded);
    const auto table = judge::report_table(rows);

    // Paired differences of per-item Final scores against the reference model.
    std::set<std::string> models;
    for (const auto& res : results) models.insert(res.model);
    std::string forest = "type,model,reference,n,mean_difference,ci_low,ci_high\n";
    std::size_t forest_rows = 0;
    for (auto type : qagen::kAllTypes) {
      const auto ref = judge::item_finals(results, c.judge.reference_model, type, excluded);
      for (const auto& m : models) {
        if (m == c.judge.reference_model) continue;
        const auto other = judge::item_finals(results, m, type, excluded);
        std::vector<double> diffs;
        for (const auto& [id, v] : other) {
          if (auto it = ref.find(id); it != ref.end()) diffs.push_back(v - it->second);
        }
        if (diffs.empty()) continue;
        const auto ci = survey::bootstrap_paired_ci(diffs, c.judge.bootstrap_resamples, c.judge.bootstrap_level,
                                                    derive_seed(c.seed, "forest:" + m + ":" + qagen::to_string(type)));
        forest += fmt::format("{},{},{},{},{:.6f},{:.6f},{:.6f}\n", qagen::to_string(type), m,
                              c.judge.reference_model, diffs.size(), ci.point, ci.low, ci.high);
        ++forest_rows;
      }
    }
    write_file_atomic(out(c, paths::report_txt), table);
    write_file_atomic(out(c, paths::report_csv), judge::report_csv(rows));
    write_file_atomic(out(c, paths::forest_csv), forest);
    r.outputs = {out(c, paths::report_txt), out(c, paths::report_csv), out(c, paths::forest_csv)};
    r.stats = {{"rows", rows.size()}, {"excluded_items", excluded.size()}, {"forest_rows", forest_rows}};
    r.console = table;
  });
}

StageResult cmd_survey(const Config& c) {
  return run_stage(c, "survey", [&](StageResult& r, std::vector<fs::path>& inputs) {
    const auto items = load_items(c);
    const auto responses = load_responses(c);
    const auto pairs = load_pairs(c);
    inputs = {out(c, paths::qa), out(c, paths::responses), out(c, paths::pairs)};

    survey::ExportOptions opts;
    opts.seed = derive_seed(c.seed, "survey");
    opts.question_count = c.survey.questions;
    opts.evaluators_per_question = c.survey.evaluators_per_question;
    opts.evaluator_pool = c.survey.evaluator_pool;
    const auto exported = survey::export_questionnaires(items, responses, c.run.models, abnormal_series(pairs), opts);

    const auto dir = out(c, paths::survey_dir);
    for (const auto& q : exported.questionnaires) {
      write_file_atomic(dir / (q.id + ".md"), q.markdown);
      write_file_atomic(dir / q.plot_file, q.svg);
      r.outputs.push_back(dir / (q.id + ".md"));
      r.outputs.push_back(dir / q.plot_file);
    }
    std::string assignments = "questionnaire_id,evaluator_id\n";
    for (const auto& a : exported.assignments) assignments += a.questionnaire_id + "," + a.evaluator_id + "\n";
    write_file_atomic(dir / "assignments.csv", assignments);
    r.outputs.push_back(dir / "assignments.csv");

    const auto sealed = out(c, paths::blind_map);
    write_file_atomic(sealed, survey::to_json(exported.blind_map).dump(2) + "\n");
    fs::permissions(sealed, fs::perms::owner_read, fs::perm_options::replace);
    r.outputs.push_back(sealed);

    r.stats = {{"questionnaires", exported.questionnaires.size()}, {"assignments", exported.assignments.size()}};
    r.console = fmt::format("survey: {} questionnaires, {} assignments\n", exported.questionnaires.size(),
                            exported.assignments.size());

    if (c.survey.rankings) {
      inputs.push_back(*c.survey.rankings);
      const auto rows = survey::parse_rankings_csv(read_file(*c.survey.rankings));
      const auto matrix = survey::ingest_rankings(rows, exported.blind_map);
      const auto dense = matrix.dense();
      const auto means = survey::mean_ranks(dense);
      json human{{"models", matrix.models}, {"rows", matrix.rows.size()}, {"mean_ranks", json::object()}};
      for (std::size_t j = 0; j < means.size(); ++j) human["mean_ranks"][matrix.models[j]] = means[j];
      human["pairwise_differences"] = survey::pairwise_rank_differences(means);
      if (matrix.models.size() >= 2 && matrix.models.size() <= 10 && !dense.empty()) {
        const auto fn = survey::friedman_nemenyi(dense);
        human["friedman_chi_square"] = fn.chi_square;
        human["nemenyi_q_alpha"] = fn.q_alpha;
        human["critical_difference"] = fn.critical_difference;
      }
      write_file_atomic(out(c, paths::human_eval), human.dump(2) + "\n");
      r.outputs.push_back(out(c, paths::human_eval));
      r.stats["ranking_rows"] = matrix.rows.size();
      for (std::size_t j = 0; j < means.size(); ++j) {
        r.console += fmt::format("  mean rank {:<24} {:.3f}\n", matrix.models[j], means[j]);
      }
    }
  });
}

StageResult cmd_metrics(const Config& c) {
  return run_stage(c, "metrics", [&](StageResult& r, std::vector<fs::path>& inputs) {
    if (!c.metrics.inputs) throw StageError(ExitCode::usage, "config: metrics.inputs is required for the metrics stage");
    inputs = {*c.metrics.inputs};
    std::string csv = metrics::csv_header();
    std::size_t n = 0;
    for (const auto& rec : read_jsonl(*c.metrics.inputs)) {
      const auto name = rec.value("name", fmt::format("record{}", n + 1));
      const auto data = metrics::labeled_scores_from_json(rec);
      metrics::ThresholdPolicy policy;
      if (c.metrics.policy == "fixed") {
        policy = metrics::FixedThreshold{c.metrics.fixed_threshold};
      } else if (c.metrics.policy == "validation") {
        if (!rec.contains("validation")) throw std::invalid_argument(fmt::format("{}: validation split missing", name));
        policy = metrics::ValidationThreshold{metrics::labeled_scores_from_json(rec.at("validation"))};
      } else {
        policy = metrics::PercentileThreshold{rec.value("train_scores", data.scores), c.metrics.q};
      }
      csv += metrics::csv_row(name, metrics::pa_f1(data, policy));
      csv += metrics::csv_row(name, metrics::auc_roc(data));
      csv += metrics::csv_row(name, metrics::auc_pr(data));
      ++n;
    }
    write_file_atomic(out(c, paths::metrics_csv), csv);
    r.outputs = {out(c, paths::metrics_csv)};
    r.stats = {{"records", n}};
    r.console = csv;
  });
}

std::vector<StageResult> cmd_all(const Config& c) {
  std::vector<StageResult> results;
  for (auto* stage : {cmd_forge, cmd_qa, cmd_vet, cmd_run, cmd_judge, cmd_report}) {
    results.push_back(stage(c));
    if (results.back().exit != ExitCode::ok) break;
  }
  return results;
}

bool verify_manifest(const fs::path& manifest, std::string* problem) {
  const auto root = manifest.parent_path().parent_path();
  const auto j = json::parse(read_file(manifest));
  for (const auto& o : j.at("outputs")) {
    const auto p = root / o.at("path").get<std::string>();
    if (!fs::exists(p)) {
      if (problem) *problem = "missing " + p.string();
      return false;
    }
    if (file_sha256(p) != o.at("sha256").get<std::string>()) {
      if (problem) *problem = "digest mismatch for " + p.string();
      return false;
    }
  }
  return true;
}

}  // namespace tsforge::pipeline
