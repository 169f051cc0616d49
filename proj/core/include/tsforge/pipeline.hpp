#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsforge/llmio.hpp"
#include "tsforge/mock_agents.hpp"
#include "tsforge/qagen.hpp"
#include "tsforge/synth.hpp"
#include "tsforge/window.hpp"

namespace tsforge::pipeline {

inline constexpr const char* kToolVersion = "tsforge 0.1.0";

enum class ExitCode : int { ok = 0, usage = 1, provider = 2, integrity = 3 };

/// Error carrying the process exit code it maps to.
class StageError : public std::runtime_error {
 public:
  StageError(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const { return code_; }

 private:
  ExitCode code_;
};

struct ProviderSpec {
  std::string id;
  nlohmann::json http;  // HttpProviderConfig fields; empty object for mock-only entries
  mock::Behavior mock;
};

struct Config {
  nlohmann::json snapshot;  // effective configuration, recorded in manifests
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";
  std::optional<std::filesystem::path> cache_dir;
  std::size_t workers = 4;
  bool mock = false;

  struct {
    std::size_t n_pairs = 10;
    synth::ForgeRanges ranges;
    window::WindowPolicy windows;
  } forge;

  struct {
    std::vector<qagen::QuestionType> types{std::begin(qagen::kAllTypes), std::end(qagen::kAllTypes)};
    std::size_t max_windows = 0;  // 0 = all
    int max_attempts = 3;
    double temperature = 0.7;
    std::string question_agent = "question-agent";
    std::string answer_agent = "answer-agent";
    qagen::WordLimits limits;
  } qa;

  struct {
    double dedupe_threshold = 0.90;
    double max_fail_fraction = 0.5;
  } vet;

  struct {
    std::vector<std::string> models{"candidate"};
    std::int64_t scale = 100;
    bool full_series = false;
    int max_tokens = 1024;
  } run;

  struct {
    std::string judge = "judge";
    int default_score = 1;
    int top_k = 5;
    std::string reference_model;  // empty = first run model
    std::size_t bootstrap_resamples = 2000;
    double bootstrap_level = 0.95;
  } judge;

  struct {
    std::size_t questions = 140;
    std::size_t evaluators_per_question = 2;
    std::size_t evaluator_pool = 0;
    std::optional<std::filesystem::path> rankings;
  } survey;

  struct {
    std::optional<std::filesystem::path> inputs;
    std::string policy = "percentile";  // percentile | validation | fixed
    double q = 95.0;
    double fixed_threshold = 0.5;
  } metrics;

  struct {
    llmio::RetryPolicy retry;
    std::size_t max_in_flight = 8;
  } client;

  std::map<std::string, ProviderSpec> providers;

  /// ISO-8601 timestamps; fixed in mock mode so artifacts are reproducible.
  std::function<std::string()> clock;
};

struct Overrides {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::filesystem::path> cache_dir;
  std::optional<std::filesystem::path> providers;
  bool mock = false;
};

/// Parses and validates a configuration document with flag overrides
/// applied. Throws StageError(usage) on any problem.
Config config_from_json(const nlohmann::json& doc, const Overrides& overrides = {});
Config load_config(const Overrides& overrides);

struct StageResult {
  std::string stage;
  std::filesystem::path manifest;
  std::vector<std::filesystem::path> outputs;
  nlohmann::json stats;
  std::string console;  // human-readable summary
  ExitCode exit = ExitCode::ok;
};

/// Relative artifact locations under out_dir.
namespace paths {
inline const std::filesystem::path pairs = "data/pairs.jsonl";
inline const std::filesystem::path windows = "data/windows.jsonl";
inline const std::filesystem::path qa = "data/qa.jsonl";
inline const std::filesystem::path qa_quarantine = "data/qa_quarantine.jsonl";
inline const std::filesystem::path vet_report = "data/vet_report.jsonl";
inline const std::filesystem::path vet_quarantine = "data/vet_quarantine.jsonl";
inline const std::filesystem::path responses = "data/responses.jsonl";
inline const std::filesystem::path judgements = "data/judgements.jsonl";
inline const std::filesystem::path report_txt = "reports/report.txt";
inline const std::filesystem::path report_csv = "reports/report.csv";
inline const std::filesystem::path forest_csv = "reports/forest.csv";
inline const std::filesystem::path metrics_csv = "reports/metrics.csv";
inline const std::filesystem::path survey_dir = "survey";
inline const std::filesystem::path blind_map = "sealed/blind_map.json";
inline const std::filesystem::path human_eval = "reports/human_eval.json";
inline const std::filesystem::path manifests = "manifests";
}  // namespace paths

/// Builds a retrying client for a configured model id (mock providers when
/// config.mock is set).
class ClientPool {
 public:
  explicit ClientPool(const Config& config);
  llmio::Client& get(const std::string& id);
  std::size_t upstream_calls() const;

 private:
  const Config& config_;
  std::shared_ptr<llmio::InFlightLimiter> limiter_;
  std::map<std::string, std::unique_ptr<llmio::Client>> clients_;
};

StageResult cmd_forge(const Config& config);
StageResult cmd_qa(const Config& config);
StageResult cmd_vet(const Config& config);
StageResult cmd_run(const Config& config);
StageResult cmd_judge(const Config& config);
StageResult cmd_report(const Config& config);
StageResult cmd_survey(const Config& config);
StageResult cmd_metrics(const Config& config);

/// forge, qa, vet, run, judge, report in order; stops at the first stage with
/// a non-zero exit.
std::vector<StageResult> cmd_all(const Config& config);

/// Verifies that every output digest of a manifest matches the file on disk.
bool verify_manifest(const std::filesystem::path& manifest, std::string* problem = nullptr);

}  // namespace tsforge::pipeline
