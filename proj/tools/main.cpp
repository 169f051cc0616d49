#include <cstdio>
#include <cstdlib>
#include <exception>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "tsforge/pipeline.hpp"

namespace pl = tsforge::pipeline;

namespace {

int report_results(const std::vector<pl::StageResult>& results) {
  int code = 0;
  for (const auto& r : results) {
    std::fputs(r.console.c_str(), stdout);
    spdlog::info("{}: manifest {}", r.stage, r.manifest.string());
    code = static_cast<int>(r.exit);
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Benchmark forge and evaluation harness for time-series anomaly explanation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", pl::kToolVersion);

  pl::Overrides ov;
  std::string config, out_dir, cache_dir, providers;
  std::uint64_t seed = 0;
  bool verbose = false;
  app.add_option("--config", config, "JSON configuration file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Root seed (overrides config)");
  app.add_option("--out-dir", out_dir, "Output directory (overrides config)");
  app.add_option("--cache-dir", cache_dir, "Response cache directory (overrides config)");
  app.add_option("--providers", providers, "JSON file replacing the providers section")->check(CLI::ExistingFile);
  app.add_flag("--mock", ov.mock, "Use deterministic in-process providers; no network");
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  using Stage = std::function<std::vector<pl::StageResult>(const pl::Config&)>;
  auto single = [](pl::StageResult (*fn)(const pl::Config&)) -> Stage {
    return [fn](const pl::Config& c) { return std::vector<pl::StageResult>{fn(c)}; };
  };
  const std::vector<std::tuple<std::string, std::string, Stage>> stages{
      {"forge", "Synthesize paired series and windows", single(pl::cmd_forge)},
      {"qa", "Generate question/answer items with the two agents", single(pl::cmd_qa)},
      {"vet", "Integrity checks, dedupe and quarantine", single(pl::cmd_vet)},
      {"run", "Query candidate models on window prompts", single(pl::cmd_run)},
      {"judge", "Score candidate answers with the logprob-weighted judge", single(pl::cmd_judge)},
      {"report", "Aggregate judgements into the model x type table", single(pl::cmd_report)},
      {"survey", "Export blinded questionnaires and ingest rankings", single(pl::cmd_survey)},
      {"metrics", "PA-F1, AUC-ROC and AUC-PR over labeled scores", single(pl::cmd_metrics)},
      {"all", "forge, qa, vet, run, judge and report in sequence", Stage(pl::cmd_all)},
  };
  std::string chosen;
  Stage action;
  for (const auto& [name, help, fn] : stages) {
    auto* sub = app.add_subcommand(name, help);
    sub->callback([&, n = name, f = fn] {
      chosen = n;
      action = f;
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(pl::ExitCode::usage);
  }

  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
  spdlog::set_pattern("[%l] %v");
  if (!config.empty()) ov.config = config;
  if (*seed_opt) ov.seed = seed;
  if (!out_dir.empty()) ov.out_dir = out_dir;
  if (!cache_dir.empty()) ov.cache_dir = cache_dir;
  if (!providers.empty()) ov.providers = providers;

  try {
    const auto cfg = pl::load_config(ov);
    spdlog::debug("{}: seed {} out {} mock {}", chosen, cfg.seed, cfg.out_dir.string(), cfg.mock);
    return report_results(action(cfg));
  } catch (const pl::StageError& e) {
    spdlog::error("{}", e.what());
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    spdlog::error("{}: {}", chosen, e.what());
    return static_cast<int>(pl::ExitCode::usage);
  }
}
