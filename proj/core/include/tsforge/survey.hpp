#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsforge/qagen.hpp"
#include "tsforge/runner.hpp"

namespace tsforge::survey {

struct BlindEntry {
  std::string questionnaire_id;
  std::string item_id;
  std::vector<std::string> slot_models;  // slot_models[i] is shown as "Model i+1"
};

struct BlindMap {
  std::uint64_t seed = 0;
  std::vector<BlindEntry> entries;
};

nlohmann::json to_json(const BlindMap& m);
BlindMap blind_map_from_json(const nlohmann::json& j);

struct Assignment {
  std::string questionnaire_id;
  std::string evaluator_id;
};

struct Questionnaire {
  std::string id;
  std::string item_id;
  std::string markdown;
  std::string plot_file;  // relative file name of the SVG asset
  std::string svg;
};

struct ExportOptions {
  std::uint64_t seed = 0;
  std::size_t question_count = 0;  // 0 = every eligible item
  std::size_t evaluators_per_question = 2;
  std::size_t evaluator_pool = 0;  // 0 = evaluators_per_question
};

struct ExportResult {
  std::vector<Questionnaire> questionnaires;
  BlindMap blind_map;
  std::vector<Assignment> assignments;
};

/// Items need a successful response from every model to be eligible. The
/// selected items are drawn in a seed-determined order and each document
/// shows the responses as "Model 1..k" in a per-document shuffled order.
/// Occurrences of model names inside responses are redacted.
ExportResult export_questionnaires(const std::vector<qagen::QAItem>& items,
                                   const std::vector<runner::CandidateResponse>& responses,
                                   const std::vector<std::string>& models,
                                   const std::map<std::string, std::vector<double>>& series_by_pair,
                                   const ExportOptions& options);

/// Line plot of the full series with [s, e) shaded.
std::string render_svg(std::span<const double> series, synth::Interval window, int width = 720, int height = 240);

/// One CSV row: the scores one evaluator gave one model slot.
struct RankingRow {
  std::string questionnaire_id;
  std::string evaluator_id;
  int model_slot = 0;  // 1-based
  std::map<std::string, int> scores;
  int rank = 0;
};

/// Header {questionnaire_id, evaluator_id, model_slot, <dimensions...>, rank}.
/// Empty score cells are allowed (dimensions outside the question type).
std::vector<RankingRow> parse_rankings_csv(std::string_view csv);

struct MatrixRow {
  std::string questionnaire_id;
  std::string evaluator_id;
  std::map<std::string, int> rank_by_model;
  std::map<std::string, std::map<std::string, int>> scores_by_model;
};

struct RankMatrix {
  std::vector<std::string> models;  // sorted
  std::vector<MatrixRow> rows;

  /// rows x models ranks in `models` order.
  std::vector<std::vector<double>> dense() const;
};

/// Groups rows by (questionnaire, evaluator), checks that slots and ranks are
/// permutations of 1..k and unblinds slots through the map. Throws
/// std::invalid_argument naming the offending group.
RankMatrix ingest_rankings(const std::vector<RankingRow>& rows, const BlindMap& map);

/// Column means of a rows x models rank matrix.
std::vector<double> mean_ranks(const std::vector<std::vector<double>>& matrix);
std::map<std::string, double> mean_ranks(const RankMatrix& m);

/// d[i][j] = mean_rank[i] - mean_rank[j].
std::vector<std::vector<double>> pairwise_rank_differences(std::span<const double> mean_ranks);

struct FriedmanNemenyi {
  std::size_t k = 0;
  std::size_t n = 0;
  double chi_square = 0.0;        // Friedman statistic, k - 1 degrees of freedom
  double q_alpha = 0.0;           // studentized range / sqrt(2) at alpha 0.05
  double critical_difference = 0.0;
};

/// Friedman statistic and Nemenyi critical difference at alpha 0.05 for
/// k in 2..10 models over n rows.
FriedmanNemenyi friedman_nemenyi(const std::vector<std::vector<double>>& matrix);

struct BootstrapCI {
  double low = 0.0;
  double high = 0.0;
  double point = 0.0;  // sample mean
};

/// Percentile bootstrap of the mean of paired differences.
BootstrapCI bootstrap_paired_ci(std::span<const double> differences, std::size_t resamples = 10000,
                                double level = 0.95, std::uint64_t seed = 0);

}  // namespace tsforge::survey
