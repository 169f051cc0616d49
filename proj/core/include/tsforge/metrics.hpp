#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace tsforge::metrics {

struct LabeledScores {
  std::vector<std::uint8_t> labels;  // 1 = anomalous point
  std::vector<double> scores;
};

/// Throws std::invalid_argument on length mismatch or non-binary labels.
void validate(const LabeledScores& data);

struct MetricResult {
  std::string metric;
  double value = 0.0;
  bool defined = true;
  std::string flag;  // why the value is undefined or defaulted
  std::optional<double> threshold;
  std::string threshold_provenance;  // "validation" | "percentile" | "fixed"
};

/// Every maximal run of label 1s with at least one predicted 1 becomes all 1s.
std::vector<std::uint8_t> point_adjust(std::span<const std::uint8_t> labels, std::span<const std::uint8_t> preds);

/// q-th percentile (0..100) with linear interpolation between order statistics.
double threshold_percentile(std::span<const double> scores, double q);

struct FixedThreshold {
  double value = 0.0;
};
struct PercentileThreshold {
  std::vector<double> train_scores;
  double q = 95.0;
};
/// Picks the threshold among the validation scores that maximizes PA-F1 on
/// the validation labels.
struct ValidationThreshold {
  LabeledScores validation;
};
using ThresholdPolicy = std::variant<FixedThreshold, PercentileThreshold, ValidationThreshold>;

/// Precision/recall/F1 after point adjustment of binarized predictions.
/// Binarization predicts 1 where score >= threshold. An undefined precision or
/// recall yields value 0 with a flag.
MetricResult pa_f1_at(const LabeledScores& data, double threshold);
MetricResult pa_f1(const LabeledScores& data, const ThresholdPolicy& policy);

/// Mann-Whitney statistic with ties counted 1/2. Undefined if a class is absent.
MetricResult auc_roc(const LabeledScores& data);

/// Step-wise area under the precision-recall curve over a descending-score
/// sweep (average precision; tied scores enter together). Undefined without
/// positives.
MetricResult auc_pr(const LabeledScores& data);

LabeledScores labeled_scores_from_json(const nlohmann::json& j);

std::string csv_header();
std::string csv_row(const std::string& name, const MetricResult& r);

}  // namespace tsforge::metrics
