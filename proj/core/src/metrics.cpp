#include "tsforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

namespace tsforge::metrics {

void validate(const LabeledScores& data) {
  if (data.labels.size() != data.scores.size()) {
    throw std::invalid_argument(
        fmt::format("labels ({}) and scores ({}) differ in length", data.labels.size(), data.scores.size()));
  }
  for (auto l : data.labels) {
    if (l > 1) throw std::invalid_argument("labels must be 0 or 1");
  }
  for (double s : data.scores) {
    if (std::isnan(s)) throw std::invalid_argument("scores must not be NaN");
  }
}

std::vector<std::uint8_t> point_adjust(std::span<const std::uint8_t> labels, std::span<const std::uint8_t> preds) {
  if (labels.size() != preds.size()) throw std::invalid_argument("point_adjust: length mismatch");
  std::vector<std::uint8_t> out(preds.begin(), preds.end());
  std::size_t i = 0;
  while (i < labels.size()) {
    if (labels[i] != 1) {
      ++i;
      continue;
    }
    std::size_t j = i;
    bool hit = false;
    while (j < labels.size() && labels[j] == 1) hit = hit || preds[j] == 1, ++j;
    if (hit) std::fill(out.begin() + static_cast<std::ptrdiff_t>(i), out.begin() + static_cast<std::ptrdiff_t>(j), 1);
    i = j;
  }
  return out;
}

double threshold_percentile(std::span<const double> scores, double q) {
  if (scores.empty()) throw std::invalid_argument("threshold_percentile: no scores");
  if (!(q >= 0.0 && q <= 100.0)) throw std::invalid_argument("percentile must be within [0, 100]");
  std::vector<double> v(scores.begin(), scores.end());
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

MetricResult pa_f1_at(const LabeledScores& data, double threshold) {
  validate(data);
  std::vector<std::uint8_t> preds(data.scores.size());
  for (std::size_t i = 0; i < preds.size(); ++i) preds[i] = data.scores[i] >= threshold ? 1 : 0;
  const auto adjusted = point_adjust(data.labels, preds);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < adjusted.size(); ++i) {
    if (adjusted[i] && data.labels[i]) ++tp;
    else if (adjusted[i]) ++fp;
    else if (data.labels[i]) ++fn;
  }
  MetricResult r{"pa_f1", 0.0, true, {}, threshold, "fixed"};
  if (tp + fp == 0) {
    r.flag = "undefined_precision";
    return r;
  }
  if (tp + fn == 0) {
    r.flag = "undefined_recall";
    return r;
  }
  const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double rec = static_cast<double>(tp) / static_cast<double>(tp + fn);
  r.value = (p + rec) > 0.0 ? 2.0 * p * rec / (p + rec) : 0.0;
  return r;
}

MetricResult pa_f1(const LabeledScores& data, const ThresholdPolicy& policy) {
  return std::visit(
      [&](const auto& pol) -> MetricResult {
        using T = std::decay_t<decltype(pol)>;
        if constexpr (std::is_same_v<T, FixedThreshold>) {
          return pa_f1_at(data, pol.value);
        } else if constexpr (std::is_same_v<T, PercentileThreshold>) {
          auto r = pa_f1_at(data, threshold_percentile(pol.train_scores, pol.q));
          r.threshold_provenance = "percentile";
          return r;
        } else {
          validate(pol.validation);
          if (pol.validation.scores.empty()) throw std::invalid_argument("validation split is empty");
          std::vector<double> candidates = pol.validation.scores;
          std::sort(candidates.begin(), candidates.end());
          candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
          double best_t = candidates.front();
          double best_v = -1.0;
          for (double t : candidates) {
            const double v = pa_f1_at(pol.validation, t).value;
            if (v > best_v) best_v = v, best_t = t;
          }
          auto r = pa_f1_at(data, best_t);
          r.threshold_provenance = "validation";
          return r;
        }
      },
      policy);
}

MetricResult auc_roc(const LabeledScores& data) {
  validate(data);
  const std::size_t n = data.scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return data.scores[a] < data.scores[b]; });

  // Mid-ranks for ties, then U = R_pos - n_pos (n_pos + 1) / 2.
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && data.scores[order[j]] == data.scores[order[i]]) ++j;
    const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (data.labels[order[k]]) {
        rank_sum_pos += mid_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  MetricResult r{"auc_roc", 0.0, true, {}, std::nullopt, {}};
  if (n_pos == 0 || n_neg == 0) {
    r.defined = false;
    r.flag = n_pos == 0 ? "no_positives" : "no_negatives";
    return r;
  }
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
  r.value = u / (np * static_cast<double>(n_neg));
  return r;
}

MetricResult auc_pr(const LabeledScores& data) {
  validate(data);
  const std::size_t n = data.scores.size();
  const auto total_pos = static_cast<std::size_t>(std::count(data.labels.begin(), data.labels.end(), 1));
  MetricResult r{"auc_pr", 0.0, true, {}, std::nullopt, {}};
  if (total_pos == 0) {
    r.defined = false;
    r.flag = "no_positives";
    return r;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return data.scores[a] > data.scores[b]; });

  std::size_t tp = 0, fp = 0;
  double prev_recall = 0.0;
  double area = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && data.scores[order[j]] == data.scores[order[i]]) {
      (data.labels[order[j]] ? tp : fp) += 1;
      ++j;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  r.value = area;
  return r;
}

LabeledScores labeled_scores_from_json(const nlohmann::json& j) {
  LabeledScores d;
  for (const auto& l : j.at("labels")) d.labels.push_back(static_cast<std::uint8_t>(l.get<int>()));
  d.scores = j.at("scores").get<std::vector<double>>();
  validate(d);
  return d;
}

std::string csv_header() { return "name,metric,value,defined,flag,threshold,threshold_provenance\n"; }

std::string csv_row(const std::string& name, const MetricResult& r) {
  return fmt::format("{},{},{:.6f},{},{},{},{}\n", name, r.metric, r.value, r.defined ? "true" : "false", r.flag,
                     r.threshold ? fmt::format("{:.6f}", *r.threshold) : std::string{}, r.threshold_provenance);
}

}  // namespace tsforge::metrics
