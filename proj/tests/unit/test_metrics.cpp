#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tsforge/metrics.hpp"

using namespace tsforge::metrics;
using U8 = std::vector<std::uint8_t>;

TEST_SUITE("metrics") {
  TEST_CASE("point adjustment") {
    CHECK(point_adjust(U8{0, 0, 1, 1, 0}, U8{0, 0, 0, 1, 0}) == U8{0, 0, 1, 1, 0});
    CHECK(point_adjust(U8{0, 0, 0}, U8{1, 0, 1}) == U8{1, 0, 1});
    CHECK(point_adjust(U8{1, 1, 0, 1, 1}, U8{0, 0, 0, 0, 1}) == U8{0, 0, 0, 1, 1});
    CHECK(point_adjust(U8{1, 1, 0, 1}, U8{1, 0, 1, 0}) == U8{1, 1, 1, 0});
    CHECK_THROWS_AS(point_adjust(U8{1}, U8{1, 0}), std::invalid_argument);
  }

  TEST_CASE("percentile threshold") {
    std::vector<double> v(100);
    for (int i = 0; i < 100; ++i) v[i] = i;
    CHECK(threshold_percentile(v, 95) == doctest::Approx(94.05).epsilon(1e-12));
    CHECK(threshold_percentile(std::vector<double>(9, 0.3), 42) == 0.3);
    CHECK(threshold_percentile(v, 0) == 0.0);
    CHECK(threshold_percentile(v, 100) == 99.0);
    CHECK_THROWS_AS(threshold_percentile(v, 101), std::invalid_argument);
    CHECK_THROWS_AS(threshold_percentile(std::vector<double>{}, 50), std::invalid_argument);
  }

  TEST_CASE("PA-F1 edge cases") {
    LabeledScores perfect{{0, 1, 1, 0, 1}, {0.1, 0.9, 0.8, 0.2, 0.95}};
    CHECK(pa_f1_at(perfect, 0.5).value == 1.0);
    const auto none = pa_f1_at(perfect, 2.0);
    CHECK(none.value == 0.0);
    CHECK(none.flag == "undefined_precision");
    LabeledScores no_pos{{0, 0, 0}, {0.9, 0.1, 0.2}};
    CHECK(pa_f1_at(no_pos, 0.5).flag == "undefined_recall");
    LabeledScores bad{{0, 2}, {0.1, 0.2}};
    CHECK_THROWS_AS(pa_f1_at(bad, 0.5), std::invalid_argument);
    LabeledScores nan{{0, 1}, {0.1, std::nan("")}};
    CHECK_THROWS_AS(auc_roc(nan), std::invalid_argument);
  }

  TEST_CASE("PA-F1 threshold policies") {
    LabeledScores test{{0, 0, 1, 1, 0, 0}, {0.1, 0.2, 0.3, 0.7, 0.2, 0.6}};
    const auto fixed = pa_f1(test, FixedThreshold{0.65});
    CHECK(fixed.threshold_provenance == "fixed");
    CHECK(fixed.value == 1.0);
    const auto pct = pa_f1(test, PercentileThreshold{{0.0, 0.25, 0.5, 0.65, 1.0}, 50});
    CHECK(pct.threshold_provenance == "percentile");
    CHECK(*pct.threshold == 0.5);
    CHECK(pct.value == doctest::Approx(oracle::pa_f1(test.labels, U8{0, 0, 0, 1, 0, 1})));
    LabeledScores val{{0, 1, 0}, {0.2, 0.65, 0.64}};
    const auto v = pa_f1(test, ValidationThreshold{val});
    CHECK(v.threshold_provenance == "validation");
    CHECK(*v.threshold == 0.65);
    CHECK(v.value == 1.0);
  }

  TEST_CASE("PA-F1 agrees with the segment oracle on random data") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
      LabeledScores d;
      const int n = 20 + trial % 40;
      for (int i = 0; i < n; ++i) {
        d.labels.push_back(u(rng) < 0.3 ? 1 : 0);
        d.scores.push_back(u(rng));
      }
      const double thr = u(rng);
      U8 preds;
      for (double s : d.scores) preds.push_back(s >= thr ? 1 : 0);
      CHECK(pa_f1_at(d, thr).value == doctest::Approx(oracle::pa_f1(d.labels, preds)).epsilon(1e-12));
    }
  }

  TEST_CASE("AUC-ROC examples") {
    CHECK(auc_roc({{0, 1}, {0.1, 0.9}}).value == 1.0);
    CHECK(auc_roc({{0, 1}, {0.9, 0.1}}).value == 0.0);
    CHECK(auc_roc({{0, 1, 0, 1}, {0.5, 0.5, 0.5, 0.5}}).value == 0.5);
    const auto undefined = auc_roc({{0, 0}, {0.1, 0.2}});
    CHECK_FALSE(undefined.defined);
    CHECK(undefined.flag == "no_positives");
    CHECK(auc_roc({{1, 1}, {0.1, 0.2}}).flag == "no_negatives");
  }

  TEST_CASE("AUC-ROC matches the pairwise oracle with ties") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> coarse(0, 9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      LabeledScores d;
      for (int i = 0; i < 60; ++i) {
        d.labels.push_back(u(rng) < 0.4 ? 1 : 0);
        d.scores.push_back(trial % 2 ? coarse(rng) / 10.0 : u(rng));
      }
      d.labels[0] = 1;
      d.labels[1] = 0;
      CHECK(std::abs(auc_roc(d).value - oracle::auc_pairwise(d.labels, d.scores)) < 1e-12);
    }
  }

  TEST_CASE("AUC-PR examples and sweep oracle") {
    CHECK(auc_pr({{1, 1, 0, 0}, {0.9, 0.8, 0.2, 0.1}}).value == 1.0);
    // Single positive ranked last among n: precision 1/n at full recall.
    for (int n : {2, 5, 10}) {
      LabeledScores d;
      for (int i = 0; i < n; ++i) {
        d.labels.push_back(i == n - 1);
        d.scores.push_back(1.0 - 0.01 * i);
      }
      CHECK(auc_pr(d).value == doctest::Approx(1.0 / n));
    }
    const auto none = auc_pr({{0, 0}, {0.2, 0.3}});
    CHECK_FALSE(none.defined);
    CHECK(none.flag == "no_positives");

    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> coarse(0, 5);
    for (int trial = 0; trial < 50; ++trial) {
      LabeledScores d;
      for (int i = 0; i < 40; ++i) {
        d.labels.push_back(coarse(rng) < 2 ? 1 : 0);
        d.scores.push_back(coarse(rng));
      }
      d.labels[0] = 1;
      CHECK(std::abs(auc_pr(d).value - oracle::average_precision_sweep(d.labels, d.scores)) < 1e-12);
    }
  }

  TEST_CASE("json input and csv output") {
    const auto d = labeled_scores_from_json(nlohmann::json{{"labels", {0, 1}}, {"scores", {0.2, 0.7}}});
    CHECK(d.scores.size() == 2);
    CHECK_THROWS(labeled_scores_from_json(nlohmann::json{{"labels", {0, 1}}, {"scores", {0.2}}}));
    CHECK(csv_header() == "name,metric,value,defined,flag,threshold,threshold_provenance\n");
    CHECK(csv_row("s", pa_f1_at(d, 0.5)) == "s,pa_f1,1.000000,true,,0.500000,fixed\n");
    CHECK(csv_row("s", auc_roc(d)) == "s,auc_roc,1.000000,true,,,\n");
  }
}
