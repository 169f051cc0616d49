#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsforge/qagen.hpp"

namespace tsforge::vet {

/// Whether `text` asserts that an anomaly is present (true), asserts its
/// absence (false), or carries no verdict cue (nullopt). Sentences are scanned
/// in order and the first one with a cue decides. Within a sentence an anomaly
/// cue is negated by an earlier negator ("no", "not", "without", ...) unless a
/// contrastive conjunction ("but", "however", ...) intervenes.
std::optional<bool> assertion_polarity(std::string_view text);

/// Statement part of a true/false question ("True or False:" prefix removed).
std::string_view tf_statement(std::string_view question);

enum class Status { pass, warn, fail, na };
std::string to_string(Status s);

struct AgreementOutcome {
  Status status = Status::na;  // pass / fail / na
  std::string reason;
};

struct StyleOutcome {
  Status status = Status::pass;  // pass / fail
  std::vector<std::string> reasons;
  std::vector<std::string> warnings;
};

struct LengthOutcome {
  Status status = Status::pass;  // pass / warn / fail
  std::size_t words = 0;
};

AgreementOutcome check_agreement(const qagen::QAItem& item);
StyleOutcome check_style(const qagen::QAItem& item);
LengthOutcome check_length(const qagen::QAItem& item, const qagen::WordLimits& limits = {});

/// True when `text` contains two or more comma-separated decimal numbers.
bool quotes_raw_values(std::string_view text);

double trigram_jaccard(std::string_view a, std::string_view b);

struct DuplicateCluster {
  std::string kept_id;
  std::vector<std::string> member_ids;    // input order, kept_id first
  std::vector<double> similarity_to_kept;  // parallel to member_ids
};

/// Single-linkage clusters over question-text trigram Jaccard >= threshold.
/// Membership is independent of input order; the earliest item in input
/// order is kept.
std::vector<DuplicateCluster> dedupe(const std::vector<qagen::QAItem>& items, double threshold = 0.90);

struct ItemOutcome {
  std::string id;
  AgreementOutcome agreement;
  StyleOutcome style;
  LengthOutcome length;
  bool duplicate = false;  // dropped in favour of an earlier cluster member

  bool quarantined() const {
    return agreement.status == Status::fail || style.status == Status::fail || length.status == Status::fail ||
           duplicate;
  }
  std::vector<std::string> quarantine_reasons() const;
};

struct Summary {
  std::size_t items = 0;
  std::size_t agreement_pass = 0, agreement_fail = 0, agreement_na = 0;
  std::size_t style_pass = 0, style_fail = 0, style_warnings = 0;
  std::size_t length_pass = 0, length_warn = 0, length_fail = 0;
  std::size_t duplicate_clusters = 0, duplicates_dropped = 0;
  std::size_t quarantined = 0;
};

struct IntegrityReport {
  std::vector<ItemOutcome> outcomes;  // one per input item, input order
  std::vector<DuplicateCluster> clusters;
  Summary summary;
};

struct VetOptions {
  qagen::WordLimits limits;
  double dedupe_threshold = 0.90;
};

IntegrityReport vet_items(const std::vector<qagen::QAItem>& items, const VetOptions& options = {});

/// One record per item, then one per cluster, then a summary record.
std::vector<nlohmann::json> report_records(const IntegrityReport& report);

/// Aligned console table of the summary counts.
std::string summary_table(const IntegrityReport& report);

}  // namespace tsforge::vet
