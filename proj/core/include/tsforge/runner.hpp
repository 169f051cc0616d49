#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsforge/llmio.hpp"
#include "tsforge/numeric.hpp"
#include "tsforge/qagen.hpp"

namespace tsforge::runner {

/// The only parts of a QA item a candidate model may see.
struct CandidateView {
  std::string item_id;
  std::string pair_id;
  synth::Interval interval;
  std::string question;
};

CandidateView view_of(const qagen::QAItem& item);

struct PromptOptions {
  numeric::SerializationConfig serialization;
  bool full_series = false;  // also include the whole serialized series
};

inline constexpr std::string_view kCandidateSystem =
    "You are a time series analyst. Answer questions about anomalies in the given window.";

/// Window values are z-scored with statistics of the full series, then
/// textualized. Takes a CandidateView so expected answers and anomaly labels
/// cannot reach the prompt.
std::string build_candidate_prompt(const CandidateView& view, std::span<const double> series,
                                   const PromptOptions& options = {});

struct CandidateResponse {
  std::string item_id;
  std::string model;
  std::string response;
  std::optional<std::string> error;  // "<kind>: <message>" when the provider failed
  double latency_ms = 0.0;
  std::string provider;
  int attempts = 0;
};

nlohmann::json to_json(const CandidateResponse& r);
CandidateResponse candidate_response_from_json(const nlohmann::json& j);

struct CandidateModel {
  std::string id;
  llmio::Client* client = nullptr;
};

struct RunOptions {
  PromptOptions prompt;
  std::size_t workers = 4;
  double temperature = 0.0;
  int max_tokens = 1024;
  bool record_latency = true;  // false keeps outputs byte-stable
};

struct RunStats {
  std::size_t attempted = 0;  // upstream-bound pairs this run
  std::size_t resumed = 0;    // taken from a previous run
  std::size_t failed = 0;
};

/// One response per (item, model), ordered item-major in input order.
/// Successful entries of `previous` are reused; failed ones are retried.
/// Provider failures become responses carrying an error marker.
std::vector<CandidateResponse> run_candidates(const std::vector<qagen::QAItem>& items,
                                              const std::map<std::string, std::vector<double>>& series_by_pair,
                                              const std::vector<CandidateModel>& models, const RunOptions& options,
                                              const std::vector<CandidateResponse>& previous = {},
                                              RunStats* stats = nullptr);

}  // namespace tsforge::runner
