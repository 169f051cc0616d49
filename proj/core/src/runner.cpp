#include "tsforge/runner.hpp"

#include <chrono>
#include <stdexcept>

#include <fmt/format.h>

#include "tsforge/util/parallel.hpp"

namespace tsforge::runner {

CandidateView view_of(const qagen::QAItem& item) {
  return {item.id, item.window.pair_id, item.window.interval, item.question};
}

std::string build_candidate_prompt(const CandidateView& view, std::span<const double> series,
                                   const PromptOptions& options) {
  const auto [s, e] = std::pair{view.interval.start, view.interval.end};
  if (s >= e || e > series.size()) {
    throw std::invalid_argument(fmt::format("window [{}, {}) outside series of length {}", s, e, series.size()));
  }
  const auto norm = numeric::zscore_normalize(series);
  const auto& cfg = options.serialization;
  const std::span<const double> window(norm.values.data() + s, e - s);

  std::string out;
  out += fmt::format("Window: [{}, {})\n", s, e);
  out += fmt::format("Steps {} to {} of a series with {} steps. Values are z-scored over the full series and "
                     "multiplied by {}.\n",
                     s, e - 1, series.size(), cfg.scale);
  if (options.full_series) {
    out += fmt::format("Full series: {}\n", numeric::textualize_window(norm.values, cfg));
  }
  out += fmt::format("Window values: {}\n\n", numeric::textualize_window(window, cfg));
  out += fmt::format("Question:\n{}\n\nAnswer:\n", view.question);
  return out;
}

nlohmann::json to_json(const CandidateResponse& r) {
  nlohmann::json j{{"item_id", r.item_id}, {"model", r.model}, {"response", r.response}};
  if (r.error) j["error"] = *r.error;
  j["latency_ms"] = r.latency_ms;
  j["provider"] = r.provider;
  j["attempts"] = r.attempts;
  return j;
}

CandidateResponse candidate_response_from_json(const nlohmann::json& j) {
  CandidateResponse r;
  r.item_id = j.at("item_id").get<std::string>();
  r.model = j.at("model").get<std::string>();
  r.response = j.value("response", std::string{});
  if (j.contains("error") && !j["error"].is_null()) r.error = j["error"].get<std::string>();
  r.latency_ms = j.value("latency_ms", 0.0);
  r.provider = j.value("provider", std::string{});
  r.attempts = j.value("attempts", 0);
  return r;
}

std::vector<CandidateResponse> run_candidates(const std::vector<qagen::QAItem>& items,
                                              const std::map<std::string, std::vector<double>>& series_by_pair,
                                              const std::vector<CandidateModel>& models, const RunOptions& options,
                                              const std::vector<CandidateResponse>& previous, RunStats* stats) {
  std::map<std::pair<std::string, std::string>, const CandidateResponse*> done;
  for (const auto& r : previous) {
    if (!r.error) done[{r.item_id, r.model}] = &r;
  }

  const std::size_t n = items.size() * models.size();
  std::vector<CandidateResponse> out(n);
  std::vector<char> resumed(n, 0);

  parallel_for(n, options.workers, [&](std::size_t k) {
    const auto& item = items[k / models.size()];
    const auto& model = models[k % models.size()];
    auto& slot = out[k];
    if (auto it = done.find({item.id, model.id}); it != done.end()) {
      slot = *it->second;
      resumed[k] = 1;
      return;
    }
    slot.item_id = item.id;
    slot.model = model.id;
    slot.provider = model.client->provider().name();
    const auto series = series_by_pair.find(item.window.pair_id);
    if (series == series_by_pair.end()) {
      slot.error = fmt::format("missing-series: no series for pair '{}'", item.window.pair_id);
      return;
    }
    llmio::ChatRequest req;
    req.system = std::string(kCandidateSystem);
    req.user = build_candidate_prompt(view_of(item), series->second, options.prompt);
    req.temperature = options.temperature;
    req.max_tokens = options.max_tokens;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const auto resp = model.client->complete(req);
      slot.response = resp.text;
      slot.attempts = resp.attempts;
    } catch (const llmio::ProviderError& err) {
      slot.error = fmt::format("{}: {}", llmio::to_string(err.kind()), err.what());
      slot.attempts = 0;
    }
    if (options.record_latency) {
      slot.latency_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
  });

  if (stats) {
    *stats = {};
    for (std::size_t k = 0; k < n; ++k) {
      if (resumed[k]) ++stats->resumed;
      else ++stats->attempted;
      if (out[k].error) ++stats->failed;
    }
  }
  return out;
}

}  // namespace tsforge::runner
