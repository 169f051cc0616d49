#include "tsforge/window.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "tsforge/util/rng.hpp"

namespace tsforge::window {

std::string WindowInstance::canonical_tag() const {
  return covered_specs.empty() ? std::string{} : covered_specs.front().canonical_tag;
}

std::vector<std::string> WindowInstance::anomaly_descriptions() const {
  std::vector<std::string> out;
  for (const auto& s : covered_specs) out.push_back(s.description);
  return out;
}

std::pair<std::vector<double>, std::vector<double>> extract_comparative(const synth::PairedSeries& pair,
                                                                        Interval interval) {
  const auto n = pair.abnormal.size();
  if (interval.start >= interval.end) {
    throw std::invalid_argument(fmt::format("empty window [{}, {})", interval.start, interval.end));
  }
  if (interval.end > n || pair.normal.size() != n) {
    throw std::invalid_argument(fmt::format("window [{}, {}) out of bounds for series of length {}", interval.start,
                                            interval.end, n));
  }
  const auto s = static_cast<std::ptrdiff_t>(interval.start);
  const auto e = static_cast<std::ptrdiff_t>(interval.end);
  return {std::vector<double>(pair.abnormal.begin() + s, pair.abnormal.begin() + e),
          std::vector<double>(pair.normal.begin() + s, pair.normal.begin() + e)};
}

WindowInstance make_window(const synth::PairedSeries& pair, Interval interval) {
  WindowInstance w;
  w.pair_id = pair.id;
  w.interval = interval;
  std::tie(w.current_values, w.normal_values) = extract_comparative(pair, interval);
  for (const auto& spec : pair.specs) {
    if (spec.interval.intersects(interval)) w.covered_specs.push_back(spec);
  }
  w.has_anomaly = !w.covered_specs.empty();
  w.global_information = pair.global_descriptor;
  return w;
}

SampleResult sample_windows(const synth::PairedSeries& pair, const WindowPolicy& policy) {
  if (policy.min_length == 0 || policy.min_length > policy.max_length) {
    throw std::invalid_argument(
        fmt::format("window length range [{}, {}] is invalid", policy.min_length, policy.max_length));
  }
  const std::size_t n = pair.abnormal.size();
  auto rng = make_rng(policy.seed, pair.id);
  std::uniform_int_distribution<std::size_t> length_dist(policy.min_length, policy.max_length);
  SampleResult result;

  for (const auto& spec : pair.specs) {
    const auto span_len = spec.interval.length();
    for (std::size_t k = 0; k < policy.anomalous_per_spec; ++k) {
      const auto target = length_dist(rng);
      if (span_len > policy.max_length || span_len > n) {
        result.diagnostics.push_back(fmt::format("{}: anomaly [{}, {}) is longer than the maximum window length {}",
                                                 pair.id, spec.interval.start, spec.interval.end, policy.max_length));
        continue;
      }
      const std::size_t len = std::max(target, span_len);
      const std::size_t slack = len - span_len;
      const auto cap = static_cast<std::size_t>(std::floor(policy.margin_fraction * static_cast<double>(len)));
      const std::size_t left = std::uniform_int_distribution<std::size_t>(0, std::min(cap, slack))(rng);
      const std::size_t right = std::min(cap, slack - left);
      // Clamp to the series; the anomaly stays fully covered.
      const std::size_t s = spec.interval.start >= left ? spec.interval.start - left : 0;
      const std::size_t e = std::min(n, spec.interval.end + right);
      result.windows.push_back(make_window(pair, {s, e}));
    }
  }

  for (std::size_t k = 0; k < policy.normal_count; ++k) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < policy.max_attempts && !placed; ++attempt) {
      const auto len = length_dist(rng);
      if (len > n) break;
      const auto s = std::uniform_int_distribution<std::size_t>(0, n - len)(rng);
      const Interval iv{s, s + len};
      if (std::any_of(pair.specs.begin(), pair.specs.end(), [&](const auto& sp) { return sp.interval.intersects(iv); })) {
        continue;
      }
      result.windows.push_back(make_window(pair, iv));
      placed = true;
    }
    if (!placed) {
      result.diagnostics.push_back(
          fmt::format("{}: no anomaly-free window found after {} attempts", pair.id, policy.max_attempts));
    }
  }
  return result;
}

WindowRef ref_of(const WindowInstance& w) {
  return {w.pair_id, w.interval, w.has_anomaly, w.anomaly_descriptions(), w.canonical_tag(), w.global_information};
}

nlohmann::json to_json(const WindowRef& w) {
  return {{"pair_id", w.pair_id},
          {"s", w.interval.start},
          {"e", w.interval.end},
          {"has_anomaly", w.has_anomaly},
          {"anomaly_descriptions", w.anomaly_descriptions},
          {"canonical_tag", w.canonical_tag},
          {"global_information", w.global_information}};
}

nlohmann::json to_json(const WindowInstance& w) { return to_json(ref_of(w)); }

WindowRef window_ref_from_json(const nlohmann::json& j) {
  WindowRef w;
  w.pair_id = j.at("pair_id").get<std::string>();
  w.interval = {j.at("s").get<std::size_t>(), j.at("e").get<std::size_t>()};
  if (w.interval.start >= w.interval.end) {
    throw std::invalid_argument(fmt::format("window record for {} has empty interval", w.pair_id));
  }
  w.has_anomaly = j.at("has_anomaly").get<bool>();
  w.anomaly_descriptions = j.value("anomaly_descriptions", std::vector<std::string>{});
  w.canonical_tag = j.value("canonical_tag", std::string{});
  w.global_information = j.value("global_information", std::string{});
  return w;
}

}  // namespace tsforge::window
