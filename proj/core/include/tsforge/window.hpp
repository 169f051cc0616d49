#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsforge/synth.hpp"

namespace tsforge::window {

using synth::Interval;

struct WindowInstance {
  std::string pair_id;
  Interval interval;
  bool has_anomaly = false;
  std::vector<synth::AnomalySpec> covered_specs;  // every spec the interval intersects
  std::vector<double> current_values;             // abnormal[s:e)
  std::vector<double> normal_values;              // normal[s:e)
  std::string global_information;

  /// Canonical tag of the first covered spec, or "" for normal windows.
  std::string canonical_tag() const;
  std::vector<std::string> anomaly_descriptions() const;
};

struct WindowPolicy {
  std::size_t min_length = 16;
  std::size_t max_length = 48;
  std::size_t anomalous_per_spec = 1;
  std::size_t normal_count = 1;
  double margin_fraction = 0.25;
  std::size_t max_attempts = 1000;
  std::uint64_t seed = 0;
};

struct SampleResult {
  std::vector<WindowInstance> windows;
  std::vector<std::string> diagnostics;  // one line per skipped window
};

/// Anomalous windows fully contain their target spec plus a margin when space
/// permits; normal windows intersect no spec. Deterministic in (pair, policy).
SampleResult sample_windows(const synth::PairedSeries& pair, const WindowPolicy& policy);

/// Exact slices abnormal[s:e), normal[s:e). Throws on empty or out-of-range.
std::pair<std::vector<double>, std::vector<double>> extract_comparative(const synth::PairedSeries& pair,
                                                                        Interval interval);

/// Builds a window record for an arbitrary interval; has_anomaly and
/// covered_specs follow from intersection with pair.specs.
WindowInstance make_window(const synth::PairedSeries& pair, Interval interval);

/// Window record as persisted inside QA items (no values):
/// {pair_id, s, e, has_anomaly, anomaly_descriptions, canonical_tag, global_information}
nlohmann::json to_json(const WindowInstance& w);

/// Lightweight view of a persisted window record.
struct WindowRef {
  std::string pair_id;
  Interval interval;
  bool has_anomaly = false;
  std::vector<std::string> anomaly_descriptions;
  std::string canonical_tag;
  std::string global_information;

  friend bool operator==(const WindowRef&, const WindowRef&) = default;
};

WindowRef ref_of(const WindowInstance& w);
nlohmann::json to_json(const WindowRef& w);
WindowRef window_ref_from_json(const nlohmann::json& j);

}  // namespace tsforge::window
