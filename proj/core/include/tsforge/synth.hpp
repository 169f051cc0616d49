#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace tsforge::synth {

inline constexpr std::size_t kDefaultLength = 1024;
inline constexpr std::size_t kMinPairLength = 64;

struct NoTrend {};
struct LinearTrend {
  double slope = 0.0;  // per step
};
/// slope_before applies on [0, breakpoint), slope_after from breakpoint on.
/// The trend is continuous at the breakpoint.
struct PiecewiseTrend {
  std::size_t breakpoint = 0;
  double slope_before = 0.0;
  double slope_after = 0.0;
};
using Trend = std::variant<NoTrend, LinearTrend, PiecewiseTrend>;

struct Sinusoid {
  double period = 0.0;  // steps
  double amplitude = 0.0;
};

struct BaselineConfig {
  std::size_t length = kDefaultLength;
  double level = 0.0;
  Trend trend = NoTrend{};
  std::optional<Sinusoid> seasonal;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

/// Throws std::invalid_argument naming the violated constraint. The period
/// bound [8, T/4] is only checked when a seasonal component is present.
void validate(const BaselineConfig& cfg, std::size_t min_length = 1);

/// Additive components of a generated baseline, kept so that injectors can
/// rescale noise or re-synthesize the seasonal part.
struct BaselineParts {
  std::vector<double> trend;     // includes level
  std::vector<double> seasonal;
  std::vector<double> noise;
  std::optional<Sinusoid> sinusoid;
  double noise_sigma = 0.0;

  std::vector<double> sum() const;
};

BaselineParts generate_components(const BaselineConfig& cfg);

/// trend(t) + seasonal(t) + noise(t); deterministic under (cfg, cfg.seed).
std::vector<double> generate_baseline(const BaselineConfig& cfg);

enum class AnomalyKind { spike, spike_cluster, level_shift, periodicity_break, volatility_burst, drift };

std::string to_string(AnomalyKind kind);
AnomalyKind anomaly_kind_from_string(std::string_view s);

/// Half-open step interval [start, end).
struct Interval {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  bool contains(std::size_t t) const { return t >= start && t < end; }
  bool intersects(const Interval& o) const { return start < o.end && o.start < end; }
  bool covers(const Interval& o) const { return start <= o.start && o.end <= end; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Kind-specific parameters. Only the fields relevant to `kind` are read:
///   spike, spike_cluster: count, amplitude_low, amplitude_high, downward
///   level_shift: magnitude
///   periodicity_break: new_period, amplitude (0 means keep the baseline's)
///   volatility_burst: sigma_multiplier, min_sigma
///   drift: slope
struct AnomalyParams {
  std::size_t count = 1;
  double amplitude_low = 0.0;
  double amplitude_high = 0.0;
  bool downward = false;
  double magnitude = 0.0;
  double new_period = 0.0;
  double amplitude = 0.0;
  double sigma_multiplier = 1.0;
  double min_sigma = 0.1;
  double slope = 0.0;
};

struct AnomalySpec {
  AnomalyKind kind = AnomalyKind::spike;
  Interval interval;
  AnomalyParams params;
  std::string description;
  std::string canonical_tag;
};

/// Fills description and canonical_tag from kind and params.
AnomalySpec make_spec(AnomalyKind kind, Interval interval, AnomalyParams params);

std::string describe_spec(const AnomalySpec& spec);
std::string canonical_tag(const AnomalySpec& spec);

/// Returns a copy of `normal` with the anomaly applied on spec.interval only.
/// `parts` is required for volatility_burst when the baseline has noise and
/// for periodicity_break when it has a seasonal component.
std::vector<double> inject_anomaly(std::span<const double> normal, const AnomalySpec& spec,
                                   std::uint64_t rng_seed, const BaselineParts* parts = nullptr);

/// Template text naming trend direction, dominant period (or "no clear
/// seasonality") and a noise bucket in {low, moderate, high}.
std::string describe_global(const BaselineConfig& cfg, std::span<const double> normal);

/// Dominant autocorrelation lag of the linearly detrended series, or nullopt
/// when no peak reaches `min_strength`.
std::optional<std::size_t> dominant_period(std::span<const double> series, double min_strength = 0.3);

inline constexpr const char* kEngineVersion = "tsforge-synth/1";

struct PairedSeries {
  std::string id;
  std::vector<double> normal;
  std::vector<double> abnormal;
  std::vector<AnomalySpec> specs;
  std::string global_descriptor;
  nlohmann::json manifest;
};

/// Injects every spec of `plan` into a freshly generated baseline. Each spec
/// uses its own RNG stream derived from cfg.seed.
PairedSeries generate_pair(const std::string& id, const BaselineConfig& cfg,
                           const std::vector<AnomalySpec>& plan);

/// Ranges from which a random baseline and anomaly plan are drawn.
struct ForgeRanges {
  std::size_t length = kDefaultLength;
  double slope_abs_max = 0.002;
  double period_min = 16;
  double period_max = 96;
  double amplitude_min = 0.2;
  double amplitude_max = 1.5;
  double seasonal_probability = 0.7;
  double noise_sigma_min = 0.02;
  double noise_sigma_max = 0.2;
  std::size_t anomalies_min = 0;
  std::size_t anomalies_max = 3;
  std::size_t interval_min = 8;
  std::size_t interval_max = 40;
  std::vector<AnomalyKind> kinds{AnomalyKind::spike,           AnomalyKind::spike_cluster,
                                 AnomalyKind::level_shift,     AnomalyKind::periodicity_break,
                                 AnomalyKind::volatility_burst, AnomalyKind::drift};
};

BaselineConfig sample_baseline_config(const ForgeRanges& ranges, std::uint64_t seed);
std::vector<AnomalySpec> sample_plan(const ForgeRanges& ranges, const BaselineConfig& cfg,
                                     std::uint64_t seed);

// Persistence (one JSON object per pair; floats rounded to 6 decimals).
nlohmann::json to_json(const AnomalySpec& spec);
AnomalySpec spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BaselineConfig& cfg);
BaselineConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PairedSeries& pair);
PairedSeries pair_from_json(const nlohmann::json& j);

}  // namespace tsforge::synth
