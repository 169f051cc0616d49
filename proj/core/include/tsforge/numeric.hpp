#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tsforge::numeric {

/// Population statistics of the full series.
struct NormStats {
  double mean = 0.0;
  double stddev = 0.0;
  bool degenerate = false;  // stddev below kDegenerateSigma; output is all zeros
};

inline constexpr double kDegenerateSigma = 1e-12;

struct Normalized {
  std::vector<double> values;
  NormStats stats;
};

/// (x - mean) / stddev with the population standard deviation. Throws
/// std::invalid_argument on an empty series.
Normalized zscore_normalize(std::span<const double> series);

/// Applies previously computed statistics to a slice of the same series.
std::vector<double> apply_stats(std::span<const double> values, const NormStats& stats);

struct SerializationConfig {
  std::int64_t scale = 100;
  std::string delimiter = ", ";
};

/// Rounds half away from zero after scaling.
std::int64_t quantize(double value, std::int64_t scale);

/// "123, 124, 127, 128" for [1.23, 1.24, 1.27, 1.28] at scale 100.
std::string textualize_window(std::span<const double> normalized, const SerializationConfig& cfg = {});

/// Inverse of textualize_window up to quantization: integers divided by scale.
std::vector<double> parse_textualized(std::string_view text, const SerializationConfig& cfg = {});

/// "cur(norm)" per step with two fractional digits, joined by cfg.delimiter.
/// Throws std::invalid_argument on empty input or a length mismatch.
std::string paired_data_string(std::span<const double> current, std::span<const double> normal,
                               const SerializationConfig& cfg = {});

/// Average subword tokens per serialized integer (alpha) and fixed delimiter
/// overhead (c).
struct CostModel {
  double alpha = 2.0;
  double overhead = 0.0;
};

/// ceil(alpha * length + overhead).
std::uint64_t token_cost_estimate(std::size_t length, const CostModel& model);

}  // namespace tsforge::numeric
