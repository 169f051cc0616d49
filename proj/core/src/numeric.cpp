#include "tsforge/numeric.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "tsforge/util/text.hpp"

namespace tsforge::numeric {

Normalized zscore_normalize(std::span<const double> series) {
  if (series.empty()) throw std::invalid_argument("zscore_normalize: empty series");
  const auto n = static_cast<double>(series.size());
  double sum = 0.0;
  for (double x : series) sum += x;
  const double mean = sum / n;
  double ss = 0.0;
  for (double x : series) ss += (x - mean) * (x - mean);
  NormStats stats{mean, std::sqrt(ss / n), false};
  stats.degenerate = stats.stddev < kDegenerateSigma;
  return {apply_stats(series, stats), stats};
}

std::vector<double> apply_stats(std::span<const double> values, const NormStats& stats) {
  std::vector<double> out(values.size(), 0.0);
  if (stats.degenerate) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - stats.mean) / stats.stddev;
  return out;
}

std::int64_t quantize(double value, std::int64_t scale) {
  return static_cast<std::int64_t>(std::round(value * static_cast<double>(scale)));
}

std::string textualize_window(std::span<const double> normalized, const SerializationConfig& cfg) {
  if (cfg.scale < 1) throw std::invalid_argument("serialization scale must be >= 1");
  std::string out;
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    if (i) out += cfg.delimiter;
    out += fmt::format("{}", quantize(normalized[i], cfg.scale));
  }
  return out;
}

std::vector<double> parse_textualized(std::string_view text, const SerializationConfig& cfg) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto next = text.find(cfg.delimiter, pos);
    auto tok = text::trim(text.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
      throw std::invalid_argument(fmt::format("not an integer token: '{}'", tok));
    }
    out.push_back(static_cast<double>(v) / static_cast<double>(cfg.scale));
    if (next == std::string_view::npos) break;
    pos = next + cfg.delimiter.size();
  }
  return out;
}

namespace {
std::string two_digits(double v) {
  auto s = fmt::format("{:.2f}", v);
  return s == "-0.00" ? "0.00" : s;
}
}  // namespace

std::string paired_data_string(std::span<const double> current, std::span<const double> normal,
                               const SerializationConfig& cfg) {
  if (current.size() != normal.size()) {
    throw std::invalid_argument(
        fmt::format("paired_data_string: length mismatch ({} vs {})", current.size(), normal.size()));
  }
  if (current.empty()) throw std::invalid_argument("paired_data_string: empty window");
  std::string out;
  for (std::size_t i = 0; i < current.size(); ++i) {
    if (i) out += cfg.delimiter;
    out += two_digits(current[i]);
    out += '(';
    out += two_digits(normal[i]);
    out += ')';
  }
  return out;
}

std::uint64_t token_cost_estimate(std::size_t length, const CostModel& model) {
  if (length < 1) throw std::invalid_argument("token_cost_estimate: length must be >= 1");
  if (!(model.alpha > 0.0) || model.overhead < 0.0) throw std::invalid_argument("invalid cost model");
  return static_cast<std::uint64_t>(std::ceil(model.alpha * static_cast<double>(length) + model.overhead));
}

}  // namespace tsforge::numeric
