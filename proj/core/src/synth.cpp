#include "tsforge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "tsforge/util/jsonl.hpp"
#include "tsforge/util/rng.hpp"

namespace tsforge::synth {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double trend_at(const Trend& trend, std::size_t t) {
  const auto x = static_cast<double>(t);
  return std::visit(
      [x](const auto& tr) -> double {
        using T = std::decay_t<decltype(tr)>;
        if constexpr (std::is_same_v<T, NoTrend>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, LinearTrend>) {
          return tr.slope * x;
        } else {
          const auto b = static_cast<double>(tr.breakpoint);
          if (x < b) return tr.slope_before * x;
          return tr.slope_before * b + tr.slope_after * (x - b);
        }
      },
      trend);
}

// Least-squares line through (t, x_t); returns {intercept, slope}.
std::pair<double, double> fit_line(std::span<const double> x) {
  const auto n = static_cast<double>(x.size());
  if (x.size() < 2) return {x.empty() ? 0.0 : x[0], 0.0};
  const double tbar = (n - 1.0) / 2.0;
  const double xbar = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double dt = static_cast<double>(t) - tbar;
    sxy += dt * (x[t] - xbar);
    sxx += dt * dt;
  }
  const double slope = sxy / sxx;
  return {xbar - slope * tbar, slope};
}

std::vector<double> detrend(std::span<const double> x) {
  auto [a, b] = fit_line(x);
  std::vector<double> out(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) out[t] = x[t] - (a + b * static_cast<double>(t));
  return out;
}

double stddev(std::span<const double> x) {
  if (x.empty()) return 0.0;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid))) / 2.0;
  }
  return m;
}

// Robust noise scale from second differences (smooth components cancel).
double noise_scale(std::span<const double> x) {
  if (x.size() < 3) return 0.0;
  std::vector<double> d2(x.size() - 2);
  for (std::size_t t = 0; t + 2 < x.size(); ++t) d2[t] = x[t + 2] - 2.0 * x[t + 1] + x[t];
  const double med = median(d2);
  for (double& v : d2) v = std::abs(v - med);
  return 1.4826 * median(d2) / std::sqrt(6.0);
}

void check_interval(const Interval& iv, std::size_t n) {
  if (iv.start >= iv.end || iv.end > n) {
    throw std::invalid_argument(
        fmt::format("anomaly interval [{}, {}) out of bounds for series of length {}", iv.start, iv.end, n));
  }
}

void check_amplitudes(const AnomalyParams& p) {
  if (!(p.amplitude_low > 0.0) || p.amplitude_low > p.amplitude_high) {
    throw std::invalid_argument(fmt::format("spike amplitudes must satisfy 0 < low <= high, got [{}, {}]",
                                            p.amplitude_low, p.amplitude_high));
  }
}

}  // namespace

void validate(const BaselineConfig& cfg, std::size_t min_length) {
  if (cfg.length < std::max<std::size_t>(min_length, 1)) {
    throw std::invalid_argument(fmt::format("series length {} is below the minimum {}", cfg.length, min_length));
  }
  if (!(cfg.noise_sigma >= 0.0) || !std::isfinite(cfg.noise_sigma)) {
    throw std::invalid_argument(fmt::format("noise_sigma must be finite and >= 0, got {}", cfg.noise_sigma));
  }
  if (cfg.seasonal) {
    const double max_period = static_cast<double>(cfg.length) / 4.0;
    if (cfg.seasonal->period < 8.0 || cfg.seasonal->period > max_period) {
      throw std::invalid_argument(fmt::format("seasonal period {} outside [8, {}]", cfg.seasonal->period, max_period));
    }
    if (!(cfg.seasonal->amplitude >= 0.0)) {
      throw std::invalid_argument("seasonal amplitude must be >= 0");
    }
  }
  if (const auto* pw = std::get_if<PiecewiseTrend>(&cfg.trend); pw && pw->breakpoint >= cfg.length) {
    throw std::invalid_argument(fmt::format("trend breakpoint {} outside series of length {}", pw->breakpoint, cfg.length));
  }
}

std::vector<double> BaselineParts::sum() const {
  std::vector<double> out(trend.size());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = trend[t] + seasonal[t] + noise[t];
  return out;
}

BaselineParts generate_components(const BaselineConfig& cfg) {
  validate(cfg);
  const std::size_t n = cfg.length;
  BaselineParts parts;
  parts.trend.resize(n);
  parts.seasonal.assign(n, 0.0);
  parts.noise.assign(n, 0.0);
  parts.sinusoid = cfg.seasonal;
  parts.noise_sigma = cfg.noise_sigma;
  for (std::size_t t = 0; t < n; ++t) parts.trend[t] = cfg.level + trend_at(cfg.trend, t);
  if (cfg.seasonal) {
    for (std::size_t t = 0; t < n; ++t) {
      parts.seasonal[t] = cfg.seasonal->amplitude * std::sin(kTwoPi * static_cast<double>(t) / cfg.seasonal->period);
    }
  }
  if (cfg.noise_sigma > 0.0) {
    auto rng = make_rng(cfg.seed, "baseline-noise");
    std::normal_distribution<double> gauss(0.0, cfg.noise_sigma);
    for (auto& v : parts.noise) v = gauss(rng);
  }
  return parts;
}

std::vector<double> generate_baseline(const BaselineConfig& cfg) { return generate_components(cfg).sum(); }

std::string to_string(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::spike: return "spike";
    case AnomalyKind::spike_cluster: return "spike_cluster";
    case AnomalyKind::level_shift: return "level_shift";
    case AnomalyKind::periodicity_break: return "periodicity_break";
    case AnomalyKind::volatility_burst: return "volatility_burst";
    case AnomalyKind::drift: return "drift";
  }
  return "unknown";
}

AnomalyKind anomaly_kind_from_string(std::string_view s) {
  for (auto k : {AnomalyKind::spike, AnomalyKind::spike_cluster, AnomalyKind::level_shift,
                 AnomalyKind::periodicity_break, AnomalyKind::volatility_burst, AnomalyKind::drift}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument(fmt::format("unknown anomaly kind '{}'", s));
}

std::string describe_spec(const AnomalySpec& spec) {
  const auto& p = spec.params;
  const char* dir = p.downward ? "downward" : "upward";
  switch (spec.kind) {
    case AnomalyKind::spike:
      if (p.count <= 1) {
        return fmt::format("An isolated {} spike anomaly with amplitude from {:.2f} to {:.2f}", dir,
                           p.amplitude_low, p.amplitude_high);
      }
      return fmt::format("Isolated {} spike anomalies, featuring {} separate spikes with amplitudes from {:.2f} to {:.2f}",
                         dir, p.count, p.amplitude_low, p.amplitude_high);
    case AnomalyKind::spike_cluster:
      return fmt::format("A local continuous {} spike anomaly, featuring {} consecutive spikes with amplitudes from {:.2f} to {:.2f}",
                         dir, p.count, p.amplitude_low, p.amplitude_high);
    case AnomalyKind::level_shift:
      return fmt::format("A sustained level shift anomaly, with the level moving {} by {:.2f}",
                         p.magnitude < 0 ? "down" : "up", std::abs(p.magnitude));
    case AnomalyKind::periodicity_break:
      return fmt::format("A periodicity break anomaly, where the seasonal period changes to {:.1f} steps", p.new_period);
    case AnomalyKind::volatility_burst:
      return fmt::format("A volatility burst anomaly, with noise amplified {:.1f} times", p.sigma_multiplier);
    case AnomalyKind::drift:
      return fmt::format("A gradual drift anomaly, drifting {} at {:.3f} per step", p.slope < 0 ? "downward" : "upward",
                         std::abs(p.slope));
  }
  return {};
}

std::string canonical_tag(const AnomalySpec& spec) {
  const auto& p = spec.params;
  switch (spec.kind) {
    case AnomalyKind::spike: return p.downward ? "spike_down" : "spike_up";
    case AnomalyKind::spike_cluster: return p.downward ? "spike_cluster_down" : "spike_cluster_up";
    case AnomalyKind::level_shift: return p.magnitude < 0 ? "level_shift_down" : "level_shift_up";
    case AnomalyKind::periodicity_break: return "periodicity_break";
    case AnomalyKind::volatility_burst: return "volatility_burst";
    case AnomalyKind::drift: return p.slope < 0 ? "drift_down" : "drift_up";
  }
  return {};
}

AnomalySpec make_spec(AnomalyKind kind, Interval interval, AnomalyParams params) {
  AnomalySpec spec{kind, interval, params, {}, {}};
  spec.description = describe_spec(spec);
  spec.canonical_tag = canonical_tag(spec);
  return spec;
}

std::vector<double> inject_anomaly(std::span<const double> normal, const AnomalySpec& spec, std::uint64_t rng_seed,
                                   const BaselineParts* parts) {
  const auto& iv = spec.interval;
  const auto& p = spec.params;
  check_interval(iv, normal.size());
  if (parts && parts->trend.size() != normal.size()) {
    throw std::invalid_argument("baseline parts do not match series length");
  }
  std::vector<double> out(normal.begin(), normal.end());
  Rng rng(rng_seed);

  switch (spec.kind) {
    case AnomalyKind::spike:
    case AnomalyKind::spike_cluster: {
      check_amplitudes(p);
      if (p.count < 1 || p.count > iv.length()) {
        throw std::invalid_argument(
            fmt::format("spike count {} must be in [1, {}] for interval length {}", p.count, iv.length(), iv.length()));
      }
      std::vector<std::size_t> steps;
      if (spec.kind == AnomalyKind::spike_cluster) {
        std::uniform_int_distribution<std::size_t> first(iv.start, iv.end - p.count);
        const auto s = first(rng);
        for (std::size_t k = 0; k < p.count; ++k) steps.push_back(s + k);
      } else {
        std::vector<std::size_t> all(iv.length());
        std::iota(all.begin(), all.end(), iv.start);
        std::sample(all.begin(), all.end(), std::back_inserter(steps), p.count, rng);
      }
      std::uniform_real_distribution<double> amp(p.amplitude_low, p.amplitude_high);
      const double sign = p.downward ? -1.0 : 1.0;
      for (auto t : steps) {
        // uniform_real_distribution is half-open; clamp keeps the bound closed.
        const double a = std::clamp(amp(rng), p.amplitude_low, p.amplitude_high);
        out[t] = normal[t] + sign * a;
      }
      break;
    }
    case AnomalyKind::level_shift:
      for (std::size_t t = iv.start; t < iv.end; ++t) out[t] = normal[t] + p.magnitude;
      break;
    case AnomalyKind::drift:
      for (std::size_t t = iv.start; t < iv.end; ++t) {
        out[t] = normal[t] + p.slope * static_cast<double>(t - iv.start + 1);
      }
      break;
    case AnomalyKind::volatility_burst: {
      if (!(p.sigma_multiplier >= 0.0)) throw std::invalid_argument("sigma_multiplier must be >= 0");
      if (parts && parts->noise_sigma > 0.0) {
        for (std::size_t t = iv.start; t < iv.end; ++t) {
          out[t] = normal[t] + (p.sigma_multiplier - 1.0) * parts->noise[t];
        }
      } else {
        const double sigma = p.sigma_multiplier * p.min_sigma;
        if (!(sigma > 0.0)) throw std::invalid_argument("volatility burst on a noiseless series needs min_sigma > 0");
        std::normal_distribution<double> gauss(0.0, sigma);
        for (std::size_t t = iv.start; t < iv.end; ++t) out[t] = normal[t] + gauss(rng);
      }
      break;
    }
    case AnomalyKind::periodicity_break: {
      if (!(p.new_period > 1.0)) throw std::invalid_argument("periodicity_break needs new_period > 1");
      const bool has_season = parts && parts->sinusoid && parts->sinusoid->amplitude > 0.0;
      const double amplitude = p.amplitude > 0.0 ? p.amplitude : (has_season ? parts->sinusoid->amplitude : 0.0);
      if (!(amplitude > 0.0)) {
        throw std::invalid_argument("periodicity_break on a non-seasonal series needs amplitude > 0");
      }
      // Keep the phase continuous at the interval start.
      const double phase0 = has_season ? kTwoPi * static_cast<double>(iv.start) / parts->sinusoid->period : 0.0;
      for (std::size_t t = iv.start; t < iv.end; ++t) {
        const double old_seasonal = has_season ? parts->seasonal[t] : 0.0;
        const double fresh = amplitude * std::sin(phase0 + kTwoPi * static_cast<double>(t - iv.start) / p.new_period);
        out[t] = normal[t] - old_seasonal + fresh;
      }
      break;
    }
  }
  return out;
}

std::optional<std::size_t> dominant_period(std::span<const double> series, double min_strength) {
  const auto x = detrend(series);
  const std::size_t n = x.size();
  double energy = 0.0;
  for (double v : x) energy += v * v;
  if (n < 8 || energy < 1e-18 * static_cast<double>(n)) return std::nullopt;

  const std::size_t max_lag = n / 2;
  std::vector<double> acf(max_lag + 2, 0.0);
  for (std::size_t k = 1; k <= max_lag + 1 && k < n; ++k) {
    double s = 0.0;
    for (std::size_t t = 0; t + k < n; ++t) s += x[t] * x[t + k];
    acf[k] = s / energy;
  }
  std::optional<std::size_t> best;
  double best_value = min_strength;
  for (std::size_t k = 2; k <= max_lag; ++k) {
    if (acf[k] > acf[k - 1] && acf[k] >= acf[k + 1] && acf[k] >= best_value) {
      best_value = acf[k];
      best = k;
    }
  }
  return best;
}

std::string describe_global(const BaselineConfig& /*cfg*/, std::span<const double> normal) {
  const std::size_t n = normal.size();
  const auto [intercept, slope] = fit_line(normal);
  const auto resid = detrend(normal);
  const double total_change = slope * static_cast<double>(n > 0 ? n - 1 : 0);
  const double resid_sd = stddev(resid);

  std::string trend_phrase = "a stable level with no clear trend";
  if (std::abs(total_change) > std::max(1e-9, 0.5 * resid_sd)) {
    trend_phrase = total_change > 0 ? "an increasing trend" : "a decreasing trend";
  }

  std::string season_phrase = "no clear seasonality";
  if (auto period = dominant_period(normal)) {
    season_phrase = fmt::format("a dominant period of about {} steps", *period);
  }

  const double scale = stddev(normal);
  const double ratio = scale > 1e-12 ? noise_scale(normal) / scale : 0.0;
  const char* noise = ratio < 0.15 ? "low" : (ratio < 0.4 ? "moderate" : "high");

  return fmt::format("The series spans {} steps and shows {}, {}, and {} noise.", n, trend_phrase, season_phrase, noise);
}

PairedSeries generate_pair(const std::string& id, const BaselineConfig& cfg, const std::vector<AnomalySpec>& plan) {
  validate(cfg, kMinPairLength);
  for (const auto& spec : plan) check_interval(spec.interval, cfg.length);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    for (std::size_t j = i + 1; j < plan.size(); ++j) {
      if (plan[i].interval.intersects(plan[j].interval)) {
        throw std::invalid_argument(fmt::format("anomaly intervals [{}, {}) and [{}, {}) overlap",
                                                plan[i].interval.start, plan[i].interval.end,
                                                plan[j].interval.start, plan[j].interval.end));
      }
    }
  }

  const auto parts = generate_components(cfg);
  PairedSeries pair;
  pair.id = id;
  pair.normal = parts.sum();
  pair.abnormal = pair.normal;
  pair.specs = plan;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    pair.abnormal = inject_anomaly(pair.abnormal, plan[i], derive_seed(cfg.seed, "anomaly", i), &parts);
  }
  pair.global_descriptor = describe_global(cfg, pair.normal);

  nlohmann::json specs = nlohmann::json::array();
  for (const auto& s : plan) specs.push_back(to_json(s));
  pair.manifest = {{"engine_version", kEngineVersion}, {"config", to_json(cfg)}, {"seed", cfg.seed}, {"plan", specs}};
  return pair;
}

BaselineConfig sample_baseline_config(const ForgeRanges& r, std::uint64_t seed) {
  auto rng = make_rng(seed, "baseline-config");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  BaselineConfig cfg;
  cfg.length = r.length;
  cfg.seed = seed;
  cfg.level = uniform(-1.0, 1.0);
  switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
    case 0: cfg.trend = NoTrend{}; break;
    case 1: cfg.trend = LinearTrend{uniform(-r.slope_abs_max, r.slope_abs_max)}; break;
    default: {
      std::uniform_int_distribution<std::size_t> bp(r.length / 4, 3 * r.length / 4);
      cfg.trend = PiecewiseTrend{bp(rng), uniform(-r.slope_abs_max, r.slope_abs_max),
                                 uniform(-r.slope_abs_max, r.slope_abs_max)};
    }
  }
  if (u01(rng) < r.seasonal_probability) {
    const double hi = std::min(r.period_max, static_cast<double>(r.length) / 4.0);
    cfg.seasonal = Sinusoid{std::round(uniform(std::max(8.0, r.period_min), hi)), uniform(r.amplitude_min, r.amplitude_max)};
  }
  cfg.noise_sigma = uniform(r.noise_sigma_min, r.noise_sigma_max);
  return cfg;
}

std::vector<AnomalySpec> sample_plan(const ForgeRanges& r, const BaselineConfig& cfg, std::uint64_t seed) {
  auto rng = make_rng(seed, "anomaly-plan");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  auto sign = [&] { return u01(rng) < 0.5 ? -1.0 : 1.0; };

  if (r.kinds.empty()) return {};
  const std::size_t k = std::uniform_int_distribution<std::size_t>(r.anomalies_min, r.anomalies_max)(rng);
  const double ref = std::max({0.25, cfg.seasonal ? cfg.seasonal->amplitude : 0.0, 3.0 * cfg.noise_sigma});

  std::vector<AnomalySpec> plan;
  for (std::size_t i = 0; i < k; ++i) {
    const auto kind = r.kinds[std::uniform_int_distribution<std::size_t>(0, r.kinds.size() - 1)(rng)];
    const std::size_t len = std::uniform_int_distribution<std::size_t>(r.interval_min, r.interval_max)(rng);
    if (len + 2 > cfg.length) continue;
    std::optional<Interval> placed;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const auto s = std::uniform_int_distribution<std::size_t>(1, cfg.length - len - 1)(rng);
      Interval iv{s, s + len};
      if (std::none_of(plan.begin(), plan.end(), [&](const auto& p) { return p.interval.intersects(iv); })) placed = iv;
    }
    if (!placed) continue;

    AnomalyParams p;
    switch (kind) {
      case AnomalyKind::spike:
      case AnomalyKind::spike_cluster:
        p.count = kind == AnomalyKind::spike
                      ? 1
                      : std::uniform_int_distribution<std::size_t>(2, std::min<std::size_t>(8, len))(rng);
        p.amplitude_low = std::round(uniform(2.0, 3.0) * ref * 100.0) / 100.0;
        p.amplitude_high = std::round((p.amplitude_low + uniform(0.5, 2.0) * ref) * 100.0) / 100.0;
        p.downward = u01(rng) < 0.3;
        break;
      case AnomalyKind::level_shift: p.magnitude = sign() * uniform(1.5, 3.0) * ref; break;
      case AnomalyKind::periodicity_break:
        if (cfg.seasonal) {
          p.new_period = cfg.seasonal->period * (u01(rng) < 0.5 ? uniform(0.3, 0.6) : uniform(1.6, 2.5));
        } else {
          p.new_period = uniform(6.0, 16.0);
          p.amplitude = uniform(1.0, 2.0) * ref;
        }
        break;
      case AnomalyKind::volatility_burst:
        p.sigma_multiplier = uniform(3.0, 6.0);
        p.min_sigma = 0.3 * ref;
        break;
      case AnomalyKind::drift: p.slope = sign() * uniform(1.5, 3.0) * ref / static_cast<double>(len); break;
    }
    plan.push_back(make_spec(kind, *placed, p));
  }
  std::sort(plan.begin(), plan.end(), [](const auto& a, const auto& b) { return a.interval.start < b.interval.start; });
  return plan;
}

nlohmann::json to_json(const AnomalySpec& spec) {
  const auto& p = spec.params;
  nlohmann::json params;
  switch (spec.kind) {
    case AnomalyKind::spike:
    case AnomalyKind::spike_cluster:
      params = {{"count", p.count}, {"amplitude_low", p.amplitude_low}, {"amplitude_high", p.amplitude_high},
                {"downward", p.downward}};
      break;
    case AnomalyKind::level_shift: params = {{"magnitude", p.magnitude}}; break;
    case AnomalyKind::periodicity_break: params = {{"new_period", p.new_period}, {"amplitude", p.amplitude}}; break;
    case AnomalyKind::volatility_burst:
      params = {{"sigma_multiplier", p.sigma_multiplier}, {"min_sigma", p.min_sigma}};
      break;
    case AnomalyKind::drift: params = {{"slope", p.slope}}; break;
  }
  return {{"kind", to_string(spec.kind)},
          {"start", spec.interval.start},
          {"end", spec.interval.end},
          {"params", params},
          {"description", spec.description},
          {"canonical_tag", spec.canonical_tag}};
}

AnomalySpec spec_from_json(const nlohmann::json& j) {
  AnomalySpec spec;
  spec.kind = anomaly_kind_from_string(j.at("kind").get<std::string>());
  spec.interval = {j.at("start").get<std::size_t>(), j.at("end").get<std::size_t>()};
  const auto& pj = j.value("params", nlohmann::json::object());
  auto& p = spec.params;
  p.count = pj.value("count", p.count);
  p.amplitude_low = pj.value("amplitude_low", p.amplitude_low);
  p.amplitude_high = pj.value("amplitude_high", p.amplitude_high);
  p.downward = pj.value("downward", p.downward);
  p.magnitude = pj.value("magnitude", p.magnitude);
  p.new_period = pj.value("new_period", p.new_period);
  p.amplitude = pj.value("amplitude", p.amplitude);
  p.sigma_multiplier = pj.value("sigma_multiplier", p.sigma_multiplier);
  p.min_sigma = pj.value("min_sigma", p.min_sigma);
  p.slope = pj.value("slope", p.slope);
  spec.description = j.value("description", describe_spec(spec));
  spec.canonical_tag = j.value("canonical_tag", canonical_tag(spec));
  return spec;
}

nlohmann::json to_json(const BaselineConfig& cfg) {
  nlohmann::json trend = std::visit(
      [](const auto& tr) -> nlohmann::json {
        using T = std::decay_t<decltype(tr)>;
        if constexpr (std::is_same_v<T, NoTrend>) {
          return {{"type", "none"}};
        } else if constexpr (std::is_same_v<T, LinearTrend>) {
          return {{"type", "linear"}, {"slope", tr.slope}};
        } else {
          return {{"type", "piecewise"},
                  {"breakpoint", tr.breakpoint},
                  {"slope_before", tr.slope_before},
                  {"slope_after", tr.slope_after}};
        }
      },
      cfg.trend);
  nlohmann::json seasonal = nullptr;
  if (cfg.seasonal) seasonal = {{"period", cfg.seasonal->period}, {"amplitude", cfg.seasonal->amplitude}};
  return {{"length", cfg.length}, {"level", cfg.level},         {"trend", trend},
          {"seasonal", seasonal}, {"noise_sigma", cfg.noise_sigma}, {"seed", cfg.seed}};
}

BaselineConfig config_from_json(const nlohmann::json& j) {
  BaselineConfig cfg;
  cfg.length = j.value("length", cfg.length);
  cfg.level = j.value("level", 0.0);
  cfg.noise_sigma = j.value("noise_sigma", 0.0);
  cfg.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("trend") && j["trend"].is_object()) {
    const auto& t = j["trend"];
    const auto type = t.value("type", std::string("none"));
    if (type == "linear") {
      cfg.trend = LinearTrend{t.value("slope", 0.0)};
    } else if (type == "piecewise") {
      cfg.trend = PiecewiseTrend{t.value("breakpoint", std::size_t{0}), t.value("slope_before", 0.0),
                                 t.value("slope_after", 0.0)};
    } else if (type != "none") {
      throw std::invalid_argument(fmt::format("unknown trend type '{}'", type));
    }
  }
  if (j.contains("seasonal") && j["seasonal"].is_object()) {
    cfg.seasonal = Sinusoid{j["seasonal"].at("period").get<double>(), j["seasonal"].value("amplitude", 1.0)};
  }
  return cfg;
}

nlohmann::json to_json(const PairedSeries& pair) {
  auto rounded = [](const std::vector<double>& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (double x : v) arr.push_back(round6(x));
    return arr;
  };
  nlohmann::json specs = nlohmann::json::array();
  for (const auto& s : pair.specs) specs.push_back(to_json(s));
  return {{"id", pair.id},
          {"normal", rounded(pair.normal)},
          {"abnormal", rounded(pair.abnormal)},
          {"specs", specs},
          {"global_descriptor", pair.global_descriptor},
          {"manifest", pair.manifest}};
}

PairedSeries pair_from_json(const nlohmann::json& j) {
  PairedSeries p;
  p.id = j.at("id").get<std::string>();
  p.normal = j.at("normal").get<std::vector<double>>();
  p.abnormal = j.at("abnormal").get<std::vector<double>>();
  if (p.normal.size() != p.abnormal.size()) {
    throw std::invalid_argument(fmt::format("pair {}: normal and abnormal lengths differ", p.id));
  }
  for (const auto& s : j.at("specs")) p.specs.push_back(spec_from_json(s));
  p.global_descriptor = j.value("global_descriptor", std::string{});
  p.manifest = j.value("manifest", nlohmann::json::object());
  return p;
}

}  // namespace tsforge::synth
