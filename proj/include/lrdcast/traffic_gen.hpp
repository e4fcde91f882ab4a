#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lrdcast/trace_io.hpp"

namespace lrdcast {

/// Pareto period-length law: P(X > x) = (scale / x)^shape for x >= scale.
struct ParetoSpec {
  double shape_a = 1.6;
  double scale_xm = 1.0;  // ticks

  void validate() const;
  double mean() const { return shape_a * scale_xm / (shape_a - 1.0); }
};

struct SourceSpec {
  ParetoSpec on;
  ParetoSpec off;
  double rate_mbps = 1.0;

  void validate() const;
  /// The smallest tail index dominates the aggregate's long-range dependence.
  double dominant_shape() const { return std::min(on.shape_a, off.shape_a); }
};

enum class DemandLevel { high, medium, low };

std::string to_string(DemandLevel level);
DemandLevel parse_demand_level(const std::string& name);

struct ScenarioSpec {
  DemandLevel name = DemandLevel::medium;
  int num_sources_M = 500;
  double shape_a = 1.6;
  std::int64_t tick_ms = 10;
  std::size_t num_ticks = 60'000;
  std::uint64_t seed = 1;
  double scale_xm = 1.0;
  double rate_mbps = 1.0;
  std::size_t warmup_ticks = 10'000;
  TimestampMs start_time_ms = kDefaultStartMs;

  /// Preset (M, a) pairs: high (750, 1.04), medium (500, 1.6), low (250, 1.9).
  static ScenarioSpec preset(DemandLevel level, std::size_t num_ticks = 60'000, std::uint64_t seed = 1);

  SourceSpec source() const;
  double hurst() const;
  void validate() const;
};

/// Inverse-CDF sample: scale * u^(-1/shape). Requires u in (0, 1].
double pareto_sample(const ParetoSpec& spec, double u);

/// Uniform draw on (0, 1] with 53 random bits; bit-exact across platforms.
template <class URBG>
double uniform_open_closed(URBG& rng) {
  static_assert(URBG::max() - URBG::min() == ~std::uint64_t{0}, "expects a 64-bit generator");
  return 1.0 - static_cast<double>((rng() - URBG::min()) >> 11) * 0x1.0p-53;
}

/// Derives the seed of an independent substream (splitmix64 over seed and index).
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index);

/// Walks the alternating ON/OFF renewal process over [0, total_ticks) and calls
/// `on_run(begin, end)` for every ON interval, clipped to the horizon. The first
/// state is ON with probability 1/2; every period length is ceil(Pareto draw).
template <class URBG, class OnRun>
void for_each_on_run(const SourceSpec& spec, std::size_t total_ticks, URBG& rng, OnRun&& on_run) {
  bool on = ((rng() - URBG::min()) >> 63) != 0;
  std::size_t t = 0;
  while (t < total_ticks) {
    const double len = std::ceil(pareto_sample(on ? spec.on : spec.off, uniform_open_closed(rng)));
    const double room = static_cast<double>(total_ticks - t);
    const std::size_t end = len >= room ? total_ticks : t + static_cast<std::size_t>(len);
    if (on) on_run(t, end);
    t = end;
    on = !on;
  }
}

/// Binary ON/OFF series W(t) of length `num_ticks`, after discarding `warmup_ticks`.
template <class URBG>
std::vector<std::uint8_t> generate_source(const SourceSpec& spec, std::size_t num_ticks, URBG& rng,
                                          std::size_t warmup_ticks = 0) {
  spec.validate();
  if (num_ticks < 1) throw std::invalid_argument("generate_source: num_ticks must be >= 1");
  std::vector<std::uint8_t> w(num_ticks, 0);
  for_each_on_run(spec, warmup_ticks + num_ticks, rng, [&](std::size_t b, std::size_t e) {
    if (e <= warmup_ticks) return;
    b = std::max(b, warmup_ticks);
    std::fill(w.begin() + static_cast<std::ptrdiff_t>(b - warmup_ticks),
              w.begin() + static_cast<std::ptrdiff_t>(e - warmup_ticks), std::uint8_t{1});
  });
  return w;
}

/// Per-tick demand = rate * number of sources ON.
Trace superpose(std::span<const std::vector<std::uint8_t>> sources, double rate_mbps, std::int64_t tick_ms = 10,
                TimestampMs start_time_ms = kDefaultStartMs);

/// Block means over non-overlapping windows of m ticks. A trailing partial
/// block is dropped; its size is reported through `dropped_ticks`.
Trace aggregate(const Trace& trace, std::size_t m, std::size_t* dropped_ticks = nullptr);

/// H = (3 - a) / 2 for 1 < a < 3.
double hurst_from_shape(double a);

/// Superposition of M independent sources at the base tick. Sources run on
/// substreams of `spec.seed`, so the result is bit-identical for any
/// `threads` value.
Trace generate_scenario(const ScenarioSpec& spec, unsigned threads = 0);

/// Generates `num_samples` values at `granularity_ms` by producing the base
/// trace at `spec.tick_ms` and aggregating.
Trace generate_dataset(ScenarioSpec spec, std::int64_t granularity_ms, std::size_t num_samples,
                       unsigned threads = 0);

}  // namespace lrdcast
