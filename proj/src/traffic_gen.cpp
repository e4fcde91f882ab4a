#include "lrdcast/traffic_gen.hpp"

#include <algorithm>
#include <thread>

namespace lrdcast {

void ParetoSpec::validate() const {
  if (!(shape_a > 1.0) || !std::isfinite(shape_a)) throw std::invalid_argument("Pareto shape must be > 1");
  if (!(scale_xm >= 1.0) || !std::isfinite(scale_xm)) throw std::invalid_argument("Pareto scale must be >= 1 tick");
}

void SourceSpec::validate() const {
  on.validate();
  off.validate();
  if (!(rate_mbps > 0.0)) throw std::invalid_argument("source rate must be positive");
}

std::string to_string(DemandLevel level) {
  switch (level) {
    case DemandLevel::high: return "high";
    case DemandLevel::medium: return "medium";
    case DemandLevel::low: return "low";
  }
  return "?";
}

DemandLevel parse_demand_level(const std::string& name) {
  if (name == "high") return DemandLevel::high;
  if (name == "medium") return DemandLevel::medium;
  if (name == "low") return DemandLevel::low;
  throw std::invalid_argument("unknown scenario '" + name + "' (expected high, medium or low)");
}

ScenarioSpec ScenarioSpec::preset(DemandLevel level, std::size_t num_ticks, std::uint64_t seed) {
  ScenarioSpec s;
  s.name = level;
  s.num_ticks = num_ticks;
  s.seed = seed;
  switch (level) {
    case DemandLevel::high:
      s.num_sources_M = 750;
      s.shape_a = 1.04;
      break;
    case DemandLevel::medium:
      s.num_sources_M = 500;
      s.shape_a = 1.6;
      break;
    case DemandLevel::low:
      s.num_sources_M = 250;
      s.shape_a = 1.9;
      break;
  }
  return s;
}

SourceSpec ScenarioSpec::source() const {
  return SourceSpec{ParetoSpec{shape_a, scale_xm}, ParetoSpec{shape_a, scale_xm}, rate_mbps};
}

double ScenarioSpec::hurst() const { return hurst_from_shape(shape_a); }

void ScenarioSpec::validate() const {
  if (num_sources_M < 1) throw std::invalid_argument("scenario needs at least one source");
  if (tick_ms < 1) throw std::invalid_argument("scenario tick must be positive");
  if (num_ticks < 1) throw std::invalid_argument("scenario needs at least one tick");
  source().validate();
  const double h = hurst();
  if (!(h > 0.5 && h < 1.0)) throw std::invalid_argument("scenario shape must give 0.5 < H < 1");
}

double pareto_sample(const ParetoSpec& spec, double u) {
  if (!(u > 0.0 && u <= 1.0)) throw std::invalid_argument("pareto_sample: u must lie in (0, 1]");
  return spec.scale_xm * std::pow(u, -1.0 / spec.shape_a);
}

std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Trace superpose(std::span<const std::vector<std::uint8_t>> sources, double rate_mbps, std::int64_t tick_ms,
                TimestampMs start_time_ms) {
  if (sources.empty()) throw std::invalid_argument("superpose: no sources");
  const std::size_t n = sources.front().size();
  Trace out;
  out.start_time_ms = start_time_ms;
  out.granularity_ms = tick_ms;
  out.values.assign(n, 0.0);
  for (const auto& w : sources) {
    if (w.size() != n) throw std::invalid_argument("superpose: sources differ in length");
    for (std::size_t t = 0; t < n; ++t) out.values[t] += w[t];
  }
  for (double& v : out.values) v *= rate_mbps;
  return out;
}

Trace aggregate(const Trace& trace, std::size_t m, std::size_t* dropped_ticks) {
  if (m < 1) throw std::invalid_argument("aggregate: block size must be >= 1");
  const std::size_t blocks = trace.size() / m;
  if (dropped_ticks) *dropped_ticks = trace.size() - blocks * m;
  Trace out;
  out.start_time_ms = trace.start_time_ms;
  out.granularity_ms = trace.granularity_ms * static_cast<std::int64_t>(m);
  out.values.resize(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) sum += trace.values[b * m + i];
    out.values[b] = sum / static_cast<double>(m);
  }
  return out;
}

double hurst_from_shape(double a) {
  if (!(a > 1.0 && a < 3.0)) throw std::invalid_argument("hurst_from_shape: shape must lie in (1, 3)");
  return (3.0 - a) / 2.0;
}

Trace generate_scenario(const ScenarioSpec& spec, unsigned threads) {
  spec.validate();
  const SourceSpec source = spec.source();
  const std::size_t total = spec.warmup_ticks + spec.num_ticks;
  const std::size_t sources = static_cast<std::size_t>(spec.num_sources_M);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, sources));

  // Each worker accumulates ON-interval boundaries into its own difference
  // array; counts are small integers, so the reduction is exact in any order.
  std::vector<std::vector<double>> diffs(threads, std::vector<double>(total + 1, 0.0));
  auto work = [&](unsigned worker) {
    auto& diff = diffs[worker];
    for (std::size_t m = worker; m < sources; m += threads) {
      std::mt19937_64 rng(substream_seed(spec.seed, m));
      for_each_on_run(source, total, rng, [&diff](std::size_t b, std::size_t e) {
        diff[b] += 1.0;
        diff[e] -= 1.0;
      });
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(work, w);
  }
  for (unsigned w = 1; w < threads; ++w) {
    for (std::size_t t = 0; t <= total; ++t) diffs[0][t] += diffs[w][t];
  }

  Trace out;
  out.start_time_ms = spec.start_time_ms;
  out.granularity_ms = spec.tick_ms;
  out.values.resize(spec.num_ticks);
  double level = 0.0;
  for (std::size_t t = 0; t < total; ++t) {
    level += diffs[0][t];
    if (t >= spec.warmup_ticks) out.values[t - spec.warmup_ticks] = level * spec.rate_mbps;
  }
  return out;
}

Trace generate_dataset(ScenarioSpec spec, std::int64_t granularity_ms, std::size_t num_samples, unsigned threads) {
  if (granularity_ms < spec.tick_ms || granularity_ms % spec.tick_ms != 0) {
    throw std::invalid_argument("granularity must be a positive multiple of the base tick");
  }
  const auto factor = static_cast<std::size_t>(granularity_ms / spec.tick_ms);
  spec.num_ticks = num_samples * factor;
  Trace base = generate_scenario(spec, threads);
  return factor == 1 ? base : aggregate(base, factor);
}

}  // namespace lrdcast
