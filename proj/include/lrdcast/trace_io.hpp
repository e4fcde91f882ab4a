#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace lrdcast {

/// Milliseconds since the Unix epoch (UTC).
using TimestampMs = std::int64_t;

/// 2024-01-01T00:00:00.000 UTC, the default origin of generated traces.
inline constexpr TimestampMs kDefaultStartMs = 1704067200000;

/// Evenly spaced series of aggregate demand values (Mbps averaged over a tick).
struct Trace {
  TimestampMs start_time_ms = kDefaultStartMs;
  std::int64_t granularity_ms = 10;
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  TimestampMs timestamp(std::size_t i) const noexcept {
    return start_time_ms + static_cast<TimestampMs>(i) * granularity_ms;
  }
  std::vector<TimestampMs> timestamps() const;
};

/// Throws std::invalid_argument when the trace violates its invariants
/// (empty, non-positive granularity, negative or non-finite values).
void validate(const Trace& trace);

class TraceFormatError : public std::runtime_error {
 public:
  TraceFormatError(const std::string& path, std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

std::string format_timestamp(TimestampMs ms);
/// Parses `YYYY-MM-DDTHH:MM:SS.mmm` (the fractional part is optional).
TimestampMs parse_timestamp(std::string_view text);

/// Writes the `timestamp,demand` CSV. Demand values use the shortest
/// representation that round-trips exactly.
void write_trace(const Trace& trace, const std::filesystem::path& path);

/// Reads a trace CSV. Granularity is inferred from the first two rows; a
/// single-row file takes `fallback_granularity_ms`.
Trace read_trace(const std::filesystem::path& path, std::int64_t fallback_granularity_ms = 10);

struct SplitSpec {
  double train_frac = 0.7;
  double val_frac = 0.1;
  double test_frac = 0.2;

  void validate() const;
};

struct TraceSplit {
  Trace train;
  Trace val;
  Trace test;
};

/// Contiguous chronological split. Validation and test sizes are
/// floor(n * frac); the flooring remainder goes to the training part.
TraceSplit split_chronological(const Trace& trace, const SplitSpec& spec = {});

/// Affine standardization fit on a training split (sample std, n-1).
class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(double mean, double std);

  static Standardizer fit(std::span<const double> train);
  static Standardizer fit(const Trace& train) { return fit(train.values); }

  double mean() const noexcept { return mean_; }
  double std() const noexcept { return std_; }

  double apply(double x) const noexcept { return (x - mean_) / std_; }
  double invert(double z) const noexcept { return z * std_ + mean_; }
  std::vector<double> apply(std::span<const double> values) const;
  std::vector<double> invert(std::span<const double> values) const;

 private:
  double mean_ = 0.0;
  double std_ = 1.0;
};

}  // namespace lrdcast
