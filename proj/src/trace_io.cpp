#include "lrdcast/trace_io.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace lrdcast {

namespace {

constexpr TimestampMs kMsPerDay = 86'400'000;

int parse_int(std::string_view text, std::size_t pos, std::size_t len, bool& ok) {
  int value = 0;
  if (pos + len > text.size()) {
    ok = false;
    return 0;
  }
  auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, value);
  if (ec != std::errc{} || ptr != text.data() + pos + len) ok = false;
  return value;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::vector<TimestampMs> Trace::timestamps() const {
  std::vector<TimestampMs> out(values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = timestamp(i);
  return out;
}

void validate(const Trace& trace) {
  if (trace.values.empty()) throw std::invalid_argument("trace is empty");
  if (trace.granularity_ms <= 0) throw std::invalid_argument("trace granularity must be positive");
  for (std::size_t i = 0; i < trace.values.size(); ++i) {
    const double v = trace.values[i];
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument("trace value at index " + std::to_string(i) +
                                  " is negative or non-finite");
    }
  }
}

TraceFormatError::TraceFormatError(const std::string& path, std::size_t line, const std::string& what)
    : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

std::string format_timestamp(TimestampMs ms) {
  using namespace std::chrono;
  TimestampMs day = ms / kMsPerDay;
  TimestampMs rem = ms % kMsPerDay;
  if (rem < 0) {
    rem += kMsPerDay;
    --day;
  }
  const year_month_day ymd{sys_days{days{day}}};
  const int h = static_cast<int>(rem / 3'600'000);
  const int mi = static_cast<int>(rem / 60'000 % 60);
  const int s = static_cast<int>(rem / 1000 % 60);
  const int milli = static_cast<int>(rem % 1000);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%03d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), h, mi, s, milli);
  return buf;
}

TimestampMs parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  bool ok = text.size() >= 19 && text[4] == '-' && text[7] == '-' && (text[10] == 'T' || text[10] == ' ') &&
            text[13] == ':' && text[16] == ':';
  const int y = parse_int(text, 0, 4, ok);
  const int mo = parse_int(text, 5, 2, ok);
  const int d = parse_int(text, 8, 2, ok);
  const int h = parse_int(text, 11, 2, ok);
  const int mi = parse_int(text, 14, 2, ok);
  const int s = parse_int(text, 17, 2, ok);
  int milli = 0;
  if (ok && text.size() > 19) {
    if (text[19] != '.' || text.size() != 23) {
      ok = false;
    } else {
      milli = parse_int(text, 20, 3, ok);
    }
  }
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ok || !ymd.ok() || h > 23 || mi > 59 || s > 59) {
    throw std::invalid_argument("malformed timestamp '" + std::string(text) + "'");
  }
  const TimestampMs days_since_epoch = sys_days{ymd}.time_since_epoch().count();
  return days_since_epoch * kMsPerDay + h * 3'600'000LL + mi * 60'000LL + s * 1000LL + milli;
}

void write_trace(const Trace& trace, const std::filesystem::path& path) {
  validate(trace);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << "timestamp,demand\n";
  char num[64];
  for (std::size_t i = 0; i < trace.values.size(); ++i) {
    auto res = std::to_chars(num, num + sizeof num, trace.values[i]);
    out << format_timestamp(trace.timestamp(i)) << ',';
    out.write(num, res.ptr - num);
    out << '\n';
  }
  out.flush();
  if (!out) throw std::runtime_error("I/O error while writing '" + path.string() + "'");
}

Trace read_trace(const std::filesystem::path& path, std::int64_t fallback_granularity_ms) {
  std::ifstream in(path, std::ios::binary);
  const std::string name = path.string();
  if (!in) throw std::runtime_error("cannot open '" + name + "' for reading");

  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw TraceFormatError(name, 1, "empty file");
  ++lineno;
  if (trim(line) != "timestamp,demand") throw TraceFormatError(name, 1, "expected header 'timestamp,demand'");

  Trace trace;
  std::vector<TimestampMs> stamps;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view row = trim(line);
    if (row.empty()) continue;
    const auto comma = row.find(',');
    if (comma == std::string_view::npos) throw TraceFormatError(name, lineno, "missing ',' separator");
    TimestampMs ts = 0;
    try {
      ts = parse_timestamp(trim(row.substr(0, comma)));
    } catch (const std::invalid_argument& e) {
      throw TraceFormatError(name, lineno, e.what());
    }
    const std::string_view num = trim(row.substr(comma + 1));
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
    if (ec != std::errc{} || ptr != num.data() + num.size()) {
      throw TraceFormatError(name, lineno, "malformed demand value '" + std::string(num) + "'");
    }
    if (!std::isfinite(v) || v < 0.0) throw TraceFormatError(name, lineno, "demand must be finite and >= 0");
    if (stamps.size() == 1) {
      trace.granularity_ms = ts - stamps[0];
      if (trace.granularity_ms <= 0) throw TraceFormatError(name, lineno, "timestamps must be increasing");
    } else if (stamps.size() > 1 && ts - stamps.back() != trace.granularity_ms) {
      throw TraceFormatError(name, lineno, "uneven timestamp spacing");
    }
    stamps.push_back(ts);
    trace.values.push_back(v);
  }
  if (stamps.empty()) throw TraceFormatError(name, lineno, "empty file (no data rows)");
  trace.start_time_ms = stamps.front();
  if (stamps.size() == 1) trace.granularity_ms = fallback_granularity_ms;
  return trace;
}

void SplitSpec::validate() const {
  if (!(train_frac > 0 && val_frac > 0 && test_frac > 0)) {
    throw std::invalid_argument("split fractions must be positive");
  }
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must sum to 1");
  }
}

TraceSplit split_chronological(const Trace& trace, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = trace.size();
  if (n < 10) throw std::invalid_argument("split requires at least 10 samples");
  // The epsilon absorbs representation error, e.g. 60000 * 0.1.
  const auto part = [n](double frac) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * frac + 1e-9));
  };
  const std::size_t n_val = part(spec.val_frac);
  const std::size_t n_test = part(spec.test_frac);
  const std::size_t n_train = n - n_val - n_test;

  auto slice = [&trace](std::size_t begin, std::size_t count) {
    Trace t;
    t.granularity_ms = trace.granularity_ms;
    t.start_time_ms = trace.timestamp(begin);
    t.values.assign(trace.values.begin() + static_cast<std::ptrdiff_t>(begin),
                    trace.values.begin() + static_cast<std::ptrdiff_t>(begin + count));
    return t;
  };
  return {slice(0, n_train), slice(n_train, n_val), slice(n_train + n_val, n_test)};
}

Standardizer::Standardizer(double mean, double std) : mean_(mean), std_(std) {
  if (!(std > 0.0) || !std::isfinite(std) || !std::isfinite(mean)) {
    throw std::invalid_argument("standardizer requires finite mean and std > 0");
  }
}

Standardizer Standardizer::fit(std::span<const double> train) {
  if (train.size() < 2) throw std::invalid_argument("standardizer needs at least 2 samples");
  const double n = static_cast<double>(train.size());
  const double mean = std::accumulate(train.begin(), train.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : train) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 0.0)) throw std::invalid_argument("cannot standardize a constant series");
  return Standardizer(mean, sd);
}

std::vector<double> Standardizer::apply(std::span<const double> values) const {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = apply(values[i]);
  return out;
}

std::vector<double> Standardizer::invert(std::span<const double> values) const {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = invert(values[i]);
  return out;
}

}  // namespace lrdcast
