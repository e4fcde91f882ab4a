#include "lrdcast/time_features.hpp"

#include <chrono>

namespace lrdcast {

namespace {

double unit(double v, double max) { return v / max - 0.5; }

}  // namespace

std::vector<double> time_features(TimestampMs t) {
  using namespace std::chrono;
  const sys_time<milliseconds> tp{milliseconds{t}};
  const auto day = floor<days>(tp);
  const year_month_day ymd{day};
  const weekday wd{day};
  const hh_mm_ss hms{tp - day};
  return {
      unit(static_cast<double>(static_cast<unsigned>(ymd.month()) - 1), 11.0),
      unit(static_cast<double>(static_cast<unsigned>(ymd.day()) - 1), 30.0),
      unit(static_cast<double>(wd.iso_encoding() - 1), 6.0),
      unit(static_cast<double>(hms.hours().count()), 23.0),
      unit(static_cast<double>(hms.minutes().count()), 59.0),
      unit(static_cast<double>(hms.seconds().count()), 59.0),
      unit(static_cast<double>(hms.subseconds().count()), 999.0),
  };
}

nn::NdArray time_embed(std::span<const TimestampMs> timestamps) {
  nn::NdArray out = nn::NdArray::matrix(timestamps.size(), kTimeFeatureCount);
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    const auto f = time_features(timestamps[i]);
    std::copy(f.begin(), f.end(), out.row(i).begin());
  }
  return out;
}

nn::NdArray time_embed(TimestampMs start, std::int64_t granularity_ms, std::size_t count) {
  std::vector<TimestampMs> ts(count);
  for (std::size_t i = 0; i < count; ++i) ts[i] = start + static_cast<TimestampMs>(i) * granularity_ms;
  return time_embed(ts);
}

}  // namespace lrdcast
