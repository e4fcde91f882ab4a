#pragma once

#include <span>
#include <vector>

#include "lrdcast/nn/ndarray.hpp"
#include "lrdcast/trace_io.hpp"

namespace lrdcast {

/// Calendar components per timestamp: month, day, weekday, hour, minute,
/// second, millisecond. Each is mapped affinely onto [-0.5, 0.5].
inline constexpr std::size_t kTimeFeatureCount = 7;

std::vector<double> time_features(TimestampMs t);

/// One row per timestamp, kTimeFeatureCount columns.
nn::NdArray time_embed(std::span<const TimestampMs> timestamps);

/// Features for `count` ticks starting at `start`, spaced `granularity_ms`.
nn::NdArray time_embed(TimestampMs start, std::int64_t granularity_ms, std::size_t count);

}  // namespace lrdcast
