#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lrdcast {

enum class HurstMethod { rescaled_range, variance_time };

std::string to_string(HurstMethod method);

struct HurstEstimate {
  double H = 0.5;
  HurstMethod method = HurstMethod::rescaled_range;
  std::vector<std::size_t> block_sizes;  // sizes that entered the regression
  double slope = 0.0;                    // raw log-log regression slope
  double regression_r2 = 0.0;
  bool clamped = false;                  // H was pulled into (0.01, 0.99)

  /// Correlation decay exponent: H = 1 - beta/2.
  double beta() const { return 2.0 * (1.0 - H); }
  /// Matching fractional-differencing order d = H - 1/2.
  double d() const { return H - 0.5; }
};

/// Geometric grid from `min_block` to `max_block` with ratio sqrt(2), rounded
/// and de-duplicated (about 6.6 sizes per decade). `max_block` = 0 means n/10.
std::vector<std::size_t> default_block_sizes(std::size_t n, std::size_t min_block = 8, std::size_t max_block = 0);

/// Sample autocorrelation r(0..max_lag) with the biased 1/n normalization.
std::vector<double> autocorrelation(std::span<const double> series, std::size_t max_lag);

/// Slope of log var(X^(m)) against log m gives -beta; H = 1 - beta/2.
///
/// With `bias_correction` the block-mean variances are divided by
/// (1 - k^(2H-2)) k/(k-1), the expected shrinkage of the sample variance of
/// k block means under exact self-similarity, and H is iterated to a fixed
/// point. Without it the plain regression is returned.
HurstEstimate variance_time_hurst(std::span<const double> series, std::span<const std::size_t> block_sizes = {},
                                  bool bias_correction = true);

/// Classical rescaled-range estimate: average R/S over non-overlapping
/// blocks for each size, H = slope of log(R/S) against log n.
HurstEstimate rescaled_range_hurst(std::span<const double> series, std::span<const std::size_t> block_sizes = {});

/// cov(B_H(s), B_H(t)) = (s^2H + t^2H - |s-t|^2H) / 2.
double fbm_covariance(double s, double t, double H);

/// Autocovariance of unit-variance fractional Gaussian noise at lag k.
double fgn_autocovariance(std::size_t k, double H);

/// Exact fractional Gaussian noise sample of length n (n <= 2^15). The
/// Toeplitz covariance of the increments is factorized by the Levinson
/// recursion (a sequential Cholesky), costing O(n^2).
std::vector<double> fgn_oracle(std::size_t n, double H, std::uint64_t seed);

}  // namespace lrdcast
