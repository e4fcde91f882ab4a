#include "lrdcast/selfsim_stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace lrdcast {

namespace {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

LineFit least_squares(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

void require_non_constant(std::span<const double> series, const char* who) {
  if (series.empty()) throw std::invalid_argument(std::string(who) + ": empty series");
  const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
  if (*lo == *hi) throw std::invalid_argument(std::string(who) + ": constant series");
}

std::vector<std::size_t> resolve_blocks(std::span<const double> series, std::span<const std::size_t> blocks,
                                        const char* who) {
  std::vector<std::size_t> out = blocks.empty() ? default_block_sizes(series.size())
                                                : std::vector<std::size_t>(blocks.begin(), blocks.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] < 2) throw std::invalid_argument(std::string(who) + ": block sizes must be >= 2");
    if (i > 0 && out[i] <= out[i - 1]) {
      throw std::invalid_argument(std::string(who) + ": block sizes must be strictly increasing");
    }
  }
  if (!out.empty() && out.back() * 2 > series.size()) {
    throw std::invalid_argument(std::string(who) + ": largest block leaves fewer than 2 blocks");
  }
  return out;
}

HurstEstimate finish(HurstMethod method, double H, double slope, double r2, std::vector<std::size_t> used) {
  HurstEstimate est;
  est.method = method;
  est.slope = slope;
  est.regression_r2 = r2;
  est.block_sizes = std::move(used);
  est.H = std::clamp(H, 0.01, 0.99);
  est.clamped = est.H != H;
  return est;
}

}  // namespace

std::string to_string(HurstMethod method) {
  return method == HurstMethod::rescaled_range ? "rescaled_range" : "variance_time";
}

std::vector<std::size_t> default_block_sizes(std::size_t n, std::size_t min_block, std::size_t max_block) {
  if (max_block == 0) max_block = n / 10;
  std::vector<std::size_t> out;
  for (double b = static_cast<double>(min_block); b <= static_cast<double>(max_block) + 1e-9; b *= std::sqrt(2.0)) {
    const auto size = static_cast<std::size_t>(std::llround(b));
    if (size > max_block) break;
    if (out.empty() || size > out.back()) out.push_back(size);
  }
  return out;
}

std::vector<double> autocorrelation(std::span<const double> series, std::size_t max_lag) {
  if (series.size() <= max_lag) throw std::invalid_argument("autocorrelation: series shorter than max_lag + 1");
  require_non_constant(series, "autocorrelation");
  const double n = static_cast<double>(series.size());
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / n;
  std::vector<double> c(max_lag + 1, 0.0);
  for (std::size_t k = 0; k <= max_lag; ++k) {
    double s = 0.0;
    for (std::size_t t = k; t < series.size(); ++t) s += (series[t] - mean) * (series[t - k] - mean);
    c[k] = s / n;
  }
  const double c0 = c[0];
  for (double& v : c) v /= c0;
  return c;
}

HurstEstimate variance_time_hurst(std::span<const double> series, std::span<const std::size_t> block_sizes,
                                  bool bias_correction) {
  require_non_constant(series, "variance_time_hurst");
  const auto blocks = resolve_blocks(series, block_sizes, "variance_time_hurst");

  std::vector<double> log_m, log_var, counts;
  std::vector<std::size_t> used;
  for (std::size_t m : blocks) {
    const std::size_t k = series.size() / m;
    if (k < 2) continue;
    std::vector<double> means(k);
    for (std::size_t b = 0; b < k; ++b) {
      means[b] = std::accumulate(series.begin() + static_cast<std::ptrdiff_t>(b * m),
                                 series.begin() + static_cast<std::ptrdiff_t>((b + 1) * m), 0.0) /
                 static_cast<double>(m);
    }
    const double mu = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(k);
    double ss = 0.0;
    for (double v : means) ss += (v - mu) * (v - mu);
    const double var = ss / static_cast<double>(k - 1);
    if (!(var > 0.0)) continue;
    log_m.push_back(std::log(static_cast<double>(m)));
    log_var.push_back(std::log(var));
    counts.push_back(static_cast<double>(k));
    used.push_back(m);
  }
  if (used.size() < 3) throw std::invalid_argument("variance_time_hurst: fewer than 3 usable block sizes");

  LineFit fit = least_squares(log_m, log_var);
  double H = 1.0 + fit.slope / 2.0;
  if (bias_correction) {
    std::vector<double> corrected(log_var.size());
    for (int iter = 0; iter < 50; ++iter) {
      const double h = std::clamp(H, 0.01, 0.99);
      for (std::size_t i = 0; i < log_var.size(); ++i) {
        const double k = counts[i];
        corrected[i] = log_var[i] - std::log((1.0 - std::pow(k, 2.0 * h - 2.0)) * k / (k - 1.0));
      }
      fit = least_squares(log_m, corrected);
      const double next = 1.0 + fit.slope / 2.0;
      const bool done = std::abs(next - H) < 1e-10;
      H = next;
      if (done) break;
    }
  }
  return finish(HurstMethod::variance_time, H, fit.slope, fit.r2, std::move(used));
}

HurstEstimate rescaled_range_hurst(std::span<const double> series, std::span<const std::size_t> block_sizes) {
  require_non_constant(series, "rescaled_range_hurst");
  const auto blocks = resolve_blocks(series, block_sizes, "rescaled_range_hurst");

  std::vector<double> log_n, log_rs;
  std::vector<std::size_t> used;
  for (std::size_t n : blocks) {
    const std::size_t k = series.size() / n;
    double rs_sum = 0.0;
    std::size_t rs_count = 0;
    for (std::size_t b = 0; b < k; ++b) {
      const auto block = series.subspan(b * n, n);
      const double mean = std::accumulate(block.begin(), block.end(), 0.0) / static_cast<double>(n);
      double z = 0.0, zmax = 0.0, zmin = 0.0, ss = 0.0;
      for (double v : block) {
        z += v - mean;
        zmax = std::max(zmax, z);
        zmin = std::min(zmin, z);
        ss += (v - mean) * (v - mean);
      }
      const double s = std::sqrt(ss / static_cast<double>(n - 1));
      if (!(s > 0.0)) continue;
      rs_sum += (zmax - zmin) / s;
      ++rs_count;
    }
    if (rs_count == 0) continue;
    log_n.push_back(std::log(static_cast<double>(n)));
    log_rs.push_back(std::log(rs_sum / static_cast<double>(rs_count)));
    used.push_back(n);
  }
  if (used.empty()) throw std::invalid_argument("rescaled_range_hurst: all blocks are degenerate");
  if (used.size() < 3) throw std::invalid_argument("rescaled_range_hurst: fewer than 3 usable block sizes");
  const LineFit fit = least_squares(log_n, log_rs);
  return finish(HurstMethod::rescaled_range, fit.slope, fit.slope, fit.r2, std::move(used));
}

double fbm_covariance(double s, double t, double H) {
  const double h2 = 2.0 * H;
  return 0.5 * (std::pow(s, h2) + std::pow(t, h2) - std::pow(std::abs(s - t), h2));
}

double fgn_autocovariance(std::size_t k, double H) {
  // cov(B(k+1) - B(k), B(1) - B(0)); the B(0) terms vanish.
  const double kk = static_cast<double>(k);
  return fbm_covariance(kk + 1.0, 1.0, H) - fbm_covariance(kk, 1.0, H);
}

std::vector<double> fgn_oracle(std::size_t n, double H, std::uint64_t seed) {
  if (n < 1 || n > (std::size_t{1} << 15)) throw std::invalid_argument("fgn_oracle: n must lie in [1, 2^15]");
  if (!(H > 0.0 && H < 1.0)) throw std::invalid_argument("fgn_oracle: H must lie in (0, 1)");

  std::vector<double> gamma(n);
  for (std::size_t k = 0; k < n; ++k) gamma[k] = fgn_autocovariance(k, H);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(n), phi, prev;
  phi.reserve(n);
  prev.reserve(n);
  double v = gamma[0];
  x[0] = std::sqrt(v) * normal(rng);
  for (std::size_t k = 1; k < n; ++k) {
    double acc = gamma[k];
    for (std::size_t j = 1; j < k; ++j) acc -= prev[j - 1] * gamma[k - j];
    const double reflection = acc / v;
    phi.assign(k, 0.0);
    for (std::size_t j = 1; j < k; ++j) phi[j - 1] = prev[j - 1] - reflection * prev[k - j - 1];
    phi[k - 1] = reflection;
    v *= 1.0 - reflection * reflection;
    if (!(v > 0.0)) {
      throw std::runtime_error("fgn_oracle: covariance factorization failed (H=" + std::to_string(H) +
                               ", n=" + std::to_string(n) + ")");
    }
    double mean = 0.0;
    for (std::size_t j = 1; j <= k; ++j) mean += phi[j - 1] * x[k - j];
    x[k] = mean + std::sqrt(v) * normal(rng);
    prev.swap(phi);
  }
  return x;
}

}  // namespace lrdcast
