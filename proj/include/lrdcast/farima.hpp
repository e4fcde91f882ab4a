#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lrdcast/selfsim_stats.hpp"

namespace lrdcast {

enum class FracDiffMode { naive, fft };
enum class ArmaMethod { css, whittle };
enum class OrderCriterion { aic, bic };

std::string to_string(ArmaMethod method);
ArmaMethod parse_arma_method(const std::string& name);

/// Coefficients a_0..a_{L-1} of (1 - B)^d.
struct FracDiffCoeffs {
  double d = 0.0;
  std::vector<double> coeffs;
};

/// a_0 = 1, a_j = a_{j-1} (j - 1 - d) / j. Equivalent to the Gamma-ratio
/// form without evaluating Gamma at large arguments.
FracDiffCoeffs fracdiff_coeffs(double d, std::size_t L);

/// Causal truncated convolution y_t = sum_{j<=t} a_j x_{t-j} (x_{-1} = 0).
std::vector<double> fracdiff_apply(std::span<const double> series, double d, FracDiffMode mode = FracDiffMode::fft);

/// Applies (1 - B)^(-d); exact inverse of fracdiff_apply on finite windows.
std::vector<double> fracdiff_invert(std::span<const double> series, double d, FracDiffMode mode = FracDiffMode::fft);

struct DEstimate {
  double d = 0.0;
  bool clamped = false;
  HurstEstimate rescaled_range;
};

/// d = H_RS - 1/2 clamped to [-0.49, 0.49]. Windows shorter than 320 use
/// blocks up to n/4 so that at least three block sizes remain.
DEstimate estimate_d_preliminary(std::span<const double> series);

struct LevinsonResult {
  std::vector<double> phi;                  // AR(p) coefficients
  double innovation_variance = 0.0;         // order-p prediction error variance
  std::vector<double> variances;            // prediction error variances for orders 0..p
  std::vector<double> reflection;           // partial autocorrelations for orders 1..p
};

/// Solves the Yule-Walker Toeplitz system for autocovariances gamma(0..p)
/// in O(p^2). Throws std::domain_error if the sequence is not positive definite.
LevinsonResult durbin_levinson(std::span<const double> autocov);

/// phi(B) (1 - B)^d (Y_t - mean) = psi(B) eps_t with
/// phi(B) = 1 - sum phi_j B^j and psi(B) = 1 + sum psi_j B^j.
struct FarimaModel {
  int p = 0;
  double d = 0.0;
  int q = 0;
  std::vector<double> phi;
  std::vector<double> psi;
  double sigma2_eps = 1.0;
  double mean = 0.0;

  std::size_t n_obs = 0;
  double objective = 0.0;
  bool converged = true;
  bool reflected = false;  // roots were reflected into the admissible region
  bool d_clamped = false;

  void validate() const;
  double aic() const;
  double bic() const;
};

/// True when every root of 1 - sum c_j z^j lies strictly outside |z| = 1 + margin.
bool ar_polynomial_is_stationary(std::span<const double> phi, double margin = 1e-6);
/// True when every root of 1 + sum c_j z^j lies strictly outside |z| = 1 + margin.
bool ma_polynomial_is_invertible(std::span<const double> psi, double margin = 1e-6);

struct ArmaFitOptions {
  ArmaMethod method = ArmaMethod::css;
  bool demean = true;
  int max_iterations = 2000;
};

/// Fits the ARMA(p, q) part. CSS minimizes the conditional sum of squared
/// innovations; Whittle minimizes the profiled spectral objective. Both run
/// a Nelder-Mead simplex started from Durbin-Levinson AR estimates and zero
/// MA terms.
FarimaModel fit_arma(std::span<const double> series, int p, int q, const ArmaFitOptions& options = {});

struct OrderSelection {
  int p = 0;
  int q = 0;
  double criterion = 0.0;
};

/// Tries p = q in 0..p_max and pure AR (p, 0); returns the best criterion value.
OrderSelection select_order(std::span<const double> series, int p_max, OrderCriterion criterion = OrderCriterion::aic,
                            ArmaMethod method = ArmaMethod::css);

struct FarimaFitOptions {
  ArmaMethod method = ArmaMethod::css;
  std::optional<double> fixed_d;  // skip the rescaled-range estimate
};

/// Demean, estimate d, fractionally difference (FFT), fit ARMA(p, q).
FarimaModel fit_farima(std::span<const double> window, int p, int q, const FarimaFitOptions& options = {});

/// Integer differencing order for ARIMA: 1 when first differences have a
/// smaller sample variance than the series itself, else 0.
int choose_arima_d(std::span<const double> window);

/// ARIMA(p, d, q) with integer d; `d` is chosen by choose_arima_d when unset.
FarimaModel fit_arima(std::span<const double> window, int p, int q, std::optional<int> d = std::nullopt,
                      ArmaMethod method = ArmaMethod::css);

/// pi_0..pi_L of the AR(infinity) form pi(B) = phi(B) (1 - B)^d / psi(B).
std::vector<double> ar_infinity_weights(const FarimaModel& model, std::size_t L);

/// h-step forecasts from the truncated AR(infinity) form with one weight per
/// window value; forecasts are fed back for later steps.
std::vector<double> forecast(const FarimaModel& model, std::span<const double> window, std::size_t h);

}  // namespace lrdcast
