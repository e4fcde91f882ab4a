#include "lrdcast/farima.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "lrdcast/fft.hpp"

namespace lrdcast {

namespace {

using cplx = std::complex<double>;

constexpr double kPenalty = 1e12;

// Reciprocal roots of 1 + sum c_j z^j, i.e. eigenvalues of the companion
// matrix of z^k + c_1 z^(k-1) + ... + c_k.
std::vector<cplx> reciprocal_roots(std::span<const double> c) {
  const auto k = static_cast<Eigen::Index>(c.size());
  if (k == 0) return {};
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index j = 0; j < k; ++j) companion(0, j) = -c[static_cast<std::size_t>(j)];
  for (Eigen::Index i = 1; i < k; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  if (solver.info() != Eigen::Success) return std::vector<cplx>(c.size(), cplx(2.0, 0.0));
  std::vector<cplx> out;
  for (Eigen::Index i = 0; i < k; ++i) out.push_back(solver.eigenvalues()[i]);
  return out;
}

bool roots_outside(std::span<const double> c, double margin) {
  for (const cplx& lambda : reciprocal_roots(c)) {
    if (std::abs(lambda) * (1.0 + margin) >= 1.0) return false;
  }
  return true;
}

// prod (1 - lambda_i z) = 1 + sum c_j z^j
std::vector<double> from_reciprocal_roots(std::span<const cplx> roots) {
  std::vector<cplx> poly{cplx(1.0, 0.0)};
  for (const cplx& lambda : roots) {
    std::vector<cplx> next(poly.size() + 1, cplx(0.0, 0.0));
    for (std::size_t j = 0; j < poly.size(); ++j) {
      next[j] += poly[j];
      next[j + 1] -= lambda * poly[j];
    }
    poly = std::move(next);
  }
  std::vector<double> c(roots.size());
  for (std::size_t j = 0; j < c.size(); ++j) c[j] = poly[j + 1].real();
  return c;
}

// Moves every reciprocal root inside radius 1/(1 + 1e-3): roots outside the
// unit circle are mirrored to 1/conj(root), boundary roots are shrunk.
void reflect_into_unit_disc(std::vector<double>& c, bool& changed) {
  constexpr double kMaxRadius = 1.0 / (1.0 + 1e-3);
  auto roots = reciprocal_roots(c);
  changed = false;
  for (cplx& lambda : roots) {
    const double r = std::abs(lambda);
    if (r < kMaxRadius) continue;
    changed = true;
    if (r > 1.0) lambda = 1.0 / std::conj(lambda);
    if (std::abs(lambda) > kMaxRadius) lambda *= kMaxRadius / std::abs(lambda);
  }
  if (changed) c = from_reciprocal_roots(roots);
}

std::vector<double> negated(std::span<const double> v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = -v[i];
  return out;
}

std::vector<double> biased_autocovariance(std::span<const double> y, std::size_t max_lag) {
  const double n = static_cast<double>(y.size());
  std::vector<double> g(max_lag + 1, 0.0);
  for (std::size_t k = 0; k <= max_lag && k < y.size(); ++k) {
    double s = 0.0;
    for (std::size_t t = k; t < y.size(); ++t) s += y[t] * y[t - k];
    g[k] = s / n;
  }
  return g;
}

// Conditional sum of squares of innovations for t >= p.
double css_sum(std::span<const double> y, std::span<const double> phi, std::span<const double> psi,
               std::vector<double>& e) {
  const std::size_t p = phi.size(), q = psi.size(), n = y.size();
  e.assign(n, 0.0);
  double ss = 0.0;
  for (std::size_t t = p; t < n; ++t) {
    double v = y[t];
    for (std::size_t j = 1; j <= p; ++j) v -= phi[j - 1] * y[t - j];
    for (std::size_t k = 1; k <= q && k <= t; ++k) v -= psi[k - 1] * e[t - k];
    e[t] = v;
    ss += v * v;
  }
  return ss;
}

struct WhittleData {
  std::vector<double> freq;
  std::vector<double> periodogram;
};

WhittleData periodogram(std::span<const double> y) {
  const std::size_t n = y.size();
  const auto spectrum = fft::forward_real(y);
  WhittleData w;
  const std::size_t m = (n - 1) / 2;
  for (std::size_t j = 1; j <= m; ++j) {
    w.freq.push_back(2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n));
    w.periodogram.push_back(std::norm(spectrum[j]) / (2.0 * std::numbers::pi * static_cast<double>(n)));
  }
  return w;
}

// |psi(e^{-i lambda})|^2 / |phi(e^{-i lambda})|^2
double spectral_shape(double lambda, std::span<const double> phi, std::span<const double> psi) {
  cplx ar(1.0, 0.0), ma(1.0, 0.0);
  for (std::size_t j = 0; j < phi.size(); ++j) ar -= phi[j] * std::polar(1.0, -lambda * static_cast<double>(j + 1));
  for (std::size_t j = 0; j < psi.size(); ++j) ma += psi[j] * std::polar(1.0, -lambda * static_cast<double>(j + 1));
  return std::norm(ma) / std::norm(ar);
}

// Profiled Whittle objective: log sigma2_hat + mean log g. Returns sigma2_hat.
double whittle_objective(const WhittleData& w, std::span<const double> phi, std::span<const double> psi,
                         double* sigma2_out) {
  double ratio = 0.0, logg = 0.0;
  for (std::size_t j = 0; j < w.freq.size(); ++j) {
    const double g = spectral_shape(w.freq[j], phi, psi);
    ratio += w.periodogram[j] / g;
    logg += std::log(g);
  }
  const double m = static_cast<double>(w.freq.size());
  const double sigma2 = 2.0 * std::numbers::pi * ratio / m;
  if (sigma2_out) *sigma2_out = sigma2;
  return std::log(sigma2) + logg / m;
}

struct SimplexResult {
  std::vector<double> x;
  double value = 0.0;
  bool converged = false;
};

SimplexResult nelder_mead(const std::function<double(std::span<const double>)>& f, std::vector<double> start,
                          int max_iterations) {
  static const bool handler_off = [] {
    gsl_set_error_handler_off();
    return true;
  }();
  (void)handler_off;

  const std::size_t dim = start.size();
  gsl_multimin_function fn;
  fn.n = dim;
  fn.params = const_cast<void*>(static_cast<const void*>(&f));
  fn.f = [](const gsl_vector* v, void* params) {
    const auto& func = *static_cast<const std::function<double(std::span<const double>)>*>(params);
    const double value = func(std::span<const double>(v->data, v->size));
    return std::isfinite(value) ? value : kPenalty;
  };

  gsl_vector* x = gsl_vector_alloc(dim);
  gsl_vector* step = gsl_vector_alloc(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    gsl_vector_set(x, i, start[i]);
    gsl_vector_set(step, i, 0.1);
  }
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, dim);
  gsl_multimin_fminimizer_set(s, &fn, x, step);

  SimplexResult result;
  for (int iter = 0; iter < max_iterations; ++iter) {
    if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-8) == GSL_SUCCESS) {
      result.converged = true;
      break;
    }
  }
  result.x.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) result.x[i] = gsl_vector_get(s->x, i);
  result.value = s->fval;
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(step);
  gsl_vector_free(x);
  return result;
}

std::vector<double> demeaned(std::span<const double> x, double& mean) {
  mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - mean;
  return out;
}

}  // namespace

std::string to_string(ArmaMethod method) { return method == ArmaMethod::css ? "css" : "whittle"; }

ArmaMethod parse_arma_method(const std::string& name) {
  if (name == "css") return ArmaMethod::css;
  if (name == "whittle") return ArmaMethod::whittle;
  throw std::invalid_argument("unknown ARMA method '" + name + "' (expected css or whittle)");
}

FracDiffCoeffs fracdiff_coeffs(double d, std::size_t L) {
  if (L < 1) throw std::invalid_argument("fracdiff_coeffs: L must be >= 1");
  FracDiffCoeffs out{d, std::vector<double>(L)};
  out.coeffs[0] = 1.0;
  for (std::size_t j = 1; j < L; ++j) {
    const double jj = static_cast<double>(j);
    out.coeffs[j] = out.coeffs[j - 1] * (jj - 1.0 - d) / jj;
  }
  return out;
}

std::vector<double> fracdiff_apply(std::span<const double> series, double d, FracDiffMode mode) {
  const std::size_t n = series.size();
  if (n == 0) throw std::invalid_argument("fracdiff_apply: empty series");
  const auto a = fracdiff_coeffs(d, n).coeffs;
  if (mode == FracDiffMode::fft) return fft::convolve(a, series, n);
  std::vector<double> y(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double s = 0.0;
    for (std::size_t j = 0; j <= t; ++j) s += a[j] * series[t - j];
    y[t] = s;
  }
  return y;
}

std::vector<double> fracdiff_invert(std::span<const double> series, double d, FracDiffMode mode) {
  return fracdiff_apply(series, -d, mode);
}

DEstimate estimate_d_preliminary(std::span<const double> series) {
  const std::size_t n = series.size();
  if (n < 64) throw std::invalid_argument("estimate_d_preliminary: need at least 64 samples");
  auto blocks = default_block_sizes(n);
  if (blocks.size() < 3) blocks = default_block_sizes(n, 8, n / 4);
  DEstimate out;
  out.rescaled_range = rescaled_range_hurst(series, blocks);
  const double raw = out.rescaled_range.H - 0.5;
  out.d = std::clamp(raw, -0.49, 0.49);
  out.clamped = out.d != raw || out.rescaled_range.clamped;
  return out;
}

LevinsonResult durbin_levinson(std::span<const double> autocov) {
  if (autocov.empty() || !(autocov[0] > 0.0)) throw std::domain_error("durbin_levinson: gamma(0) must be positive");
  const std::size_t p = autocov.size() - 1;
  LevinsonResult r;
  r.variances.push_back(autocov[0]);
  std::vector<double> phi, next;
  double v = autocov[0];
  for (std::size_t k = 1; k <= p; ++k) {
    double acc = autocov[k];
    for (std::size_t j = 1; j < k; ++j) acc -= phi[j - 1] * autocov[k - j];
    const double kappa = acc / v;
    next.assign(k, 0.0);
    for (std::size_t j = 1; j < k; ++j) next[j - 1] = phi[j - 1] - kappa * phi[k - j - 1];
    next[k - 1] = kappa;
    v *= 1.0 - kappa * kappa;
    if (!(v > 0.0)) {
      throw std::domain_error("durbin_levinson: autocovariance not positive definite at order " + std::to_string(k));
    }
    phi.swap(next);
    r.variances.push_back(v);
    r.reflection.push_back(kappa);
  }
  r.phi = std::move(phi);
  r.innovation_variance = v;
  return r;
}

void FarimaModel::validate() const {
  if (p < 0 || q < 0) throw std::invalid_argument("FARIMA orders must be non-negative");
  if (phi.size() != static_cast<std::size_t>(p) || psi.size() != static_cast<std::size_t>(q)) {
    throw std::invalid_argument("FARIMA coefficient count does not match (p, q)");
  }
  if (!(sigma2_eps > 0.0) || !std::isfinite(sigma2_eps)) throw std::invalid_argument("innovation variance must be > 0");
  if (!std::isfinite(d) || !std::isfinite(mean)) throw std::invalid_argument("FARIMA d and mean must be finite");
  if (!ar_polynomial_is_stationary(phi)) throw std::invalid_argument("AR polynomial has roots inside the unit circle");
  if (!ma_polynomial_is_invertible(psi)) throw std::invalid_argument("MA polynomial has roots inside the unit circle");
}

double FarimaModel::aic() const {
  return static_cast<double>(n_obs) * std::log(sigma2_eps) + 2.0 * (p + q + 1);
}

double FarimaModel::bic() const {
  const double n = static_cast<double>(n_obs);
  return n * std::log(sigma2_eps) + std::log(n) * (p + q + 1);
}

bool ar_polynomial_is_stationary(std::span<const double> phi, double margin) {
  return roots_outside(negated(phi), margin);
}

bool ma_polynomial_is_invertible(std::span<const double> psi, double margin) { return roots_outside(psi, margin); }

FarimaModel fit_arma(std::span<const double> series, int p, int q, const ArmaFitOptions& options) {
  if (p < 0 || q < 0) throw std::invalid_argument("fit_arma: orders must be non-negative");
  const auto k = static_cast<std::size_t>(p + q);
  if (series.size() < 10 * (k + 1)) throw std::invalid_argument("fit_arma: series too short for the requested order");

  FarimaModel model;
  model.p = p;
  model.q = q;
  model.n_obs = series.size();
  std::vector<double> y;
  if (options.demean) {
    y = demeaned(series, model.mean);
  } else {
    y.assign(series.begin(), series.end());
  }

  const auto gamma = biased_autocovariance(y, static_cast<std::size_t>(p));
  if (!(gamma[0] > 0.0)) throw std::domain_error("fit_arma: series has zero variance");
  std::vector<double> start = durbin_levinson(gamma).phi;
  start.resize(k, 0.0);

  const auto split = [p](std::span<const double> theta) {
    return std::pair{theta.first(static_cast<std::size_t>(p)), theta.subspan(static_cast<std::size_t>(p))};
  };
  const auto admissible = [&](std::span<const double> phi, std::span<const double> psi) {
    return ar_polynomial_is_stationary(phi, 0.0) && ma_polynomial_is_invertible(psi, 0.0);
  };

  std::vector<double> residuals;
  WhittleData whittle;
  if (options.method == ArmaMethod::whittle) whittle = periodogram(y);
  const double n_eff = static_cast<double>(y.size() - static_cast<std::size_t>(p));

  std::function<double(std::span<const double>)> objective;
  if (options.method == ArmaMethod::css) {
    objective = [&](std::span<const double> theta) {
      const auto [phi, psi] = split(theta);
      if (!admissible(phi, psi)) return kPenalty;
      return css_sum(y, phi, psi, residuals) / n_eff;
    };
  } else {
    if (whittle.freq.empty()) throw std::invalid_argument("fit_arma: series too short for Whittle estimation");
    objective = [&](std::span<const double> theta) {
      const auto [phi, psi] = split(theta);
      if (!admissible(phi, psi)) return kPenalty;
      return whittle_objective(whittle, phi, psi, nullptr);
    };
  }

  std::vector<double> theta = start;
  if (k > 0) {
    if (!admissible(split(theta).first, split(theta).second)) std::fill(theta.begin(), theta.end(), 0.0);
    const SimplexResult best = nelder_mead(objective, theta, options.max_iterations);
    theta = best.x;
    model.converged = best.converged;
  }

  model.phi.assign(theta.begin(), theta.begin() + p);
  model.psi.assign(theta.begin() + p, theta.end());

  // Reflect any root left on or outside the admissible boundary.
  bool ar_changed = false, ma_changed = false;
  std::vector<double> ar_c = negated(model.phi);
  reflect_into_unit_disc(ar_c, ar_changed);
  reflect_into_unit_disc(model.psi, ma_changed);
  if (ar_changed) model.phi = negated(ar_c);
  model.reflected = ar_changed || ma_changed;

  if (options.method == ArmaMethod::css) {
    model.sigma2_eps = css_sum(y, model.phi, model.psi, residuals) / n_eff;
    model.objective = model.sigma2_eps;
  } else {
    double sigma2 = 0.0;
    model.objective = whittle_objective(whittle, model.phi, model.psi, &sigma2);
    model.sigma2_eps = sigma2;
  }
  if (!(model.sigma2_eps > 0.0) || !std::isfinite(model.sigma2_eps)) {
    throw std::domain_error("fit_arma: degenerate innovation variance");
  }
  return model;
}

OrderSelection select_order(std::span<const double> series, int p_max, OrderCriterion criterion, ArmaMethod method) {
  if (p_max < 0 || p_max > 5) throw std::invalid_argument("select_order: p_max must lie in [0, 5]");
  std::vector<std::pair<int, int>> candidates;
  for (int p = 0; p <= p_max; ++p) candidates.emplace_back(p, p);
  for (int p = 1; p <= p_max; ++p) candidates.emplace_back(p, 0);

  // Every candidate is scored on the same residuals t >= p_max so that
  // differing conditioning samples do not masquerade as fit improvements.
  double mean = 0.0;
  const std::vector<double> y = demeaned(series, mean);
  const auto start = static_cast<std::size_t>(p_max);
  if (y.size() <= start + 1) throw std::invalid_argument("select_order: series too short");
  const double n_common = static_cast<double>(y.size() - start);
  std::vector<double> e;

  std::optional<OrderSelection> best;
  for (const auto& [p, q] : candidates) {
    try {
      const FarimaModel m = fit_arma(series, p, q, {.method = method});
      css_sum(y, m.phi, m.psi, e);
      double ss = 0.0;
      for (std::size_t t = start; t < e.size(); ++t) ss += e[t] * e[t];
      if (!(ss > 0.0)) continue;
      const double k = static_cast<double>(p + q + 1);
      const double value = n_common * std::log(ss / n_common) +
                           (criterion == OrderCriterion::aic ? 2.0 : std::log(n_common)) * k;
      if (!best || value < best->criterion) best = OrderSelection{p, q, value};
    } catch (const std::exception&) {
      continue;
    }
  }
  if (!best) throw std::runtime_error("select_order: every candidate fit failed");
  return *best;
}

FarimaModel fit_farima(std::span<const double> window, int p, int q, const FarimaFitOptions& options) {
  if (window.size() < 64) throw std::invalid_argument("fit_farima: window must hold at least 64 samples");
  double mean = 0.0;
  const std::vector<double> z = demeaned(window, mean);

  double d = 0.0;
  bool clamped = false;
  if (options.fixed_d) {
    d = *options.fixed_d;
  } else {
    const DEstimate est = estimate_d_preliminary(z);
    d = est.d;
    clamped = est.clamped;
  }
  const std::vector<double> y = fracdiff_apply(z, d, FracDiffMode::fft);
  FarimaModel model = fit_arma(y, p, q, {.method = options.method, .demean = false});
  model.d = d;
  model.mean = mean;
  model.d_clamped = clamped;
  return model;
}

int choose_arima_d(std::span<const double> window) {
  if (window.size() < 3) return 0;
  const auto variance = [](auto begin, auto end) {
    const double n = static_cast<double>(std::distance(begin, end));
    const double mu = std::accumulate(begin, end, 0.0) / n;
    double ss = 0.0;
    for (auto it = begin; it != end; ++it) ss += (*it - mu) * (*it - mu);
    return ss / (n - 1.0);
  };
  std::vector<double> diff(window.size() - 1);
  for (std::size_t i = 1; i < window.size(); ++i) diff[i - 1] = window[i] - window[i - 1];
  return variance(diff.begin(), diff.end()) < variance(window.begin(), window.end()) ? 1 : 0;
}

FarimaModel fit_arima(std::span<const double> window, int p, int q, std::optional<int> d, ArmaMethod method) {
  const int order = d.value_or(choose_arima_d(window));
  if (order < 0 || order > 2) throw std::invalid_argument("fit_arima: integer d must lie in [0, 2]");
  if (window.size() <= static_cast<std::size_t>(order)) throw std::invalid_argument("fit_arima: window too short");
  double mean = 0.0;
  const std::vector<double> z = demeaned(window, mean);
  std::vector<double> y = fracdiff_apply(z, order, FracDiffMode::naive);
  // The first `order` values difference against the implicit zeros before the window.
  y.erase(y.begin(), y.begin() + order);
  FarimaModel model = fit_arma(y, p, q, {.method = method, .demean = false});
  model.d = order;
  model.mean = mean;
  return model;
}

std::vector<double> ar_infinity_weights(const FarimaModel& model, std::size_t L) {
  const std::size_t n = L + 1;
  const auto a = fracdiff_coeffs(model.d, n).coeffs;
  // c(B) = phi(B) / psi(B)
  std::vector<double> c(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double v = j == 0 ? 1.0 : (j <= model.phi.size() ? -model.phi[j - 1] : 0.0);
    for (std::size_t k = 1; k <= model.psi.size() && k <= j; ++k) v -= model.psi[k - 1] * c[j - k];
    c[j] = v;
  }
  std::vector<double> pi(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (c[i] == 0.0) continue;
    for (std::size_t j = 0; i + j < n; ++j) pi[i + j] += c[i] * a[j];
  }
  return pi;
}

std::vector<double> forecast(const FarimaModel& model, std::span<const double> window, std::size_t h) {
  model.validate();
  if (h < 1) throw std::invalid_argument("forecast: horizon must be >= 1");
  const std::size_t need = static_cast<std::size_t>(std::max(model.p, model.q)) + 1;
  if (window.size() < need) throw std::invalid_argument("forecast: window shorter than max(p, q) + 1");

  const std::size_t L = window.size();
  const auto pi = ar_infinity_weights(model, L);
  std::vector<double> history(window.begin(), window.end());
  for (double& v : history) v -= model.mean;
  history.reserve(L + h);

  std::vector<double> out(h);
  for (std::size_t step = 0; step < h; ++step) {
    const std::size_t t = history.size();
    double pred = 0.0;
    for (std::size_t j = 1; j <= L && j <= t; ++j) pred -= pi[j] * history[t - j];
    history.push_back(pred);
    out[step] = pred + model.mean;
  }
  return out;
}

}  // namespace lrdcast
