#include "lrdcast/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace lrdcast::fft {

namespace {

// FFTW planning and plan destruction are not thread-safe; execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const noexcept { fftw_free(p); }
};

template <class T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <class T>
FftwBuffer<T> allocate(std::size_t n) {
  auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * std::max<std::size_t>(n, 1)));
  if (!p) throw std::bad_alloc();
  return FftwBuffer<T>(p);
}

class Plan {
 public:
  explicit Plan(fftw_plan plan) : plan_(plan) {
    if (!plan_) throw std::runtime_error("FFTW failed to create a plan");
  }
  ~Plan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;
  void execute() const { fftw_execute(plan_); }

 private:
  fftw_plan plan_;
};

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

std::vector<std::complex<double>> forward_real(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  auto in = allocate<double>(n);
  auto out = allocate<fftw_complex>(n / 2 + 1);
  std::unique_ptr<Plan> plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = std::make_unique<Plan>(fftw_plan_dft_r2c_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE));
  }
  std::copy(x.begin(), x.end(), in.get());
  plan->execute();
  std::vector<std::complex<double>> result(n / 2 + 1);
  for (std::size_t k = 0; k < result.size(); ++k) result[k] = {out[k][0], out[k][1]};
  return result;
}

std::vector<double> convolve(std::span<const double> a, std::span<const double> b, std::size_t out_len) {
  if (a.empty() || b.empty() || out_len == 0) return std::vector<double>(out_len, 0.0);
  // Terms beyond out_len never influence the truncated result.
  a = a.first(std::min(a.size(), out_len));
  b = b.first(std::min(b.size(), out_len));
  const std::size_t n = next_pow2(a.size() + b.size() - 1);
  const std::size_t bins = n / 2 + 1;

  auto buf_a = allocate<double>(n);
  auto buf_b = allocate<double>(n);
  auto spec_a = allocate<fftw_complex>(bins);
  auto spec_b = allocate<fftw_complex>(bins);
  std::unique_ptr<Plan> fwd_a, fwd_b, inv;
  {
    std::lock_guard lock(planner_mutex());
    fwd_a = std::make_unique<Plan>(
        fftw_plan_dft_r2c_1d(static_cast<int>(n), buf_a.get(), spec_a.get(), FFTW_ESTIMATE));
    fwd_b = std::make_unique<Plan>(
        fftw_plan_dft_r2c_1d(static_cast<int>(n), buf_b.get(), spec_b.get(), FFTW_ESTIMATE));
    inv = std::make_unique<Plan>(
        fftw_plan_dft_c2r_1d(static_cast<int>(n), spec_a.get(), buf_a.get(), FFTW_ESTIMATE));
  }
  std::fill(buf_a.get(), buf_a.get() + n, 0.0);
  std::fill(buf_b.get(), buf_b.get() + n, 0.0);
  std::copy(a.begin(), a.end(), buf_a.get());
  std::copy(b.begin(), b.end(), buf_b.get());
  fwd_a->execute();
  fwd_b->execute();
  for (std::size_t k = 0; k < bins; ++k) {
    const double re = spec_a[k][0] * spec_b[k][0] - spec_a[k][1] * spec_b[k][1];
    const double im = spec_a[k][0] * spec_b[k][1] + spec_a[k][1] * spec_b[k][0];
    spec_a[k][0] = re;
    spec_a[k][1] = im;
  }
  inv->execute();
  std::vector<double> out(out_len, 0.0);
  const std::size_t valid = std::min(out_len, a.size() + b.size() - 1);
  for (std::size_t i = 0; i < valid; ++i) out[i] = buf_a[i] / static_cast<double>(n);
  return out;
}

}  // namespace lrdcast::fft
