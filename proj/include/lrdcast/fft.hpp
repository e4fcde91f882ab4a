#pragma once

#include <complex>
#include <span>
#include <vector>

namespace lrdcast::fft {

/// Discrete Fourier transform of a real sequence: bins 0..n/2.
std::vector<std::complex<double>> forward_real(std::span<const double> x);

/// First `out_len` terms of the linear convolution of a and b, O(N log N).
std::vector<double> convolve(std::span<const double> a, std::span<const double> b, std::size_t out_len);

}  // namespace lrdcast::fft
