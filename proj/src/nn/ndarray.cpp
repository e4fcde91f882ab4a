#include "lrdcast/nn/ndarray.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace lrdcast::nn {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_matrix(const NdArray& a, const char* who) {
  if (a.rank() != 2) throw std::invalid_argument(std::string(who) + ": expected a rank-2 array");
}

}  // namespace

NdArray::NdArray(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

NdArray::NdArray(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != element_count(shape_)) {
    throw std::invalid_argument("NdArray: data length does not match shape " + shape_string());
  }
}

NdArray NdArray::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.front().size() : 0;
  NdArray out = matrix(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    if (rows[i].size() != c) throw std::invalid_argument("NdArray::from_rows: ragged rows");
    std::copy(rows[i].begin(), rows[i].end(), out.row(i).begin());
  }
  return out;
}

bool NdArray::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void NdArray::check_finite(const char* where) const {
  if (!all_finite()) throw NonFiniteError(std::string("non-finite value in ") + where + " " + shape_string());
}

void NdArray::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string NdArray::shape_string() const {
  std::string s = "(";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape_[i]);
  }
  return s + ")";
}

NdArray matmul(const NdArray& a, const NdArray& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ " + a.shape_string() + " x " + b.shape_string());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  NdArray c = NdArray::matrix(m, n);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

void matmul_at_b_acc(const NdArray& a, const NdArray& b, NdArray& c) {
  // a: (m, k), b: (m, n), c: (k, n)
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = pb + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      double* crow = pc + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_a_bt_acc(const NdArray& a, const NdArray& b, NdArray& c) {
  // a: (m, n), b: (k, n), c: (m, k)
  const std::size_t m = a.rows(), n = a.cols(), k = b.rows();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = pb + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += arow[j] * brow[j];
      pc[i * k + p] += s;
    }
  }
}

}  // namespace lrdcast::nn
