#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lrdcast::nn {

/// Raised when a tensor picks up NaN or Inf.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major array of doubles. Most of the network works on rank-2
/// arrays (rows = sequence positions, cols = features).
class NdArray {
 public:
  NdArray() = default;
  explicit NdArray(std::vector<std::size_t> shape, double fill = 0.0);
  NdArray(std::vector<std::size_t> shape, std::vector<double> data);

  static NdArray matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return NdArray({rows, cols}, fill);
  }
  static NdArray from_rows(const std::vector<std::vector<double>>& rows);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return shape_.size() > 1 ? shape_[1] : 1; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * cols(), cols()); }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols(), cols());
  }

  bool same_shape(const NdArray& other) const noexcept { return shape_ == other.shape_; }
  bool all_finite() const noexcept;
  /// Throws NonFiniteError naming `where` if any element is NaN or Inf.
  void check_finite(const char* where) const;
  void fill(double v);
  std::string shape_string() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// C = A * B for rank-2 arrays.
NdArray matmul(const NdArray& a, const NdArray& b);
/// C += A^T * B
void matmul_at_b_acc(const NdArray& a, const NdArray& b, NdArray& c);
/// C += A * B^T
void matmul_a_bt_acc(const NdArray& a, const NdArray& b, NdArray& c);

}  // namespace lrdcast::nn
