#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "ncdwf/error.hpp"
#include "ncdwf/kernels.hpp"

namespace ncdwf {

// Row-major 2-D matrix of doubles. Everything in the pipeline is at most 2-D;
// vectors are 1×n rows by convention.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double value = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, value) {}

  static Tensor row(std::initializer_list<double> v) {
    Tensor t(1, v.size());
    std::size_t i = 0;
    for (double x : v) t.data_[i++] = x;
    return t;
  }

  static Tensor from(std::initializer_list<std::initializer_list<double>> rows) {
    Tensor t(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t r = 0;
    for (const auto& row : rows) {
      if (row.size() != t.cols_) throw ShapeError("Tensor::from: ragged rows");
      std::size_t c = 0;
      for (double x : row) t(r, c++) = x;
      ++r;
    }
    return t;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
  const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(0.0); }

  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const {
    return data_.empty() || kernels::active().all_finite(data_.data(), data_.size());
  }

  bool operator==(const Tensor& o) const {
    return same_shape(o) && data_ == o.data_;
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

}  // namespace ncdwf
