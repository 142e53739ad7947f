#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace deepmot {

// Numeric mode of a computation. f64 is the default and is required for all
// gradient checks; f32 rounds every operation result (and optimizer update)
// through IEEE float storage, trading accuracy for smaller checkpoints and a
// faithful simulation of single-precision training.
enum class Precision { f64, f32 };

// Dense row-major tensor of doubles. Storage rank is arbitrary (checkpoints
// keep rank-1 biases as written); the autodiff graph works on rank-2 views,
// with scalars as 1x1 and vectors as n x 1 or 1 x n.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols);  // zero-filled
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor full(std::size_t rows, std::size_t cols, double v);
  // Row-of-rows literal, e.g. Tensor::from_rows({{1, 2}, {3, 4}}).
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rank-2 view helpers: rank 0 -> 1x1, rank 1 -> n x 1.
  std::size_t rows() const;
  std::size_t cols() const;

  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }

  // Value of a 1x1 tensor.
  double item() const;

  bool all_finite() const;
  bool same_shape(const Tensor& other) const;
  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

  double max_abs() const;

  // Rounds every value through float storage (f32 mode support).
  void quantize_f32();

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

}  // namespace deepmot
