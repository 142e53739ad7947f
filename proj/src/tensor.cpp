#include "deepmot/tensor.hpp"

#include <cmath>

#include "deepmot/common.hpp"

namespace deepmot {

namespace {
std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}
}  // namespace

Tensor::Tensor(std::size_t rows, std::size_t cols)
    : shape_{rows, cols}, data_(rows * cols, 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  detail::check(data_.size() == shape_product(shape_),
                "tensor: data length does not match shape");
}

Tensor Tensor::scalar(double v) {
  Tensor t(1, 1);
  t.data_[0] = v;
  return t;
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double v) {
  Tensor t(rows, cols);
  for (auto& x : t.data_) x = v;
  return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  std::size_t r = rows.size();
  std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Tensor t(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    detail::check(row.size() == c, "tensor: ragged row literal");
    for (double v : row) t.data_[i++] = v;
  }
  return t;
}

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 1;
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() < 2) return shape_.empty() ? 1 : 1;
  std::size_t c = 1;
  for (std::size_t i = 1; i < shape_.size(); ++i) c *= shape_[i];
  return c;
}

double Tensor::item() const {
  detail::check(size() == 1, "tensor: item() requires a single-element tensor");
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Tensor::same_shape(const Tensor& other) const {
  return rows() == other.rows() && cols() == other.cols();
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::fabs(v));
  return m;
}

void Tensor::quantize_f32() {
  for (auto& v : data_) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace deepmot
