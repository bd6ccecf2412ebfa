#include "dmatch/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dmatch {

Tensor::Tensor(int rows, int cols) : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 0) throw std::invalid_argument("Tensor: negative dimension");
  data_.assign(static_cast<size_t>(rows) * cols, 0.0);
}

Tensor::Tensor(int rows, int cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows < 0 || cols < 0) throw std::invalid_argument("Tensor: negative dimension");
  if (static_cast<size_t>(rows) * cols != data_.size())
    throw std::invalid_argument("Tensor: shape/data size mismatch (" + shape_string() + " vs " +
                                std::to_string(data_.size()) + " values)");
  check_finite();
}

Tensor Tensor::zeros(int rows, int cols) { return Tensor(rows, cols); }

Tensor Tensor::full(int rows, int cols, double value) {
  Tensor t(rows, cols);
  std::fill(t.data_.begin(), t.data_.end(), value);
  t.check_finite();
  return t;
}

Tensor Tensor::scalar(double value) { return Tensor(1, 1, {value}); }

Tensor Tensor::row(std::initializer_list<double> values) {
  return Tensor(1, static_cast<int>(values.size()), std::vector<double>(values));
}

Tensor Tensor::column(std::initializer_list<double> values) {
  return Tensor(static_cast<int>(values.size()), 1, std::vector<double>(values));
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return Tensor();
  const int cols = static_cast<int>(rows[0].size());
  std::vector<double> flat;
  flat.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (static_cast<int>(r.size()) != cols)
      throw std::invalid_argument("Tensor::from_rows: ragged rows");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return Tensor(static_cast<int>(rows.size()), cols, std::move(flat));
}

Tensor Tensor::unchecked(int rows, int cols, std::vector<double> data) {
  Tensor t;
  t.rows_ = rows;
  t.cols_ = cols;
  t.data_ = std::move(data);
  if (static_cast<size_t>(rows) * cols != t.data_.size())
    throw std::invalid_argument("Tensor::unchecked: shape/data size mismatch");
  return t;
}

double& Tensor::at(int i, int j) {
  if (i < 0 || i >= rows_ || j < 0 || j >= cols_)
    throw std::out_of_range("Tensor::at(" + std::to_string(i) + "," + std::to_string(j) +
                            ") on shape " + shape_string());
  return data_[static_cast<size_t>(i) * cols_ + j];
}

double Tensor::at(int i, int j) const {
  if (i < 0 || i >= rows_ || j < 0 || j >= cols_)
    throw std::out_of_range("Tensor::at(" + std::to_string(i) + "," + std::to_string(j) +
                            ") on shape " + shape_string());
  return data_[static_cast<size_t>(i) * cols_ + j];
}

double Tensor::scalar_value() const {
  if (!is_scalar()) throw std::invalid_argument("Tensor::scalar_value on shape " + shape_string());
  return data_[0];
}

std::string Tensor::shape_string() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

void Tensor::check_finite() const {
  for (double v : data_)
    if (!std::isfinite(v))
      throw std::invalid_argument("Tensor: non-finite entry (shape " + shape_string() + ")");
}

bool all_finite(const Tensor& t) {
  for (double v : t.values())
    if (!std::isfinite(v)) return false;
  return true;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("max_abs_diff: shape mismatch " + a.shape_string() + " vs " +
                                b.shape_string());
  double m = 0.0;
  for (int i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
  return m;
}

Tensor colwise_max(const Tensor& t) {
  if (t.rows() == 0 || t.cols() == 0) throw std::invalid_argument("colwise_max: empty tensor");
  Tensor out(1, t.cols());
  for (int j = 0; j < t.cols(); ++j) {
    double m = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < t.rows(); ++i) m = std::max(m, t.at(i, j));
    out.at(0, j) = m;
  }
  return out;
}

Tensor gather_rows(const Tensor& t, const std::vector<int>& indices) {
  Tensor out(static_cast<int>(indices.size()), t.cols());
  for (size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= t.rows())
      throw std::out_of_range("gather_rows: index " + std::to_string(indices[i]));
    for (int j = 0; j < t.cols(); ++j) out.at(static_cast<int>(i), j) = t.at(indices[i], j);
  }
  return out;
}

}  // namespace dmatch
