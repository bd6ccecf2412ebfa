#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace dmatch {

// Dense row-major float64 matrix. Vectors are 1xN or Nx1, scalars 1x1.
// Construction rejects NaN/Inf so a non-finite value surfaces at the op that
// produced it, not several steps later; diagnostics code that really wants
// non-finite payloads goes through unchecked().
class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols);  // zero-filled
  Tensor(int rows, int cols, std::vector<double> data);

  static Tensor zeros(int rows, int cols);
  static Tensor full(int rows, int cols, double value);
  static Tensor scalar(double value);
  static Tensor row(std::initializer_list<double> values);
  static Tensor column(std::initializer_list<double> values);
  static Tensor from_rows(const std::vector<std::vector<double>>& rows);
  static Tensor unchecked(int rows, int cols, std::vector<double> data);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int size() const { return static_cast<int>(data_.size()); }
  std::vector<int> shape() const { return {rows_, cols_}; }

  double& at(int i, int j);
  double at(int i, int j) const;
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Tensor& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }
  double scalar_value() const;

  std::string shape_string() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;

  void check_finite() const;
};

bool all_finite(const Tensor& t);

// max_i |a_i - b_i|
double max_abs_diff(const Tensor& a, const Tensor& b);

// Column-wise max of the raw values; used e.g. for log-sum-exp shifts.
Tensor colwise_max(const Tensor& t);

// New tensor whose rows are t's rows at the given indices (bounds-checked).
Tensor gather_rows(const Tensor& t, const std::vector<int>& indices);

}  // namespace dmatch
