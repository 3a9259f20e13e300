#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace agg::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = std::vector<double>;

// A named, shaped block of learnable weights plus its gradient accumulator.
//
// Storage is a row-major matrix: a 1-D shape {n} is held as 1 x n, a shape
// {d0, d1, ...} as d0 x (d1 * ...). Every write is checked for finiteness.
class ParamTensor {
 public:
  ParamTensor() = default;
  ParamTensor(std::string name, std::vector<std::size_t> shape);

  const std::string& name() const { return name_; }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return static_cast<std::size_t>(value_.size()); }

  const Matrix& value() const { return value_; }
  const Matrix& grad() const { return grad_; }

  std::span<const double> values() const { return {value_.data(), size()}; }

  void assign(const Matrix& value);
  void set_values(std::span<const double> values);
  void fill(double v);

  // Adds `delta` to the stored values (used by optimizers).
  void add_to_values(const Matrix& delta);

  void accumulate_grad(const Matrix& g);
  void zero_grad() { grad_.setZero(); }

 private:
  std::string name_;
  std::vector<std::size_t> shape_;
  Matrix value_;
  Matrix grad_;
};

bool all_finite(const Matrix& m);

}  // namespace agg::nn
