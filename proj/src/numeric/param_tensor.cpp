#include "agg/numeric/param_tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "agg/error.hpp"

namespace agg::nn {

bool all_finite(const Matrix& m) { return m.allFinite(); }

ParamTensor::ParamTensor(std::string name, std::vector<std::size_t> shape)
    : name_(std::move(name)), shape_(std::move(shape)) {
  require(!shape_.empty(), ErrorKind::dimension, "parameter '" + name_ + "' has empty shape");
  for (auto d : shape_) {
    require(d > 0, ErrorKind::dimension, "parameter '" + name_ + "' has a zero dimension");
  }
  Eigen::Index rows = 1;
  Eigen::Index cols = static_cast<Eigen::Index>(shape_.back());
  if (shape_.size() > 1) {
    rows = static_cast<Eigen::Index>(shape_.front());
    cols = static_cast<Eigen::Index>(std::accumulate(shape_.begin() + 1, shape_.end(),
                                                     std::size_t{1}, std::multiplies<>()));
  }
  value_ = Matrix::Zero(rows, cols);
  grad_ = Matrix::Zero(rows, cols);
}

void ParamTensor::assign(const Matrix& value) {
  require(value.rows() == value_.rows() && value.cols() == value_.cols(), ErrorKind::dimension,
          "assign to '" + name_ + "' with mismatched shape");
  require(value.allFinite(), ErrorKind::parameter, "non-finite value written to '" + name_ + "'");
  value_ = value;
}

void ParamTensor::set_values(std::span<const double> values) {
  require(values.size() == size(), ErrorKind::dimension,
          "set_values on '" + name_ + "': expected " + std::to_string(size()) + " values, got " +
              std::to_string(values.size()));
  Matrix m = Eigen::Map<const Matrix>(values.data(), value_.rows(), value_.cols());
  assign(m);
}

void ParamTensor::fill(double v) {
  require(std::isfinite(v), ErrorKind::parameter, "non-finite fill of '" + name_ + "'");
  value_.setConstant(v);
}

void ParamTensor::add_to_values(const Matrix& delta) {
  Matrix next = value_ + delta;
  require(next.allFinite(), ErrorKind::parameter, "update produced non-finite values in '" + name_ + "'");
  value_ = std::move(next);
}

void ParamTensor::accumulate_grad(const Matrix& g) { grad_ += g; }

}  // namespace agg::nn
