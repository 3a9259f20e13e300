#include "agg/numeric/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "agg/error.hpp"

namespace agg::nn {

double scheduled_learning_rate(const OptimizerConfig& config, std::size_t step) {
  require(step <= config.total_steps, ErrorKind::schedule,
          "step " + std::to_string(step) + " exceeds total_steps " + std::to_string(config.total_steps));
  if (config.schedule == LrSchedule::constant) return config.learning_rate0;
  const double frac = static_cast<double>(step) / static_cast<double>(config.total_steps);
  return config.learning_rate0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

SgdMomentum::SgdMomentum(OptimizerConfig config) : config_(config) {
  require(config_.total_steps > 0, ErrorKind::config, "optimizer total_steps must be positive");
  require(config_.learning_rate0 >= 0.0, ErrorKind::config, "learning rate must be non-negative");
  require(config_.momentum >= 0.0 && config_.momentum < 1.0, ErrorKind::config, "momentum must be in [0, 1)");
}

void SgdMomentum::step(const ParamList& params) {
  require(step_ < config_.total_steps, ErrorKind::schedule,
          "optimizer already ran all " + std::to_string(config_.total_steps) + " steps");
  if (velocity_.empty()) {
    velocity_.reserve(params.size());
    for (const ParamTensor* p : params) velocity_.push_back(Matrix::Zero(p->value().rows(), p->value().cols()));
  }
  require(velocity_.size() == params.size(), ErrorKind::input, "optimizer parameter list changed between steps");
  const double lr = learning_rate();
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamTensor& p = *params[i];
    Matrix& v = velocity_[i];
    require(v.rows() == p.grad().rows() && v.cols() == p.grad().cols(), ErrorKind::dimension,
            "optimizer state does not match parameter '" + p.name() + "'");
    v = config_.momentum * v + p.grad();
    p.add_to_values(-lr * v);
    p.zero_grad();
  }
  ++step_;
}

}  // namespace agg::nn
