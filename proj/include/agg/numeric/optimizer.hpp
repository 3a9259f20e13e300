#pragma once

#include <cstddef>
#include <vector>

#include "agg/numeric/layers.hpp"

namespace agg::nn {

enum class LrSchedule { cosine, constant };

struct OptimizerConfig {
  double learning_rate0 = 0.1;
  double momentum = 0.9;
  std::size_t total_steps = 5000;
  LrSchedule schedule = LrSchedule::cosine;
};

// lr0 * 0.5 * (1 + cos(pi * step / total)) for the cosine schedule.
double scheduled_learning_rate(const OptimizerConfig& config, std::size_t step);

// Gradient descent with heavy-ball momentum:
//   v <- momentum * v + grad;  p <- p - lr(step) * v
class SgdMomentum {
 public:
  explicit SgdMomentum(OptimizerConfig config);

  // Applies one update to `params` (same list, same order, every call), then
  // clears their gradients and advances the step counter.
  void step(const ParamList& params);

  double learning_rate() const { return scheduled_learning_rate(config_, step_); }
  std::size_t step_count() const { return step_; }
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  std::size_t step_ = 0;
  std::vector<Matrix> velocity_;
};

}  // namespace agg::nn
