#include "agg/adversarial/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "agg/error.hpp"
#include "agg/numeric/ops.hpp"

namespace agg::adv {

GeneratorLoss parse_generator_loss(std::string_view name) {
  if (name == "saturating") return GeneratorLoss::saturating;
  if (name == "non_saturating") return GeneratorLoss::non_saturating;
  fail(ErrorKind::config, "unknown generator loss '" + std::string(name) + "'");
}

std::string_view to_string(GeneratorLoss v) {
  return v == GeneratorLoss::saturating ? "saturating" : "non_saturating";
}

namespace {

double mean_clamped_log(std::span<const double> p, bool complement) {
  require(!p.empty(), ErrorKind::input, "loss over an empty batch");
  double total = 0.0;
  for (double v : p) {
    require(std::isfinite(v), ErrorKind::input, "loss: non-finite probability");
    total += std::log(std::max(complement ? 1.0 - v : v, kLogFloor));
  }
  return total / static_cast<double>(p.size());
}

}  // namespace

double discriminator_loss(std::span<const double> p_real, std::span<const double> p_fake) {
  return -mean_clamped_log(p_real, false) - mean_clamped_log(p_fake, true);
}

double generator_loss(std::span<const double> p_fake, GeneratorLoss variant) {
  return variant == GeneratorLoss::saturating ? mean_clamped_log(p_fake, true) : -mean_clamped_log(p_fake, false);
}

nn::Var discriminator_loss(nn::Var p_real, nn::Var p_fake) {
  nn::Var real = nn::mean(nn::clamped_log(p_real, kLogFloor));
  nn::Var fake = nn::mean(nn::clamped_log(nn::add_scalar(nn::scale(p_fake, -1.0), 1.0), kLogFloor));
  return nn::scale(nn::add(real, fake), -1.0);
}

nn::Var generator_loss(nn::Var p_fake, GeneratorLoss variant) {
  if (variant == GeneratorLoss::saturating) {
    return nn::mean(nn::clamped_log(nn::add_scalar(nn::scale(p_fake, -1.0), 1.0), kLogFloor));
  }
  return nn::scale(nn::mean(nn::clamped_log(p_fake, kLogFloor)), -1.0);
}

// log(1 - sigmoid(z)) = log sigmoid(-z)
nn::Var discriminator_loss_from_logits(nn::Var z_real, nn::Var z_fake) {
  nn::Var real = nn::mean(nn::log_sigmoid(z_real, kLogFloor));
  nn::Var fake = nn::mean(nn::log_sigmoid(nn::scale(z_fake, -1.0), kLogFloor));
  return nn::scale(nn::add(real, fake), -1.0);
}

nn::Var generator_loss_from_logits(nn::Var z_fake, GeneratorLoss variant) {
  if (variant == GeneratorLoss::saturating) return nn::mean(nn::log_sigmoid(nn::scale(z_fake, -1.0), kLogFloor));
  return nn::scale(nn::mean(nn::log_sigmoid(z_fake, kLogFloor)), -1.0);
}

}  // namespace agg::adv
