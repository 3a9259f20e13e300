#pragma once

#include <span>
#include <string_view>

#include "agg/numeric/tape.hpp"

namespace agg::adv {

inline constexpr double kLogFloor = 1e-7;

enum class GeneratorLoss { saturating, non_saturating };

GeneratorLoss parse_generator_loss(std::string_view name);
std::string_view to_string(GeneratorLoss v);

// -mean(log p_real) - mean(log(1 - p_fake)), log arguments clamped at 1e-7.
double discriminator_loss(std::span<const double> p_real, std::span<const double> p_fake);
// saturating: mean(log(1 - p_fake)); non_saturating: -mean(log p_fake).
double generator_loss(std::span<const double> p_fake, GeneratorLoss variant);

// Recorded forms on probability columns.
nn::Var discriminator_loss(nn::Var p_real, nn::Var p_fake);
nn::Var generator_loss(nn::Var p_fake, GeneratorLoss variant);

// Same losses on pre-sigmoid scores, computed through log-sigmoid so the
// gradient survives saturation.
nn::Var discriminator_loss_from_logits(nn::Var z_real, nn::Var z_fake);
nn::Var generator_loss_from_logits(nn::Var z_fake, GeneratorLoss variant);

}  // namespace agg::adv
