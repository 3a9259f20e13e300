#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace agg::synth {

// (w, x, y, z)
using Quat = std::array<double, 4>;

Quat quat_mul(const Quat& a, const Quat& b);
Quat quat_conj(const Quat& q);
double quat_norm(const Quat& q);
// Throws ErrorKind::input for a zero quaternion.
Quat quat_normalize(const Quat& q);

Quat read_block(std::span<const double> frame, std::size_t joint);
void write_block(std::span<double> frame, std::size_t joint, const Quat& q);

// Frames of J unit quaternions (4J values). delta_0 = q_0 and
// delta_t = q_t * conj(q_{t-1}) per joint.
std::vector<std::vector<double>> to_deltas(const std::vector<std::vector<double>>& absolute);
// Inverse of to_deltas: q_t = delta_t * q_{t-1}, starting from `origin`
// (identity joints when empty).
std::vector<std::vector<double>> compose_deltas(const std::vector<std::vector<double>>& deltas,
                                                const std::vector<double>& origin = {});

}  // namespace agg::synth
