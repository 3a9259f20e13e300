#include "agg/synth/quaternion.hpp"

#include <cmath>

#include "agg/error.hpp"

namespace agg::synth {

Quat quat_mul(const Quat& a, const Quat& b) {
  return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
          a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
          a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
          a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

Quat quat_conj(const Quat& q) { return {q[0], -q[1], -q[2], -q[3]}; }

double quat_norm(const Quat& q) { return std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]); }

Quat quat_normalize(const Quat& q) {
  const double n = quat_norm(q);
  require(n > 0.0 && std::isfinite(n), ErrorKind::input, "zero or non-finite quaternion");
  return {q[0] / n, q[1] / n, q[2] / n, q[3] / n};
}

Quat read_block(std::span<const double> frame, std::size_t joint) {
  require(frame.size() >= 4 * (joint + 1), ErrorKind::dimension, "quaternion block out of range");
  return {frame[4 * joint], frame[4 * joint + 1], frame[4 * joint + 2], frame[4 * joint + 3]};
}

void write_block(std::span<double> frame, std::size_t joint, const Quat& q) {
  require(frame.size() >= 4 * (joint + 1), ErrorKind::dimension, "quaternion block out of range");
  for (std::size_t i = 0; i < 4; ++i) frame[4 * joint + i] = q[i];
}

namespace {

std::size_t joints_of(const std::vector<double>& frame) {
  require(frame.size() % 4 == 0 && !frame.empty(), ErrorKind::dimension,
          "quaternion frame width must be a positive multiple of 4");
  return frame.size() / 4;
}

}  // namespace

std::vector<std::vector<double>> to_deltas(const std::vector<std::vector<double>>& absolute) {
  std::vector<std::vector<double>> out;
  for (std::size_t t = 0; t < absolute.size(); ++t) {
    const std::size_t joints = joints_of(absolute[t]);
    std::vector<double> frame(absolute[t].size());
    for (std::size_t j = 0; j < joints; ++j) {
      const Quat q = read_block(absolute[t], j);
      write_block(frame, j, t == 0 ? q : quat_mul(q, quat_conj(read_block(absolute[t - 1], j))));
    }
    out.push_back(std::move(frame));
  }
  return out;
}

std::vector<std::vector<double>> compose_deltas(const std::vector<std::vector<double>>& deltas,
                                                const std::vector<double>& origin) {
  std::vector<std::vector<double>> out;
  for (std::size_t t = 0; t < deltas.size(); ++t) {
    const std::size_t joints = joints_of(deltas[t]);
    std::vector<double> frame(deltas[t].size());
    for (std::size_t j = 0; j < joints; ++j) {
      Quat prev{1.0, 0.0, 0.0, 0.0};
      if (t > 0) {
        prev = read_block(out[t - 1], j);
      } else if (!origin.empty()) {
        prev = read_block(origin, j);
      }
      write_block(frame, j, quat_mul(read_block(deltas[t], j), prev));
    }
    out.push_back(std::move(frame));
  }
  return out;
}

}  // namespace agg::synth
