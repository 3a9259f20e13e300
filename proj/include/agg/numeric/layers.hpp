#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "agg/numeric/ops.hpp"
#include "agg/numeric/rng.hpp"

namespace agg::nn {

enum class Activation { none, relu, leaky_relu, sigmoid, softmax, tanh };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

inline constexpr double kLeakySlope = 0.2;

Var activate(Var x, Activation a);

using ParamList = std::vector<ParamTensor*>;

// Xavier/Glorot uniform in [-limit, limit], limit = sqrt(6 / (fan_in + fan_out)).
void xavier_uniform(ParamTensor& p, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// activation(x W^T + b) for a batch of row vectors.
Var dense_forward(Var input, Var weights, Var bias, Activation activation);

// Single-vector convenience without gradient recording.
Vector dense_forward(std::span<const double> input, const ParamTensor& weights,
                     const ParamTensor& bias, Activation activation);

struct DenseLayer {
  ParamTensor weight;  // [out, in]
  ParamTensor bias;    // [out]; unused (kept at zero) when has_bias is false
  Activation activation = Activation::none;
  bool has_bias = true;

  DenseLayer() = default;
  DenseLayer(const std::string& name, std::size_t in, std::size_t out, Activation act);

  std::size_t in_features() const { return weight.shape()[1]; }
  std::size_t out_features() const { return weight.shape()[0]; }

  void init(Rng& rng);
  Var forward(Tape& tape, Var x);
  void collect(ParamList& out) {
    out.push_back(&weight);
    if (has_bias) out.push_back(&bias);
  }
};

// Stack of dense layers; hidden layers use `hidden`, the last one `output`.
class DenseStack {
 public:
  DenseStack() = default;
  DenseStack(const std::string& name, std::vector<std::size_t> widths, Activation hidden,
             Activation output, bool first_bias = true);

  void init(Rng& rng);
  Var forward(Tape& tape, Var x);
  void collect(ParamList& out);

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

 private:
  std::vector<DenseLayer> layers_;
};

struct Conv1dLayer {
  ParamTensor kernel;  // [out, width, in]
  ParamTensor bias;    // [out]
  std::size_t width = 1;
  std::size_t stride = 1;
  Padding padding = Padding::same;

  Conv1dLayer() = default;
  Conv1dLayer(const std::string& name, std::size_t in, std::size_t out, std::size_t width,
              std::size_t stride, Padding padding);

  void init(Rng& rng);
  // Returns the output and its sequence shape.
  Var forward(Tape& tape, Var x, SeqShape shape, SeqShape* out_shape);
  void collect(ParamList& out) { out.push_back(&kernel); out.push_back(&bias); }
};

// Sequence convenience: input is a list of channel vectors (time-major).
std::vector<Vector> conv1d_forward(const std::vector<Vector>& input, const ParamTensor& kernel,
                                   const ParamTensor& bias, std::size_t stride, Padding padding);

// Gated recurrent unit, gate order (reset, update, new) as in common frameworks:
//   r = sig(W_ir x + b_ir + W_hr h + b_hr)
//   z = sig(W_iz x + b_iz + W_hz h + b_hz)
//   n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
//   h' = (1 - z) * n + z * h
struct GruCell {
  ParamTensor w_ih;  // [3h, in]
  ParamTensor w_hh;  // [3h, h]
  ParamTensor b_ih;  // [3h]
  ParamTensor b_hh;  // [3h]

  GruCell() = default;
  GruCell(const std::string& name, std::size_t in, std::size_t hidden);

  std::size_t hidden_size() const { return w_hh.shape()[1]; }
  std::size_t input_size() const { return w_ih.shape()[1]; }

  void init(Rng& rng);
  Var forward(Tape& tape, Var x, Var h);
  void collect(ParamList& out);
};

Vector gru_cell(std::span<const double> input, std::span<const double> hidden, GruCell& params);

Matrix row_matrix(std::span<const double> v);
Vector to_vector(const Matrix& row_matrix_1xn);

}  // namespace agg::nn
