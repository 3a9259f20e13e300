#include "agg/numeric/layers.hpp"

#include <cmath>

#include "agg/error.hpp"

namespace agg::nn {

Activation parse_activation(std::string_view name) {
  if (name == "none") return Activation::none;
  if (name == "relu") return Activation::relu;
  if (name == "leaky_relu") return Activation::leaky_relu;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "softmax") return Activation::softmax;
  if (name == "tanh") return Activation::tanh;
  fail(ErrorKind::config, "unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::none: return "none";
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softmax: return "softmax";
    case Activation::tanh: return "tanh";
  }
  return "none";
}

Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::none: return x;
    case Activation::relu: return relu(x);
    case Activation::leaky_relu: return leaky_relu(x, kLeakySlope);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::softmax: return softmax_rows(x);
    case Activation::tanh: return tanh(x);
  }
  return x;
}

void xavier_uniform(ParamTensor& p, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(p.value().rows(), p.value().cols());
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (2.0 * rng.uniform() - 1.0) * limit;
  p.assign(m);
}

Var dense_forward(Var input, Var weights, Var bias, Activation activation) {
  return activate(add_rowvec(matmul_nt(input, weights), bias), activation);
}

Matrix row_matrix(std::span<const double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = v[i];
  return m;
}

Vector to_vector(const Matrix& m) { return Vector(m.data(), m.data() + m.size()); }

Vector dense_forward(std::span<const double> input, const ParamTensor& weights,
                     const ParamTensor& bias, Activation activation) {
  Tape tape;
  // const_cast is safe: the tape only reads parameters unless backward() runs.
  Var w = tape.param(const_cast<ParamTensor&>(weights));
  Var b = tape.param(const_cast<ParamTensor&>(bias));
  return to_vector(dense_forward(tape.constant(row_matrix(input)), w, b, activation).value());
}

DenseLayer::DenseLayer(const std::string& name, std::size_t in, std::size_t out, Activation act)
    : weight(name + ".weight", {out, in}), bias(name + ".bias", {out}), activation(act) {}

void DenseLayer::init(Rng& rng) {
  xavier_uniform(weight, in_features(), out_features(), rng);
  bias.fill(0.0);
}

Var DenseLayer::forward(Tape& tape, Var x) {
  if (!has_bias) return activate(matmul_nt(x, tape.param(weight)), activation);
  return dense_forward(x, tape.param(weight), tape.param(bias), activation);
}

DenseStack::DenseStack(const std::string& name, std::vector<std::size_t> widths, Activation hidden,
                       Activation output, bool first_bias) {
  require(widths.size() >= 2, ErrorKind::config, "dense stack '" + name + "' needs at least one layer");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = i + 2 == widths.size();
    layers_.emplace_back(name + "." + std::to_string(i), widths[i], widths[i + 1], last ? output : hidden);
  }
  layers_.front().has_bias = first_bias;
}

void DenseStack::init(Rng& rng) {
  for (auto& l : layers_) l.init(rng);
}

Var DenseStack::forward(Tape& tape, Var x) {
  for (auto& l : layers_) x = l.forward(tape, x);
  return x;
}

void DenseStack::collect(ParamList& out) {
  for (auto& l : layers_) l.collect(out);
}

Conv1dLayer::Conv1dLayer(const std::string& name, std::size_t in, std::size_t out, std::size_t width_,
                         std::size_t stride_, Padding padding_)
    : kernel(name + ".kernel", {out, width_, in}),
      bias(name + ".bias", {out}),
      width(width_),
      stride(stride_),
      padding(padding_) {
  require(width % 2 == 1, ErrorKind::config, "conv '" + name + "': kernel width must be odd");
  require(stride >= 1, ErrorKind::config, "conv '" + name + "': stride must be positive");
}

void Conv1dLayer::init(Rng& rng) {
  const std::size_t in = kernel.shape()[2];
  const std::size_t out = kernel.shape()[0];
  xavier_uniform(kernel, in * width, out * width, rng);
  bias.fill(0.0);
}

Var Conv1dLayer::forward(Tape& tape, Var x, SeqShape shape, SeqShape* out_shape) {
  const auto w = static_cast<Eigen::Index>(width);
  const auto s = static_cast<Eigen::Index>(stride);
  Var y = conv1d(x, shape, tape.param(kernel), tape.param(bias), w, s, padding);
  if (out_shape != nullptr) *out_shape = {shape.batch, conv_output_length(shape.length, w, s, padding)};
  return y;
}

std::vector<Vector> conv1d_forward(const std::vector<Vector>& input, const ParamTensor& kernel,
                                   const ParamTensor& bias, std::size_t stride, Padding padding) {
  require(!input.empty(), ErrorKind::input, "conv1d: empty input");
  require(kernel.shape().size() == 3, ErrorKind::dimension, "conv1d: kernel must be [out, width, in]");
  const auto in_ch = static_cast<Eigen::Index>(input.front().size());
  Matrix x(static_cast<Eigen::Index>(input.size()), in_ch);
  for (std::size_t t = 0; t < input.size(); ++t) {
    require(static_cast<Eigen::Index>(input[t].size()) == in_ch, ErrorKind::dimension,
            "conv1d: ragged channel vectors");
    x.row(static_cast<Eigen::Index>(t)) = row_matrix(input[t]);
  }
  Tape tape;
  Var y = conv1d(tape.constant(std::move(x)), {1, static_cast<Eigen::Index>(input.size())},
                 tape.param(const_cast<ParamTensor&>(kernel)), tape.param(const_cast<ParamTensor&>(bias)),
                 static_cast<Eigen::Index>(kernel.shape()[1]), static_cast<Eigen::Index>(stride), padding);
  std::vector<Vector> out;
  for (Eigen::Index r = 0; r < y.rows(); ++r) out.push_back(to_vector(y.value().row(r)));
  return out;
}

GruCell::GruCell(const std::string& name, std::size_t in, std::size_t hidden)
    : w_ih(name + ".w_ih", {3 * hidden, in}),
      w_hh(name + ".w_hh", {3 * hidden, hidden}),
      b_ih(name + ".b_ih", {3 * hidden}),
      b_hh(name + ".b_hh", {3 * hidden}) {}

void GruCell::init(Rng& rng) {
  xavier_uniform(w_ih, input_size(), 3 * hidden_size(), rng);
  xavier_uniform(w_hh, hidden_size(), 3 * hidden_size(), rng);
  b_ih.fill(0.0);
  b_hh.fill(0.0);
}

Var GruCell::forward(Tape& tape, Var x, Var h) {
  const auto hs = static_cast<Eigen::Index>(hidden_size());
  require(x.cols() == static_cast<Eigen::Index>(input_size()), ErrorKind::dimension,
          "gru: input width " + std::to_string(x.cols()) + " != " + std::to_string(input_size()));
  require(h.cols() == hs && h.rows() == x.rows(), ErrorKind::dimension, "gru: hidden state shape mismatch");
  Var gi = add_rowvec(matmul_nt(x, tape.param(w_ih)), tape.param(b_ih));
  Var gh = add_rowvec(matmul_nt(h, tape.param(w_hh)), tape.param(b_hh));
  Var r = sigmoid(add(slice_cols(gi, 0, hs), slice_cols(gh, 0, hs)));
  Var z = sigmoid(add(slice_cols(gi, hs, hs), slice_cols(gh, hs, hs)));
  Var n = tanh(add(slice_cols(gi, 2 * hs, hs), mul(r, slice_cols(gh, 2 * hs, hs))));
  // (1 - z) * n + z * h  ==  n + z * (h - n)
  return add(n, mul(z, sub(h, n)));
}

void GruCell::collect(ParamList& out) {
  out.push_back(&w_ih);
  out.push_back(&w_hh);
  out.push_back(&b_ih);
  out.push_back(&b_hh);
}

Vector gru_cell(std::span<const double> input, std::span<const double> hidden, GruCell& params) {
  Tape tape;
  Var y = params.forward(tape, tape.constant(row_matrix(input)), tape.constant(row_matrix(hidden)));
  return to_vector(y.value());
}

}  // namespace agg::nn
