#include "agg/grammar/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "agg/error.hpp"

namespace agg::grammar {

nn::Matrix topk_mask_matrix(const nn::Matrix& logits, std::size_t m) {
  const auto cols = static_cast<std::size_t>(logits.cols());
  nn::Matrix mask = nn::Matrix::Zero(logits.rows(), logits.cols());
  if (m >= cols) return mask;
  std::vector<std::size_t> order(cols);
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double la = logits(r, static_cast<Eigen::Index>(a));
                        const double lb = logits(r, static_cast<Eigen::Index>(b));
                        return la > lb || (la == lb && a < b);
                      });
    mask.row(r).setConstant(-std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < m; ++i) mask(r, static_cast<Eigen::Index>(order[i])) = 0.0;
  }
  return mask;
}

namespace {

std::vector<std::size_t> stack_widths(std::size_t in, std::size_t hidden, std::size_t out, std::size_t layers) {
  std::vector<std::size_t> w{in};
  for (std::size_t i = 1; i < layers; ++i) w.push_back(hidden);
  w.push_back(out);
  return w;
}

}  // namespace

GrammarModel::GrammarModel(GrammarConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  if (c.encoder_mode == EncoderMode::temporal_conv) {
    enc_conv1_ = nn::Conv1dLayer("s.conv1", c.input_width, c.encoder_channels, c.encoder_kernel, 1, nn::Padding::same);
    enc_conv2_ =
        nn::Conv1dLayer("s.conv2", c.encoder_channels, c.encoder_channels, c.encoder_kernel, 1, nn::Padding::same);
  } else {
    enc_gru1_ = nn::GruCell("s.gru1", c.input_width, c.encoder_channels);
    enc_gru2_ = nn::GruCell("s.gru2", c.encoder_channels, c.encoder_channels);
  }
  enc_out_ = nn::DenseLayer("s.out", c.encoder_channels, c.d_nonterminal, nn::Activation::none);

  rule_head_ = nn::DenseStack("f_R", stack_widths(c.d_nonterminal, c.hidden(), c.num_rules, c.rule_layers),
                              c.hidden_activation, nn::Activation::none);
  nonterminal_head_ =
      nn::DenseStack("f_N", stack_widths(c.num_rules, c.hidden(), c.d_nonterminal, c.expander_layers),
                     c.hidden_activation, c.nonterminal_activation, c.selection_bias);
  if (c.terminal_codebook > 0) {
    terminal_head_ =
        nn::DenseStack("f_T", stack_widths(c.num_rules, c.hidden(), c.terminal_codebook, c.expander_layers),
                       c.hidden_activation, nn::Activation::softmax, c.selection_bias);
    codebook_ = nn::ParamTensor("f_T.codebook", {c.terminal_codebook, c.d_terminal});
  } else {
    terminal_head_ = nn::DenseStack("f_T", stack_widths(c.num_rules, c.hidden(), c.d_terminal, c.expander_layers),
                                    c.hidden_activation, c.terminal_activation, c.selection_bias);
  }

  Rng rng(init_seed);
  if (c.encoder_mode == EncoderMode::temporal_conv) {
    enc_conv1_.init(rng);
    enc_conv2_.init(rng);
  } else {
    enc_gru1_.init(rng);
    enc_gru2_.init(rng);
  }
  enc_out_.init(rng);
  rule_head_.init(rng);
  nonterminal_head_.init(rng);
  terminal_head_.init(rng);
  if (c.terminal_codebook > 0) nn::xavier_uniform(codebook_, c.terminal_codebook, c.d_terminal, rng);
}

nn::ParamList GrammarModel::encoder_parameters() {
  nn::ParamList out;
  if (config_.encoder_mode == EncoderMode::temporal_conv) {
    enc_conv1_.collect(out);
    enc_conv2_.collect(out);
  } else {
    enc_gru1_.collect(out);
    enc_gru2_.collect(out);
  }
  enc_out_.collect(out);
  return out;
}

nn::ParamList GrammarModel::parameters() {
  nn::ParamList out = encoder_parameters();
  rule_head_.collect(out);
  nonterminal_head_.collect(out);
  terminal_head_.collect(out);
  if (config_.terminal_codebook > 0) out.push_back(&codebook_);
  return out;
}

nn::Var GrammarModel::encode_start(nn::Tape& tape, nn::Var frames, nn::SeqShape shape) {
  require(shape.batch >= 1 && shape.length >= 1, ErrorKind::input, "encode_start: empty input");
  require(frames.cols() == static_cast<Eigen::Index>(config_.input_width), ErrorKind::dimension,
          "encode_start: frame width " + std::to_string(frames.cols()) + ", expected " +
              std::to_string(config_.input_width));
  nn::Var pooled;
  if (config_.encoder_mode == EncoderMode::temporal_conv) {
    nn::SeqShape s1, s2;
    nn::Var h = nn::relu(enc_conv1_.forward(tape, frames, shape, &s1));
    h = nn::relu(enc_conv2_.forward(tape, h, s1, &s2));
    pooled = nn::mean_pool_time(h, s2);
  } else {
    const auto hs = static_cast<Eigen::Index>(config_.encoder_channels);
    nn::Var h1 = tape.constant(nn::Matrix::Zero(shape.batch, hs));
    nn::Var h2 = h1;
    nn::Var total;
    for (Eigen::Index t = 0; t < shape.length; ++t) {
      std::vector<Eigen::Index> rows;
      for (Eigen::Index b = 0; b < shape.batch; ++b) rows.push_back(b * shape.length + t);
      h1 = enc_gru1_.forward(tape, nn::gather_rows(frames, rows), h1);
      h2 = enc_gru2_.forward(tape, h1, h2);
      total = t == 0 ? h2 : nn::add(total, h2);
    }
    pooled = nn::scale(total, 1.0 / static_cast<double>(shape.length));
  }
  return enc_out_.forward(tape, pooled);
}

nn::Var GrammarModel::rule_logits(nn::Tape& tape, nn::Var nonterminals) {
  require(nonterminals.cols() == static_cast<Eigen::Index>(config_.d_nonterminal), ErrorKind::dimension,
          "rule head: non-terminal width mismatch");
  nn::Var logits = rule_head_.forward(tape, nonterminals);
  if (config_.topk_mask && *config_.topk_mask < config_.num_rules) {
    logits = nn::add_constant(logits, topk_mask_matrix(logits.value(), *config_.topk_mask));
  }
  return logits;
}

nn::Var GrammarModel::rule_probs(nn::Tape& tape, nn::Var nonterminals) {
  return nn::softmax_rows(rule_logits(tape, nonterminals));
}

nn::Var GrammarModel::expand_nonterminal(nn::Tape& tape, nn::Var selection) {
  require(selection.cols() == static_cast<Eigen::Index>(config_.num_rules), ErrorKind::dimension,
          "expand: selection width mismatch");
  return nonterminal_head_.forward(tape, selection);
}

nn::Var GrammarModel::expand_terminal(nn::Tape& tape, nn::Var selection) {
  require(selection.cols() == static_cast<Eigen::Index>(config_.num_rules), ErrorKind::dimension,
          "expand: selection width mismatch");
  nn::Var t = terminal_head_.forward(tape, selection);
  if (config_.terminal_codebook > 0) t = nn::matmul(t, tape.param(codebook_));
  return t;
}

NonTerminalState GrammarModel::encode_start(const std::vector<nn::Vector>& input) {
  require(!input.empty(), ErrorKind::input, "encode_start: empty input sequence");
  nn::Matrix frames(static_cast<Eigen::Index>(input.size()), static_cast<Eigen::Index>(config_.input_width));
  for (std::size_t t = 0; t < input.size(); ++t) {
    require(input[t].size() == config_.input_width, ErrorKind::dimension,
            "encode_start: frame " + std::to_string(t) + " has width " + std::to_string(input[t].size()));
    frames.row(static_cast<Eigen::Index>(t)) = nn::row_matrix(input[t]);
  }
  nn::Tape tape;
  nn::Var n = encode_start(tape, tape.constant(std::move(frames)), {1, static_cast<Eigen::Index>(input.size())});
  return {nn::to_vector(n.value())};
}

nn::Vector GrammarModel::rule_probs(const NonTerminalState& n) {
  check(n, config_.d_nonterminal);
  nn::Tape tape;
  return nn::to_vector(rule_probs(tape, tape.constant(nn::row_matrix(n.values))).value());
}

std::pair<NonTerminalState, TerminalVec> GrammarModel::expand(std::span<const double> selection) {
  require(selection.size() == config_.num_rules, ErrorKind::dimension, "expand: selection width mismatch");
  const double total = std::accumulate(selection.begin(), selection.end(), 0.0);
  require(std::abs(total - 1.0) <= 1e-6, ErrorKind::input, "expand: selection must sum to 1");
  nn::Tape tape;
  nn::Var sel = tape.constant(nn::row_matrix(selection));
  NonTerminalState n{nn::to_vector(expand_nonterminal(tape, sel).value())};
  TerminalVec t{nn::to_vector(expand_terminal(tape, sel).value()), config_.terminal_mode()};
  return {std::move(n), std::move(t)};
}

}  // namespace agg::grammar
