#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "agg/grammar/types.hpp"
#include "agg/numeric/layers.hpp"

namespace agg::adv {

struct DiscriminatorConfig {
  std::array<std::size_t, 3> conv_channels{128, 256, 64};
  std::size_t kernel_width = 5;
  std::size_t stride = 4;
  nn::Padding padding = nn::Padding::same;

  void validate() const;
};

// D(t, n): a conv stack over the terminal stream and one over the
// non-terminal stream (leaky ReLU after each conv), each mean-pooled over time,
// concatenated, then one dense unit. Stream j pairs t_j with N_{j+1}.
class Discriminator {
 public:
  Discriminator(DiscriminatorConfig config, std::size_t terminal_width, std::size_t nonterminal_width,
                std::uint64_t init_seed);

  Discriminator(const Discriminator&) = delete;
  Discriminator& operator=(const Discriminator&) = delete;

  const DiscriminatorConfig& config() const { return config_; }
  std::size_t terminal_width() const { return terminal_width_; }
  std::size_t nonterminal_width() const { return nonterminal_width_; }

  nn::ParamList parameters();
  nn::DenseLayer& head() { return head_; }

  // terminals: (batch*L) x terminal_width, nonterminals: (batch*L) x nonterminal_width.
  // Returns batch x 1 pre-sigmoid scores.
  nn::Var logits(nn::Tape& tape, nn::Var terminals, nn::Var nonterminals, nn::SeqShape shape);

  // p = sigmoid(logit) for one sequence; n_seq must hold N_1..N_L (same length as t_seq).
  double discriminate(const std::vector<grammar::TerminalVec>& t_seq,
                      const std::vector<grammar::NonTerminalState>& n_seq);

 private:
  nn::Var stack(nn::Tape& tape, std::array<nn::Conv1dLayer, 3>& convs, nn::Var x, nn::SeqShape shape);

  DiscriminatorConfig config_;
  std::size_t terminal_width_;
  std::size_t nonterminal_width_;
  std::array<nn::Conv1dLayer, 3> terminal_convs_;
  std::array<nn::Conv1dLayer, 3> nonterminal_convs_;
  nn::DenseLayer head_;
};

}  // namespace agg::adv
