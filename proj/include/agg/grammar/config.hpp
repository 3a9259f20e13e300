#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "agg/numeric/layers.hpp"

namespace agg::grammar {

enum class EncoderMode { temporal_conv, gru };
enum class TerminalMode { one_hot_class, multi_label, continuous };

EncoderMode parse_encoder_mode(std::string_view name);
std::string_view to_string(EncoderMode m);
std::string_view to_string(TerminalMode m);

struct GrammarConfig {
  // Latent width of a non-terminal vector N.
  std::size_t d_nonterminal = 64;
  // Width of a terminal vector t (class count, or 128 for 32 quaternion joints).
  std::size_t d_terminal = 65;
  // Size of the globally shared rule bank.
  std::size_t num_rules = 256;
  // Rules considered per non-terminal; default k for pruned enumeration.
  std::size_t branching_k = 4;
  // If set, all but the m most probable rules of each non-terminal get zero mass.
  std::optional<std::size_t> topk_mask = 4;
  double gumbel_temperature = 1.0;
  nn::Activation terminal_activation = nn::Activation::softmax;

  // Fully connected layers in f_R and in each of f_N / f_T.
  std::size_t rule_layers = 1;
  std::size_t expander_layers = 1;
  // Width of hidden layers when a stack has more than one layer (0 = d_nonterminal).
  std::size_t hidden_width = 0;
  nn::Activation hidden_activation = nn::Activation::relu;
  nn::Activation nonterminal_activation = nn::Activation::none;
  // Bias on the first layer of f_N / f_T. The selection always sums to one, so
  // the weights can represent it anyway; a shared bias moves every rule's
  // output together.
  bool selection_bias = false;
  // If > 0, f_T scores this many learned terminal vectors and outputs their
  // softmax-weighted combination.
  std::size_t terminal_codebook = 0;

  // Start-state encoder s(X).
  EncoderMode encoder_mode = EncoderMode::temporal_conv;
  std::size_t input_width = 65;
  std::size_t encoder_channels = 512;
  std::size_t encoder_kernel = 3;

  TerminalMode terminal_mode() const;
  std::size_t hidden() const { return hidden_width == 0 ? d_nonterminal : hidden_width; }

  // Throws ErrorKind::config on any violated invariant.
  void validate() const;
};

// 64-d non-terminals, 256 rules with 4 per non-terminal, one FC layer per
// function, temporal-conv encoder with 512 channels.
GrammarConfig activity_preset(std::size_t num_classes);

// 1024-d non-terminals, 128-d continuous terminals, 2048 rules with 2 per
// non-terminal, three FC layers per function, two-layer GRU encoder.
GrammarConfig pose_preset();

// As pose_preset() with a 1024-entry terminal codebook.
GrammarConfig pose_codebook_preset();

GrammarConfig preset(std::string_view name, std::size_t num_classes);

}  // namespace agg::grammar
