#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "agg/grammar/config.hpp"
#include "agg/grammar/types.hpp"
#include "agg/numeric/layers.hpp"

namespace agg::grammar {

// Learned regular grammar G = (s, f_R, f_N, f_T).
//
//   N_0 = s(X)                      start non-terminal from an observed prefix
//   r   = softmax(f_R(N))           distribution over the shared rule bank
//   N'  = f_N(sel), t = f_T(sel)    expansion of a (relaxed) one-hot rule choice
//
// Applying N -> t N' repeatedly realizes rules of the form A -> aB.
class GrammarModel {
 public:
  GrammarModel(GrammarConfig config, std::uint64_t init_seed);

  GrammarModel(const GrammarModel&) = delete;
  GrammarModel& operator=(const GrammarModel&) = delete;

  const GrammarConfig& config() const { return config_; }
  nn::ParamList parameters();
  nn::ParamList encoder_parameters();

  // --- recorded (batched) forms -------------------------------------------
  // frames: (batch * length) x input_width. Returns batch x d_nonterminal.
  nn::Var encode_start(nn::Tape& tape, nn::Var frames, nn::SeqShape shape);
  // Pre-softmax rule scores with the top-k mask applied (-inf outside).
  nn::Var rule_logits(nn::Tape& tape, nn::Var nonterminals);
  nn::Var rule_probs(nn::Tape& tape, nn::Var nonterminals);
  nn::Var expand_nonterminal(nn::Tape& tape, nn::Var selection);
  nn::Var expand_terminal(nn::Tape& tape, nn::Var selection);

  // --- single-item forms -----------------------------------------------------
  NonTerminalState encode_start(const std::vector<nn::Vector>& input);
  nn::Vector rule_probs(const NonTerminalState& n);
  std::pair<NonTerminalState, TerminalVec> expand(std::span<const double> selection);

 private:
  GrammarConfig config_;
  // temporal_conv encoder
  nn::Conv1dLayer enc_conv1_;
  nn::Conv1dLayer enc_conv2_;
  // gru encoder
  nn::GruCell enc_gru1_;
  nn::GruCell enc_gru2_;
  nn::DenseLayer enc_out_;

  nn::DenseStack rule_head_;
  nn::DenseStack nonterminal_head_;
  nn::DenseStack terminal_head_;
  nn::ParamTensor codebook_;
};

// Rows of `logits` with all but the m largest entries set to -inf
// (ties broken toward the smaller index).
nn::Matrix topk_mask_matrix(const nn::Matrix& logits, std::size_t m);

}  // namespace agg::grammar
