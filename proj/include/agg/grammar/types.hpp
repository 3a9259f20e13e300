#pragma once

#include <cstddef>
#include <vector>

#include "agg/grammar/config.hpp"
#include "agg/numeric/param_tensor.hpp"

namespace agg::grammar {

// Latent non-terminal N (the grammar's memory state).
struct NonTerminalState {
  nn::Vector values;
};

// Emitted terminal t.
struct TerminalVec {
  nn::Vector values;
  TerminalMode mode = TerminalMode::continuous;
};

struct RuleDistribution {
  nn::Vector probs;
  nn::Vector selected;
  bool hard = false;
};

struct SequenceSample {
  // N_0 ... N_L
  std::vector<NonTerminalState> nonterminals;
  // t_1 ... t_L
  std::vector<TerminalVec> terminals;
  std::vector<std::size_t> rule_indices;
  double log_prob = 0.0;
  std::size_t length = 0;

  // argmax of each terminal (ties to the smallest index).
  std::vector<std::size_t> tokens() const;
};

std::size_t argmax(const nn::Vector& v);

// Checks the type invariants; throws ErrorKind::input on violation.
void check(const NonTerminalState& n, std::size_t d_nonterminal);
void check(const TerminalVec& t);
void check(const RuleDistribution& r);
void check(const SequenceSample& s);

}  // namespace agg::grammar
