#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "agg/grammar/model.hpp"

namespace agg::grammar {

enum class Policy { sample_hard, sample_soft, greedy };

Policy parse_policy(std::string_view name);
std::string_view to_string(Policy p);

// y = softmax((logits + g) / tau) with g_i = -log(-log(u_i)). In hard mode the
// forward value is the one-hot argmax of y and the gradient is that of y.
nn::Var gumbel_softmax(nn::Var logits, double tau, const nn::Matrix& uniform_noise, bool hard);
nn::Vector gumbel_softmax(std::span<const double> logits, double tau, std::span<const double> uniform_noise,
                          bool hard);

// Row-wise one-hot argmax of y (ties to the smaller index) carrying y's gradient.
nn::Var straight_through_argmax(nn::Var y);

// Uniform (0,1) noise for one rule choice, a pure function of (seed, step).
nn::Vector step_noise(std::uint64_t seed, std::size_t step, std::size_t num_rules);
void fill_step_noise(std::uint64_t seed, std::size_t step, std::span<double> out);

struct UnrollOptions {
  Policy policy = Policy::sample_hard;
  double temperature = 1.0;
  // Index of the first step, so that a restart from N_j replays steps j, j+1, ...
  std::size_t first_step = 0;
};

// Batched, recorded unroll. Row b draws its noise from row_seeds[b].
struct UnrollTrace {
  std::vector<nn::Var> nonterminals;  // N_0 ... N_L, each batch x d_nonterminal
  std::vector<nn::Var> terminals;     // t_1 ... t_L, each batch x d_terminal
  std::vector<std::vector<std::size_t>> rules;  // [step][row]
  std::vector<double> log_prob;                 // per row
};

UnrollTrace unroll_batch(nn::Tape& tape, GrammarModel& model, nn::Var start, std::size_t length,
                         const UnrollOptions& options, std::span<const std::uint64_t> row_seeds);

// Single-sequence unroll: rule_probs -> select -> expand, `length` times.
SequenceSample unroll(GrammarModel& model, const NonTerminalState& start, std::size_t length, Policy policy,
                      std::uint64_t seed, std::size_t first_step = 0);

SequenceSample to_sample(const UnrollTrace& trace, std::size_t row, TerminalMode mode);

struct EnumeratedSequence {
  SequenceSample sample;
  double probability = 0.0;
};

inline constexpr std::size_t kDefaultEnumerationBudget = 1'000'000;

// All sequences reachable by expanding, at every step, the k_cap most probable
// rules (zero-probability rules are never expanded). Path probabilities are
// products of rule probabilities; the result is sorted by descending probability.
// Throws ErrorKind::resource if k^L exceeds `budget`.
std::vector<EnumeratedSequence> enumerate_all(GrammarModel& model, const NonTerminalState& start, std::size_t length,
                                              std::size_t k_cap, std::size_t budget = kDefaultEnumerationBudget);

// Effective branching factor used by enumerate_all for this model.
std::size_t effective_branching(const GrammarConfig& config, std::size_t k_cap);

// k^L, saturating at SIZE_MAX.
std::size_t saturating_power(std::size_t k, std::size_t length);

}  // namespace agg::grammar
