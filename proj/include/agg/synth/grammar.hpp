#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "agg/numeric/rng.hpp"

namespace agg::synth {

// state --token--> next, with probability `prob`.
struct Rule {
  std::size_t state = 0;
  std::size_t token = 0;
  std::size_t next = 0;
  double prob = 0.0;
};

// Explicit stochastic right-linear grammar with no termination rule.
// Construction validates: per-state probabilities sum to 1 (1e-9), indices in
// range, every state has at least one rule and is reachable from the start.
class GroundTruthGrammar {
 public:
  GroundTruthGrammar(std::vector<std::string> states, std::vector<std::string> tokens, std::vector<Rule> rules,
                     std::size_t start = 0);

  std::size_t num_states() const { return states_.size(); }
  std::size_t num_tokens() const { return tokens_.size(); }
  std::size_t start() const { return start_; }
  const std::vector<std::string>& state_names() const { return states_; }
  const std::vector<std::string>& token_names() const { return tokens_; }
  const std::vector<Rule>& rules() const { return rules_; }
  // Indices into rules() for one state, in declaration order.
  const std::vector<std::size_t>& rules_from(std::size_t state) const { return by_state_.at(state); }

  std::string to_json() const;
  static GroundTruthGrammar from_json(std::string_view text);

 private:
  std::vector<std::string> states_;
  std::vector<std::string> tokens_;
  std::vector<Rule> rules_;
  std::size_t start_ = 0;
  std::vector<std::vector<std::size_t>> by_state_;
};

GroundTruthGrammar load_grammar(const std::string& path);
void save_grammar(const std::string& path, const GroundTruthGrammar& g);

// W -> walking W | stopping U | running V, with U and V absorbing their own
// behaviours (V may fall into U).
GroundTruthGrammar walk_stop_run(double walk = 0.8, double stop = 0.1, double run = 0.1);
// "a a" then, with equal probability, "b c b c ..." or "d e d e ...".
GroundTruthGrammar bimodal();
// Six steps a0..a5 in a cycle; each step goes on to the next (0.7) or skips one (0.3).
GroundTruthGrammar recipe();
// Seeded well-formed grammar; every state gets a few rules and is reachable.
GroundTruthGrammar random_grammar(std::uint64_t seed, std::size_t states, std::size_t tokens);

struct PresetOptions {
  std::uint64_t seed = 0;
  std::size_t states = 4;
  std::size_t tokens = 4;
};

// walk_stop_run | bimodal | recipe | random
GroundTruthGrammar build_preset(std::string_view name, const PresetOptions& options = {});

using TokenSeq = std::vector<std::size_t>;

TokenSeq sample_sequence(const GroundTruthGrammar& g, std::size_t length, Rng& rng);

inline constexpr std::size_t kDefaultOracleBudget = 1'000'000;

// Exact probability of every length-h token string emitted from `state`.
// Throws ErrorKind::resource when tokens^h exceeds `budget`.
std::map<TokenSeq, double> exact_future_distribution(const GroundTruthGrammar& g, std::size_t state,
                                                     std::size_t horizon, std::size_t budget = kDefaultOracleBudget);

// Per-step token marginals for steps 1..h from `state` (forward recursion over states).
std::vector<std::vector<double>> future_marginals(const GroundTruthGrammar& g, std::size_t state, std::size_t horizon);

// Distribution over states after `steps` emissions from the start state.
std::vector<double> state_distribution(const GroundTruthGrammar& g, std::size_t steps);

// Exact distribution of n-token windows in length-L sequences from the start
// state, averaged over window starts first..L-n.
std::map<TokenSeq, double> exact_ngram_distribution(const GroundTruthGrammar& g, std::size_t length, std::size_t n,
                                                    std::size_t first = 0, std::size_t budget = kDefaultOracleBudget);

}  // namespace agg::synth
