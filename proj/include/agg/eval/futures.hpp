#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "agg/grammar/model.hpp"
#include "agg/grammar/sampling.hpp"
#include "agg/synth/dataset.hpp"

namespace agg::eval {

// Starting non-terminal for dataset item `index` from its first `context` steps.
grammar::NonTerminalState start_state(grammar::GrammarModel& model, const synth::SequenceDataset& ds,
                                      std::size_t index, std::size_t context);

// `count` full-length sequences: the real prefix of item i % size followed by
// the model's sampled continuation (terminal argmax). Sample i draws its noise
// from derive_seed(seed, i).
std::vector<synth::TokenSeq> sample_model_sequences(grammar::GrammarModel& model, const synth::SequenceDataset& ds,
                                                    std::size_t context, std::size_t count, std::uint64_t seed,
                                                    grammar::Policy policy = grammar::Policy::sample_hard);

// Fraction of items for which at least one of K sampled futures reproduces
// the item's next `horizon` tokens exactly.
double best_of_k_exact_match(grammar::GrammarModel& model, const synth::SequenceDataset& ds,
                             const std::vector<std::size_t>& items, std::size_t context, std::size_t horizon,
                             std::size_t k, std::uint64_t seed);

}  // namespace agg::eval
