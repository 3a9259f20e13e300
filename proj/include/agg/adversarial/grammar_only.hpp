#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "agg/grammar/model.hpp"
#include "agg/numeric/optimizer.hpp"
#include "agg/synth/dataset.hpp"

namespace agg::adv {

// Non-adversarial baseline: maximum likelihood of the observed future under a
// pruned enumeration of rule paths. At each step every kept path is extended
// by its k_cap most probable rules, the extension scored by
//   log r(rule) + log t_rule[observed token],
// and only the `beam` best paths per item survive. The loss is
// -log sum(exp(path score)) over the survivors.
struct GrammarOnlyConfig {
  std::size_t iterations = 1000;
  std::size_t batch_size = 32;
  std::size_t sequence_length = 12;
  std::size_t context_length = 0;
  std::size_t k_cap = 4;
  std::size_t beam = 64;
  std::uint64_t seed = 0;
  double learning_rate0 = 0.1;
  double momentum = 0.9;
  nn::LrSchedule schedule = nn::LrSchedule::cosine;

  std::size_t horizon() const { return sequence_length - context_length; }
  void validate() const;
};

struct GrammarOnlyResult {
  // Mean negative log-likelihood per iteration (nats per sequence).
  std::vector<double> nll;
  bool all_finite = true;
};

// Pruned-enumeration negative log-likelihood of the dataset items `indices`,
// recorded on `tape` (mean over items).
nn::Var pruned_nll(nn::Tape& tape, grammar::GrammarModel& model, const synth::SequenceDataset& dataset,
                   const std::vector<std::size_t>& indices, const GrammarOnlyConfig& config);

GrammarOnlyResult train_grammar_only(const synth::SequenceDataset& dataset, grammar::GrammarModel& model,
                                     const GrammarOnlyConfig& config);

}  // namespace agg::adv
