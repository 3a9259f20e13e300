#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "agg/adversarial/discriminator.hpp"
#include "agg/adversarial/losses.hpp"
#include "agg/grammar/model.hpp"
#include "agg/grammar/sampling.hpp"
#include "agg/numeric/optimizer.hpp"
#include "agg/synth/dataset.hpp"

namespace agg::adv {

// How real sequences get a non-terminal stream for D.
//   nearest: the rule whose terminal is closest in cosine to the observed one.
//   posterior: a rule drawn from the model's own distribution restricted to
//     rules whose argmax class is the observed token, so that for a model that
//     matches the data the real and generated (t, N) pairs agree in law.
//     Class-vector terminals only; falls back to nearest when no rule fits.
enum class RealStream { nearest, posterior };

struct TrainConfig {
  std::size_t iterations = 5000;
  std::size_t batch_size = 32;
  std::size_t d_steps_per_g_step = 1;
  GeneratorLoss generator_loss = GeneratorLoss::non_saturating;
  // Sequence length L of the dataset; the first context_length steps are fed
  // to the encoder and the remaining L - context_length are generated.
  std::size_t sequence_length = 12;
  std::size_t context_length = 0;
  std::uint64_t seed = 0;
  grammar::Policy policy = grammar::Policy::sample_hard;
  // Class-vector terminals reach D as straight-through one-hots, like the
  // real one-hot tokens they are compared with.
  bool discretize_terminals = true;
  RealStream real_stream = RealStream::posterior;
  // Linear anneal of the Gumbel temperature from the grammar's value.
  std::optional<double> final_temperature;
  double learning_rate0 = 0.1;
  // Initial learning rate of D when it should differ from G's.
  std::optional<double> d_learning_rate0;
  double momentum = 0.9;
  nn::LrSchedule schedule = nn::LrSchedule::cosine;
  // Fraction of the dataset held out for the final discriminator accuracy.
  double holdout_fraction = 0.1;
  std::size_t log_every = 100;
  std::size_t checkpoint_every = 0;
  std::string checkpoint_dir;

  std::size_t horizon() const { return sequence_length - context_length; }
  void validate() const;
};

struct MetricsRow {
  std::size_t iteration = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  double d_accuracy = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  // Window means, one row per log_every iterations.
  std::vector<MetricsRow> log;
  // Per-iteration losses.
  std::vector<double> d_losses;
  std::vector<double> g_losses;
  bool all_finite = true;
  double holdout_accuracy = 0.0;
};

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

// Terminal rows for a dataset slice: one-hot tokens or raw frames, item-major
// ((indices.size() * count) x width) over steps [begin, begin + count).
nn::Matrix terminal_rows(const synth::SequenceDataset& ds, const std::vector<std::size_t>& indices, std::size_t begin,
                         std::size_t count);

// N_0 for each indexed item from its first `context` steps (a single zero frame
// when context is 0). Recorded on `tape`.
nn::Var encode_prefixes(nn::Tape& tape, grammar::GrammarModel& model, const synth::SequenceDataset& ds,
                        const std::vector<std::size_t>& indices, std::size_t context);

// Non-terminal stream N_1..N_H for real terminals: at each step the rule with
// positive probability whose terminal is closest in cosine to the observed
// one is applied. With `posterior_seed` the rule is instead drawn as described
// under RealStream::posterior. Returns (batch * horizon) x d_nonterminal,
// item-major.
nn::Matrix teacher_forced_nonterminals(grammar::GrammarModel& model, const nn::Matrix& start,
                                       const nn::Matrix& terminals, Eigen::Index horizon,
                                       std::optional<std::uint64_t> posterior_seed = std::nullopt);

// Alternating D / G updates driven only by the adversarial losses.
TrainResult train_adversarial(const synth::SequenceDataset& dataset, grammar::GrammarModel& model,
                              Discriminator& discriminator, const TrainConfig& config);

// Accuracy of D on `indices` (real) against as many fresh generated sequences.
double discriminator_accuracy(const synth::SequenceDataset& dataset, const std::vector<std::size_t>& indices,
                              grammar::GrammarModel& model, Discriminator& discriminator, const TrainConfig& config,
                              std::uint64_t stream);

}  // namespace agg::adv
