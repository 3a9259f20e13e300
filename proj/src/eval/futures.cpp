#include "agg/eval/futures.hpp"

#include <algorithm>

#include "agg/error.hpp"
#include "agg/eval/metrics.hpp"
#include "agg/numeric/rng.hpp"

namespace agg::eval {

namespace {

std::vector<nn::Vector> prefix_frames(const synth::SequenceDataset& ds, std::size_t index, std::size_t context,
                                      std::size_t width) {
  if (context == 0) return {nn::Vector(width, 0.0)};
  std::vector<nn::Vector> frames;
  for (std::size_t t = 0; t < context; ++t) {
    if (ds.kind == synth::DatasetKind::discrete) {
      nn::Vector f(width, 0.0);
      f.at(ds.tokens[index][t]) = 1.0;
      frames.push_back(std::move(f));
    } else {
      frames.push_back(ds.frames[index][t]);
    }
  }
  return frames;
}

}  // namespace

grammar::NonTerminalState start_state(grammar::GrammarModel& model, const synth::SequenceDataset& ds,
                                      std::size_t index, std::size_t context) {
  require(index < ds.size(), ErrorKind::input, "start_state: item out of range");
  require(context <= ds.length, ErrorKind::input, "start_state: context longer than the sequence");
  return model.encode_start(prefix_frames(ds, index, context, model.config().input_width));
}

std::vector<synth::TokenSeq> sample_model_sequences(grammar::GrammarModel& model, const synth::SequenceDataset& ds,
                                                    std::size_t context, std::size_t count, std::uint64_t seed,
                                                    grammar::Policy policy) {
  require(ds.kind == synth::DatasetKind::discrete, ErrorKind::input, "token sampling needs a discrete dataset");
  require(!ds.empty() || context == 0, ErrorKind::input, "sampling with a context needs prefixes");
  require(context < ds.length || ds.empty(), ErrorKind::input, "context must leave steps to generate");
  const std::size_t length = ds.length;
  const std::size_t horizon = length - context;
  constexpr std::size_t kChunk = 256;
  std::vector<synth::TokenSeq> out;
  out.reserve(count);
  for (std::size_t begin = 0; begin < count; begin += kChunk) {
    const std::size_t n = std::min(kChunk, count - begin);
    nn::Tape tape;
    nn::Matrix starts(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(model.config().d_nonterminal));
    std::vector<std::uint64_t> seeds(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t item = ds.empty() ? 0 : (begin + i) % ds.size();
      // With no context every start state is the same.
      if (context > 0 || i == 0) starts.row(static_cast<Eigen::Index>(i)) = nn::row_matrix(start_state(model, ds, item, context).values);
      else starts.row(static_cast<Eigen::Index>(i)) = starts.row(0);
      seeds[i] = derive_seed(seed, begin + i);
    }
    grammar::UnrollOptions opts{policy, model.config().gumbel_temperature, 0};
    const grammar::UnrollTrace trace = grammar::unroll_batch(tape, model, tape.constant(std::move(starts)), horizon,
                                                             opts, seeds);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t item = ds.empty() ? 0 : (begin + i) % ds.size();
      synth::TokenSeq seq;
      for (std::size_t t = 0; t < context; ++t) seq.push_back(ds.tokens[item][t]);
      for (std::size_t t = 0; t < horizon; ++t) {
        seq.push_back(grammar::argmax(nn::to_vector(trace.terminals[t].value().row(static_cast<Eigen::Index>(i)))));
      }
      out.push_back(std::move(seq));
    }
  }
  return out;
}

double best_of_k_exact_match(grammar::GrammarModel& model, const synth::SequenceDataset& ds,
                             const std::vector<std::size_t>& items, std::size_t context, std::size_t horizon,
                             std::size_t k, std::uint64_t seed) {
  require(ds.kind == synth::DatasetKind::discrete, ErrorKind::input, "exact match needs a discrete dataset");
  require(!items.empty(), ErrorKind::input, "exact match over no items");
  require(context + horizon <= ds.length, ErrorKind::input, "horizon runs past the end of the sequences");
  double hits = 0.0;
  for (std::size_t item : items) {
    const grammar::NonTerminalState start = start_state(model, ds, item, context);
    const auto& truth = ds.tokens.at(item);
    hits += best_of_k(k, Orientation::higher_is_better, derive_seed(seed, item), [&](std::uint64_t s) {
      const grammar::SequenceSample sample =
          grammar::unroll(model, start, horizon, grammar::Policy::sample_hard, s);
      const auto tokens = sample.tokens();
      return std::equal(tokens.begin(), tokens.end(), truth.begin() + static_cast<std::ptrdiff_t>(context)) ? 1.0
                                                                                                            : 0.0;
    });
  }
  return hits / static_cast<double>(items.size());
}

}  // namespace agg::eval
