#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "agg/synth/grammar.hpp"

namespace agg::eval {

// Mean over classes (with at least one positive) of the average precision of
// the ranking induced by the scores. scores[i][c], labels[i][c] in {0, 1}.
// Throws ErrorKind::undefined_metric when no class has a positive.
double map_at_horizon(const std::vector<std::vector<double>>& scores, const std::vector<std::vector<int>>& labels);

// Average precision of one class; ties in score are ranked pessimistically.
double average_precision(const std::vector<double>& scores, const std::vector<int>& labels);

enum class Orientation { higher_is_better, lower_is_better };

// Best metric over K draws. Draw i uses seed derive_seed(seed, i), so a larger
// K only adds draws to the same prefix.
double best_of_k(std::size_t k, Orientation orientation, std::uint64_t seed,
                 const std::function<double(std::uint64_t)>& draw_metric);

// Geodesic angle 2 acos(min(1, |<p, q>|)) averaged over joints and frames.
// Frames hold 4J values. Quaternions off unit norm by more than 1e-6 are
// normalized; a zero quaternion is an input error.
double mean_angle_error(const std::vector<std::vector<double>>& pred, const std::vector<std::vector<double>>& truth);

// Number of quaternions normalized by the last mean_angle_error call on this thread.
std::size_t last_normalized_count();

using NgramDist = std::map<synth::TokenSeq, double>;

inline constexpr double kDefaultSmoothing = 1e-6;

// KL(p || q) in nats after adding epsilon to every cell of the support and
// renormalizing. The support is the full alphabet^n grid when it has at most
// 10^6 cells and alphabet > 0, otherwise the union of both supports.
double ngram_kl(const NgramDist& p, const NgramDist& q, std::size_t alphabet, std::size_t n,
                double epsilon = kDefaultSmoothing);

// Relative frequencies of n-token windows starting at positions first..len-n.
NgramDist empirical_ngrams(const std::vector<synth::TokenSeq>& sequences, std::size_t n, std::size_t first = 0);

// KL(oracle || samples) for sequences laid out like the oracle's length-L
// sequences; windows start at `first` (the context length).
double ngram_kl(const synth::GroundTruthGrammar& oracle, const std::vector<synth::TokenSeq>& samples, std::size_t n,
                std::size_t length, std::size_t first, double epsilon = kDefaultSmoothing);

}  // namespace agg::eval
