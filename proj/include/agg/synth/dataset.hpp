#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "agg/synth/grammar.hpp"

namespace agg::synth {

enum class DatasetKind { discrete, continuous };

// Fixed-length corpus of token sequences or real-vector frame sequences.
struct SequenceDataset {
  DatasetKind kind = DatasetKind::discrete;
  std::vector<TokenSeq> tokens;
  std::vector<std::vector<std::vector<double>>> frames;
  // Alphabet size (discrete) or frame width (continuous).
  std::size_t width = 0;
  std::size_t length = 0;

  std::size_t size() const { return kind == DatasetKind::discrete ? tokens.size() : frames.size(); }
  bool empty() const { return size() == 0; }
  // Throws ErrorKind::input on non-uniform length or out-of-range tokens.
  void validate() const;

  bool operator==(const SequenceDataset&) const = default;
};

SequenceDataset sample_dataset(const GroundTruthGrammar& g, std::size_t count, std::size_t length, std::uint64_t seed);

// Maps each token to embedding[token] and adds N(0, noise_std^2) per entry.
SequenceDataset make_continuous_dataset(const SequenceDataset& discrete, const std::vector<std::vector<double>>& embedding,
                                        double noise_std, std::uint64_t seed);

// One unit quaternion per joint for every token, seeded.
std::vector<std::vector<double>> quaternion_embedding(std::size_t num_tokens, std::size_t joints, std::uint64_t seed);

// Quaternion stand-in for pose data: embed, perturb, renormalize each 4-block,
// then emit per-step deltas (see to_deltas).
SequenceDataset make_quaternion_dataset(const SequenceDataset& discrete, std::size_t joints, double noise_std,
                                        std::uint64_t seed);

// JSON lines. An optional first record {"meta": {"kind", "width", "length"}}
// is written by save_dataset; data records are {"tokens": [...]} or
// {"frames": [[...], ...]}. `alphabet` overrides the width used to check tokens.
SequenceDataset load_dataset(const std::string& path, std::optional<std::size_t> alphabet = std::nullopt);
void save_dataset(const std::string& path, const SequenceDataset& dataset);

}  // namespace agg::synth
