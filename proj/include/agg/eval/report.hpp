#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "agg/grammar/model.hpp"
#include "agg/synth/dataset.hpp"
#include "agg/synth/grammar.hpp"

namespace agg::eval {

// Metric table with horizons as columns, plus scalar summaries.
struct EvalReport {
  std::string model_id;
  std::string dataset_id;
  std::uint64_t seed = 0;
  std::size_t k = 10;
  std::vector<std::size_t> horizons;
  // (metric name, one value per horizon)
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  std::vector<std::pair<std::string, double>> scalars;

  // Horizons strictly increasing, one value per horizon, all values finite.
  void validate() const;
  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  std::string to_table() const;
};

struct EvalOptions {
  std::size_t context = 0;
  std::vector<std::size_t> horizons = {1, 2, 3, 4, 5};
  std::size_t k = 10;
  std::uint64_t seed = 0;
  // Items scored per horizon (the first `items` of the dataset).
  std::size_t items = 200;
  // n-gram order and sample count for the oracle KL (discrete data only).
  std::size_t ngram = 3;
  std::size_t kl_samples = 10000;
};

// Discrete data: exact match of the first h tokens (single sample and best of
// K) and mAP of the K-sample class frequencies at step h. With an oracle, the
// n-gram KL is added as a scalar.
// Quaternion-delta data: mean angle error of the composed absolute pose at
// step h, single sample and best of K.
EvalReport evaluate_model(grammar::GrammarModel& model, const synth::SequenceDataset& dataset,
                          const EvalOptions& options, const synth::GroundTruthGrammar* oracle = nullptr);

}  // namespace agg::eval
