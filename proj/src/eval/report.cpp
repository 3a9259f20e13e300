#include "agg/eval/report.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "agg/error.hpp"
#include "agg/eval/futures.hpp"
#include "agg/eval/metrics.hpp"
#include "agg/grammar/sampling.hpp"
#include "agg/numeric/rng.hpp"
#include "agg/synth/quaternion.hpp"

namespace agg::eval {

void EvalReport::validate() const {
  for (std::size_t i = 1; i < horizons.size(); ++i) {
    require(horizons[i] > horizons[i - 1], ErrorKind::input, "report horizons must be strictly increasing");
  }
  for (const auto& [name, values] : rows) {
    require(values.size() == horizons.size(), ErrorKind::input, "report row '" + name + "' has the wrong width");
    for (double v : values) require(std::isfinite(v), ErrorKind::input, "report row '" + name + "' is not finite");
  }
  for (const auto& [name, v] : scalars) {
    require(std::isfinite(v), ErrorKind::input, "report value '" + name + "' is not finite");
  }
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["model_id"] = model_id;
  j["dataset_id"] = dataset_id;
  j["seed"] = seed;
  j["k"] = k;
  j["horizons"] = horizons;
  j["rows"] = nlohmann::json::array();
  for (const auto& [name, values] : rows) j["rows"].push_back({{"metric", name}, {"values", values}});
  j["scalars"] = nlohmann::json::array();
  for (const auto& [name, v] : scalars) j["scalars"].push_back({{"metric", name}, {"value", v}});
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.model_id = j.at("model_id").get<std::string>();
    r.dataset_id = j.at("dataset_id").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.k = j.at("k").get<std::size_t>();
    r.horizons = j.at("horizons").get<std::vector<std::size_t>>();
    for (const auto& row : j.at("rows")) {
      r.rows.emplace_back(row.at("metric").get<std::string>(), row.at("values").get<std::vector<double>>());
    }
    for (const auto& s : j.at("scalars")) r.scalars.emplace_back(s.at("metric").get<std::string>(), s.at("value").get<double>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("eval report: ") + e.what());
  }
  r.validate();
  return r;
}

std::string EvalReport::to_table() const {
  std::size_t name_width = 6;
  for (const auto& [name, values] : rows) name_width = std::max(name_width, name.size());
  for (const auto& [name, v] : scalars) name_width = std::max(name_width, name.size());
  constexpr int kCol = 10;

  std::ostringstream out;
  out << "model " << model_id << "  dataset " << dataset_id << "  seed " << seed << "  K " << k << '\n';
  out << std::left << std::setw(static_cast<int>(name_width)) << "metric" << std::right;
  for (std::size_t h : horizons) out << std::setw(kCol) << ("h=" + std::to_string(h));
  out << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& [name, values] : rows) {
    out << std::left << std::setw(static_cast<int>(name_width)) << name << std::right;
    for (double v : values) out << std::setw(kCol) << v;
    out << '\n';
  }
  for (const auto& [name, v] : scalars) {
    out << std::left << std::setw(static_cast<int>(name_width)) << name << std::right << std::setw(kCol) << v << '\n';
  }
  return out.str();
}

namespace {

std::vector<double> absolute_frame(const std::vector<std::vector<double>>& deltas, std::size_t index) {
  const std::vector<std::vector<double>> head(deltas.begin(), deltas.begin() + static_cast<std::ptrdiff_t>(index + 1));
  return synth::compose_deltas(head).back();
}

}  // namespace

EvalReport evaluate_model(grammar::GrammarModel& model, const synth::SequenceDataset& dataset,
                          const EvalOptions& options, const synth::GroundTruthGrammar* oracle) {
  require(!dataset.empty(), ErrorKind::input, "evaluate: empty dataset");
  require(!options.horizons.empty(), ErrorKind::input, "evaluate: no horizons");
  require(options.k >= 1, ErrorKind::config, "evaluate: K must be positive");
  const std::size_t max_h = *std::max_element(options.horizons.begin(), options.horizons.end());
  require(options.horizons.front() >= 1, ErrorKind::config, "evaluate: horizons start at 1");
  require(options.context + max_h <= dataset.length, ErrorKind::config, "evaluate: horizon runs past the sequences");
  const bool discrete = dataset.kind == synth::DatasetKind::discrete;
  require(discrete || dataset.width % 4 == 0, ErrorKind::input, "evaluate: continuous frames must hold quaternions");

  EvalReport report;
  report.seed = options.seed;
  report.k = options.k;
  report.horizons = options.horizons;

  const std::size_t items = std::min(options.items, dataset.size());
  const std::size_t nh = options.horizons.size();
  std::vector<double> single(nh, 0.0), best(nh, 0.0);
  std::vector<std::vector<std::vector<double>>> scores(nh);
  std::vector<std::vector<std::vector<int>>> labels(nh);

  for (std::size_t item = 0; item < items; ++item) {
    const grammar::NonTerminalState start = start_state(model, dataset, item, options.context);
    std::vector<grammar::SequenceSample> draws;
    for (std::size_t s = 0; s < options.k; ++s) {
      draws.push_back(grammar::unroll(model, start, max_h, grammar::Policy::sample_hard,
                                      derive_seed(options.seed, item, s)));
    }
    for (std::size_t hi = 0; hi < nh; ++hi) {
      const std::size_t h = options.horizons[hi];
      if (discrete) {
        const auto& truth = dataset.tokens[item];
        const auto target = truth.begin() + static_cast<std::ptrdiff_t>(options.context);
        std::vector<double> freq(dataset.width, 0.0);
        bool any = false;
        for (std::size_t s = 0; s < draws.size(); ++s) {
          const auto tokens = draws[s].tokens();
          const bool hit = std::equal(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(h), target);
          if (s == 0) single[hi] += hit ? 1.0 : 0.0;
          any = any || hit;
          const auto& t = draws[s].terminals[h - 1].values;
          for (std::size_t c = 0; c < freq.size(); ++c) freq[c] += t[c] / static_cast<double>(draws.size());
        }
        best[hi] += any ? 1.0 : 0.0;
        std::vector<int> label(dataset.width, 0);
        label[truth[options.context + h - 1]] = 1;
        scores[hi].push_back(std::move(freq));
        labels[hi].push_back(std::move(label));
      } else {
        const auto& frames = dataset.frames[item];
        const std::size_t at = options.context + h - 1;
        const std::vector<double> truth = absolute_frame(frames, at);
        double lowest = 0.0;
        for (std::size_t s = 0; s < draws.size(); ++s) {
          std::vector<std::vector<double>> deltas(frames.begin(), frames.begin() + static_cast<std::ptrdiff_t>(options.context));
          for (std::size_t j = 0; j < h; ++j) deltas.push_back(draws[s].terminals[j].values);
          const double err = mean_angle_error({absolute_frame(deltas, at)}, {truth});
          if (s == 0) single[hi] += err;
          lowest = s == 0 ? err : std::min(lowest, err);
        }
        best[hi] += lowest;
      }
    }
  }

  const double n = static_cast<double>(items);
  for (std::size_t hi = 0; hi < nh; ++hi) {
    single[hi] /= n;
    best[hi] /= n;
  }
  const std::string bok = "best_of_" + std::to_string(options.k);
  if (discrete) {
    std::vector<double> maps(nh);
    for (std::size_t hi = 0; hi < nh; ++hi) maps[hi] = map_at_horizon(scores[hi], labels[hi]);
    report.rows.emplace_back("exact_match_single", single);
    report.rows.emplace_back("exact_match_" + bok, best);
    report.rows.emplace_back("map", maps);
    if (oracle != nullptr) {
      const auto samples = sample_model_sequences(model, dataset, options.context, options.kl_samples, options.seed);
      report.scalars.emplace_back("ngram_kl_n" + std::to_string(options.ngram),
                                  ngram_kl(*oracle, samples, options.ngram, dataset.length, options.context));
    }
  } else {
    report.rows.emplace_back("mae_single", single);
    report.rows.emplace_back("mae_" + bok, best);
  }
  report.validate();
  return report;
}

}  // namespace agg::eval
