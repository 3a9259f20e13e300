#include "agg/adversarial/grammar_only.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "agg/adversarial/trainer.hpp"
#include "agg/error.hpp"
#include "agg/numeric/rng.hpp"

namespace agg::adv {

void GrammarOnlyConfig::validate() const {
  require(iterations >= 1, ErrorKind::config, "iterations must be positive");
  require(batch_size >= 1, ErrorKind::config, "batch_size must be positive");
  require(sequence_length >= 1, ErrorKind::config, "sequence_length must be positive");
  require(context_length < sequence_length, ErrorKind::config, "context_length must be below sequence_length");
  require(k_cap >= 1, ErrorKind::config, "k_cap must be positive");
  require(beam >= 1, ErrorKind::config, "beam must be positive");
  require(learning_rate0 > 0.0 && momentum >= 0.0 && momentum < 1.0, ErrorKind::config,
          "learning rate must be positive and momentum in [0, 1)");
}

nn::Var pruned_nll(nn::Tape& tape, grammar::GrammarModel& model, const synth::SequenceDataset& dataset,
                   const std::vector<std::size_t>& indices, const GrammarOnlyConfig& config) {
  const grammar::GrammarConfig& gc = model.config();
  require(gc.terminal_mode() == grammar::TerminalMode::one_hot_class && dataset.kind == synth::DatasetKind::discrete,
          ErrorKind::input, "grammar-only training needs class terminals and a token dataset");
  require(!indices.empty(), ErrorKind::input, "grammar-only training: empty batch");
  const auto rules = static_cast<Eigen::Index>(gc.num_rules);
  const std::size_t k = grammar::effective_branching(gc, config.k_cap);

  nn::Var eye = tape.constant(nn::Matrix::Identity(rules, rules));
  nn::Var nt_all = model.expand_nonterminal(tape, eye);
  nn::Var log_t = nn::clamped_log(model.expand_terminal(tape, eye), 1e-300);

  const std::size_t items = indices.size();
  nn::Var states = encode_prefixes(tape, model, dataset, indices, config.context_length);
  nn::Var score = tape.constant(nn::Matrix::Zero(static_cast<Eigen::Index>(items), 1));
  // owner[p] is the item of path row p; rows of one item stay contiguous.
  std::vector<std::size_t> owner(items);
  std::iota(owner.begin(), owner.end(), std::size_t{0});

  struct Candidate {
    Eigen::Index path;
    Eigen::Index rule;
    double key;
  };
  std::vector<Eigen::Index> order(static_cast<std::size_t>(rules));
  for (std::size_t j = 0; j < config.horizon(); ++j) {
    nn::Var probs = model.rule_probs(tape, states);
    const nn::Matrix& pv = probs.value();
    const nn::Matrix& ltv = log_t.value();
    const nn::Matrix& sv = score.value();

    std::vector<std::vector<Candidate>> per_item(items);
    for (Eigen::Index p = 0; p < pv.rows(); ++p) {
      const std::size_t item = owner[static_cast<std::size_t>(p)];
      const auto token = static_cast<Eigen::Index>(dataset.tokens[indices[item]][config.context_length + j]);
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                        [&](Eigen::Index a, Eigen::Index b) { return pv(p, a) > pv(p, b) || (pv(p, a) == pv(p, b) && a < b); });
      for (std::size_t i = 0; i < k; ++i) {
        const Eigen::Index r = order[i];
        if (pv(p, r) <= 0.0) break;
        per_item[item].push_back({p, r, sv(p, 0) + std::log(pv(p, r)) + ltv(r, token)});
      }
    }

    std::vector<Eigen::Index> parents, chosen, tokens;
    std::vector<std::size_t> next_owner;
    for (std::size_t item = 0; item < items; ++item) {
      auto& c = per_item[item];
      std::stable_sort(c.begin(), c.end(), [](const Candidate& a, const Candidate& b) { return a.key > b.key; });
      if (c.size() > config.beam) c.resize(config.beam);
      const auto token = static_cast<Eigen::Index>(dataset.tokens[indices[item]][config.context_length + j]);
      for (const auto& cand : c) {
        parents.push_back(cand.path);
        chosen.push_back(cand.rule);
        tokens.push_back(token);
        next_owner.push_back(item);
      }
    }
    score = nn::add(nn::add(nn::gather_rows(score, parents), nn::log(nn::pick_elements(probs, parents, chosen))),
                    nn::pick_elements(log_t, chosen, tokens));
    states = nn::gather_rows(nt_all, chosen);
    owner = std::move(next_owner);
  }

  nn::Var total;
  std::size_t begin = 0;
  for (std::size_t item = 0; item < items; ++item) {
    std::size_t end = begin;
    while (end < owner.size() && owner[end] == item) ++end;
    std::vector<Eigen::Index> rows(end - begin);
    std::iota(rows.begin(), rows.end(), static_cast<Eigen::Index>(begin));
    nn::Var lse = nn::group_logsumexp(nn::gather_rows(score, rows), static_cast<Eigen::Index>(rows.size()));
    total = item == 0 ? lse : nn::add(total, lse);
    begin = end;
  }
  return nn::scale(total, -1.0 / static_cast<double>(items));
}

GrammarOnlyResult train_grammar_only(const synth::SequenceDataset& dataset, grammar::GrammarModel& model,
                                     const GrammarOnlyConfig& config) {
  config.validate();
  require(!dataset.empty(), ErrorKind::input, "train_grammar_only: empty dataset");
  dataset.validate();
  require(dataset.length == config.sequence_length, ErrorKind::input,
          "train_grammar_only: dataset length " + std::to_string(dataset.length) + " differs from sequence_length " +
              std::to_string(config.sequence_length));
  require(dataset.width == model.config().d_terminal && dataset.width == model.config().input_width,
          ErrorKind::dimension, "train_grammar_only: dataset width must equal d_terminal and input_width");

  nn::SgdMomentum sgd({config.learning_rate0, config.momentum, config.iterations, config.schedule});
  const nn::ParamList params = model.parameters();
  for (auto* p : params) p->zero_grad();

  GrammarOnlyResult result;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    Rng rng(derive_seed(config.seed, 0x6a11, it));
    std::vector<std::size_t> idx(config.batch_size);
    for (auto& v : idx) v = rng.index(dataset.size());
    nn::Tape tape;
    nn::Var loss = pruned_nll(tape, model, dataset, idx, config);
    tape.backward(loss);
    sgd.step(params);
    result.nll.push_back(loss.scalar());
    if (!std::isfinite(loss.scalar())) result.all_finite = false;
  }
  return result;
}

}  // namespace agg::adv
