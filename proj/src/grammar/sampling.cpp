#include "agg/grammar/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "agg/error.hpp"
#include "agg/numeric/rng.hpp"

namespace agg::grammar {

Policy parse_policy(std::string_view name) {
  if (name == "sample_hard") return Policy::sample_hard;
  if (name == "sample_soft") return Policy::sample_soft;
  if (name == "greedy") return Policy::greedy;
  fail(ErrorKind::config, "unknown unroll policy '" + std::string(name) + "'");
}

std::string_view to_string(Policy p) {
  switch (p) {
    case Policy::sample_hard: return "sample_hard";
    case Policy::sample_soft: return "sample_soft";
    case Policy::greedy: return "greedy";
  }
  return "sample_hard";
}

namespace {

nn::Matrix one_hot_rows(const nn::Matrix& y) {
  nn::Matrix hard = nn::Matrix::Zero(y.rows(), y.cols());
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < y.cols(); ++c) {
      if (y(r, c) > y(r, best)) best = c;
    }
    hard(r, best) = 1.0;
  }
  return hard;
}

std::size_t row_argmax(const nn::Matrix& m, Eigen::Index r) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < m.cols(); ++c) {
    if (m(r, c) > m(r, best)) best = c;
  }
  return static_cast<std::size_t>(best);
}

}  // namespace

nn::Var gumbel_softmax(nn::Var logits, double tau, const nn::Matrix& uniform_noise, bool hard) {
  require(tau > 0.0, ErrorKind::parameter, "gumbel_softmax: temperature must be positive");
  require(uniform_noise.rows() == logits.rows() && uniform_noise.cols() == logits.cols(), ErrorKind::dimension,
          "gumbel_softmax: noise shape mismatch");
  require((uniform_noise.array() > 0.0).all() && (uniform_noise.array() < 1.0).all(), ErrorKind::parameter,
          "gumbel_softmax: noise must lie in (0, 1)");
  const nn::Matrix& x = logits.value();
  nn::Matrix gumbel(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      // Noise on a masked (-inf) logit cannot change anything, so skip the logs.
      gumbel(r, c) = std::isfinite(x(r, c)) ? -std::log(-std::log(uniform_noise(r, c))) : 0.0;
    }
  }
  nn::Var y = nn::softmax_rows(nn::scale(nn::add_constant(logits, gumbel), 1.0 / tau));
  if (!hard) return y;
  return straight_through_argmax(y);
}

nn::Var straight_through_argmax(nn::Var y) { return nn::straight_through(one_hot_rows(y.value()), y); }

nn::Vector gumbel_softmax(std::span<const double> logits, double tau, std::span<const double> uniform_noise,
                          bool hard) {
  nn::Tape tape;
  nn::Var y = gumbel_softmax(tape.constant(nn::row_matrix(logits)), tau, nn::row_matrix(uniform_noise), hard);
  return nn::to_vector(y.value());
}

void fill_step_noise(std::uint64_t seed, std::size_t step, std::span<double> out) {
  // Counter-based: entry i is a hash of (stream, i), so draws are independent
  // of how many entries are requested.
  const std::uint64_t stream = derive_seed(seed, 0x5eed, step);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (static_cast<double>(mix_seed(stream + i * 0x9e3779b97f4a7c15ULL) >> 11) + 0.5) * 0x1.0p-53;
  }
}

nn::Vector step_noise(std::uint64_t seed, std::size_t step, std::size_t num_rules) {
  nn::Vector u(num_rules);
  fill_step_noise(seed, step, u);
  return u;
}

UnrollTrace unroll_batch(nn::Tape& tape, GrammarModel& model, nn::Var start, std::size_t length,
                         const UnrollOptions& options, std::span<const std::uint64_t> row_seeds) {
  require(length >= 1, ErrorKind::input, "unroll: length must be positive");
  const Eigen::Index batch = start.rows();
  const std::size_t rules = model.config().num_rules;
  if (options.policy != Policy::greedy) {
    require(row_seeds.size() == static_cast<std::size_t>(batch), ErrorKind::input, "unroll: one seed per row required");
  }
  UnrollTrace trace;
  trace.nonterminals.push_back(start);
  trace.log_prob.assign(static_cast<std::size_t>(batch), 0.0);
  nn::Var n = start;
  for (std::size_t step = 0; step < length; ++step) {
    nn::Var logits = model.rule_logits(tape, n);
    nn::Matrix probs = nn::softmax_rows(tape.constant(logits.value())).value();
    nn::Var selection;
    std::vector<std::size_t> chosen(static_cast<std::size_t>(batch));
    if (options.policy == Policy::greedy) {
      nn::Matrix hard = nn::Matrix::Zero(batch, static_cast<Eigen::Index>(rules));
      for (Eigen::Index b = 0; b < batch; ++b) {
        chosen[static_cast<std::size_t>(b)] = row_argmax(probs, b);
        hard(b, static_cast<Eigen::Index>(chosen[static_cast<std::size_t>(b)])) = 1.0;
      }
      selection = tape.constant(std::move(hard));
    } else {
      nn::Matrix noise(batch, static_cast<Eigen::Index>(rules));
      for (Eigen::Index b = 0; b < batch; ++b) {
        fill_step_noise(row_seeds[static_cast<std::size_t>(b)], options.first_step + step,
                        std::span<double>(noise.row(b).data(), rules));
      }
      selection = gumbel_softmax(logits, options.temperature, noise, options.policy == Policy::sample_hard);
      for (Eigen::Index b = 0; b < batch; ++b) chosen[static_cast<std::size_t>(b)] = row_argmax(selection.value(), b);
    }
    for (Eigen::Index b = 0; b < batch; ++b) {
      const double p = probs(b, static_cast<Eigen::Index>(chosen[static_cast<std::size_t>(b)]));
      trace.log_prob[static_cast<std::size_t>(b)] += std::log(p);
    }
    n = model.expand_nonterminal(tape, selection);
    trace.terminals.push_back(model.expand_terminal(tape, selection));
    trace.nonterminals.push_back(n);
    trace.rules.push_back(std::move(chosen));
  }
  return trace;
}

SequenceSample to_sample(const UnrollTrace& trace, std::size_t row, TerminalMode mode) {
  const auto r = static_cast<Eigen::Index>(row);
  SequenceSample s;
  s.length = trace.terminals.size();
  for (const auto& n : trace.nonterminals) s.nonterminals.push_back({nn::to_vector(n.value().row(r))});
  for (const auto& t : trace.terminals) s.terminals.push_back({nn::to_vector(t.value().row(r)), mode});
  for (const auto& step : trace.rules) s.rule_indices.push_back(step[row]);
  s.log_prob = trace.log_prob[row];
  return s;
}

SequenceSample unroll(GrammarModel& model, const NonTerminalState& start, std::size_t length, Policy policy,
                      std::uint64_t seed, std::size_t first_step) {
  check(start, model.config().d_nonterminal);
  nn::Tape tape;
  UnrollOptions options{policy, model.config().gumbel_temperature, first_step};
  const std::uint64_t seeds[1] = {seed};
  UnrollTrace trace =
      unroll_batch(tape, model, tape.constant(nn::row_matrix(start.values)), length, options, seeds);
  return to_sample(trace, 0, model.config().terminal_mode());
}

std::size_t saturating_power(std::size_t k, std::size_t length) {
  std::size_t out = 1;
  for (std::size_t i = 0; i < length; ++i) {
    if (k != 0 && out > std::numeric_limits<std::size_t>::max() / k) return std::numeric_limits<std::size_t>::max();
    out *= k;
  }
  return out;
}

std::size_t effective_branching(const GrammarConfig& config, std::size_t k_cap) {
  std::size_t k = std::min(k_cap, config.num_rules);
  if (config.topk_mask) k = std::min(k, *config.topk_mask);
  return k;
}

std::vector<EnumeratedSequence> enumerate_all(GrammarModel& model, const NonTerminalState& start, std::size_t length,
                                              std::size_t k_cap, std::size_t budget) {
  require(length >= 1, ErrorKind::input, "enumerate_all: length must be positive");
  require(k_cap >= 1, ErrorKind::input, "enumerate_all: k_cap must be positive");
  check(start, model.config().d_nonterminal);
  const std::size_t k = effective_branching(model.config(), k_cap);
  const std::size_t count = saturating_power(k, length);
  require(count <= budget, ErrorKind::resource,
          "enumeration of k^L = " + std::to_string(k) + "^" + std::to_string(length) + " = " +
              (count == std::numeric_limits<std::size_t>::max() ? std::string("overflow") : std::to_string(count)) +
              " sequences exceeds budget " + std::to_string(budget));

  const std::size_t rules = model.config().num_rules;
  const TerminalMode mode = model.config().terminal_mode();

  struct Node {
    std::size_t parent;
    std::size_t rule;
    double log_prob;
    double prob;
  };
  // levels[j] holds the nodes created at step j; level 0 is the root.
  std::vector<std::vector<Node>> levels(1);
  levels[0].push_back({0, 0, 0.0, 1.0});
  std::vector<nn::Matrix> level_states(1, nn::row_matrix(start.values));

  // Expansions of one-hot rules are cached per rule index.
  std::vector<nn::Vector> nt_cache(rules), t_cache(rules);
  std::vector<bool> cached(rules, false);
  auto expand_rule = [&](std::size_t rule) {
    if (cached[rule]) return;
    nn::Matrix sel = nn::Matrix::Zero(1, static_cast<Eigen::Index>(rules));
    sel(0, static_cast<Eigen::Index>(rule)) = 1.0;
    nn::Tape t;
    nn::Var s = t.constant(std::move(sel));
    nt_cache[rule] = nn::to_vector(model.expand_nonterminal(t, s).value());
    t_cache[rule] = nn::to_vector(model.expand_terminal(t, s).value());
    cached[rule] = true;
  };

  std::vector<std::size_t> order(rules);
  for (std::size_t step = 0; step < length; ++step) {
    nn::Tape t;
    nn::Matrix probs = model.rule_probs(t, t.constant(level_states[step])).value();
    std::vector<Node> next;
    std::vector<std::size_t> next_rules;
    for (std::size_t i = 0; i < levels[step].size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return probs(r, static_cast<Eigen::Index>(a)) > probs(r, static_cast<Eigen::Index>(b));
      });
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t rule = order[j];
        const double p = probs(r, static_cast<Eigen::Index>(rule));
        if (p <= 0.0) break;
        const Node& parent = levels[step][i];
        next.push_back({i, rule, parent.log_prob + std::log(p), parent.prob * p});
        next_rules.push_back(rule);
      }
    }
    nn::Matrix states(static_cast<Eigen::Index>(next.size()), static_cast<Eigen::Index>(model.config().d_nonterminal));
    for (std::size_t i = 0; i < next.size(); ++i) {
      expand_rule(next_rules[i]);
      states.row(static_cast<Eigen::Index>(i)) = nn::row_matrix(nt_cache[next_rules[i]]);
    }
    levels.push_back(std::move(next));
    level_states.push_back(std::move(states));
    if (levels.back().empty()) break;
  }

  std::vector<EnumeratedSequence> out;
  if (levels.size() != length + 1) return out;
  const auto& leaves = levels[length];
  out.reserve(leaves.size());
  for (std::size_t leaf = 0; leaf < leaves.size(); ++leaf) {
    EnumeratedSequence e;
    e.probability = leaves[leaf].prob;
    SequenceSample& s = e.sample;
    s.length = length;
    s.log_prob = leaves[leaf].log_prob;
    s.rule_indices.resize(length);
    s.terminals.resize(length);
    s.nonterminals.resize(length + 1);
    std::size_t idx = leaf;
    for (std::size_t step = length; step >= 1; --step) {
      const Node& node = levels[step][idx];
      s.rule_indices[step - 1] = node.rule;
      s.terminals[step - 1] = {t_cache[node.rule], mode};
      s.nonterminals[step] = {nt_cache[node.rule]};
      idx = node.parent;
    }
    s.nonterminals[0] = start;
    out.push_back(std::move(e));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const EnumeratedSequence& a, const EnumeratedSequence& b) { return a.probability > b.probability; });
  return out;
}

}  // namespace agg::grammar
