#include "agg/grammar/types.hpp"

#include <cmath>
#include <string>

#include "agg/error.hpp"

namespace agg::grammar {

std::size_t argmax(const nn::Vector& v) {
  require(!v.empty(), ErrorKind::input, "argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

std::vector<std::size_t> SequenceSample::tokens() const {
  std::vector<std::size_t> out;
  out.reserve(terminals.size());
  for (const auto& t : terminals) out.push_back(argmax(t.values));
  return out;
}

void check(const NonTerminalState& n, std::size_t d_nonterminal) {
  require(n.values.size() == d_nonterminal, ErrorKind::dimension,
          "non-terminal has width " + std::to_string(n.values.size()) + ", expected " +
              std::to_string(d_nonterminal));
  for (double v : n.values) require(std::isfinite(v), ErrorKind::input, "non-terminal has a non-finite entry");
}

void check(const TerminalVec& t) {
  double total = 0.0;
  for (double v : t.values) {
    require(std::isfinite(v), ErrorKind::input, "terminal has a non-finite entry");
    if (t.mode != TerminalMode::continuous) {
      require(v >= 0.0 && v <= 1.0, ErrorKind::input, "class terminal entry outside [0, 1]");
    }
    total += v;
  }
  if (t.mode == TerminalMode::one_hot_class) {
    require(std::abs(total - 1.0) <= 1e-6, ErrorKind::input, "class terminal does not sum to 1");
  }
}

void check(const RuleDistribution& r) {
  require(r.probs.size() == r.selected.size(), ErrorKind::dimension, "rule distribution width mismatch");
  double p = 0.0, s = 0.0;
  std::size_t ones = 0;
  for (std::size_t i = 0; i < r.probs.size(); ++i) {
    require(r.probs[i] >= 0.0, ErrorKind::input, "negative rule probability");
    p += r.probs[i];
    s += r.selected[i];
    if (r.selected[i] == 1.0) ++ones;
  }
  require(std::abs(p - 1.0) <= 1e-6, ErrorKind::input, "rule probabilities do not sum to 1");
  require(std::abs(s - 1.0) <= 1e-6, ErrorKind::input, "rule selection does not sum to 1");
  if (r.hard) require(ones == 1, ErrorKind::input, "hard rule selection is not one-hot");
}

void check(const SequenceSample& s) {
  require(s.length >= 1, ErrorKind::input, "sequence length must be positive");
  require(s.nonterminals.size() == s.length + 1, ErrorKind::input, "expected L+1 non-terminals");
  require(s.terminals.size() == s.length, ErrorKind::input, "expected L terminals");
  require(s.rule_indices.size() == s.length, ErrorKind::input, "expected L rule indices");
  require(s.log_prob <= 0.0, ErrorKind::input, "log_prob must be <= 0");
}

}  // namespace agg::grammar
