#include "agg/synth/grammar.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "agg/error.hpp"
#include "json.hpp"

namespace agg::synth {

using nlohmann::json;

GroundTruthGrammar::GroundTruthGrammar(std::vector<std::string> states, std::vector<std::string> tokens,
                                       std::vector<Rule> rules, std::size_t start)
    : states_(std::move(states)), tokens_(std::move(tokens)), rules_(std::move(rules)), start_(start) {
  require(!states_.empty(), ErrorKind::input, "grammar needs at least one state");
  require(!tokens_.empty(), ErrorKind::input, "grammar needs at least one token");
  require(start_ < states_.size(), ErrorKind::input, "grammar start state out of range");
  by_state_.assign(states_.size(), {});
  std::vector<double> mass(states_.size(), 0.0);
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const Rule& r = rules_[i];
    require(r.state < states_.size(), ErrorKind::input, "rule " + std::to_string(i) + ": unknown state");
    require(r.next < states_.size(), ErrorKind::input, "rule " + std::to_string(i) + ": next state does not exist");
    require(r.token < tokens_.size(), ErrorKind::input, "rule " + std::to_string(i) + ": unknown token");
    require(std::isfinite(r.prob) && r.prob >= 0.0 && r.prob <= 1.0, ErrorKind::input,
            "rule " + std::to_string(i) + ": probability outside [0, 1]");
    by_state_[r.state].push_back(i);
    mass[r.state] += r.prob;
  }
  for (std::size_t s = 0; s < states_.size(); ++s) {
    require(std::abs(mass[s] - 1.0) <= 1e-9, ErrorKind::input,
            "state '" + states_[s] + "': rule probabilities sum to " + std::to_string(mass[s]));
  }
  std::vector<bool> seen(states_.size(), false);
  std::vector<std::size_t> stack{start_};
  seen[start_] = true;
  while (!stack.empty()) {
    const std::size_t s = stack.back();
    stack.pop_back();
    for (std::size_t i : by_state_[s]) {
      const Rule& r = rules_[i];
      if (r.prob > 0.0 && !seen[r.next]) {
        seen[r.next] = true;
        stack.push_back(r.next);
      }
    }
  }
  for (std::size_t s = 0; s < states_.size(); ++s) {
    require(seen[s], ErrorKind::input, "state '" + states_[s] + "' is unreachable from the start state");
  }
}

std::string GroundTruthGrammar::to_json() const {
  json j;
  j["states"] = states_;
  j["tokens"] = tokens_;
  j["start"] = states_[start_];
  json rules = json::array();
  for (const Rule& r : rules_) {
    rules.push_back({{"from", states_[r.state]}, {"token", tokens_[r.token]}, {"to", states_[r.next]}, {"prob", r.prob}});
  }
  j["rules"] = std::move(rules);
  return j.dump(2);
}

namespace {

std::size_t index_of(const std::vector<std::string>& names, const std::string& name, const char* what) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  fail(ErrorKind::parse, std::string("grammar: unknown ") + what + " '" + name + "'");
}

}  // namespace

GroundTruthGrammar GroundTruthGrammar::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
    auto states = j.at("states").get<std::vector<std::string>>();
    auto tokens = j.at("tokens").get<std::vector<std::string>>();
    std::size_t start = 0;
    if (j.contains("start")) start = index_of(states, j.at("start").get<std::string>(), "state");
    std::vector<Rule> rules;
    for (const auto& r : j.at("rules")) {
      rules.push_back({index_of(states, r.at("from").get<std::string>(), "state"),
                       index_of(tokens, r.at("token").get<std::string>(), "token"),
                       index_of(states, r.at("to").get<std::string>(), "state"), r.at("prob").get<double>()});
    }
    return GroundTruthGrammar(std::move(states), std::move(tokens), std::move(rules), start);
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("grammar: ") + e.what());
  }
}

GroundTruthGrammar load_grammar(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open grammar file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return GroundTruthGrammar::from_json(ss.str());
}

void save_grammar(const std::string& path, const GroundTruthGrammar& g) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write grammar file " + path);
  out << g.to_json() << "\n";
}

GroundTruthGrammar walk_stop_run(double walk, double stop, double run) {
  // W walking, U stopped, V running.
  return GroundTruthGrammar({"W", "U", "V"}, {"walking", "stopping", "running", "sitting_down", "falling"},
                            {
                                {0, 0, 0, walk},
                                {0, 1, 1, stop},
                                {0, 2, 2, run},
                                {1, 3, 1, 1.0},
                                {2, 2, 2, 0.9},
                                {2, 4, 1, 0.1},
                            });
}

GroundTruthGrammar bimodal() {
  return GroundTruthGrammar({"S0", "S1", "S2", "B1", "B2", "D1", "D2"}, {"a", "b", "c", "d", "e"},
                            {
                                {0, 0, 1, 1.0},
                                {1, 0, 2, 1.0},
                                {2, 1, 3, 0.5},
                                {2, 3, 5, 0.5},
                                {3, 2, 4, 1.0},
                                {4, 1, 3, 1.0},
                                {5, 4, 6, 1.0},
                                {6, 3, 5, 1.0},
                            });
}

GroundTruthGrammar recipe() {
  constexpr std::size_t n = 6;
  std::vector<std::string> states, tokens;
  std::vector<Rule> rules;
  for (std::size_t i = 0; i < n; ++i) {
    states.push_back("S" + std::to_string(i));
    tokens.push_back("a" + std::to_string(i));
    rules.push_back({i, i, (i + 1) % n, 0.7});
    rules.push_back({i, i, (i + 2) % n, 0.3});
  }
  return GroundTruthGrammar(std::move(states), std::move(tokens), std::move(rules));
}

GroundTruthGrammar random_grammar(std::uint64_t seed, std::size_t num_states, std::size_t num_tokens) {
  require(num_states >= 1 && num_tokens >= 1, ErrorKind::input, "random grammar needs states and tokens");
  Rng rng(derive_seed(seed, 0x67a3));
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> edges;
  // A spanning tree from the start state keeps every state reachable.
  for (std::size_t s = 1; s < num_states; ++s) edges.insert({rng.index(s), rng.index(num_tokens), s});
  for (std::size_t s = 0; s < num_states; ++s) {
    std::size_t have = 0;
    for (const auto& e : edges) have += std::get<0>(e) == s ? 1 : 0;
    const std::size_t extra = have == 0 ? 1 + rng.index(3) : rng.index(3 - std::min<std::size_t>(have, 2));
    for (std::size_t i = 0; i < extra; ++i) edges.insert({s, rng.index(num_tokens), rng.index(num_states)});
  }
  std::vector<std::string> states, tokens;
  for (std::size_t s = 0; s < num_states; ++s) states.push_back("Q" + std::to_string(s));
  for (std::size_t t = 0; t < num_tokens; ++t) tokens.push_back("t" + std::to_string(t));
  std::vector<Rule> rules;
  for (std::size_t s = 0; s < num_states; ++s) {
    std::vector<Rule> own;
    double total = 0.0;
    for (const auto& [from, token, next] : edges) {
      if (from != s) continue;
      own.push_back({from, token, next, 0.1 + rng.uniform()});
      total += own.back().prob;
    }
    double assigned = 0.0;
    for (std::size_t i = 0; i < own.size(); ++i) {
      own[i].prob = i + 1 == own.size() ? 1.0 - assigned : own[i].prob / total;
      assigned += own[i].prob;
      rules.push_back(own[i]);
    }
  }
  return GroundTruthGrammar(std::move(states), std::move(tokens), std::move(rules));
}

GroundTruthGrammar build_preset(std::string_view name, const PresetOptions& options) {
  if (name == "walk_stop_run") return walk_stop_run();
  if (name == "bimodal") return bimodal();
  if (name == "recipe") return recipe();
  if (name == "random") return random_grammar(options.seed, options.states, options.tokens);
  fail(ErrorKind::config, "unknown grammar preset '" + std::string(name) + "'");
}

TokenSeq sample_sequence(const GroundTruthGrammar& g, std::size_t length, Rng& rng) {
  require(length >= 1, ErrorKind::input, "sample_sequence: length must be positive");
  TokenSeq out;
  out.reserve(length);
  std::size_t state = g.start();
  for (std::size_t step = 0; step < length; ++step) {
    const auto& ids = g.rules_from(state);
    const double u = rng.uniform();
    double acc = 0.0;
    const Rule* chosen = &g.rules()[ids.back()];
    for (std::size_t id : ids) {
      acc += g.rules()[id].prob;
      if (u < acc) {
        chosen = &g.rules()[id];
        break;
      }
    }
    out.push_back(chosen->token);
    state = chosen->next;
  }
  return out;
}

namespace {

std::size_t checked_power(std::size_t base, std::size_t exp, std::size_t budget) {
  std::size_t out = 1;
  for (std::size_t i = 0; i < exp; ++i) {
    if (out > budget / base) return budget + 1;
    out *= base;
  }
  return out;
}

void expand_paths(const GroundTruthGrammar& g, std::size_t state, std::size_t remaining, double prob, TokenSeq& prefix,
                  std::map<TokenSeq, double>& out) {
  if (remaining == 0) {
    out[prefix] += prob;
    return;
  }
  for (std::size_t id : g.rules_from(state)) {
    const Rule& r = g.rules()[id];
    if (r.prob <= 0.0) continue;
    prefix.push_back(r.token);
    expand_paths(g, r.next, remaining - 1, prob * r.prob, prefix, out);
    prefix.pop_back();
  }
}

}  // namespace

std::map<TokenSeq, double> exact_future_distribution(const GroundTruthGrammar& g, std::size_t state,
                                                     std::size_t horizon, std::size_t budget) {
  require(state < g.num_states(), ErrorKind::input, "exact_future_distribution: unknown state");
  require(horizon >= 1, ErrorKind::input, "exact_future_distribution: horizon must be positive");
  const std::size_t count = checked_power(g.num_tokens(), horizon, budget);
  require(count <= budget, ErrorKind::resource,
          "exact future distribution over tokens^h = " + std::to_string(g.num_tokens()) + "^" +
              std::to_string(horizon) + " strings exceeds budget " + std::to_string(budget));
  std::map<TokenSeq, double> out;
  TokenSeq prefix;
  expand_paths(g, state, horizon, 1.0, prefix, out);
  return out;
}

namespace {

std::vector<double> advance(const GroundTruthGrammar& g, const std::vector<double>& dist) {
  std::vector<double> next(g.num_states(), 0.0);
  for (const Rule& r : g.rules()) next[r.next] += dist[r.state] * r.prob;
  return next;
}

}  // namespace

std::vector<std::vector<double>> future_marginals(const GroundTruthGrammar& g, std::size_t state,
                                                  std::size_t horizon) {
  require(state < g.num_states(), ErrorKind::input, "future_marginals: unknown state");
  std::vector<double> dist(g.num_states(), 0.0);
  dist[state] = 1.0;
  std::vector<std::vector<double>> out;
  for (std::size_t step = 0; step < horizon; ++step) {
    std::vector<double> tokens(g.num_tokens(), 0.0);
    for (const Rule& r : g.rules()) tokens[r.token] += dist[r.state] * r.prob;
    out.push_back(std::move(tokens));
    dist = advance(g, dist);
  }
  return out;
}

std::vector<double> state_distribution(const GroundTruthGrammar& g, std::size_t steps) {
  std::vector<double> dist(g.num_states(), 0.0);
  dist[g.start()] = 1.0;
  for (std::size_t i = 0; i < steps; ++i) dist = advance(g, dist);
  return dist;
}

std::map<TokenSeq, double> exact_ngram_distribution(const GroundTruthGrammar& g, std::size_t length, std::size_t n,
                                                    std::size_t first, std::size_t budget) {
  require(n >= 1 && n <= length, ErrorKind::input, "n-gram order must lie in [1, length]");
  require(first + n <= length, ErrorKind::input, "no complete n-gram window after the context");
  std::vector<std::map<TokenSeq, double>> from_state(g.num_states());
  for (std::size_t s = 0; s < g.num_states(); ++s) from_state[s] = exact_future_distribution(g, s, n, budget);
  const std::size_t windows = length - n - first + 1;
  std::map<TokenSeq, double> out;
  std::vector<double> dist = state_distribution(g, first);
  for (std::size_t w = 0; w < windows; ++w) {
    for (std::size_t s = 0; s < g.num_states(); ++s) {
      if (dist[s] == 0.0) continue;
      for (const auto& [seq, p] : from_state[s]) out[seq] += dist[s] * p / static_cast<double>(windows);
    }
    dist = advance(g, dist);
  }
  return out;
}

}  // namespace agg::synth
