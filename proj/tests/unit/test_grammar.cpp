#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numeric>

#include "doctest.h"
#include "gradcheck.hpp"

#include "agg/error.hpp"
#include "agg/grammar/sampling.hpp"

using namespace agg;
using namespace agg::grammar;

namespace {

GrammarConfig tiny_config(std::size_t d_n, std::size_t d_t, std::size_t rules) {
  GrammarConfig c;
  c.d_nonterminal = d_n;
  c.d_terminal = d_t;
  c.num_rules = rules;
  c.branching_k = std::min<std::size_t>(2, rules);
  c.topk_mask.reset();
  c.input_width = d_t;
  c.encoder_channels = 8;
  return c;
}

nn::ParamTensor& param(GrammarModel& m, const std::string& name) {
  for (auto* p : m.parameters()) {
    if (p->name() == name) return *p;
  }
  FAIL("no parameter " << name);
  throw 0;
}

void zero_all(GrammarModel& m) {
  for (auto* p : m.parameters()) p->fill(0.0);
}

NonTerminalState basis(std::size_t d, std::size_t i) {
  NonTerminalState n{nn::Vector(d, 0.0)};
  n.values[i] = 1.0;
  return n;
}

NonTerminalState random_state(std::size_t d, Rng& rng) {
  NonTerminalState n{nn::Vector(d)};
  for (auto& v : n.values) v = rng.normal();
  return n;
}

struct HandRule {
  std::size_t from;
  double prob;
  std::size_t to;
};

// One-hot states; rule i leaves `from` with `prob`, lands on `to` and emits
// token i.
std::unique_ptr<GrammarModel> hand_grammar(std::size_t states, const std::vector<HandRule>& rules) {
  const std::size_t n = rules.size();
  auto model = std::make_unique<GrammarModel>(tiny_config(states, n, n), 1);
  GrammarModel& m = *model;
  zero_all(m);
  nn::Matrix wr = nn::Matrix::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(states), -800.0);
  nn::Matrix wn = nn::Matrix::Zero(static_cast<Eigen::Index>(states), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    wr(r, static_cast<Eigen::Index>(rules[i].from)) = std::log(rules[i].prob);
    wn(static_cast<Eigen::Index>(rules[i].to), r) = 1.0;
  }
  param(m, "f_R.0.weight").assign(wr);
  param(m, "f_N.0.weight").assign(wn);
  param(m, "f_T.0.weight").assign(10.0 * nn::Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
  return model;
}

// (0.7, 0.3) at the root, then 1.0 on the left and (0.4, 0.6) on the right.
std::unique_ptr<GrammarModel> hand_tree() {
  return hand_grammar(3, {{0, 0.7, 1}, {0, 0.3, 2}, {1, 1.0, 1}, {2, 0.4, 0}, {2, 0.6, 2}});
}

}  // namespace

TEST_SUITE("grammar") {

TEST_CASE("rule_probs: zero-weight model is uniform") {
  GrammarModel m(tiny_config(4, 3, 7), 3);
  zero_all(m);
  Rng rng(1);
  for (double p : m.rule_probs(random_state(4, rng))) CHECK(p == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
}

TEST_CASE("rule_probs: topk_mask = num_rules changes nothing, topk_mask = 1 is one-hot") {
  auto c = tiny_config(6, 3, 9);
  GrammarModel plain(c, 11);
  c.topk_mask = 9;
  GrammarModel full(c, 11);
  c.topk_mask = 1;
  GrammarModel single(c, 11);
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const auto n = random_state(6, rng);
    CHECK(plain.rule_probs(n) == full.rule_probs(n));
    const auto p = single.rule_probs(n);
    CHECK(std::count(p.begin(), p.end(), 1.0) == 1);
    CHECK(std::count(p.begin(), p.end(), 0.0) == 8);
    CHECK(argmax(p) == argmax(plain.rule_probs(n)));
  }
}

TEST_CASE("rule_probs is a probability vector for 1000 random non-terminals") {
  auto c = tiny_config(8, 4, 32);
  c.topk_mask = 4;
  GrammarModel m(c, 5);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto p = m.rule_probs(random_state(8, rng));
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-6);
    CHECK(std::all_of(p.begin(), p.end(), [](double v) { return v >= 0.0; }));
    CHECK(std::count_if(p.begin(), p.end(), [](double v) { return v > 0.0; }) <= 4);
  }
}

TEST_CASE("gumbel_softmax: symmetric logits and noise give (0.5, 0.5)") {
  const auto y = gumbel_softmax(nn::Vector{0.0, 0.0}, 1.0, nn::Vector{0.5, 0.5}, false);
  CHECK(y[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("gumbel_softmax: a -inf logit gets zero mass for any noise") {
  Rng rng(4);
  const double ninf = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < 100; ++i) {
    const nn::Vector u{rng.uniform_open(), rng.uniform_open(), rng.uniform_open()};
    CHECK(gumbel_softmax(nn::Vector{0.3, ninf, -1.0}, 0.5, u, false)[1] == 0.0);
    CHECK(gumbel_softmax(nn::Vector{0.3, ninf, -1.0}, 0.5, u, true)[1] == 0.0);
  }
}

TEST_CASE("gumbel_softmax: non-positive temperature is a parameter error") {
  for (double tau : {0.0, -1.0}) {
    try {
      gumbel_softmax(nn::Vector{0.0, 1.0}, tau, nn::Vector{0.5, 0.5}, false);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::parameter);
    }
  }
}

TEST_CASE("gumbel_softmax: hard frequencies for logits (ln 2, 0, 0)") {
  const nn::Vector logits{std::log(2.0), 0.0, 0.0};
  std::vector<double> counts(3, 0.0);
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = gumbel_softmax(logits, 1.0, step_noise(77, i, 3), true);
    counts[argmax(y)] += 1.0;
  }
  const double expected[] = {0.5, 0.25, 0.25};
  double chi2 = 0.0;
  for (int j = 0; j < 3; ++j) {
    CHECK(std::abs(counts[j] / n - expected[j]) <= 0.01);
    const double e = expected[j] * n;
    chi2 += (counts[j] - e) * (counts[j] - e) / e;
  }
  // Two degrees of freedom: p = exp(-chi2 / 2).
  CHECK(std::exp(-chi2 / 2.0) > 0.001);
}

TEST_CASE("gumbel_softmax: temperature 1e-4 approaches the one-hot at argmax(logits + g)") {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    nn::Vector logits(5), u(5), perturbed(5);
    for (std::size_t j = 0; j < 5; ++j) {
      logits[j] = rng.normal();
      u[j] = rng.uniform_open();
      perturbed[j] = logits[j] - std::log(-std::log(u[j]));
    }
    const auto y = gumbel_softmax(logits, 1e-4, u, false);
    const std::size_t top = argmax(perturbed);
    // A runner-up within a few tau of the top stays soft at any fixed tau.
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < 5; ++j) {
      if (j != top) gap = std::min(gap, perturbed[top] - perturbed[j]);
    }
    if (gap < 1e-3) continue;
    for (std::size_t j = 0; j < 5; ++j) {
      if (j != top) CHECK(y[j] < 1e-3);
    }
  }
}

TEST_CASE("straight-through: hard forward is one-hot and its gradient is the soft gradient") {
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    nn::ParamTensor logits("l", {3, 4});
    agg::testing::randomize(logits, rng);
    nn::Matrix u(3, 4);
    for (Eigen::Index j = 0; j < u.size(); ++j) u.data()[j] = rng.uniform_open();
    const nn::Matrix proj = agg::testing::random_matrix(3, 4, rng);

    auto grad_of = [&](bool hard, nn::Matrix* value) {
      logits.zero_grad();
      nn::Tape tape;
      nn::Var y = gumbel_softmax(tape.param(logits), 0.7, u, hard);
      *value = y.value();
      tape.backward(agg::testing::project(y, proj));
      return logits.grad();
    };
    nn::Matrix hard_value, soft_value;
    const nn::Matrix hard_grad = grad_of(true, &hard_value);
    const nn::Matrix soft_grad = grad_of(false, &soft_value);
    for (Eigen::Index r = 0; r < 3; ++r) {
      Eigen::Index top;
      soft_value.row(r).maxCoeff(&top);
      CHECK(hard_value.row(r).sum() == 1.0);
      CHECK(hard_value(r, top) == 1.0);
    }
    CHECK(hard_grad == soft_grad);

    Rng check_rng(7);
    const auto g = agg::testing::gradcheck(
        {&logits},
        [&](nn::Tape& t) { return agg::testing::project(gumbel_softmax(t.param(logits), 0.7, u, false), proj); },
        check_rng);
    CHECK(g.max_rel_error < 1e-4);
  }
}

TEST_CASE("expand: linear f_N returns the selected column, and averages for mixed selections") {
  auto c = tiny_config(4, 3, 5);
  GrammarModel m(c, 8);
  const nn::Matrix w = param(m, "f_N.0.weight").value();
  for (std::size_t i = 0; i < 5; ++i) {
    nn::Vector sel(5, 0.0);
    sel[i] = 1.0;
    const auto [n, t] = m.expand(sel);
    for (std::size_t r = 0; r < 4; ++r) CHECK(n.values[r] == w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)));
  }
  nn::Vector mix(5, 0.0);
  mix[1] = mix[3] = 0.5;
  const auto [n, t] = m.expand(mix);
  for (std::size_t r = 0; r < 4; ++r) {
    const auto rr = static_cast<Eigen::Index>(r);
    CHECK(n.values[r] == doctest::Approx(0.5 * (w(rr, 1) + w(rr, 3))).epsilon(1e-14));
  }
  CHECK_THROWS_AS(m.expand(nn::Vector(5, 0.0)), Error);
  CHECK_THROWS_AS(m.expand(nn::Vector(4, 0.25)), Error);
}

TEST_CASE("expand: softmax terminals sum to one for 1000 random rule draws") {
  GrammarModel m(tiny_config(8, 6, 16), 9);
  Rng rng(10);
  for (int i = 0; i < 1000; ++i) {
    nn::Vector u(16);
    for (auto& v : u) v = rng.uniform_open();
    nn::Vector logits(16);
    for (auto& v : logits) v = rng.normal();
    const auto [n, t] = m.expand(gumbel_softmax(logits, 1.0, u, i % 2 == 0));
    CHECK(std::abs(std::accumulate(t.values.begin(), t.values.end(), 0.0) - 1.0) <= 1e-9);
    CHECK(t.mode == TerminalMode::one_hot_class);
  }
}

TEST_CASE("encode_start: zero parameters give the final bias, single frames are defined") {
  for (auto mode : {EncoderMode::temporal_conv, EncoderMode::gru}) {
    auto c = tiny_config(4, 3, 5);
    c.encoder_mode = mode;
    GrammarModel m(c, 12);
    zero_all(m);
    param(m, "s.out.bias").set_values(std::vector<double>{0.5, -1.0, 2.0, 0.25});
    const auto n = m.encode_start(std::vector<nn::Vector>{{1.0, 2.0, 3.0}, {0.0, -1.0, 4.0}});
    CHECK(n.values == nn::Vector{0.5, -1.0, 2.0, 0.25});
    CHECK(m.encode_start(std::vector<nn::Vector>{{1.0, 2.0, 3.0}}).values.size() == 4);
    CHECK_THROWS_AS(m.encode_start(std::vector<nn::Vector>{}), Error);
  }
}

TEST_CASE("encode_start: reproducible, and sensitive to every input frame") {
  for (auto mode : {EncoderMode::temporal_conv, EncoderMode::gru}) {
    auto c = tiny_config(4, 3, 5);
    c.encoder_mode = mode;
    GrammarModel a(c, 13), b(c, 13);
    Rng rng(14);
    std::vector<nn::Vector> frames(6, nn::Vector(3));
    for (auto& f : frames) {
      for (auto& v : f) v = rng.normal();
    }
    const auto base = a.encode_start(frames);
    CHECK(base.values == b.encode_start(frames).values);
    for (std::size_t t = 0; t < frames.size(); ++t) {
      auto moved = frames;
      moved[t][1] += 1e-3;
      const auto n = a.encode_start(moved);
      double change = 0.0;
      for (std::size_t i = 0; i < 4; ++i) change = std::max(change, std::abs(n.values[i] - base.values[i]));
      CHECK(change > 0.0);
    }
  }
}

TEST_CASE("unroll: length contract, log_prob, determinism") {
  auto c = tiny_config(6, 4, 12);
  c.topk_mask = 3;
  GrammarModel m(c, 15);
  Rng rng(16);
  const auto start = random_state(6, rng);
  for (auto policy : {Policy::sample_hard, Policy::sample_soft, Policy::greedy}) {
    const auto s = unroll(m, start, 5, policy, 99);
    check(s);
    CHECK(s.terminals.size() == 5);
    CHECK(s.nonterminals.size() == 6);
    CHECK(s.rule_indices.size() == 5);
    CHECK(s.log_prob <= 0.0);
    const auto again = unroll(m, start, 5, policy, 99);
    CHECK(again.rule_indices == s.rule_indices);
    CHECK(again.log_prob == s.log_prob);
    for (std::size_t j = 0; j < 5; ++j) CHECK(again.terminals[j].values == s.terminals[j].values);
  }
  const auto s = unroll(m, start, 5, Policy::sample_hard, 3);
  double lp = 0.0;
  for (std::size_t j = 0; j < 5; ++j) lp += std::log(m.rule_probs(s.nonterminals[j])[s.rule_indices[j]]);
  CHECK(s.log_prob == doctest::Approx(lp).epsilon(1e-12));
}

TEST_CASE("unroll: with topk_mask = 1, sampling equals greedy") {
  auto c = tiny_config(6, 4, 12);
  c.topk_mask = 1;
  GrammarModel m(c, 17);
  Rng rng(18);
  for (int i = 0; i < 20; ++i) {
    const auto start = random_state(6, rng);
    const auto g = unroll(m, start, 8, Policy::greedy, 0);
    const auto s = unroll(m, start, 8, Policy::sample_hard, static_cast<std::uint64_t>(i));
    CHECK(g.rule_indices == s.rule_indices);
    CHECK(g.tokens() == s.tokens());
    CHECK(s.log_prob == 0.0);
  }
}

TEST_CASE("unroll: a fair 2-rule grammar picks each first rule about half the time") {
  GrammarModel m(tiny_config(3, 2, 2), 19);
  zero_all(m);
  std::size_t first = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    first += unroll(m, basis(3, 0), 1, Policy::sample_hard, seed).rule_indices[0] == 0 ? 1 : 0;
  }
  CHECK(std::abs(static_cast<double>(first) / 1000.0 - 0.5) <= 0.05);
}

TEST_CASE("unroll: restarting from a recorded N_j replays the suffix") {
  auto c = tiny_config(6, 4, 12);
  c.topk_mask = 4;
  GrammarModel m(c, 20);
  Rng rng(21);
  const auto full = unroll(m, random_state(6, rng), 9, Policy::sample_hard, 123);
  for (std::size_t j = 1; j < 9; ++j) {
    const auto tail = unroll(m, full.nonterminals[j], 9 - j, Policy::sample_hard, 123, j);
    for (std::size_t i = 0; i + j < 9; ++i) {
      CHECK(tail.rule_indices[i] == full.rule_indices[i + j]);
      CHECK(tail.terminals[i].values == full.terminals[i + j].values);
    }
  }
}

TEST_CASE("enumerate_all: k_cap = 2, L = 10 gives 1024 sequences") {
  auto c = tiny_config(8, 4, 16);
  c.topk_mask = 4;
  GrammarModel m(c, 22);
  Rng rng(23);
  const auto all = enumerate_all(m, random_state(8, rng), 10, 2);
  CHECK(all.size() == 1024);
  for (std::size_t i = 1; i < all.size(); ++i) CHECK(all[i].probability <= all[i - 1].probability);
}

TEST_CASE("enumerate_all: k_cap = num_rules sums to one") {
  GrammarModel m(tiny_config(5, 3, 4), 24);
  Rng rng(25);
  for (int i = 0; i < 5; ++i) {
    const auto all = enumerate_all(m, random_state(5, rng), 5, 4);
    CHECK(all.size() == 1024);
    double total = 0.0;
    for (const auto& e : all) total += e.probability;
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }
}

TEST_CASE("enumerate_all: top-k mass product for a truncated cap") {
  GrammarModel m(tiny_config(3, 2, 4), 26);
  zero_all(m);
  // Uniform over 4 rules, 2 kept per step: (1/2)^L total.
  const auto all = enumerate_all(m, basis(3, 0), 3, 2);
  double total = 0.0;
  for (const auto& e : all) total += e.probability;
  CHECK(total == doctest::Approx(0.125).epsilon(1e-12));
}

TEST_CASE("enumerate_all: hand tree path probabilities") {
  auto tree = hand_tree();
  auto& m = *tree;
  const auto all = enumerate_all(m, basis(3, 0), 2, 2);
  std::map<std::vector<std::size_t>, double> paths;
  for (const auto& e : all) paths[e.sample.rule_indices] = e.probability;
  REQUIRE(paths.size() == 3);
  CHECK(paths[{0, 2}] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(paths[{1, 3}] == doctest::Approx(0.12).epsilon(1e-12));
  CHECK(paths[{1, 4}] == doctest::Approx(0.18).epsilon(1e-12));
  CHECK(all.front().sample.tokens() == std::vector<std::size_t>{0, 2});
  for (const auto& e : all) CHECK(e.sample.log_prob == doctest::Approx(std::log(e.probability)).epsilon(1e-12));
}

TEST_CASE("enumerate_all: over budget is a resource error naming k^L") {
  GrammarModel m(tiny_config(4, 2, 8), 27);
  try {
    enumerate_all(m, basis(4, 0), 10, 8, 1000);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::resource);
    CHECK(std::string(e.what()).find("8^10") != std::string::npos);
  }
}

TEST_CASE("greedy unroll: matches the best enumerated path on the hand tree") {
  auto tree = hand_tree();
  auto& m = *tree;
  const auto g = unroll(m, basis(3, 0), 2, Policy::greedy, 0);
  const auto all = enumerate_all(m, basis(3, 0), 2, 5);
  CHECK(g.rule_indices == all.front().sample.rule_indices);
  CHECK(std::exp(g.log_prob) == doctest::Approx(all.front().probability).epsilon(1e-12));
}

TEST_CASE("greedy unroll is per-step, so it can miss the most probable path") {
  // Root (0.6, 0.4); the 0.6 branch splits evenly, the 0.4 branch does not.
  auto model = hand_grammar(3, {{0, 0.6, 1}, {0, 0.4, 2}, {1, 0.5, 1}, {1, 0.5, 1}, {2, 1.0, 2}});
  auto& m = *model;
  const auto g = unroll(m, basis(3, 0), 2, Policy::greedy, 0);
  const auto all = enumerate_all(m, basis(3, 0), 2, 5);
  CHECK(g.rule_indices == std::vector<std::size_t>{0, 2});
  CHECK(all.front().sample.rule_indices == std::vector<std::size_t>{1, 4});
  CHECK(all.front().probability == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("greedy unroll path appears in the enumeration with its own probability") {
  auto c = tiny_config(6, 4, 10);
  c.topk_mask = 3;
  GrammarModel m(c, 28);
  Rng rng(29);
  for (int i = 0; i < 20; ++i) {
    const auto start = random_state(6, rng);
    const auto all = enumerate_all(m, start, 6, 10);
    const auto g = unroll(m, start, 6, Policy::greedy, 0);
    double found = -1.0;
    for (const auto& e : all) {
      if (e.sample.rule_indices == g.rule_indices) found = e.probability;
    }
    CHECK(found == doctest::Approx(std::exp(g.log_prob)).epsilon(1e-12));
  }
}

}  // TEST_SUITE
