#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include "doctest.h"

#include "agg/error.hpp"
#include "agg/eval/futures.hpp"
#include "agg/eval/metrics.hpp"
#include "agg/eval/report.hpp"
#include "agg/numeric/rng.hpp"
#include "agg/synth/dataset.hpp"
#include "agg/synth/quaternion.hpp"

using namespace agg;
using namespace agg::eval;

namespace {

// Precision at each positive's rank, every tied item counted ahead of it.
// Only valid when no two positives share a score.
double brute_ap(const std::vector<double>& s, const std::vector<int>& l) {
  double total = 0.0;
  int positives = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!l[i]) continue;
    ++positives;
    int ahead = 0, hits = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s[j] >= s[i]) {
        ++ahead;
        hits += l[j];
      }
    }
    total += static_cast<double>(hits) / ahead;
  }
  return total / positives;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::input;
}

synth::Quat random_unit(Rng& rng) {
  return synth::quat_normalize({rng.normal(), rng.normal(), rng.normal(), rng.normal()});
}

std::vector<double> frame(const synth::Quat& q) { return {q[0], q[1], q[2], q[3]}; }

grammar::GrammarConfig small_grammar(std::size_t classes) {
  auto c = grammar::activity_preset(classes);
  c.d_nonterminal = 12;
  c.num_rules = 16;
  c.encoder_channels = 8;
  return c;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("mAP: perfect ranking and single all-positive class") {
  const std::vector<std::vector<double>> s{{0.9, 0.1}, {0.2, 0.8}, {0.7, 0.3}};
  const std::vector<std::vector<int>> l{{1, 0}, {0, 1}, {1, 0}};
  CHECK(map_at_horizon(s, l) == 1.0);
  CHECK(map_at_horizon({{0.3}, {0.1}, {0.5}}, {{1}, {1}, {1}}) == 1.0);
}

TEST_CASE("mAP: hand case against a brute-force oracle") {
  const std::vector<std::vector<double>> s{{0.9, 0.1}, {0.8, 0.2}, {0.3, 0.7}, {0.1, 0.9}};
  const std::vector<std::vector<int>> l{{1, 1}, {0, 0}, {1, 0}, {0, 1}};
  const double oracle = (brute_ap({0.9, 0.8, 0.3, 0.1}, {1, 0, 1, 0}) + brute_ap({0.1, 0.2, 0.7, 0.9}, {1, 0, 0, 1})) / 2;
  CHECK(oracle == doctest::Approx(0.7916666666666666).epsilon(1e-15));
  CHECK(map_at_horizon(s, l) == doctest::Approx(oracle).epsilon(1e-15));
}

TEST_CASE("mAP: ties are ranked pessimistically") {
  CHECK(average_precision({0.5, 0.5}, {1, 0}) == 0.5);
  CHECK(average_precision({0.5, 0.5, 0.1}, {0, 1, 1}) == doctest::Approx((0.5 + 2.0 / 3.0) / 2));
}

TEST_CASE("mAP: invariant under strictly increasing transforms, random oracle cases") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.index(10), classes = 1 + rng.index(4);
    std::vector<std::vector<double>> s(n, std::vector<double>(classes)), t = s;
    std::vector<std::vector<int>> l(n, std::vector<int>(classes));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < classes; ++c) {
        s[i][c] = rng.uniform();
        t[i][c] = std::exp(3.0 * s[i][c]) - 7.0;
        l[i][c] = rng.uniform() < 0.4 ? 1 : 0;
      }
    }
    l[0][0] = 1;
    double oracle = 0.0;
    int counted = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      std::vector<double> sc;
      std::vector<int> lc;
      for (std::size_t i = 0; i < n; ++i) {
        sc.push_back(s[i][c]);
        lc.push_back(l[i][c]);
      }
      if (std::count(lc.begin(), lc.end(), 1) == 0) continue;
      oracle += brute_ap(sc, lc);
      ++counted;
    }
    const double m = map_at_horizon(s, l);
    CHECK(m == doctest::Approx(oracle / counted).epsilon(1e-12));
    CHECK(map_at_horizon(t, l) == m);
    CHECK(m > 0.0);
    CHECK(m <= 1.0);
  }
}

TEST_CASE("mAP: undefined without positives") {
  CHECK(kind_of([] { map_at_horizon({{0.1, 0.2}}, {{0, 0}}); }) == ErrorKind::undefined_metric);
  CHECK(kind_of([] { map_at_horizon({}, {}); }) == ErrorKind::undefined_metric);
  CHECK(kind_of([] { map_at_horizon({{0.1}}, {{1}, {0}}); }) == ErrorKind::dimension);
}

TEST_CASE("best of K: K = 1, monotone in K, deterministic") {
  const auto metric = [](std::uint64_t seed) {
    Rng rng(seed);
    return rng.uniform();
  };
  double single = 0.0;
  CHECK(best_of_k(1, Orientation::higher_is_better, 5, [&](std::uint64_t s) { return single = metric(s); }) == single);
  double prev_hi = -1.0, prev_lo = 2.0;
  for (std::size_t k = 1; k <= 20; ++k) {
    const double hi = best_of_k(k, Orientation::higher_is_better, 5, metric);
    const double lo = best_of_k(k, Orientation::lower_is_better, 5, metric);
    CHECK(hi >= prev_hi);
    CHECK(lo <= prev_lo);
    CHECK(lo <= hi);
    prev_hi = hi;
    prev_lo = lo;
  }
  CHECK(best_of_k(7, Orientation::higher_is_better, 5, metric) == best_of_k(7, Orientation::higher_is_better, 5, metric));
  CHECK(kind_of([&] { best_of_k(0, Orientation::higher_is_better, 5, metric); }) == ErrorKind::input);
}

TEST_CASE("angle error: double cover, right angle, metric properties") {
  Rng rng(4);
  const auto q = random_unit(rng);
  CHECK(mean_angle_error({frame(q)}, {frame({-q[0], -q[1], -q[2], -q[3]})}) <= 1e-7);
  const double c = std::cos(std::numbers::pi / 4), s = std::sin(std::numbers::pi / 4);
  CHECK(std::abs(mean_angle_error({{1, 0, 0, 0}}, {{c, 0, 0, s}}) - std::numbers::pi / 2) <= 1e-9);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = frame(random_unit(rng)), b = frame(random_unit(rng)), d = frame(random_unit(rng));
    const double ab = mean_angle_error({a}, {b});
    CHECK(ab == doctest::Approx(mean_angle_error({b}, {a})).epsilon(1e-12));
    CHECK(ab >= 0.0);
    CHECK(ab <= std::numbers::pi + 1e-12);
    CHECK(ab <= mean_angle_error({a}, {d}) + mean_angle_error({d}, {b}) + 1e-9);
  }
}

TEST_CASE("angle error: averaging, normalization and errors") {
  const double c = std::cos(std::numbers::pi / 4), s = std::sin(std::numbers::pi / 4);
  // Two joints: 0 and pi/2.
  CHECK(mean_angle_error({{1, 0, 0, 0, 1, 0, 0, 0}}, {{1, 0, 0, 0, c, 0, 0, s}}) ==
        doctest::Approx(std::numbers::pi / 4).epsilon(1e-12));
  CHECK(mean_angle_error({{2, 0, 0, 0}}, {{1, 0, 0, 0}}) == 0.0);
  CHECK(last_normalized_count() == 1);
  CHECK(kind_of([] { mean_angle_error({{0, 0, 0, 0}}, {{1, 0, 0, 0}}); }) == ErrorKind::input);
  CHECK(kind_of([] { mean_angle_error({{1, 0, 0}}, {{1, 0, 0}}); }) == ErrorKind::dimension);
}

TEST_CASE("n-gram KL: hand value and non-negativity") {
  const NgramDist p{{{0}, 0.5}, {{1}, 0.5}}, q{{{0}, 0.25}, {{1}, 0.75}};
  const double expected = 0.5 * std::log(2.0) + 0.5 * std::log(0.5 / 0.75);
  CHECK(expected == doctest::Approx(0.1438410362).epsilon(1e-9));
  CHECK(ngram_kl(p, q, 2, 1) == doctest::Approx(expected).epsilon(1e-5));
  CHECK(ngram_kl(p, p, 2, 1) == doctest::Approx(0.0));
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    NgramDist a, b;
    for (std::size_t x = 0; x < 3; ++x) {
      for (std::size_t y = 0; y < 3; ++y) {
        if (rng.uniform() < 0.7) a[{x, y}] = rng.uniform();
        if (rng.uniform() < 0.7) b[{x, y}] = rng.uniform();
      }
    }
    a[{0, 0}] += 0.1;
    b[{1, 1}] += 0.1;
    CHECK(ngram_kl(a, b, 3, 2) >= 0.0);
  }
  CHECK(kind_of([] { ngram_kl({}, {{{0}, 1.0}}, 2, 1); }) == ErrorKind::undefined_metric);
}

TEST_CASE("n-gram KL: samples from the oracle itself score near zero") {
  const auto g = synth::recipe();
  const auto ds = synth::sample_dataset(g, 100000, 8, 7);
  const double kl = ngram_kl(g, ds.tokens, 3, 8, 0);
  CHECK(kl >= 0.0);
  CHECK(kl <= 0.01);
  // A different grammar is far away.
  const auto other = synth::sample_dataset(synth::random_grammar(2, 3, 6), 2000, 8, 8);
  CHECK(ngram_kl(g, other.tokens, 3, 8, 0) > 1.0);
}

TEST_CASE("report: json round trip, table, validation") {
  EvalReport r;
  r.model_id = "m";
  r.dataset_id = "d";
  r.seed = 3;
  r.k = 5;
  r.horizons = {1, 2, 4};
  r.rows = {{"exact_match_single", {0.5, 0.25, 0.125}}, {"map", {1.0, 0.75, 0.5}}};
  r.scalars = {{"ngram_kl_n3", 0.0625}};
  const auto back = EvalReport::from_json(r.to_json());
  CHECK(back.to_json() == r.to_json());
  const auto table = r.to_table();
  CHECK(table.find("h=4") != std::string::npos);
  CHECK(table.find("0.1250") != std::string::npos);
  CHECK(table.find("ngram_kl_n3") != std::string::npos);

  auto bad = r;
  bad.horizons = {1, 1, 2};
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::input);
  bad = r;
  bad.rows[0].second.pop_back();
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::input);
  bad = r;
  bad.scalars[0].second = std::nan("");
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::input);
  CHECK(kind_of([] { EvalReport::from_json(nlohmann::json::object()); }) == ErrorKind::parse);
}

TEST_CASE("evaluate: discrete smoke run") {
  const auto g = synth::bimodal();
  const auto ds = synth::sample_dataset(g, 30, 8, 9);
  auto cfg = small_grammar(ds.width);
  grammar::GrammarModel model(cfg, 10);
  EvalOptions o;
  o.context = 2;
  o.horizons = {1, 3};
  o.k = 4;
  o.items = 20;
  o.kl_samples = 300;
  const auto r = evaluate_model(model, ds, o, &g);
  REQUIRE(r.rows.size() == 3);
  CHECK(r.rows[1].first == "exact_match_best_of_4");
  for (std::size_t h = 0; h < 2; ++h) {
    CHECK(r.rows[0].second[h] >= 0.0);
    CHECK(r.rows[1].second[h] >= r.rows[0].second[h]);
    CHECK(r.rows[1].second[h] <= 1.0);
    CHECK(r.rows[2].second[h] > 0.0);
  }
  REQUIRE(r.scalars.size() == 1);
  CHECK(r.scalars[0].second > 0.1);
  CHECK(evaluate_model(model, ds, o, &g).to_json() == r.to_json());
  o.horizons = {7};
  CHECK(kind_of([&] { evaluate_model(model, ds, o); }) == ErrorKind::config);
}

TEST_CASE("evaluate: quaternion smoke run") {
  const auto ds = synth::make_quaternion_dataset(synth::sample_dataset(synth::recipe(), 10, 6, 11), 2, 0.0, 12);
  auto cfg = small_grammar(8);
  cfg.d_terminal = 8;
  cfg.input_width = 8;
  cfg.terminal_activation = nn::Activation::none;
  grammar::GrammarModel model(cfg, 13);
  EvalOptions o;
  o.context = 2;
  o.horizons = {1, 2};
  o.k = 3;
  const auto r = evaluate_model(model, ds, o);
  REQUIRE(r.rows.size() == 2);
  CHECK(r.rows[0].first == "mae_single");
  for (std::size_t h = 0; h < 2; ++h) {
    CHECK(r.rows[1].second[h] <= r.rows[0].second[h]);
    CHECK(r.rows[1].second[h] >= 0.0);
    CHECK(r.rows[0].second[h] <= std::numbers::pi);
  }
}

}  // TEST_SUITE
