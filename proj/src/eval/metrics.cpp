#include "agg/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "agg/error.hpp"
#include "agg/numeric/rng.hpp"
#include "agg/synth/quaternion.hpp"

namespace agg::eval {

double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
  require(scores.size() == labels.size(), ErrorKind::dimension, "average_precision: size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Descending score; among ties negatives come first.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return labels[a] < labels[b];
  });
  std::size_t hits = 0, positives = 0;
  double total = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] != 0) {
      ++hits;
      total += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  positives = hits;
  require(positives > 0, ErrorKind::undefined_metric, "average precision of a class with no positives");
  return total / static_cast<double>(positives);
}

double map_at_horizon(const std::vector<std::vector<double>>& scores, const std::vector<std::vector<int>>& labels) {
  require(scores.size() == labels.size(), ErrorKind::dimension, "mAP: scores and labels differ in item count");
  require(!scores.empty(), ErrorKind::undefined_metric, "mAP over no items");
  const std::size_t classes = scores[0].size();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    require(scores[i].size() == classes && labels[i].size() == classes, ErrorKind::dimension,
            "mAP: item " + std::to_string(i) + " has the wrong class count");
    for (double s : scores[i]) require(std::isfinite(s), ErrorKind::input, "mAP: non-finite score");
  }
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<double> s(scores.size());
    std::vector<int> l(scores.size());
    bool any = false;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      s[i] = scores[i][c];
      l[i] = labels[i][c] != 0 ? 1 : 0;
      any = any || l[i] != 0;
    }
    if (!any) continue;
    total += average_precision(s, l);
    ++counted;
  }
  require(counted > 0, ErrorKind::undefined_metric, "mAP: no class has a positive label");
  return total / static_cast<double>(counted);
}

double best_of_k(std::size_t k, Orientation orientation, std::uint64_t seed,
                 const std::function<double(std::uint64_t)>& draw_metric) {
  require(k >= 1, ErrorKind::input, "best_of_k: K must be positive");
  double best = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double v = draw_metric(derive_seed(seed, 0xb0f, i));
    if (i == 0 || (orientation == Orientation::higher_is_better ? v > best : v < best)) best = v;
  }
  return best;
}

namespace {
thread_local std::size_t normalized_count = 0;

synth::Quat unit(const synth::Quat& q) {
  const double n = synth::quat_norm(q);
  require(n > 0.0, ErrorKind::input, "mean_angle_error: zero quaternion");
  if (std::abs(n - 1.0) > 1e-6) {
    ++normalized_count;
    return synth::quat_normalize(q);
  }
  return q;
}
}  // namespace

std::size_t last_normalized_count() { return normalized_count; }

double mean_angle_error(const std::vector<std::vector<double>>& pred, const std::vector<std::vector<double>>& truth) {
  require(pred.size() == truth.size() && !pred.empty(), ErrorKind::dimension,
          "mean_angle_error: sequences must be non-empty and of equal length");
  normalized_count = 0;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    require(pred[t].size() == truth[t].size() && pred[t].size() % 4 == 0 && !pred[t].empty(), ErrorKind::dimension,
            "mean_angle_error: frame " + std::to_string(t) + " is not a set of quaternions");
    for (std::size_t j = 0; j < pred[t].size() / 4; ++j) {
      const synth::Quat p = unit(synth::read_block(pred[t], j));
      const synth::Quat q = unit(synth::read_block(truth[t], j));
      const double dot = std::abs(p[0] * q[0] + p[1] * q[1] + p[2] * q[2] + p[3] * q[3]);
      total += 2.0 * std::acos(std::min(1.0, dot));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

namespace {

double total_mass(const NgramDist& d) {
  double s = 0.0;
  for (const auto& [k, v] : d) {
    require(std::isfinite(v) && v >= 0.0, ErrorKind::input, "n-gram distribution has a negative or non-finite mass");
    s += v;
  }
  return s;
}

bool next_gram(synth::TokenSeq& g, std::size_t alphabet) {
  for (std::size_t i = g.size(); i-- > 0;) {
    if (++g[i] < alphabet) return true;
    g[i] = 0;
  }
  return false;
}

}  // namespace

double ngram_kl(const NgramDist& p, const NgramDist& q, std::size_t alphabet, std::size_t n, double epsilon) {
  require(epsilon > 0.0, ErrorKind::parameter, "ngram_kl: smoothing must be positive");
  require(n >= 1, ErrorKind::input, "ngram_kl: n must be positive");
  const double pm = total_mass(p);
  const double qm = total_mass(q);
  require(pm > 0.0 && qm > 0.0, ErrorKind::undefined_metric, "ngram_kl: empty distribution");

  std::size_t cells = 1;
  bool full = alphabet > 0;
  for (std::size_t i = 0; i < n && full; ++i) {
    if (cells > 1'000'000 / alphabet) full = false;
    cells *= alphabet;
  }
  double kl = 0.0;
  auto term = [&](double pv, double qv, double support) {
    const double ps = (pv / pm + epsilon) / (1.0 + epsilon * support);
    const double qs = (qv / qm + epsilon) / (1.0 + epsilon * support);
    kl += ps * std::log(ps / qs);
  };
  auto lookup = [](const NgramDist& d, const synth::TokenSeq& key) {
    auto it = d.find(key);
    return it == d.end() ? 0.0 : it->second;
  };
  if (full) {
    const auto support = static_cast<double>(cells);
    synth::TokenSeq g(n, 0);
    do {
      term(lookup(p, g), lookup(q, g), support);
    } while (next_gram(g, alphabet));
  } else {
    std::set<synth::TokenSeq> keys;
    for (const auto& [k, v] : p) keys.insert(k);
    for (const auto& [k, v] : q) keys.insert(k);
    const auto support = static_cast<double>(keys.size());
    for (const auto& k : keys) term(lookup(p, k), lookup(q, k), support);
  }
  return std::max(0.0, kl);
}

NgramDist empirical_ngrams(const std::vector<synth::TokenSeq>& sequences, std::size_t n, std::size_t first) {
  require(n >= 1, ErrorKind::input, "empirical_ngrams: n must be positive");
  NgramDist out;
  double count = 0.0;
  for (const auto& s : sequences) {
    for (std::size_t p = first; p + n <= s.size(); ++p) {
      out[synth::TokenSeq(s.begin() + static_cast<std::ptrdiff_t>(p), s.begin() + static_cast<std::ptrdiff_t>(p + n))] += 1.0;
      count += 1.0;
    }
  }
  for (auto& [k, v] : out) v /= count;
  return out;
}

double ngram_kl(const synth::GroundTruthGrammar& oracle, const std::vector<synth::TokenSeq>& samples, std::size_t n,
                std::size_t length, std::size_t first, double epsilon) {
  require(!samples.empty(), ErrorKind::undefined_metric, "ngram_kl: no samples");
  for (const auto& s : samples) {
    require(s.size() == length, ErrorKind::input, "ngram_kl: sample length differs from the oracle length");
  }
  const NgramDist p = synth::exact_ngram_distribution(oracle, length, n, first);
  return ngram_kl(p, empirical_ngrams(samples, n, first), oracle.num_tokens(), n, epsilon);
}

}  // namespace agg::eval
