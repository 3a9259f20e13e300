#include "agg/adversarial/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>

#include "agg/error.hpp"
#include "agg/numeric/checkpoint.hpp"
#include "agg/numeric/rng.hpp"

namespace agg::adv {

void TrainConfig::validate() const {
  require(iterations >= 1, ErrorKind::config, "iterations must be positive");
  require(batch_size >= 1, ErrorKind::config, "batch_size must be positive");
  require(d_steps_per_g_step >= 1, ErrorKind::config, "d_steps_per_g_step must be positive");
  require(sequence_length >= 1, ErrorKind::config, "sequence_length must be positive");
  require(context_length < sequence_length, ErrorKind::config, "context_length must be below sequence_length");
  require(holdout_fraction >= 0.0 && holdout_fraction < 1.0, ErrorKind::config, "holdout_fraction must lie in [0, 1)");
  require(log_every >= 1, ErrorKind::config, "log_every must be positive");
  require(learning_rate0 > 0.0 && momentum >= 0.0 && momentum < 1.0, ErrorKind::config,
          "learning rate must be positive and momentum in [0, 1)");
  if (d_learning_rate0) require(*d_learning_rate0 > 0.0, ErrorKind::config, "d_learning_rate must be positive");
  if (final_temperature) require(*final_temperature > 0.0, ErrorKind::config, "final_temperature must be positive");
  require(policy != grammar::Policy::greedy, ErrorKind::config, "adversarial training needs a sampling policy");
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write metrics " + path);
  out << "iteration,d_loss,g_loss,d_accuracy,lr\n";
  out << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.iteration << ',' << r.d_loss << ',' << r.g_loss << ',' << r.d_accuracy << ',' << r.lr << '\n';
  }
}

nn::Matrix terminal_rows(const synth::SequenceDataset& ds, const std::vector<std::size_t>& indices, std::size_t begin,
                         std::size_t count) {
  const auto width = static_cast<Eigen::Index>(ds.width);
  const auto n = static_cast<Eigen::Index>(count);
  nn::Matrix m = nn::Matrix::Zero(static_cast<Eigen::Index>(indices.size()) * n, width);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    for (std::size_t t = 0; t < count; ++t) {
      const auto row = static_cast<Eigen::Index>(b) * n + static_cast<Eigen::Index>(t);
      if (ds.kind == synth::DatasetKind::discrete) {
        m(row, static_cast<Eigen::Index>(ds.tokens[indices[b]][begin + t])) = 1.0;
      } else {
        m.row(row) = nn::row_matrix(ds.frames[indices[b]][begin + t]);
      }
    }
  }
  return m;
}

nn::Var encode_prefixes(nn::Tape& tape, grammar::GrammarModel& model, const synth::SequenceDataset& ds,
                        const std::vector<std::size_t>& indices, std::size_t context) {
  const auto batch = static_cast<Eigen::Index>(indices.size());
  if (context == 0) {
    // Every item sees the same zero frame, so encode once and broadcast.
    nn::Var one = model.encode_start(
        tape, tape.constant(nn::Matrix::Zero(1, static_cast<Eigen::Index>(model.config().input_width))), {1, 1});
    return nn::gather_rows(one, std::vector<Eigen::Index>(static_cast<std::size_t>(batch), 0));
  }
  return model.encode_start(tape, tape.constant(terminal_rows(ds, indices, 0, context)),
                            {batch, static_cast<Eigen::Index>(context)});
}

nn::Matrix teacher_forced_nonterminals(grammar::GrammarModel& model, const nn::Matrix& start,
                                       const nn::Matrix& terminals, Eigen::Index horizon,
                                       std::optional<std::uint64_t> posterior_seed) {
  const Eigen::Index batch = start.rows();
  const auto rules = static_cast<Eigen::Index>(model.config().num_rules);
  require(terminals.rows() == batch * horizon, ErrorKind::dimension, "teacher forcing: terminal rows mismatch");
  nn::Tape tape;
  nn::Var eye = tape.constant(nn::Matrix::Identity(rules, rules));
  const nn::Matrix nt_all = model.expand_nonterminal(tape, eye).value();
  nn::Matrix t_all = model.expand_terminal(tape, eye).value();
  require(terminals.cols() == t_all.cols(), ErrorKind::dimension, "teacher forcing: terminal width mismatch");
  const bool posterior =
      posterior_seed.has_value() && model.config().terminal_mode() == grammar::TerminalMode::one_hot_class;
  std::vector<Eigen::Index> rule_class(static_cast<std::size_t>(rules));
  for (Eigen::Index r = 0; r < rules; ++r) t_all.row(r).maxCoeff(&rule_class[static_cast<std::size_t>(r)]);
  for (Eigen::Index r = 0; r < rules; ++r) {
    const double norm = t_all.row(r).norm();
    if (norm > 0.0) t_all.row(r) /= norm;
  }

  nn::Matrix out(batch * horizon, nt_all.cols());
  nn::Matrix n = start;
  for (Eigen::Index j = 0; j < horizon; ++j) {
    const nn::Matrix probs = model.rule_probs(tape, tape.constant(n)).value();
    nn::Matrix observed(batch, terminals.cols());
    for (Eigen::Index b = 0; b < batch; ++b) observed.row(b) = terminals.row(b * horizon + j);
    const nn::Matrix sims = observed * t_all.transpose();
    for (Eigen::Index b = 0; b < batch; ++b) {
      Eigen::Index best = -1;
      if (posterior) {
        Eigen::Index token = 0;
        observed.row(b).maxCoeff(&token);
        double total = 0.0;
        for (Eigen::Index r = 0; r < rules; ++r) {
          if (rule_class[static_cast<std::size_t>(r)] == token) total += probs(b, r);
        }
        if (total > 0.0) {
          Rng rng(derive_seed(*posterior_seed, static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(j)));
          double u = rng.uniform() * total;
          for (Eigen::Index r = 0; r < rules; ++r) {
            if (rule_class[static_cast<std::size_t>(r)] != token || probs(b, r) <= 0.0) continue;
            best = r;
            u -= probs(b, r);
            if (u < 0.0) break;
          }
        }
      }
      const bool drawn = best >= 0;
      for (Eigen::Index r = 0; !drawn && r < rules; ++r) {
        if (probs(b, r) <= 0.0) continue;
        if (best < 0 || sims(b, r) > sims(b, best) || (sims(b, r) == sims(b, best) && probs(b, r) > probs(b, best))) {
          best = r;
        }
      }
      n.row(b) = nt_all.row(best);
      out.row(b * horizon + j) = n.row(b);
    }
  }
  return out;
}

namespace {

std::vector<std::uint64_t> row_seeds(std::uint64_t seed, std::uint64_t stream, std::size_t count) {
  std::vector<std::uint64_t> out(count);
  for (std::size_t b = 0; b < count; ++b) out[b] = derive_seed(seed, stream, b);
  return out;
}

std::vector<std::size_t> draw_batch(std::uint64_t seed, std::uint64_t stream, const std::vector<std::size_t>& pool,
                                    std::size_t count) {
  Rng rng(derive_seed(seed, 0xba7c4, stream));
  std::vector<std::size_t> out(count);
  for (auto& v : out) v = pool[rng.index(pool.size())];
  return out;
}

struct Fakes {
  nn::Var terminals;     // (B*H) x d_T
  nn::Var nonterminals;  // (B*H) x d_N
};

Fakes generate(nn::Tape& tape, grammar::GrammarModel& model, nn::Var start, const TrainConfig& config, double tau,
               std::uint64_t stream) {
  const auto batch = static_cast<std::size_t>(start.rows());
  const auto seeds = row_seeds(config.seed, stream, batch);
  grammar::UnrollOptions opts{config.policy, tau, 0};
  grammar::UnrollTrace trace = grammar::unroll_batch(tape, model, start, config.horizon(), opts, seeds);
  std::vector<nn::Var> produced(trace.nonterminals.begin() + 1, trace.nonterminals.end());
  nn::Var terminals = nn::interleave_steps(trace.terminals);
  if (config.discretize_terminals && model.config().terminal_mode() == grammar::TerminalMode::one_hot_class) {
    terminals = grammar::straight_through_argmax(terminals);
  }
  nn::Var nts = nn::interleave_steps(produced);
  return {terminals, nts};
}

struct RealBatch {
  nn::Matrix terminals;
  nn::Matrix nonterminals;
  nn::Matrix start;
};

RealBatch real_batch(grammar::GrammarModel& model, const synth::SequenceDataset& ds,
                     const std::vector<std::size_t>& idx, const TrainConfig& config, std::uint64_t stream) {
  nn::Tape tape;
  RealBatch rb;
  rb.start = encode_prefixes(tape, model, ds, idx, config.context_length).value();
  rb.terminals = terminal_rows(ds, idx, config.context_length, config.horizon());
  std::optional<std::uint64_t> posterior_seed;
  if (config.real_stream == RealStream::posterior) posterior_seed = derive_seed(config.seed, 0x7eac, stream);
  rb.nonterminals = teacher_forced_nonterminals(model, rb.start, rb.terminals,
                                                static_cast<Eigen::Index>(config.horizon()), posterior_seed);
  return rb;
}

nn::Matrix stack_rows(const nn::Matrix& a, const nn::Matrix& b) {
  nn::Matrix out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

double temperature_at(const grammar::GrammarModel& model, const TrainConfig& config, std::size_t it) {
  const double tau0 = model.config().gumbel_temperature;
  if (!config.final_temperature || config.iterations <= 1) return tau0;
  const double frac = static_cast<double>(it) / static_cast<double>(config.iterations - 1);
  return tau0 + (*config.final_temperature - tau0) * frac;
}

// Stream tags keep the D-step, G-step and evaluation noise disjoint.
constexpr std::uint64_t kDStream = 1ull << 40;
constexpr std::uint64_t kGStream = 2ull << 40;
constexpr std::uint64_t kEvalStream = 3ull << 40;

void save_pair(const TrainConfig& config, grammar::GrammarModel& model, Discriminator& d, std::size_t iteration) {
  namespace fs = std::filesystem;
  fs::create_directories(config.checkpoint_dir);
  const std::string suffix = "_" + std::to_string(iteration) + ".ckpt";
  nn::save_checkpoint(fs::path(config.checkpoint_dir) / ("generator" + suffix), model.parameters());
  nn::save_checkpoint(fs::path(config.checkpoint_dir) / ("discriminator" + suffix), d.parameters());
}

}  // namespace

double discriminator_accuracy(const synth::SequenceDataset& dataset, const std::vector<std::size_t>& indices,
                              grammar::GrammarModel& model, Discriminator& discriminator, const TrainConfig& config,
                              std::uint64_t stream) {
  require(!indices.empty(), ErrorKind::input, "discriminator accuracy needs held-out items");
  std::size_t correct = 0;
  const std::size_t chunk = std::max<std::size_t>(config.batch_size, 1);
  for (std::size_t begin = 0; begin < indices.size(); begin += chunk) {
    const std::vector<std::size_t> idx(indices.begin() + static_cast<std::ptrdiff_t>(begin),
                                       indices.begin() + static_cast<std::ptrdiff_t>(std::min(indices.size(), begin + chunk)));
    const std::uint64_t eval_stream = kEvalStream + stream * 1'000'003 + begin;
    RealBatch rb = real_batch(model, dataset, idx, config, eval_stream);
    nn::Tape tape;
    Fakes fakes = generate(tape, model, tape.constant(rb.start), config,
                           temperature_at(model, config, config.iterations - 1), eval_stream);
    const auto b = static_cast<Eigen::Index>(idx.size());
    nn::Var z = discriminator.logits(tape, tape.constant(stack_rows(rb.terminals, fakes.terminals.value())),
                                     tape.constant(stack_rows(rb.nonterminals, fakes.nonterminals.value())),
                                     {2 * b, static_cast<Eigen::Index>(config.horizon())});
    for (Eigen::Index i = 0; i < b; ++i) {
      correct += z.value()(i, 0) > 0.0 ? 1 : 0;
      correct += z.value()(b + i, 0) <= 0.0 ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(2 * indices.size());
}

TrainResult train_adversarial(const synth::SequenceDataset& dataset, grammar::GrammarModel& model,
                              Discriminator& discriminator, const TrainConfig& config) {
  config.validate();
  require(!dataset.empty(), ErrorKind::input, "train_adversarial: empty dataset");
  dataset.validate();
  require(dataset.length == config.sequence_length, ErrorKind::input,
          "train_adversarial: dataset length " + std::to_string(dataset.length) + " differs from sequence_length " +
              std::to_string(config.sequence_length));
  require(dataset.width == model.config().d_terminal && dataset.width == model.config().input_width,
          ErrorKind::dimension, "train_adversarial: dataset width must equal d_terminal and input_width");
  require(discriminator.terminal_width() == model.config().d_terminal &&
              discriminator.nonterminal_width() == model.config().d_nonterminal,
          ErrorKind::dimension, "train_adversarial: discriminator widths do not match the grammar");

  // Deterministic split: every item whose hash falls below the fraction is held out.
  std::vector<std::size_t> train_idx, holdout_idx;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const double u = static_cast<double>(derive_seed(config.seed, 0x401d, i) >> 11) * 0x1.0p-53;
    (u < config.holdout_fraction ? holdout_idx : train_idx).push_back(i);
  }
  if (train_idx.empty()) train_idx = holdout_idx;

  nn::OptimizerConfig g_opt{config.learning_rate0, config.momentum, config.iterations, config.schedule};
  nn::OptimizerConfig d_opt{config.d_learning_rate0.value_or(config.learning_rate0), config.momentum, config.iterations * config.d_steps_per_g_step,
                            config.schedule};
  nn::SgdMomentum g_sgd(g_opt), d_sgd(d_opt);
  const nn::ParamList g_params = model.parameters();
  const nn::ParamList d_params = discriminator.parameters();
  for (auto* p : g_params) p->zero_grad();
  for (auto* p : d_params) p->zero_grad();

  const auto batch = static_cast<Eigen::Index>(config.batch_size);
  const auto horizon = static_cast<Eigen::Index>(config.horizon());
  TrainResult result;
  MetricsRow window;
  std::size_t in_window = 0;

  for (std::size_t it = 0; it < config.iterations; ++it) {
    const double tau = temperature_at(model, config, it);
    const double lr = g_sgd.learning_rate();
    const std::vector<std::size_t> g_idx = draw_batch(config.seed, it, train_idx, config.batch_size);

    // Generator forward for this iteration; also serves as the last D step's fakes.
    nn::Tape g_tape;
    for (auto* p : d_params) g_tape.freeze(*p);
    nn::Var start = encode_prefixes(g_tape, model, dataset, g_idx, config.context_length);
    Fakes fakes = generate(g_tape, model, start, config, tau, kGStream + it);

    double d_loss = 0.0, d_acc = 0.0;
    for (std::size_t k = 0; k < config.d_steps_per_g_step; ++k) {
      const bool last = k + 1 == config.d_steps_per_g_step;
      const std::uint64_t stream = it * config.d_steps_per_g_step + k;
      const std::vector<std::size_t> idx = draw_batch(config.seed, kDStream + stream, train_idx, config.batch_size);
      RealBatch rb = real_batch(model, dataset, idx, config, kDStream + stream);
      nn::Matrix fake_t, fake_n;
      if (last) {
        fake_t = fakes.terminals.value();
        fake_n = fakes.nonterminals.value();
      } else {
        nn::Tape scratch;
        Fakes extra = generate(scratch, model, encode_prefixes(scratch, model, dataset, idx, config.context_length),
                               config, tau, kDStream + stream);
        fake_t = extra.terminals.value();
        fake_n = extra.nonterminals.value();
      }
      nn::Tape d_tape;
      nn::Var z = discriminator.logits(d_tape, d_tape.constant(stack_rows(rb.terminals, fake_t)),
                                       d_tape.constant(stack_rows(rb.nonterminals, fake_n)), {2 * batch, horizon});
      std::vector<Eigen::Index> real_rows, fake_rows;
      for (Eigen::Index b = 0; b < batch; ++b) {
        real_rows.push_back(b);
        fake_rows.push_back(batch + b);
      }
      nn::Var loss = discriminator_loss_from_logits(nn::gather_rows(z, real_rows), nn::gather_rows(z, fake_rows));
      d_tape.backward(loss);
      d_sgd.step(d_params);
      d_loss = loss.scalar();
      std::size_t correct = 0;
      for (Eigen::Index b = 0; b < batch; ++b) {
        correct += z.value()(b, 0) > 0.0 ? 1 : 0;
        correct += z.value()(batch + b, 0) <= 0.0 ? 1 : 0;
      }
      d_acc = static_cast<double>(correct) / static_cast<double>(2 * batch);
    }

    nn::Var z_fake = discriminator.logits(g_tape, fakes.terminals, fakes.nonterminals, {batch, horizon});
    nn::Var g_loss = generator_loss_from_logits(z_fake, config.generator_loss);
    g_tape.backward(g_loss);
    g_sgd.step(g_params);

    result.d_losses.push_back(d_loss);
    result.g_losses.push_back(g_loss.scalar());
    if (!std::isfinite(d_loss) || !std::isfinite(g_loss.scalar())) result.all_finite = false;

    window.d_loss += d_loss;
    window.g_loss += g_loss.scalar();
    window.d_accuracy += d_acc;
    ++in_window;
    if ((it + 1) % config.log_every == 0 || it + 1 == config.iterations) {
      const double n = static_cast<double>(in_window);
      result.log.push_back({it + 1, window.d_loss / n, window.g_loss / n, window.d_accuracy / n, lr});
      window = MetricsRow{};
      in_window = 0;
    }
    if (config.checkpoint_every > 0 && !config.checkpoint_dir.empty() && (it + 1) % config.checkpoint_every == 0) {
      save_pair(config, model, discriminator, it + 1);
    }
  }

  result.holdout_accuracy = discriminator_accuracy(dataset, holdout_idx.empty() ? train_idx : holdout_idx, model,
                                                   discriminator, config, 0);
  return result;
}

}  // namespace agg::adv
