#include "agg/cli/run.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include "agg/adversarial/discriminator.hpp"
#include "agg/adversarial/grammar_only.hpp"
#include "agg/adversarial/trainer.hpp"
#include "agg/error.hpp"
#include "agg/eval/futures.hpp"
#include "agg/eval/metrics.hpp"
#include "agg/eval/report.hpp"
#include "agg/grammar/sampling.hpp"
#include "agg/numeric/checkpoint.hpp"
#include "agg/numeric/rng.hpp"
#include "agg/synth/dataset.hpp"
#include "agg/synth/grammar.hpp"

namespace agg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

Command parse_command(std::string_view name) {
  for (Command c : all_commands()) {
    if (to_string(c) == name) return c;
  }
  fail(ErrorKind::config, "unknown command '" + std::string(name) + "'");
}

std::string_view to_string(Command c) {
  switch (c) {
    case Command::synth: return "synth";
    case Command::train: return "train";
    case Command::generate: return "generate";
    case Command::evaluate: return "evaluate";
    case Command::ablate: return "ablate";
  }
  return "?";
}

const std::vector<Command>& all_commands() {
  static const std::vector<Command> all{Command::synth, Command::train, Command::generate, Command::evaluate,
                                        Command::ablate};
  return all;
}

namespace {

using Keys = std::vector<KeySpec>;

const json kNull = json();

void append(Keys& out, const Keys& more) { out.insert(out.end(), more.begin(), more.end()); }

Keys common_keys(Command c) {
  return {
      {"seed", KeyType::integer, 0, "master seed; AGG_SEED overrides it", {}},
      {"out_dir", KeyType::string, "agg_out/" + std::string(to_string(c)), "artifact directory", {}},
  };
}

Keys grammar_source_keys() {
  return {
      {"preset", KeyType::string, "walk_stop_run", "ground-truth grammar", {"walk_stop_run", "bimodal", "recipe", "random", "file"}},
      {"grammar_file", KeyType::string, "", "grammar JSON (preset = file)", {}},
      {"walk_probs", KeyType::real_list, json::array({0.8, 0.1, 0.1}), "walk_stop_run branch probabilities (walk, stop, run)", {}},
      {"random_states", KeyType::integer, 4, "states of the random preset", {}},
      {"random_tokens", KeyType::integer, 4, "tokens of the random preset", {}},
  };
}

Keys model_keys() {
  return {
      {"model_preset", KeyType::string, "activity", "grammar model preset", {"activity", "pose", "pose_codebook"}},
      {"d_nonterminal", KeyType::integer, kNull, "non-terminal width (null: preset)", {}},
      {"num_rules", KeyType::integer, kNull, "rule bank size (null: preset)", {}},
      {"branching_k", KeyType::integer, kNull, "rules per non-terminal for enumeration (null: preset)", {}},
      {"topk_mask", KeyType::integer, kNull, "keep the m most probable rules, 0 disables (null: preset)", {}},
      {"gumbel_temperature", KeyType::real, 1.0, "Gumbel-Softmax temperature", {}},
      {"final_temperature", KeyType::real, kNull, "linear temperature anneal target (null: none)", {}},
      {"terminal_activation", KeyType::string, kNull, "f_T output (null: preset)", {"softmax", "sigmoid", "none"}},
      {"hidden_activation", KeyType::string, "relu", "hidden layers of f_R/f_N/f_T", {"none", "relu", "leaky_relu", "sigmoid", "tanh"}},
      {"nonterminal_activation", KeyType::string, kNull, "f_N output (null: preset)", {"none", "relu", "leaky_relu", "sigmoid", "tanh"}},
      {"selection_bias", KeyType::boolean, false, "bias on the first f_N/f_T layer", {}},
      {"rule_layers", KeyType::integer, kNull, "dense layers in f_R (null: preset)", {}},
      {"expander_layers", KeyType::integer, kNull, "dense layers in f_N and f_T (null: preset)", {}},
      {"hidden_width", KeyType::integer, 0, "hidden layer width, 0 = d_nonterminal", {}},
      {"terminal_codebook", KeyType::integer, kNull, "f_T codebook size, 0 = direct (null: preset)", {}},
      {"encoder_mode", KeyType::string, kNull, "s(X) encoder (null: preset)", {"temporal_conv", "gru"}},
      {"encoder_channels", KeyType::integer, kNull, "encoder width (null: preset)", {}},
  };
}

Keys training_keys() {
  return {
      {"trainer", KeyType::string, "adversarial", "training objective", {"adversarial", "grammar_only"}},
      {"iterations", KeyType::integer, 5000, "training iterations", {}},
      {"batch_size", KeyType::integer, 32, "sequences per batch", {}},
      {"d_steps_per_g_step", KeyType::integer, 1, "discriminator updates per generator update", {}},
      {"generator_loss", KeyType::string, "non_saturating", "generator objective", {"saturating", "non_saturating"}},
      {"context_length", KeyType::integer, 0, "observed prefix steps fed to s(X)", {}},
      {"learning_rate", KeyType::real, 0.1, "initial learning rate", {}},
      {"momentum", KeyType::real, 0.9, "SGD momentum", {}},
      {"schedule", KeyType::string, "cosine", "learning rate schedule", {"cosine", "constant"}},
      {"policy", KeyType::string, "sample_hard", "rule selection while training", {"sample_hard", "sample_soft"}},
      {"discretize_terminals", KeyType::boolean, true, "feed straight-through one-hot terminals to D", {}},
      {"real_stream", KeyType::string, "posterior", "non-terminal stream for real sequences", {"posterior", "nearest"}},
      {"holdout_fraction", KeyType::real, 0.1, "items held out for the final D accuracy", {}},
      {"log_every", KeyType::integer, 100, "metrics row interval", {}},
      {"checkpoint_every", KeyType::integer, 0, "intermediate checkpoint interval, 0 = off", {}},
      {"d_channels", KeyType::integer_list, json::array({128, 256, 64}), "discriminator conv channels", {}},
      {"d_kernel", KeyType::integer, 5, "discriminator kernel width", {}},
      {"d_stride", KeyType::integer, 4, "discriminator stride", {}},
      {"k_cap", KeyType::integer, 4, "grammar_only: rules expanded per path and step", {}},
      {"beam", KeyType::integer, 64, "grammar_only: paths kept per item (pruning budget)", {}},
  };
}

Keys build_keys(Command c) {
  Keys k = common_keys(c);
  switch (c) {
    case Command::synth:
      append(k, grammar_source_keys());
      append(k, {
                    {"count", KeyType::integer, 10000, "sequences", {}},
                    {"length", KeyType::integer, 12, "tokens per sequence", {}},
                    {"kind", KeyType::string, "discrete", "dataset representation", {"discrete", "continuous", "quaternion"}},
                    {"embedding_width", KeyType::integer, 8, "continuous: Gaussian embedding width", {}},
                    {"joints", KeyType::integer, 32, "quaternion: joints per frame", {}},
                    {"noise_std", KeyType::real, 0.0, "continuous/quaternion: Gaussian noise", {}},
                });
      break;
    case Command::train:
      append(k, {{"dataset", KeyType::string, "", "training dataset (JSONL)", {}}});
      append(k, model_keys());
      append(k, training_keys());
      break;
    case Command::generate:
      append(k, {
                    {"run_dir", KeyType::string, "", "directory written by train", {}},
                    {"dataset", KeyType::string, "", "dataset providing the prefixes", {}},
                    {"context_length", KeyType::integer, kNull, "prefix steps (null: the run's value)", {}},
                    {"horizon", KeyType::integer, kNull, "steps to generate (null: rest of the sequence)", {}},
                    {"k", KeyType::integer, 10, "futures per prefix", {}},
                    {"items", KeyType::integer, 10, "prefixes (first items of the dataset)", {}},
                    {"policy", KeyType::string, "sample_hard", "rule selection", {"sample_hard", "sample_soft", "greedy"}},
                });
      break;
    case Command::evaluate:
      append(k, {
                    {"run_dir", KeyType::string, "", "directory written by train (empty: untrained model)", {}},
                    {"dataset", KeyType::string, "", "evaluation dataset", {}},
                    {"grammar_file", KeyType::string, "", "oracle grammar JSON for the n-gram KL (empty: skip)", {}},
                    {"context_length", KeyType::integer, kNull, "prefix steps (null: the run's value, else 0)", {}},
                    {"horizons", KeyType::integer_list, json::array({1, 2, 3, 4, 5}), "horizons (steps)", {}},
                    {"k", KeyType::integer, 10, "futures per prefix for best-of-K", {}},
                    {"items", KeyType::integer, 200, "prefixes scored", {}},
                    {"ngram", KeyType::integer, 3, "n-gram order of the KL", {}},
                    {"kl_samples", KeyType::integer, 10000, "sampled sequences for the KL", {}},
                });
      append(k, model_keys());
      break;
    case Command::ablate:
      append(k, grammar_source_keys());
      k[2].default_value = "bimodal";
      append(k, {
                    {"seeds", KeyType::integer_list, json::array({0, 1, 2, 3, 4}), "one paired run per seed", {}},
                    {"count", KeyType::integer, 10000, "sequences per dataset", {}},
                    {"length", KeyType::integer, 12, "tokens per sequence", {}},
                    {"grammar_only_iterations", KeyType::integer, 300, "iterations of the grammar-only arm, 0 = skip", {}},
                    {"k", KeyType::integer, 10, "futures per prefix for best-of-K", {}},
                    {"items", KeyType::integer, 200, "prefixes scored for best-of-K", {}},
                    {"kl_samples", KeyType::integer, 10000, "sampled sequences for the KL", {}},
                    {"ngram", KeyType::integer, 3, "n-gram order of the KL", {}},
                });
      append(k, model_keys());
      append(k, training_keys());
      std::erase_if(k, [](const KeySpec& s) { return s.name == "trainer"; });
      break;
  }
  return k;
}

std::string_view type_name(KeyType t) {
  switch (t) {
    case KeyType::integer: return "int";
    case KeyType::real: return "real";
    case KeyType::boolean: return "bool";
    case KeyType::string: return "string";
    case KeyType::integer_list: return "int list";
    case KeyType::real_list: return "real list";
  }
  return "?";
}

const KeySpec* find_key(Command c, const std::string& name) {
  for (const auto& k : config_keys(c)) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

bool type_ok(const KeySpec& spec, const json& v) {
  if (v.is_null()) return spec.default_value.is_null();
  switch (spec.type) {
    case KeyType::integer: return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
    case KeyType::real: return v.is_number();
    case KeyType::boolean: return v.is_boolean();
    case KeyType::string: return v.is_string();
    case KeyType::integer_list:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) {
               return e.is_number_unsigned() || (e.is_number_integer() && e.get<long long>() >= 0);
             });
    case KeyType::real_list:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); });
  }
  return false;
}

void check_value(const KeySpec& spec, const json& v) {
  require(type_ok(spec, v), ErrorKind::config,
          "key '" + spec.name + "' expects " + std::string(type_name(spec.type)) + ", got " + v.dump());
  if (!spec.choices.empty() && v.is_string()) {
    const auto s = v.get<std::string>();
    require(std::find(spec.choices.begin(), spec.choices.end(), s) != spec.choices.end(), ErrorKind::config,
            "key '" + spec.name + "': '" + s + "' is not one of the allowed values");
  }
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == text.size() && !text.empty() && text[0] != '-', ErrorKind::config,
          "key '" + key + "': '" + text + "' is not a non-negative integer");
  return v;
}

double parse_real(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == text.size() && !text.empty(), ErrorKind::config, "key '" + key + "': '" + text + "' is not a number");
  return v;
}

json parse_override_value(const KeySpec& spec, const std::string& text) {
  if (spec.default_value.is_null() && (text == "null" || text == "none")) return kNull;
  switch (spec.type) {
    case KeyType::integer: return parse_unsigned(spec.name, text);
    case KeyType::real: return parse_real(spec.name, text);
    case KeyType::boolean:
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      fail(ErrorKind::config, "key '" + spec.name + "': '" + text + "' is not a boolean");
    case KeyType::string: return text;
    case KeyType::integer_list:
    case KeyType::real_list: {
      json arr = json::array();
      std::string body = text;
      if (!body.empty() && body.front() == '[' && body.back() == ']') body = body.substr(1, body.size() - 2);
      std::stringstream ss(body);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (item.empty()) continue;
        if (spec.type == KeyType::integer_list) arr.push_back(parse_unsigned(spec.name, item));
        else arr.push_back(parse_real(spec.name, item));
      }
      return arr;
    }
  }
  return kNull;
}

// ---------------------------------------------------------------------------
// Typed access to a resolved config.

std::size_t get_size(const json& c, const char* key) { return c.at(key).get<std::size_t>(); }
double get_real(const json& c, const char* key) { return c.at(key).get<double>(); }
std::string get_string(const json& c, const char* key) { return c.at(key).get<std::string>(); }
bool is_set(const json& c, const char* key) { return c.contains(key) && !c.at(key).is_null(); }

std::string required_path(const json& c, const char* key) {
  const std::string p = get_string(c, key);
  require(!p.empty(), ErrorKind::config, std::string("key '") + key + "' is required");
  return p;
}

fs::path out_dir(const json& c) {
  const fs::path dir = get_string(c, "out_dir");
  require(!dir.empty(), ErrorKind::config, "out_dir must not be empty");
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), ErrorKind::io, "cannot create output directory " + dir.string());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorKind::io, "write failed for " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, path.string() + ": " + e.what());
  }
}

synth::GroundTruthGrammar source_grammar(const json& c, std::uint64_t seed) {
  const std::string preset = get_string(c, "preset");
  if (preset == "file") return synth::load_grammar(required_path(c, "grammar_file"));
  if (preset == "walk_stop_run") {
    const auto p = c.at("walk_probs").get<std::vector<double>>();
    require(p.size() == 3, ErrorKind::config, "walk_probs needs three values");
    return synth::walk_stop_run(p[0], p[1], p[2]);
  }
  return synth::build_preset(preset, {seed, get_size(c, "random_states"), get_size(c, "random_tokens")});
}

grammar::GrammarConfig model_config(const json& c, std::size_t width) {
  grammar::GrammarConfig g = grammar::preset(get_string(c, "model_preset"), width);
  g.d_terminal = width;
  g.input_width = width;
  if (is_set(c, "d_nonterminal")) g.d_nonterminal = get_size(c, "d_nonterminal");
  if (is_set(c, "num_rules")) g.num_rules = get_size(c, "num_rules");
  if (is_set(c, "branching_k")) g.branching_k = get_size(c, "branching_k");
  if (is_set(c, "topk_mask")) {
    const std::size_t m = get_size(c, "topk_mask");
    g.topk_mask = m == 0 ? std::nullopt : std::optional<std::size_t>(m);
  }
  g.gumbel_temperature = get_real(c, "gumbel_temperature");
  if (is_set(c, "terminal_activation")) g.terminal_activation = nn::parse_activation(get_string(c, "terminal_activation"));
  g.hidden_activation = nn::parse_activation(get_string(c, "hidden_activation"));
  if (is_set(c, "nonterminal_activation")) {
    g.nonterminal_activation = nn::parse_activation(get_string(c, "nonterminal_activation"));
  }
  g.selection_bias = c.at("selection_bias").get<bool>();
  if (is_set(c, "rule_layers")) g.rule_layers = get_size(c, "rule_layers");
  if (is_set(c, "expander_layers")) g.expander_layers = get_size(c, "expander_layers");
  g.hidden_width = get_size(c, "hidden_width");
  if (is_set(c, "terminal_codebook")) g.terminal_codebook = get_size(c, "terminal_codebook");
  if (is_set(c, "encoder_mode")) g.encoder_mode = grammar::parse_encoder_mode(get_string(c, "encoder_mode"));
  if (is_set(c, "encoder_channels")) g.encoder_channels = get_size(c, "encoder_channels");
  g.validate();
  return g;
}

adv::DiscriminatorConfig discriminator_config(const json& c) {
  const auto ch = c.at("d_channels").get<std::vector<std::size_t>>();
  require(ch.size() == 3, ErrorKind::config, "d_channels needs three values");
  adv::DiscriminatorConfig d;
  d.conv_channels = {ch[0], ch[1], ch[2]};
  d.kernel_width = get_size(c, "d_kernel");
  d.stride = get_size(c, "d_stride");
  d.validate();
  return d;
}

nn::LrSchedule parse_schedule(const std::string& s) {
  return s == "constant" ? nn::LrSchedule::constant : nn::LrSchedule::cosine;
}

adv::TrainConfig train_config(const json& c, std::size_t length) {
  adv::TrainConfig t;
  t.iterations = get_size(c, "iterations");
  t.batch_size = get_size(c, "batch_size");
  t.d_steps_per_g_step = get_size(c, "d_steps_per_g_step");
  t.generator_loss = adv::parse_generator_loss(get_string(c, "generator_loss"));
  t.sequence_length = length;
  t.context_length = get_size(c, "context_length");
  t.seed = c.at("seed").get<std::uint64_t>();
  t.policy = grammar::parse_policy(get_string(c, "policy"));
  t.discretize_terminals = c.at("discretize_terminals").get<bool>();
  t.real_stream = get_string(c, "real_stream") == "nearest" ? adv::RealStream::nearest : adv::RealStream::posterior;
  if (is_set(c, "final_temperature")) t.final_temperature = get_real(c, "final_temperature");
  t.learning_rate0 = get_real(c, "learning_rate");
  t.momentum = get_real(c, "momentum");
  t.schedule = parse_schedule(get_string(c, "schedule"));
  t.holdout_fraction = get_real(c, "holdout_fraction");
  t.log_every = get_size(c, "log_every");
  t.checkpoint_every = get_size(c, "checkpoint_every");
  t.validate();
  return t;
}

adv::GrammarOnlyConfig grammar_only_config(const json& c, std::size_t length, std::size_t iterations) {
  adv::GrammarOnlyConfig t;
  t.iterations = iterations;
  t.batch_size = get_size(c, "batch_size");
  t.sequence_length = length;
  t.context_length = get_size(c, "context_length");
  t.k_cap = get_size(c, "k_cap");
  t.beam = get_size(c, "beam");
  t.seed = c.at("seed").get<std::uint64_t>();
  t.learning_rate0 = get_real(c, "learning_rate");
  t.momentum = get_real(c, "momentum");
  t.schedule = parse_schedule(get_string(c, "schedule"));
  t.validate();
  return t;
}

// Stream tags for seeds derived from the master seed.
constexpr std::uint64_t kModelInit = 1;
constexpr std::uint64_t kDiscInit = 2;
constexpr std::uint64_t kDataSeed = 3;

std::uint64_t master_seed(const json& c) { return c.at("seed").get<std::uint64_t>(); }

// ---------------------------------------------------------------------------

void run_synth(const json& c, std::ostream& out) {
  const fs::path dir = out_dir(c);
  const std::uint64_t seed = master_seed(c);
  const synth::GroundTruthGrammar g = source_grammar(c, seed);
  synth::SequenceDataset ds = synth::sample_dataset(g, get_size(c, "count"), get_size(c, "length"),
                                                    derive_seed(seed, kDataSeed));
  const std::string kind = get_string(c, "kind");
  if (kind == "continuous") {
    Rng rng(derive_seed(seed, kDataSeed, 1));
    std::vector<std::vector<double>> embedding(g.num_tokens(), std::vector<double>(get_size(c, "embedding_width")));
    for (auto& row : embedding) {
      for (auto& v : row) v = rng.normal();
    }
    ds = synth::make_continuous_dataset(ds, embedding, get_real(c, "noise_std"), derive_seed(seed, kDataSeed, 2));
  } else if (kind == "quaternion") {
    ds = synth::make_quaternion_dataset(ds, get_size(c, "joints"), get_real(c, "noise_std"),
                                        derive_seed(seed, kDataSeed, 2));
  }
  write_json(dir / "config.json", c);
  synth::save_grammar((dir / "grammar.json").string(), g);
  synth::save_dataset((dir / "dataset.jsonl").string(), ds);
  out << "wrote " << ds.size() << " sequences of length " << ds.length << " to " << (dir / "dataset.jsonl").string()
      << "\n";
}

void write_grammar_only_csv(const fs::path& path, const adv::GrammarOnlyResult& r, const adv::GrammarOnlyConfig& t,
                            std::size_t log_every) {
  std::ostringstream csv;
  csv << "iteration,nll,lr\n" << std::setprecision(17);
  const nn::OptimizerConfig opt{t.learning_rate0, t.momentum, t.iterations, t.schedule};
  double window = 0.0;
  std::size_t n = 0, start = 0;
  for (std::size_t it = 0; it < r.nll.size(); ++it) {
    window += r.nll[it];
    ++n;
    if ((it + 1) % log_every == 0 || it + 1 == r.nll.size()) {
      csv << it + 1 << ',' << window / static_cast<double>(n) << ',' << nn::scheduled_learning_rate(opt, start) << '\n';
      window = 0.0;
      n = 0;
      start = it + 1;
    }
  }
  write_text(path, csv.str());
}

void run_train(const json& c, std::ostream& out) {
  const fs::path dir = out_dir(c);
  const std::uint64_t seed = master_seed(c);
  const synth::SequenceDataset ds = synth::load_dataset(required_path(c, "dataset"));
  require(!ds.empty(), ErrorKind::input, "train: dataset is empty");
  write_json(dir / "config.json", c);

  grammar::GrammarModel model(model_config(c, ds.width), derive_seed(seed, kModelInit));
  json summary;
  if (get_string(c, "trainer") == "grammar_only") {
    const adv::GrammarOnlyConfig t = grammar_only_config(c, ds.length, get_size(c, "iterations"));
    const adv::GrammarOnlyResult r = adv::train_grammar_only(ds, model, t);
    write_grammar_only_csv(dir / "metrics.csv", r, t, get_size(c, "log_every"));
    summary = {{"trainer", "grammar_only"}, {"final_nll", r.nll.back()}, {"all_finite", r.all_finite}};
  } else {
    adv::TrainConfig t = train_config(c, ds.length);
    if (t.checkpoint_every > 0) t.checkpoint_dir = (dir / "checkpoints").string();
    adv::Discriminator d(discriminator_config(c), model.config().d_terminal, model.config().d_nonterminal,
                         derive_seed(seed, kDiscInit));
    const adv::TrainResult r = adv::train_adversarial(ds, model, d, t);
    adv::write_metrics_csv((dir / "metrics.csv").string(), r.log);
    nn::save_checkpoint(dir / "discriminator.ckpt", d.parameters());
    summary = {{"trainer", "adversarial"},
               {"holdout_d_accuracy", r.holdout_accuracy},
               {"all_finite", r.all_finite},
               {"final_d_loss", r.d_losses.back()},
               {"final_g_loss", r.g_losses.back()}};
  }
  nn::save_checkpoint(dir / "generator.ckpt", model.parameters());
  write_json(dir / "summary.json", summary);
  out << summary.dump() << "\n";
}

struct LoadedRun {
  json config;
  std::unique_ptr<grammar::GrammarModel> model;
};

LoadedRun load_run(const fs::path& run_dir, std::size_t width) {
  LoadedRun run;
  run.config = read_json(run_dir / "config.json");
  run.model = std::make_unique<grammar::GrammarModel>(model_config(run.config, width), 0);
  nn::load_checkpoint(run_dir / "generator.ckpt", run.model->parameters());
  return run;
}

void run_generate(const json& c, std::ostream& out) {
  const fs::path dir = out_dir(c);
  const std::uint64_t seed = master_seed(c);
  const synth::SequenceDataset ds = synth::load_dataset(required_path(c, "dataset"));
  require(!ds.empty(), ErrorKind::input, "generate: dataset is empty");
  LoadedRun run = load_run(required_path(c, "run_dir"), ds.width);
  const std::size_t context =
      is_set(c, "context_length") ? get_size(c, "context_length") : get_size(run.config, "context_length");
  require(context <= ds.length, ErrorKind::config, "context_length exceeds the sequence length");
  const std::size_t horizon = is_set(c, "horizon") ? get_size(c, "horizon") : ds.length - context;
  require(horizon >= 1, ErrorKind::config, "nothing to generate: horizon is 0");
  const grammar::Policy policy = grammar::parse_policy(get_string(c, "policy"));
  write_json(dir / "config.json", c);

  std::ostringstream lines;
  const std::size_t items = std::min(get_size(c, "items"), ds.size());
  for (std::size_t item = 0; item < items; ++item) {
    const grammar::NonTerminalState start = eval::start_state(*run.model, ds, item, context);
    for (std::size_t s = 0; s < get_size(c, "k"); ++s) {
      const std::uint64_t sample_seed = derive_seed(seed, item, s);
      const grammar::SequenceSample sample = grammar::unroll(*run.model, start, horizon, policy, sample_seed);
      json rec = {{"item", item},
                  {"sample", s},
                  {"seed", sample_seed},
                  {"rule_indices", sample.rule_indices},
                  {"log_prob", sample.log_prob}};
      json terms = json::array();
      for (const auto& t : sample.terminals) terms.push_back(t.values);
      rec["terminals"] = std::move(terms);
      if (ds.kind == synth::DatasetKind::discrete) rec["tokens"] = sample.tokens();
      lines << rec.dump() << '\n';
    }
  }
  write_text(dir / "futures.jsonl", lines.str());
  out << "wrote " << items * get_size(c, "k") << " futures to " << (dir / "futures.jsonl").string() << "\n";
}

void run_evaluate(const json& c, std::ostream& out) {
  const fs::path dir = out_dir(c);
  const std::uint64_t seed = master_seed(c);
  const std::string dataset_path = required_path(c, "dataset");
  const synth::SequenceDataset ds = synth::load_dataset(dataset_path);
  require(!ds.empty(), ErrorKind::input, "evaluate: dataset is empty");

  std::unique_ptr<grammar::GrammarModel> model;
  std::size_t context = 0;
  std::string model_id = "untrained";
  const std::string run_dir = get_string(c, "run_dir");
  if (!run_dir.empty()) {
    LoadedRun run = load_run(run_dir, ds.width);
    model = std::move(run.model);
    context = get_size(run.config, "context_length");
    model_id = run_dir;
  } else {
    model = std::make_unique<grammar::GrammarModel>(model_config(c, ds.width), derive_seed(seed, kModelInit));
  }
  if (is_set(c, "context_length")) context = get_size(c, "context_length");

  std::optional<synth::GroundTruthGrammar> oracle;
  if (!get_string(c, "grammar_file").empty()) oracle = synth::load_grammar(get_string(c, "grammar_file"));

  eval::EvalOptions opts;
  opts.context = context;
  opts.horizons = c.at("horizons").get<std::vector<std::size_t>>();
  opts.k = get_size(c, "k");
  opts.seed = seed;
  opts.items = get_size(c, "items");
  opts.ngram = get_size(c, "ngram");
  opts.kl_samples = get_size(c, "kl_samples");
  write_json(dir / "config.json", c);

  eval::EvalReport report = eval::evaluate_model(*model, ds, opts, oracle ? &*oracle : nullptr);
  report.model_id = model_id;
  report.dataset_id = dataset_path;
  write_json(dir / "report.json", report.to_json());
  write_text(dir / "report.txt", report.to_table());
  out << report.to_table();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void run_ablate(const json& c, std::ostream& out) {
  const fs::path dir = out_dir(c);
  const auto seeds = c.at("seeds").get<std::vector<std::uint64_t>>();
  require(!seeds.empty(), ErrorKind::config, "seeds must not be empty");
  const std::size_t length = get_size(c, "length");
  const std::size_t context = get_size(c, "context_length");
  require(context < length, ErrorKind::config, "context_length must be below length");
  const std::size_t horizon = std::min<std::size_t>(5, length - context);
  const std::size_t n = get_size(c, "ngram");
  write_json(dir / "config.json", c);

  struct Arm {
    std::string name;
    std::string label;
    std::vector<double> kl, single, best;
  };
  std::vector<Arm> arms{{"branching", "AGG, branching", {}, {}, {}},
                        {"no_branching", "AGG, no branching (topk_mask = 1)", {}, {}, {}}};
  const std::size_t go_iters = get_size(c, "grammar_only_iterations");
  if (go_iters > 0) arms.push_back({"grammar_only", "grammar only (pruned ML)", {}, {}, {}});

  for (std::uint64_t seed : seeds) {
    json sc = c;
    sc["seed"] = seed;
    const synth::GroundTruthGrammar g = source_grammar(sc, seed);
    const synth::SequenceDataset ds =
        synth::sample_dataset(g, get_size(c, "count"), length, derive_seed(seed, kDataSeed));
    std::vector<std::size_t> items(std::min(get_size(c, "items"), ds.size()));
    std::iota(items.begin(), items.end(), std::size_t{0});

    for (auto& arm : arms) {
      grammar::GrammarConfig gc = model_config(sc, ds.width);
      if (arm.name == "no_branching") gc.topk_mask = 1;
      grammar::GrammarModel model(gc, derive_seed(seed, kModelInit));
      if (arm.name == "grammar_only") {
        adv::train_grammar_only(ds, model, grammar_only_config(sc, length, go_iters));
      } else {
        adv::Discriminator d(discriminator_config(sc), gc.d_terminal, gc.d_nonterminal, derive_seed(seed, kDiscInit));
        adv::train_adversarial(ds, model, d, train_config(sc, length));
      }
      const auto samples = eval::sample_model_sequences(model, ds, context, get_size(c, "kl_samples"), seed);
      arm.kl.push_back(eval::ngram_kl(g, samples, n, length, context));
      arm.single.push_back(eval::best_of_k_exact_match(model, ds, items, context, horizon, 1, seed));
      arm.best.push_back(eval::best_of_k_exact_match(model, ds, items, context, horizon, get_size(c, "k"), seed));
      out << "seed " << seed << " " << arm.name << " kl " << arm.kl.back() << "\n";
    }
  }

  json result = {{"seeds", seeds}, {"ngram", n}, {"horizon", horizon}, {"k", get_size(c, "k")}, {"arms", json::array()}};
  for (const auto& arm : arms) {
    result["arms"].push_back({{"arm", arm.name},
                              {"ngram_kl", arm.kl},
                              {"ngram_kl_median", median(arm.kl)},
                              {"exact_match_single", arm.single},
                              {"exact_match_best_of_k", arm.best}});
  }
  std::size_t label_width = 3;
  for (const auto& arm : arms) label_width = std::max(label_width, arm.label.size());
  std::ostringstream table;
  table << std::left << std::setw(static_cast<int>(label_width)) << "arm" << std::right << std::setw(16)
        << ("KL" + std::to_string(n) + " median") << std::setw(14) << ("exact@" + std::to_string(horizon) + " K=1")
        << std::setw(14) << ("exact@" + std::to_string(horizon) + " K=" + std::to_string(get_size(c, "k"))) << '\n'
        << std::fixed << std::setprecision(4);
  for (const auto& arm : arms) {
    table << std::left << std::setw(static_cast<int>(label_width)) << arm.label << std::right << std::setw(16)
          << median(arm.kl) << std::setw(14) << median(arm.single) << std::setw(14) << median(arm.best) << '\n';
  }
  write_json(dir / "ablation.json", result);
  write_text(dir / "ablation.txt", table.str());
  out << table.str();
}

}  // namespace

const std::vector<KeySpec>& config_keys(Command c) {
  static const std::vector<Keys> all = [] {
    std::vector<Keys> v;
    for (Command cmd : all_commands()) v.push_back(build_keys(cmd));
    return v;
  }();
  return all.at(static_cast<std::size_t>(c));
}

std::string describe_keys(Command c) {
  std::size_t width = 0;
  for (const auto& k : config_keys(c)) width = std::max(width, k.name.size());
  std::ostringstream out;
  out << "Config keys (JSON file via --config, or --set key=value):\n";
  for (const auto& k : config_keys(c)) {
    out << "  " << std::left << std::setw(static_cast<int>(width)) << k.name << "  " << std::setw(9)
        << type_name(k.type) << "  default " << k.default_value.dump() << "  " << k.help;
    if (!k.choices.empty()) {
      out << " {";
      for (std::size_t i = 0; i < k.choices.size(); ++i) out << (i ? "|" : "") << k.choices[i];
      out << "}";
    }
    out << "\n";
  }
  return out.str();
}

json resolve_config(Command c, const std::string& config_path, const std::vector<std::string>& overrides,
                    const char* env_seed) {
  json cfg = json::object();
  for (const auto& k : config_keys(c)) cfg[k.name] = k.default_value;

  if (!config_path.empty()) {
    const json file = read_json(config_path);
    require(file.is_object(), ErrorKind::config, "config file must hold a JSON object");
    for (const auto& [key, value] : file.items()) {
      const KeySpec* spec = find_key(c, key);
      require(spec != nullptr, ErrorKind::config,
              "unknown key '" + key + "' for command " + std::string(to_string(c)));
      check_value(*spec, value);
      cfg[key] = value;
    }
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    require(eq != std::string::npos && eq > 0, ErrorKind::config, "override '" + o + "' is not key=value");
    const std::string key = o.substr(0, eq);
    const KeySpec* spec = find_key(c, key);
    require(spec != nullptr, ErrorKind::config, "unknown key '" + key + "' for command " + std::string(to_string(c)));
    json value = parse_override_value(*spec, o.substr(eq + 1));
    check_value(*spec, value);
    cfg[key] = std::move(value);
  }
  if (env_seed != nullptr && *env_seed != '\0') cfg["seed"] = parse_unsigned("AGG_SEED", env_seed);
  return cfg;
}

void execute(Command c, const json& config, std::ostream& out) {
  try {
    switch (c) {
      case Command::synth: return run_synth(config, out);
      case Command::train: return run_train(config, out);
      case Command::generate: return run_generate(config, out);
      case Command::evaluate: return run_evaluate(config, out);
      case Command::ablate: return run_ablate(config, out);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("config: ") + e.what());
  }
}

int run(Command c, const std::string& config_path, const std::vector<std::string>& overrides, std::ostream& out,
        std::ostream& err) {
  std::string kind, message;
  try {
    const json cfg = resolve_config(c, config_path, overrides, std::getenv("AGG_SEED"));
    execute(c, cfg, out);
    return 0;
  } catch (const Error& e) {
    kind = std::string(agg::to_string(e.kind()));
    message = e.what();
  } catch (const std::exception& e) {
    kind = "internal";
    message = e.what();
  }
  err << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
  return kind == "config" || kind == "parse" ? 2 : 1;
}

}  // namespace agg::cli
