#include <filesystem>
#include <functional>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "agg/cli/run.hpp"
#include "agg/error.hpp"
#include "agg/eval/report.hpp"

using namespace agg;
using namespace agg::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("agg_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
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

int run_quiet(Command c, const std::vector<std::string>& overrides, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = run(c, "", overrides, out, err);
  if (err_text) *err_text = err.str();
  return code;
}

const std::vector<std::string> kSmallModel{"d_nonterminal=8", "num_rules=16", "encoder_channels=8"};
const std::vector<std::string> kSmallTrain{"d_nonterminal=8", "num_rules=16", "encoder_channels=8", "d_channels=4,4,4"};

std::vector<std::string> with(std::vector<std::string> base, const std::vector<std::string>& more) {
  base.insert(base.end(), more.begin(), more.end());
  return base;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config: defaults, file, overrides and seed env in order") {
  const auto defaults = resolve_config(Command::train, "", {}, nullptr);
  CHECK(defaults["iterations"] == 5000);
  CHECK(defaults["learning_rate"] == 0.1);
  CHECK(defaults["d_nonterminal"].is_null());

  const fs::path dir = scratch_dir("config");
  fs::create_directories(dir);
  const fs::path file = dir / "c.json";
  std::ofstream(file) << R"({"iterations": 7, "seed": 3, "batch_size": 4})";
  const auto c = resolve_config(Command::train, file.string(), {"iterations=9", "topk_mask=null"}, "11");
  CHECK(c["iterations"] == 9);
  CHECK(c["batch_size"] == 4);
  CHECK(c["seed"] == 11);
  CHECK(c["topk_mask"].is_null());
  CHECK(resolve_config(Command::train, file.string(), {}, "")["seed"] == 3);
  CHECK(resolve_config(Command::evaluate, "", {"horizons=[1, 4]"}, nullptr)["horizons"] == json::array({1, 4}));
  fs::remove_all(dir);
}

TEST_CASE("config: unknown keys, wrong types and bad values are config errors") {
  CHECK(kind_of([] { resolve_config(Command::train, "", {"iteratons=3"}, nullptr); }) == ErrorKind::config);
  CHECK(kind_of([] { resolve_config(Command::train, "", {"iterations=-3"}, nullptr); }) == ErrorKind::config);
  CHECK(kind_of([] { resolve_config(Command::train, "", {"learning_rate=fast"}, nullptr); }) == ErrorKind::config);
  CHECK(kind_of([] { resolve_config(Command::train, "", {"generator_loss=hinge"}, nullptr); }) == ErrorKind::config);
  CHECK(kind_of([] { resolve_config(Command::train, "", {"iterations"}, nullptr); }) == ErrorKind::config);
  CHECK(kind_of([] { resolve_config(Command::train, "", {}, "abc"); }) == ErrorKind::config);
  CHECK(kind_of([] { resolve_config(Command::synth, "/nonexistent/agg.json", {}, nullptr); }) == ErrorKind::io);
  CHECK(kind_of([] { parse_command("fit"); }) == ErrorKind::config);
  CHECK(parse_command("ablate") == Command::ablate);
}

TEST_CASE("run: failures become a JSON error and a nonzero exit") {
  std::string err;
  CHECK(run_quiet(Command::synth, {"preset=nope"}, &err) == 2);
  const json e = json::parse(err);
  CHECK(e["error"]["kind"] == "config");
  CHECK(e["error"]["message"].get<std::string>().find("preset") != std::string::npos);

  const fs::path dir = scratch_dir("missing");
  CHECK(run_quiet(Command::train, {"dataset=" + (dir / "none.jsonl").string(), "out_dir=" + dir.string()}, &err) == 1);
  CHECK(json::parse(err)["error"]["kind"] == "io");
  fs::remove_all(dir);
}

TEST_CASE("help lists every key of every command") {
  for (Command c : all_commands()) {
    const std::string help = describe_keys(c);
    for (const auto& k : config_keys(c)) CHECK(help.find(k.name) != std::string::npos);
    CHECK(help.find("seed") != std::string::npos);
  }
  CHECK(describe_keys(Command::train).find("non_saturating") != std::string::npos);
}

TEST_CASE("synth then evaluate an untrained model: artifacts and a large KL") {
  const fs::path dir = scratch_dir("synth_eval");
  REQUIRE(run_quiet(Command::synth, {"preset=walk_stop_run", "count=200", "length=8", "out_dir=" + (dir / "data").string()}) == 0);
  for (const char* f : {"config.json", "grammar.json", "dataset.jsonl"}) CHECK(fs::exists(dir / "data" / f));
  CHECK(json::parse(slurp(dir / "data" / "config.json"))["preset"] == "walk_stop_run");

  REQUIRE(run_quiet(Command::evaluate, with(kSmallModel, {"dataset=" + (dir / "data" / "dataset.jsonl").string(),
                                                          "grammar_file=" + (dir / "data" / "grammar.json").string(),
                                                          "items=20", "k=3", "kl_samples=500",
                                                          "out_dir=" + (dir / "eval").string()})) == 0);
  CHECK(fs::exists(dir / "eval" / "config.json"));
  const auto report = eval::EvalReport::from_json(json::parse(slurp(dir / "eval" / "report.json")));
  REQUIRE(report.scalars.size() == 1);
  CHECK(report.scalars[0].second > 1.0);
  CHECK(report.model_id == "untrained");
  fs::remove_all(dir);
}

TEST_CASE("synth: continuous and quaternion kinds") {
  const fs::path dir = scratch_dir("synth_kinds");
  REQUIRE(run_quiet(Command::synth, {"kind=quaternion", "joints=2", "count=5", "length=4", "out_dir=" + dir.string()}) == 0);
  const auto first = json::parse(slurp(dir / "dataset.jsonl").substr(0, slurp(dir / "dataset.jsonl").find('\n')));
  CHECK(first["meta"]["width"] == 8);
  REQUIRE(run_quiet(Command::synth, {"kind=continuous", "embedding_width=3", "noise_std=0.5", "count=5", "length=4",
                                     "out_dir=" + dir.string()}) == 0);
  fs::remove_all(dir);
}

TEST_CASE("train twice: byte-identical checkpoints and metrics; generate reads the run") {
  const fs::path dir = scratch_dir("determinism");
  REQUIRE(run_quiet(Command::synth, {"preset=bimodal", "count=64", "length=6", "out_dir=" + (dir / "data").string()}) == 0);
  const std::string data = "dataset=" + (dir / "data" / "dataset.jsonl").string();
  const auto train = with(kSmallTrain, {data, "iterations=12", "batch_size=4", "log_every=4", "context_length=2",
                                        "checkpoint_every=6"});
  REQUIRE(run_quiet(Command::train, with(train, {"out_dir=" + (dir / "a").string()})) == 0);
  REQUIRE(run_quiet(Command::train, with(train, {"out_dir=" + (dir / "b").string()})) == 0);
  for (const char* f : {"generator.ckpt", "discriminator.ckpt", "metrics.csv", "summary.json",
                        "checkpoints/generator_6.ckpt"}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    CHECK(!slurp(dir / "a" / f).empty());
  }
  CHECK(slurp(dir / "a" / "metrics.csv").rfind("iteration,d_loss,g_loss,d_accuracy,lr\n", 0) == 0);

  // A different seed changes the run.
  REQUIRE(run_quiet(Command::train, with(train, {"seed=1", "out_dir=" + (dir / "c").string()})) == 0);
  CHECK(slurp(dir / "a" / "generator.ckpt") != slurp(dir / "c" / "generator.ckpt"));

  REQUIRE(run_quiet(Command::train, with(train, {"trainer=grammar_only", "out_dir=" + (dir / "g1").string()})) == 0);
  REQUIRE(run_quiet(Command::train, with(train, {"trainer=grammar_only", "out_dir=" + (dir / "g2").string()})) == 0);
  CHECK(slurp(dir / "g1" / "generator.ckpt") == slurp(dir / "g2" / "generator.ckpt"));
  CHECK(slurp(dir / "g1" / "metrics.csv") == slurp(dir / "g2" / "metrics.csv"));

  REQUIRE(run_quiet(Command::generate, {"run_dir=" + (dir / "a").string(), data, "items=3", "k=2",
                                        "out_dir=" + (dir / "gen").string()}) == 0);
  std::istringstream lines(slurp(dir / "gen" / "futures.jsonl"));
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    const json rec = json::parse(line);
    CHECK(rec["tokens"].size() == 4);
    ++count;
  }
  CHECK(count == 6);
  CHECK(fs::exists(dir / "gen" / "config.json"));
  fs::remove_all(dir);
}

TEST_CASE("ablate: one paired run per seed, table and json") {
  const fs::path dir = scratch_dir("ablate");
  REQUIRE(run_quiet(Command::ablate, with(kSmallTrain, {"seeds=0", "count=40", "length=6", "iterations=4",
                                                        "grammar_only_iterations=2", "batch_size=4", "items=5", "k=2",
                                                        "kl_samples=50", "out_dir=" + dir.string()})) == 0);
  const json a = json::parse(slurp(dir / "ablation.json"));
  REQUIRE(a["arms"].size() == 3);
  CHECK(a["arms"][1]["arm"] == "no_branching");
  CHECK(a["arms"][0]["ngram_kl"].size() == 1);
  CHECK(slurp(dir / "ablation.txt").find("no branching") != std::string::npos);
  CHECK(fs::exists(dir / "config.json"));
  fs::remove_all(dir);
}

}  // TEST_SUITE
