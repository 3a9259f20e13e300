#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace agg::cli {

enum class Command { synth, train, generate, evaluate, ablate };

Command parse_command(std::string_view name);
std::string_view to_string(Command c);
const std::vector<Command>& all_commands();

enum class KeyType { integer, real, boolean, string, integer_list, real_list };

struct KeySpec {
  std::string name;
  KeyType type = KeyType::string;
  // null means "taken from the model preset" or "unset"; see help.
  nlohmann::json default_value;
  std::string help;
  std::vector<std::string> choices;
};

const std::vector<KeySpec>& config_keys(Command c);

// One line per key: name, type, default and help.
std::string describe_keys(Command c);

// defaults <- config file (JSON object) <- overrides "key=value" <- AGG_SEED.
// Unknown keys, wrong types and bad choices are config errors.
nlohmann::json resolve_config(Command c, const std::string& config_path, const std::vector<std::string>& overrides,
                              const char* env_seed);

// Runs one command on a resolved config and writes its artifacts (including
// the resolved config itself) under config["out_dir"]. Human-readable output
// goes to `out`.
void execute(Command c, const nlohmann::json& config, std::ostream& out);

// resolve_config + execute. Failures are written to `err` as
// {"error": {"kind": ..., "message": ...}} and give a nonzero exit code.
int run(Command c, const std::string& config_path, const std::vector<std::string>& overrides, std::ostream& out,
        std::ostream& err);

}  // namespace agg::cli
