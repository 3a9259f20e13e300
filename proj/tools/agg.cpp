#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "agg/cli/run.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Adversarial generative grammar: synthesize data, train, generate, evaluate, ablate."};
  app.require_subcommand(1);

  struct Args {
    std::string config;
    std::vector<std::string> overrides;
  };
  std::vector<Args> args(agg::cli::all_commands().size());
  for (std::size_t i = 0; i < args.size(); ++i) {
    const agg::cli::Command c = agg::cli::all_commands()[i];
    CLI::App* sub = app.add_subcommand(std::string(agg::cli::to_string(c)));
    sub->add_option("--config", args[i].config, "JSON config file");
    sub->add_option("--set", args[i].overrides, "override one key (key=value), repeatable")->allow_extra_args(false);
    sub->footer(agg::cli::describe_keys(c) + "\nAGG_SEED in the environment overrides seed.");
  }
  CLI11_PARSE(app, argc, argv);

  for (std::size_t i = 0; i < args.size(); ++i) {
    const agg::cli::Command c = agg::cli::all_commands()[i];
    if (app.got_subcommand(std::string(agg::cli::to_string(c)))) {
      return agg::cli::run(c, args[i].config, args[i].overrides, std::cout, std::cerr);
    }
  }
  return 1;
}
