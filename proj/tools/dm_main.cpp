#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "dmatch/config.hpp"
#include "dmatch/experiments.hpp"

namespace {

struct SubArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  CLI::App* app = nullptr;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"likelihood-based distribution matching experiments"};
  app.require_subcommand(1);

  const struct {
    const char* name;
    const char* help;
  } commands[] = {
      {"gradcheck", "compare surrogate and direct gradients, plus finite differences"},
      {"stability", "low-noise training sweep comparing encoder gradient routes"},
      {"separation", "latent class separation across prior families and dataset sizes"},
      {"fairness", "group-aligned representations vs a raw-feature classifier"},
      {"train", "single training run with trace, checkpoint and latent dump"},
      {"eval", "restore a checkpoint and write latents plus metrics"},
      {"plotdata", "aggregate trace CSVs into mean/std/log10 columns"},
  };

  std::vector<SubArgs> args(std::size(commands));
  for (size_t i = 0; i < std::size(commands); ++i) {
    CLI::App* sub = app.add_subcommand(commands[i].name, commands[i].help);
    sub->add_option("--config", args[i].config_path, "experiment config file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", args[i].out_dir, "output directory (overrides [run] out_dir)");
    sub->add_option("--seed", args[i].seed, "replace [run] seeds with this single seed");
    args[i].app = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? dmatch::kExitOk : dmatch::kExitConfigError;
  }

  for (size_t i = 0; i < std::size(commands); ++i) {
    if (!args[i].app->parsed()) continue;
    dmatch::Config cfg;
    try {
      cfg = dmatch::Config::parse_file(args[i].config_path);
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return dmatch::kExitConfigError;
    }
    std::optional<std::uint64_t> seed;
    if (args[i].app->count("--seed") > 0) seed = args[i].seed;
    return dmatch::run_experiment(commands[i].name, std::move(cfg), args[i].out_dir, seed);
  }
  return dmatch::kExitConfigError;
}
