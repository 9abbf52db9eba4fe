#include <optional>
#include <string>

#include <CLI11.hpp>

#include "convexctrl/scenario.hpp"

int main(int argc, char** argv) {
  CLI::App app{"convexctrl: controlled particle and mean-field dynamics on convex state spaces"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment configuration file")->required();
    cmd->add_option("--out", out_dir, "output directory (overrides the config)");
    cmd->add_option("--seed", seed, "ensemble seed override")->each([&](const std::string&) {
      seed_set = true;
    });
  };

  add_common(app.add_subcommand("simulate", "solve the state equation and export the trajectory"));
  add_common(app.add_subcommand("optimize", "run the forward-backward sweep"));
  add_common(app.add_subcommand("verify", "run the finite-difference and conservation checks"));
  add_common(app.add_subcommand("converge", "particle-count consistency study"));

  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  const convexctrl::ParseResult parsed = convexctrl::parse_config(config_path);
  if (!parsed.ok()) {
    for (const auto& e : parsed.errors) std::fprintf(stderr, "config error: %s\n", e.c_str());
    return 1;
  }
  return convexctrl::run_scenario(*parsed.config, command, out_dir,
                                  seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt);
}
