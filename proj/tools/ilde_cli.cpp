// Experiment runner: parse a config, sweep seeds, and emit trace/summary CSVs
// plus a manifest. See README.md for the config schema and output layout.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ilde/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"ilde: imitation learning with double exploration"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  std::string algorithm;
  std::int64_t seed_override = -1;
  int jobs_override = 0;

  CLI::App* run = app.add_subcommand("run", "run an experiment from a config file");
  run->add_option("-c,--config", config_path, "config file path")->required();
  run->add_option("-o,--output-dir", output_dir, "override the config's output directory");
  run->add_option("-s,--seed", seed_override, "run only this seed");
  run->add_option("-a,--algorithm", algorithm, "override: ilde_npg | ilde_practical");
  run->add_option("-j,--jobs", jobs_override, "parallel seed jobs");

  std::string defaults_path;
  CLI::App* emit = app.add_subcommand("emit-defaults", "write a config with all defaults");
  emit->add_option("path", defaults_path, "destination file (stdout if omitted)");

  std::string env_kind = "gridworld";
  int env_a = 3, env_b = 3, env_h = 8;
  std::string env_out;
  CLI::App* gen = app.add_subcommand("gen-env", "write an environment MDP to a file");
  gen->add_option("-k,--kind", env_kind, "gridworld | river_swim | chain");
  gen->add_option("--size-a", env_a, "rows (gridworld) or number of states");
  gen->add_option("--size-b", env_b, "cols (gridworld only)");
  gen->add_option("-H,--horizon", env_h, "episode horizon");
  gen->add_option("path", env_out, "destination file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (emit->parsed()) {
      ilde::ExperimentConfig config;
      std::string text = ilde::emit_config(config);
      if (defaults_path.empty())
        std::cout << text;
      else
        ilde::detail::write_atomic(defaults_path, text);
      return 0;
    }
    if (gen->parsed()) {
      ilde::Environment env = ilde::build_environment(env_kind, env_a, env_b, env_h, 0);
      ilde::KvWriter w;
      ilde::write_mdp(w, env.mdp);
      w.save(env_out);
      return 0;
    }
    ilde::ExperimentConfig config = ilde::parse_config(config_path);
    if (!output_dir.empty()) config.output_dir = output_dir;
    if (!algorithm.empty()) config.algorithm = algorithm;
    if (seed_override >= 0) config.seeds = {static_cast<std::uint64_t>(seed_override)};
    if (jobs_override > 0) config.jobs = jobs_override;
    ilde::ExperimentResult result = ilde::run_experiment(config);
    std::cout << result.summary_csv;
    for (const auto& o : result.outcomes)
      if (!o.ok) std::cerr << "seed " << o.seed << " failed: " << o.error << "\n";
    return static_cast<int>(result.status);
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return static_cast<int>(ilde::RunStatus::kConfigError);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ilde::RunStatus::kConfigError);
  }
}
