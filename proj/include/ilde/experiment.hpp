#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "ilde/eval_harness.hpp"
#include "ilde/ilde_npg.hpp"
#include "ilde/ilde_practical.hpp"
#include "ilde/mdp.hpp"
#include "ilde/serialization.hpp"

namespace ilde {

enum class RunStatus { kSuccess = 0, kConfigError = 1, kPartialFailure = 2 };

/// Flat experiment schema: environment + demos + reward class + algorithm
/// selection + per-algorithm hyperparameters. Unknown keys are rejected.
struct ExperimentConfig {
  std::string environment = "gridworld";  // gridworld | river_swim | chain
  int env_size_a = 3;                     // rows (gridworld) or states (others)
  int env_size_b = 3;                     // cols (gridworld only)
  int horizon = 8;

  int demo_count = 1;
  double truncation_fraction = 1.0;
  double tremble_prob = 0.0;
  std::uint64_t demo_seed = 12345;

  double theta_radius = 1.0;

  std::string algorithm = "ilde_practical";  // ilde_practical | ilde_npg
  std::string variant = "full";
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::string output_dir = "results";
  int jobs = 1;

  NpgConfig npg;
  PracticalConfig practical;

  void validate() const {
    if (environment != "gridworld" && environment != "river_swim" && environment != "chain")
      throw std::invalid_argument("ExperimentConfig: unknown environment '" + environment + "'");
    if (env_size_a < 1 || env_size_b < 1 || horizon < 1)
      throw std::invalid_argument("ExperimentConfig: env_size_a/env_size_b/horizon must be >= 1");
    if (demo_count < 1) throw std::invalid_argument("ExperimentConfig: demo_count must be >= 1");
    if (!(truncation_fraction > 0.0 && truncation_fraction <= 1.0))
      throw std::invalid_argument("ExperimentConfig: truncation_fraction must be in (0, 1]");
    if (!(tremble_prob >= 0.0 && tremble_prob <= 1.0))
      throw std::invalid_argument("ExperimentConfig: tremble_prob must be in [0, 1]");
    if (theta_radius < 0.0)
      throw std::invalid_argument("ExperimentConfig: theta_radius must be >= 0");
    if (algorithm != "ilde_practical" && algorithm != "ilde_npg")
      throw std::invalid_argument("ExperimentConfig: unknown algorithm '" + algorithm + "'");
    parse_variant(variant);
    if (seeds.empty()) throw std::invalid_argument("ExperimentConfig: seeds must be non-empty");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
      throw std::invalid_argument("ExperimentConfig: duplicate seeds");
    if (jobs < 1) throw std::invalid_argument("ExperimentConfig: jobs must be >= 1");
    if (algorithm == "ilde_npg")
      npg.validate();
    else
      practical.validate();
  }
};

/// Canonical serialization; parse(emit(c)) == c.
inline std::string emit_config(const ExperimentConfig& c) {
  KvWriter w;
  w.put("type", std::string("experiment_config"));
  w.put("format_version", 1);
  w.put("environment", c.environment);
  w.put("env_size_a", c.env_size_a);
  w.put("env_size_b", c.env_size_b);
  w.put("horizon", c.horizon);
  w.put("demo_count", c.demo_count);
  w.put("truncation_fraction", c.truncation_fraction);
  w.put("tremble_prob", c.tremble_prob);
  w.put("demo_seed", static_cast<int>(c.demo_seed));
  w.put("theta_radius", c.theta_radius);
  w.put("algorithm", c.algorithm);
  w.put("variant", c.variant);
  std::vector<double> seeds;
  for (std::uint64_t s : c.seeds) seeds.push_back(static_cast<double>(s));
  w.put("seeds", seeds);
  w.put("output_dir", c.output_dir);
  w.put("jobs", c.jobs);
  w.put("npg_iterations", c.npg.iterations);
  w.put("npg_refresh_period", c.npg.refresh_period);
  w.put("npg_batch_size", c.npg.batch_size);
  w.put("npg_eta", c.npg.eta);
  w.put("npg_eta_theta", c.npg.eta_theta);
  w.put("npg_lambda", c.npg.lambda);
  w.put("npg_ratio_clip", c.npg.ratio_clip);
  w.put("bonus_lambda_ed", c.npg.bonus.lambda_ed);
  w.put("bonus_gamma_reg", c.npg.bonus.gamma_reg);
  w.put("bonus_beta", c.npg.bonus.beta_bonus);
  w.put("bonus_epsilon_f", c.npg.bonus.epsilon_f);
  w.put("bonus_delta", c.npg.bonus.delta);
  w.put("updates", c.practical.updates);
  w.put("lambda", c.practical.lambda);
  w.put("discount", c.practical.discount);
  w.put("gae_lambda", c.practical.gae_lambda);
  w.put("clip_eps", c.practical.clip_eps);
  w.put("entropy_coef", c.practical.entropy_coef);
  w.put("critic_coef", c.practical.critic_coef);
  w.put("epochs_per_batch", c.practical.epochs_per_batch);
  w.put("batch_episodes", c.practical.batch_episodes);
  w.put("minibatch_size", c.practical.minibatch_size);
  w.put("knn_k", c.practical.knn_k);
  w.put("curiosity_backend", c.practical.curiosity_backend);
  w.put("demo_model_smoothing", c.practical.demo_model_smoothing);
  w.put("gen_alpha", c.practical.gen_alpha);
  w.put("gen_epochs", c.practical.gen_epochs);
  w.put("gen_step", c.practical.gen_step);
  w.put("policy_lr", c.practical.policy_lr);
  w.put("critic_lr", c.practical.critic_lr);
  w.put("disc_lr", c.practical.disc_lr);
  w.put("disc_steps", c.practical.disc_steps);
  w.put("eval_every", c.practical.eval_every);
  return w.str();
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  KvReader r = KvReader::from_string(text);
  static const std::set<std::string> known = {
      "type",           "format_version",      "environment",      "env_size_a",
      "env_size_b",     "horizon",             "demo_count",       "truncation_fraction",
      "tremble_prob",   "demo_seed",           "theta_radius",     "algorithm",
      "variant",        "seeds",               "output_dir",       "jobs",
      "npg_iterations", "npg_refresh_period",  "npg_batch_size",   "npg_eta",
      "npg_eta_theta",  "npg_lambda",          "npg_ratio_clip",   "bonus_lambda_ed",
      "bonus_gamma_reg", "bonus_beta",         "bonus_epsilon_f",  "bonus_delta",
      "updates",        "lambda",              "discount",         "gae_lambda",
      "clip_eps",       "entropy_coef",        "critic_coef",      "epochs_per_batch",
      "batch_episodes", "minibatch_size",      "knn_k",            "curiosity_backend",
      "demo_model_smoothing", "gen_alpha",     "gen_epochs",       "gen_step",
      "policy_lr",      "critic_lr",           "disc_lr",          "disc_steps",
      "eval_every"};
  for (const auto& e : r.entries())
    if (!known.count(e.key))
      throw std::invalid_argument("parse_config: unknown key '" + e.key + "'");
  ExperimentConfig d;  // defaults
  ExperimentConfig c;
  c.environment = r.get_string("environment", d.environment);
  c.env_size_a = r.get_int("env_size_a", d.env_size_a);
  c.env_size_b = r.get_int("env_size_b", d.env_size_b);
  c.horizon = r.get_int("horizon", d.horizon);
  c.demo_count = r.get_int("demo_count", d.demo_count);
  c.truncation_fraction = r.get_double("truncation_fraction", d.truncation_fraction);
  c.tremble_prob = r.get_double("tremble_prob", d.tremble_prob);
  c.demo_seed = static_cast<std::uint64_t>(r.get_int("demo_seed", static_cast<int>(d.demo_seed)));
  c.theta_radius = r.get_double("theta_radius", d.theta_radius);
  c.algorithm = r.get_string("algorithm", d.algorithm);
  c.variant = r.get_string("variant", d.variant);
  std::vector<double> default_seeds;
  for (std::uint64_t s : d.seeds) default_seeds.push_back(static_cast<double>(s));
  c.seeds.clear();
  for (double s : r.get_vector("seeds", default_seeds))
    c.seeds.push_back(static_cast<std::uint64_t>(s));
  c.output_dir = r.get_string("output_dir", d.output_dir);
  c.jobs = r.get_int("jobs", d.jobs);
  c.npg.iterations = r.get_int("npg_iterations", d.npg.iterations);
  c.npg.refresh_period = r.get_int("npg_refresh_period", d.npg.refresh_period);
  c.npg.batch_size = r.get_int("npg_batch_size", d.npg.batch_size);
  c.npg.eta = r.get_double("npg_eta", d.npg.eta);
  c.npg.eta_theta = r.get_double("npg_eta_theta", d.npg.eta_theta);
  c.npg.lambda = r.get_double("npg_lambda", d.npg.lambda);
  c.npg.ratio_clip = r.get_double("npg_ratio_clip", d.npg.ratio_clip);
  c.npg.bonus.lambda_ed = r.get_double("bonus_lambda_ed", d.npg.bonus.lambda_ed);
  c.npg.bonus.gamma_reg = r.get_double("bonus_gamma_reg", d.npg.bonus.gamma_reg);
  c.npg.bonus.beta_bonus = r.get_double("bonus_beta", d.npg.bonus.beta_bonus);
  c.npg.bonus.epsilon_f = r.get_double("bonus_epsilon_f", d.npg.bonus.epsilon_f);
  c.npg.bonus.delta = r.get_double("bonus_delta", d.npg.bonus.delta);
  c.practical.updates = r.get_int("updates", d.practical.updates);
  c.practical.lambda = r.get_double("lambda", d.practical.lambda);
  c.practical.discount = r.get_double("discount", d.practical.discount);
  c.practical.gae_lambda = r.get_double("gae_lambda", d.practical.gae_lambda);
  c.practical.clip_eps = r.get_double("clip_eps", d.practical.clip_eps);
  c.practical.entropy_coef = r.get_double("entropy_coef", d.practical.entropy_coef);
  c.practical.critic_coef = r.get_double("critic_coef", d.practical.critic_coef);
  c.practical.epochs_per_batch = r.get_int("epochs_per_batch", d.practical.epochs_per_batch);
  c.practical.batch_episodes = r.get_int("batch_episodes", d.practical.batch_episodes);
  c.practical.minibatch_size = r.get_int("minibatch_size", d.practical.minibatch_size);
  c.practical.knn_k = r.get_int("knn_k", d.practical.knn_k);
  c.practical.curiosity_backend = r.get_string("curiosity_backend", d.practical.curiosity_backend);
  c.practical.demo_model_smoothing =
      r.get_double("demo_model_smoothing", d.practical.demo_model_smoothing);
  c.practical.gen_alpha = r.get_double("gen_alpha", d.practical.gen_alpha);
  c.practical.gen_epochs = r.get_int("gen_epochs", d.practical.gen_epochs);
  c.practical.gen_step = r.get_double("gen_step", d.practical.gen_step);
  c.practical.policy_lr = r.get_double("policy_lr", d.practical.policy_lr);
  c.practical.critic_lr = r.get_double("critic_lr", d.practical.critic_lr);
  c.practical.disc_lr = r.get_double("disc_lr", d.practical.disc_lr);
  c.practical.disc_steps = r.get_int("disc_steps", d.practical.disc_steps);
  c.practical.eval_every = r.get_int("eval_every", d.practical.eval_every);
  c.validate();
  return c;
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("parse_config: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double final_j = 0.0;
  std::optional<double> sample_eff;
  std::string trace_csv;
  std::string ledger_csv;  // NPG only
};

struct ExperimentResult {
  RunStatus status = RunStatus::kSuccess;
  std::string output_dir;
  double expert_j = 0.0;
  std::vector<SeedOutcome> outcomes;
  std::string summary_csv;
};

namespace detail {

inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

inline SeedOutcome run_one_seed(const ExperimentConfig& config, const Environment& env,
                                const DemoSet& demos, const TransitionModel& curiosity,
                                std::uint64_t seed) {
  SeedOutcome out;
  out.seed = seed;
  try {
    const EpisodicMdp& mdp = env.mdp;
    if (config.algorithm == "ilde_practical") {
      PracticalConfig pc = config.practical;
      pc.rng_seed = seed;
      auto [policy, trace] = run_ilde_practical(mdp, demos, pc, parse_variant(config.variant));
      (void)policy;
      out.trace_csv = practical_trace_csv(trace);
      std::vector<double> j_values;
      std::vector<int> steps;
      for (const auto& rec : trace.records) {
        j_values.push_back(rec.j_true);
        steps.push_back(rec.step);
      }
      out.final_j = j_values.empty() ? 0.0 : j_values.back();
      double expert_j = expected_return(mdp, env.expert, mdp.true_reward);
      if (!j_values.empty())
        out.sample_eff = sample_efficiency(j_values, steps, expert_j, pc.updates);
    } else {
      FeatureMap fm = FeatureMap::make_tabular(mdp.num_states, mdp.num_actions);
      LinearFunctionClass cls{fm,
                              static_cast<double>(mdp.horizon) *
                                  std::sqrt(static_cast<double>(fm.dim)),
                              static_cast<double>(mdp.horizon)};
      NpgConfig nc = config.npg;
      nc.rng_seed = seed;
      RewardParams reward = RewardParams::zeros(fm, config.theta_radius);
      auto [policy, trace] = run_ilde_npg(mdp, demos, nc, cls, reward, curiosity);
      (void)policy;
      SaddleSolution saddle = solve_saddle_policy(mdp, env.expert, fm, config.theta_radius,
                                                  curiosity, nc.lambda);
      std::vector<StochasticPolicy> iterates;
      for (const auto& rec : trace.records) iterates.push_back(rec.policy);
      RegretLedger ledger = compute_regret(mdp, iterates, fm, config.theta_radius, saddle.policy,
                                           curiosity, nc.lambda);
      std::vector<double> increments;
      std::vector<double> j_values;
      std::vector<int> steps;
      for (const auto& row : ledger.rows) increments.push_back(row.ell_increment_at_max_r);
      for (const auto& rec : trace.records) {
        j_values.push_back(rec.j_true);
        steps.push_back(rec.iteration);
      }
      out.trace_csv = npg_trace_csv(trace, increments);
      out.ledger_csv = regret_ledger_csv(ledger);
      out.final_j = j_values.empty() ? 0.0 : j_values.back();
      double expert_j = expected_return(mdp, env.expert, mdp.true_reward);
      if (!j_values.empty())
        out.sample_eff = sample_efficiency(j_values, steps, expert_j, nc.iterations);
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

}  // namespace detail

/// Resolve the output directory: relative paths go under $ILDE_OUTPUT_ROOT
/// when that variable is set.
inline std::filesystem::path resolve_output_dir(const std::string& output_dir) {
  std::filesystem::path p(output_dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv("ILDE_OUTPUT_ROOT")) return std::filesystem::path(root) / p;
  }
  return p;
}

/// Runs all seeds (in parallel up to config.jobs), writes per-seed trace CSVs,
/// summary.csv, and manifest.txt into the resolved output directory.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  ExperimentResult result;
  try {
    config.validate();
  } catch (const std::exception&) {
    result.status = RunStatus::kConfigError;
    throw;
  }
  Environment env = build_environment(config.environment, config.env_size_a, config.env_size_b,
                                      config.horizon, config.demo_seed);
  DemoSet demos = make_demos(env.mdp, env.expert, config.demo_count, config.truncation_fraction,
                             config.tremble_prob, config.demo_seed);
  TransitionModel curiosity =
      fit_demo_model(demos, env.mdp.num_states, env.mdp.num_actions,
                     config.practical.demo_model_smoothing);
  result.expert_j = expected_return(env.mdp, env.expert, env.mdp.true_reward);

  const int n = static_cast<int>(config.seeds.size());
  result.outcomes.resize(n);
  std::vector<std::thread> pool;
  int next = 0;
  auto worker = [&](int i) {
    result.outcomes[i] = detail::run_one_seed(config, env, demos, curiosity, config.seeds[i]);
  };
  for (int begin = 0; begin < n; begin += config.jobs) {
    int end = std::min(n, begin + config.jobs);
    for (int i = begin; i < end; ++i) pool.emplace_back(worker, i);
    for (auto& t : pool) t.join();
    pool.clear();
    next = end;
  }
  (void)next;

  // aggregate over successful seeds
  std::vector<double> finals;
  std::vector<double> effs;
  int never_count = 0, failed = 0;
  for (const SeedOutcome& o : result.outcomes) {
    if (!o.ok) {
      ++failed;
      continue;
    }
    finals.push_back(o.final_j);
    if (o.sample_eff)
      effs.push_back(*o.sample_eff);
    else
      ++never_count;
  }
  double mean = 0.0, stdev = 0.0;
  for (double f : finals) mean += f;
  if (!finals.empty()) mean /= static_cast<double>(finals.size());
  for (double f : finals) stdev += (f - mean) * (f - mean);
  if (!finals.empty()) stdev = std::sqrt(stdev / static_cast<double>(finals.size()));
  double eff_mean = std::numeric_limits<double>::quiet_NaN();
  if (!effs.empty()) {
    eff_mean = 0.0;
    for (double e : effs) eff_mean += e;
    eff_mean /= static_cast<double>(effs.size());
  }
  double improvement = std::numeric_limits<double>::quiet_NaN();
  if (!finals.empty() && result.expert_j != 0.0)
    improvement = improvement_vs_expert(finals, result.expert_j);

  std::string summary =
      "algorithm,variant,environment,tremble_prob,num_seeds,num_failed,expert_J,final_J_mean,"
      "final_J_std,sample_efficiency_mean,sample_efficiency_never_count,improvement_vs_expert\n";
  summary += config.algorithm + "," + config.variant + "," + config.environment + "," +
             format_double(config.tremble_prob) + "," + std::to_string(n) + "," +
             std::to_string(failed) + "," + format_double(result.expert_j) + "," +
             format_double(mean) + "," + format_double(stdev) + "," + format_double(eff_mean) +
             "," + std::to_string(never_count) + "," + format_double(improvement) + "\n";
  result.summary_csv = summary;
  result.status = failed == 0 ? RunStatus::kSuccess : RunStatus::kPartialFailure;

  // emit result files
  std::filesystem::path dir = resolve_output_dir(config.output_dir);
  std::filesystem::create_directories(dir);
  result.output_dir = dir.string();
  std::vector<std::string> files;
  for (const SeedOutcome& o : result.outcomes) {
    if (!o.ok) continue;
    std::string trace_name = "trace_seed" + std::to_string(o.seed) + ".csv";
    detail::write_atomic(dir / trace_name, o.trace_csv);
    files.push_back(trace_name);
    if (!o.ledger_csv.empty()) {
      std::string ledger_name = "regret_seed" + std::to_string(o.seed) + ".csv";
      detail::write_atomic(dir / ledger_name, o.ledger_csv);
      files.push_back(ledger_name);
    }
  }
  detail::write_atomic(dir / "summary.csv", summary);
  files.push_back("summary.csv");

  KvWriter manifest;
  manifest.put("type", std::string("experiment_manifest"));
  manifest.put("format_version", 1);
  // hash identifies the experiment content; destination and parallelism degree
  // do not affect results and are excluded
  ExperimentConfig hashed = config;
  hashed.output_dir.clear();
  hashed.jobs = 1;
  manifest.put("config_hash", static_cast<int>(content_hash(emit_config(hashed)) & 0x7fffffff));
  std::vector<double> seeds;
  for (std::uint64_t s : config.seeds) seeds.push_back(static_cast<double>(s));
  manifest.put("seeds", seeds);
  manifest.put("num_failed", failed);
  std::string file_list;
  for (const std::string& f : files) file_list += (file_list.empty() ? "" : ",") + f;
  manifest.put("files", file_list);
  detail::write_atomic(dir / "manifest.txt", manifest.str());
  return result;
}

}  // namespace ilde
