#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ilde/curiosity.hpp"
#include "ilde/function_class.hpp"
#include "ilde/imitation_reward.hpp"
#include "ilde/mdp.hpp"
#include "ilde/serialization.hpp"

namespace ilde {

struct NpgConfig {
  int iterations = 100;       // K
  int refresh_period = 1;     // m; m = 1 refreshes every iteration
  int batch_size = 50;        // N trajectories per refresh
  double eta = 0.05;          // policy step size
  double eta_theta = 0.05;    // reward step size
  double lambda = 0.0;        // intrinsic weight
  BonusConfig bonus;
  double ratio_clip = 10.0;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (iterations < 1 || refresh_period < 1 || batch_size < 1)
      throw std::invalid_argument("NpgConfig: K, m, N must be >= 1");
    if (!(eta > 0.0) || !(eta_theta >= 0.0))
      throw std::invalid_argument("NpgConfig: step sizes must be positive");
    if (lambda < 0.0) throw std::invalid_argument("NpgConfig: lambda must be >= 0");
    bonus.validate();
  }

  /// Theorem-style parameters scaled to a chosen K: gamma = H^2,
  /// eps_F = 1/N, eta = sqrt(log|A|)/(H sqrt(K)), m = floor(sqrt(K)/(H sqrt(log|A|))).
  static NpgConfig theorem_defaults(int K, int batch_size, const LinearFunctionClass& cls,
                                    int num_actions, std::uint64_t rng_seed = 0) {
    NpgConfig c;
    c.iterations = K;
    c.batch_size = batch_size;
    const double H = cls.output_clip;
    const double log_a = std::log(static_cast<double>(num_actions));
    c.eta = std::sqrt(log_a) / (H * std::sqrt(static_cast<double>(K)));
    c.refresh_period = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(K)) /
                                                    (H * std::sqrt(log_a))));
    c.eta_theta = 1.0 / std::sqrt(H * H * static_cast<double>(K));
    c.bonus.gamma_reg = H * H;
    c.bonus.epsilon_f = 1.0 / batch_size;
    c.bonus.delta = 0.05;
    c.bonus.lambda_ed = 1.0;
    c.bonus.beta_bonus =
        default_beta_bonus(cls, c.bonus.epsilon_f, c.bonus.delta, c.bonus.gamma_reg, batch_size);
    c.rng_seed = rng_seed;
    return c;
  }
};

struct NpgIterationRecord {
  int iteration = 0;
  bool refreshed = false;
  int k_prime = 0;       // index of the data-collecting policy
  double l_hat = 0.0;
  double mean_bonus = 0.0;
  double j_true = 0.0;   // J(pi^k, r*)
  StochasticPolicy policy;
  Eigen::VectorXd reward_theta;
};

struct NpgTrace {
  std::vector<NpgIterationRecord> records;
};

/// Optimistic policy evaluation (value iteration with least-squares fits and
/// exploration bonuses). The dataset is split into H near-even contiguous
/// blocks by trajectory index; block h contributes its step-h transitions.
/// Q_h(s, a) = clip(f_hat_h + r + lambda L_h + b_h, -H, H).
inline std::vector<std::vector<double>> ope(const EpisodicMdp& mdp, const StochasticPolicy& policy,
                                            const std::vector<Trajectory>& data,
                                            const std::vector<double>& reward_table,
                                            const std::vector<std::vector<double>>& intrinsic_tables,
                                            double lambda, const LinearFunctionClass& cls,
                                            const BonusConfig& bonus,
                                            double* mean_bonus_out = nullptr) {
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
  if (static_cast<int>(data.size()) < H)
    throw std::invalid_argument("ope: need at least H trajectories to split");
  bonus.validate();
  const int n = static_cast<int>(data.size());
  // contiguous near-even split: first (n mod H) blocks get one extra
  std::vector<int> block_begin(H + 1, 0);
  int base = n / H, extra = n % H;
  for (int h = 0; h < H; ++h) block_begin[h + 1] = block_begin[h] + base + (h < extra ? 1 : 0);

  std::vector<std::vector<double>> q(H, std::vector<double>(S * A, 0.0));
  std::vector<double> v_next(S, 0.0);
  double bonus_sum = 0.0;
  int bonus_count = 0;
  for (int h = H - 1; h >= 0; --h) {
    std::vector<std::tuple<int, int, double>> regression;
    DfAccumulator acc(cls, bonus.lambda_ed);
    for (int i = block_begin[h]; i < block_begin[h + 1]; ++i) {
      if (static_cast<int>(data[i].steps.size()) <= h) continue;
      const Step& st = data[i].steps[h];
      regression.emplace_back(st.state, st.action, v_next[st.next_state]);
      acc.add(st.state, st.action);
    }
    Eigen::VectorXd w = Eigen::VectorXd::Zero(cls.feature_map.dim);
    if (!regression.empty()) w = least_squares_fit(cls, regression, bonus.lambda_ed);
    std::vector<double> v(S, 0.0);
    for (int s = 0; s < S; ++s) {
      double vs = 0.0;
      for (int a = 0; a < A; ++a) {
        double b = bonus.beta_bonus * acc.uncertainty(s, a);
        bonus_sum += b;
        ++bonus_count;
        double val = cls.evaluate(w, s, a) + reward_table[s * A + a] +
                     lambda * intrinsic_tables[h][s * A + a] + b;
        val = std::clamp(val, -cls.output_clip, cls.output_clip);
        q[h][s * A + a] = val;
        vs += policy.prob(h, s, a) * val;
      }
      v[s] = vs;
    }
    v_next = std::move(v);
  }
  if (mean_bonus_out) *mean_bonus_out = bonus_sum / std::max(1, bonus_count);
  return q;
}

/// Multiplicative-weights update pi'_h(.|s) proportional to pi_h(.|s) exp(eta Q_h(s, .)),
/// stabilized by subtracting the per-row maximum before exponentiation.
inline StochasticPolicy mirror_descent_step(const StochasticPolicy& policy,
                                            const std::vector<std::vector<double>>& q_tables,
                                            double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("mirror_descent_step: eta must be > 0");
  StochasticPolicy out = policy;
  const int A = policy.num_actions;
  for (int h = 0; h < policy.horizon; ++h)
    for (int s = 0; s < policy.num_states; ++s) {
      const double* q = q_tables[h].data() + s * A;
      double mx = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < A; ++a) mx = std::max(mx, eta * q[a]);
      double sum = 0.0;
      double* row = out.row(h, s);
      for (int a = 0; a < A; ++a) {
        row[a] = policy.prob(h, s, a) * std::exp(eta * q[a] - mx);
        sum += row[a];
      }
      for (int a = 0; a < A; ++a) row[a] /= sum;
    }
  return out;
}

/// Algorithm "ILDE with natural policy gradient": phasic data collection,
/// projected-gradient reward updates, optimistic policy evaluation and
/// mirror-descent policy updates. Returns a uniformly sampled iterate and the
/// full per-iteration trace.
inline std::pair<StochasticPolicy, NpgTrace> run_ilde_npg(const EpisodicMdp& mdp,
                                                          const DemoSet& demos,
                                                          const NpgConfig& config,
                                                          const LinearFunctionClass& cls,
                                                          const RewardParams& reward_init,
                                                          const TransitionModel& curiosity_model) {
  config.validate();
  const int H = mdp.horizon;
  StochasticPolicy policy = StochasticPolicy::uniform(H, mdp.num_states, mdp.num_actions);
  RewardParams reward = reward_init;
  auto intrinsic_tables = intrinsic_reward_tables(curiosity_model, mdp);

  NpgTrace trace;
  trace.records.reserve(config.iterations);
  std::vector<Trajectory> data;
  std::vector<StochasticPolicy> iterates;  // pi^1 .. pi^K
  StochasticPolicy data_policy = policy;
  int k_prime = 1;

  for (int k = 1; k <= config.iterations; ++k) {
    iterates.push_back(policy);
    // m = 1 degenerates "k mod m = 1" to always-refresh
    bool refresh = (config.refresh_period == 1) || (k % config.refresh_period == 1);
    if (refresh) {
      Rng pick = derive_rng(config.rng_seed, "k_prime", static_cast<std::uint64_t>(k));
      int lo = std::max(1, k - config.refresh_period + 1);
      k_prime = lo + pick.uniform_int(k - lo + 1);
      data_policy = iterates[k_prime - 1];
      std::uint64_t stream = mix_u64(config.rng_seed ^ mix_u64(static_cast<std::uint64_t>(k)));
      data = rollout(mdp, data_policy, stream, config.batch_size);
    }
    // reward carries over between refreshes and is PGD-updated every iteration
    double l_hat = empirical_loss_hat(demos, data, data_policy, policy, reward, config.ratio_clip);
    if (config.eta_theta > 0.0) {
      Eigen::VectorXd grad =
          -empirical_loss_grad(demos, data, data_policy, policy, reward, config.ratio_clip);
      reward = pgd_reward_step(reward, grad, config.eta_theta);
    }
    double mean_bonus = 0.0;
    auto q = ope(mdp, policy, data, reward.reward_table(), intrinsic_tables, config.lambda, cls,
                 config.bonus, &mean_bonus);

    NpgIterationRecord rec;
    rec.iteration = k;
    rec.refreshed = refresh;
    rec.k_prime = k_prime;
    rec.l_hat = l_hat;
    rec.mean_bonus = mean_bonus;
    rec.j_true = expected_return(mdp, policy, mdp.true_reward);
    rec.policy = policy;
    rec.reward_theta = reward.theta;
    trace.records.push_back(std::move(rec));

    policy = mirror_descent_step(policy, q, config.eta);
  }
  Rng out_pick = derive_rng(config.rng_seed, "pi_out");
  StochasticPolicy pi_out = iterates[out_pick.uniform_int(config.iterations)];
  return {std::move(pi_out), std::move(trace)};
}

/// Row-per-iteration CSV: iteration, refresh_flag, k_prime, L_hat, mean_bonus,
/// J_true, regret_increment.
inline std::string npg_trace_csv(const NpgTrace& trace,
                                 const std::vector<double>& regret_increments) {
  std::string out = "iteration,refresh_flag,k_prime,L_hat,mean_bonus,J_true,regret_increment\n";
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    const auto& r = trace.records[i];
    double inc = i < regret_increments.size() ? regret_increments[i] : 0.0;
    out += std::to_string(r.iteration) + "," + (r.refreshed ? "1" : "0") + "," +
           std::to_string(r.k_prime) + "," + format_double(r.l_hat) + "," +
           format_double(r.mean_bonus) + "," + format_double(r.j_true) + "," +
           format_double(inc) + "\n";
  }
  return out;
}

}  // namespace ilde
