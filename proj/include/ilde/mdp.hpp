#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "ilde/rng.hpp"
#include "ilde/serialization.hpp"

namespace ilde {

inline constexpr double kSimplexTol = 1e-12;

/// Finite episodic MDP with per-step transition kernels, a true reward table
/// in [-1, 1], and an initial state distribution.
struct EpisodicMdp {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;
  // transitions[h][(s * num_actions + a) * num_states + s'], h in [0, horizon)
  std::vector<std::vector<double>> transitions;
  std::vector<double> true_reward;  // [s * num_actions + a]
  std::vector<double> initial_dist;

  int sa(int s, int a) const { return s * num_actions + a; }

  double p(int h, int s, int a, int s_next) const {
    return transitions[h][(s * num_actions + a) * num_states + s_next];
  }
  const double* row(int h, int s, int a) const {
    return transitions[h].data() + (s * num_actions + a) * num_states;
  }
  double reward(int s, int a) const { return true_reward[sa(s, a)]; }

  void validate() const {
    if (num_states < 1 || num_actions < 1 || horizon < 1)
      throw std::invalid_argument("EpisodicMdp: dimensions must be positive");
    if (static_cast<int>(transitions.size()) != horizon)
      throw std::invalid_argument("EpisodicMdp: need one transition kernel per step");
    for (int h = 0; h < horizon; ++h) {
      if (static_cast<int>(transitions[h].size()) != num_states * num_actions * num_states)
        throw std::invalid_argument("EpisodicMdp: transition tensor size mismatch");
      for (int s = 0; s < num_states; ++s)
        for (int a = 0; a < num_actions; ++a) {
          double sum = 0.0;
          for (int s2 = 0; s2 < num_states; ++s2) {
            double v = p(h, s, a, s2);
            if (v < 0.0) throw std::invalid_argument("EpisodicMdp: negative transition entry");
            sum += v;
          }
          if (std::abs(sum - 1.0) > kSimplexTol)
            throw std::invalid_argument("EpisodicMdp: transition row does not sum to 1");
        }
    }
    if (static_cast<int>(true_reward.size()) != num_states * num_actions)
      throw std::invalid_argument("EpisodicMdp: reward table size mismatch");
    for (double r : true_reward)
      if (std::abs(r) > 1.0) throw std::invalid_argument("EpisodicMdp: |r*| must be <= 1");
    if (static_cast<int>(initial_dist.size()) != num_states)
      throw std::invalid_argument("EpisodicMdp: initial distribution size mismatch");
    double rho_sum = std::accumulate(initial_dist.begin(), initial_dist.end(), 0.0);
    if (std::abs(rho_sum - 1.0) > kSimplexTol)
      throw std::invalid_argument("EpisodicMdp: initial distribution does not sum to 1");
  }
};

/// Per-step stochastic policy pi_h(a|s).
struct StochasticPolicy {
  int horizon = 0;
  int num_states = 0;
  int num_actions = 0;
  std::vector<std::vector<double>> probs;  // [h][s * num_actions + a]

  static StochasticPolicy uniform(int horizon, int num_states, int num_actions) {
    StochasticPolicy pi;
    pi.horizon = horizon;
    pi.num_states = num_states;
    pi.num_actions = num_actions;
    pi.probs.assign(horizon,
                    std::vector<double>(num_states * num_actions, 1.0 / num_actions));
    return pi;
  }

  double prob(int h, int s, int a) const { return probs[h][s * num_actions + a]; }
  const double* row(int h, int s) const { return probs[h].data() + s * num_actions; }
  double* row(int h, int s) { return probs[h].data() + s * num_actions; }

  void validate() const {
    if (static_cast<int>(probs.size()) != horizon)
      throw std::invalid_argument("StochasticPolicy: per-step table count mismatch");
    for (int h = 0; h < horizon; ++h) {
      if (static_cast<int>(probs[h].size()) != num_states * num_actions)
        throw std::invalid_argument("StochasticPolicy: row size mismatch");
      for (int s = 0; s < num_states; ++s) {
        double sum = 0.0;
        for (int a = 0; a < num_actions; ++a) {
          double v = prob(h, s, a);
          if (v < 0.0) throw std::invalid_argument("StochasticPolicy: negative probability");
          sum += v;
        }
        if (std::abs(sum - 1.0) > kSimplexTol)
          throw std::invalid_argument("StochasticPolicy: row does not sum to 1");
      }
    }
  }
};

struct Step {
  int state = 0;
  int action = 0;
  int next_state = 0;
};

struct Trajectory {
  std::vector<Step> steps;
};

/// Expert demonstrations: possibly truncated and tremble-corrupted rollouts.
struct DemoSet {
  std::vector<Trajectory> trajectories;
  double truncation_fraction = 1.0;
  double tremble_prob = 0.0;
};

/// V[h][s] for h in [0, H] (V[H] == 0) and Q[h][s*A+a] for h in [0, H).
struct ValueTables {
  std::vector<std::vector<double>> v;
  std::vector<std::vector<double>> q;
};

namespace detail {
inline void check_dims(const EpisodicMdp& mdp, const StochasticPolicy& policy) {
  if (policy.horizon != mdp.horizon || policy.num_states != mdp.num_states ||
      policy.num_actions != mdp.num_actions)
    throw std::invalid_argument("mdp/policy dimension mismatch");
}
}  // namespace detail

/// Exact Bellman evaluation with a step-dependent reward table
/// reward[h][s*A+a]: Q_h = r_h + P_h V_{h+1}, V_h = <Q_h(s,.), pi_h(.|s)>.
inline ValueTables exact_value_per_step(const EpisodicMdp& mdp, const StochasticPolicy& policy,
                                        const std::vector<std::vector<double>>& reward) {
  detail::check_dims(mdp, policy);
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
  if (static_cast<int>(reward.size()) != H)
    throw std::invalid_argument("exact_value: need one reward table per step");
  for (const auto& rh : reward) {
    if (static_cast<int>(rh.size()) != S * A)
      throw std::invalid_argument("exact_value: reward table size mismatch");
    for (double r : rh)
      if (!std::isfinite(r)) throw std::invalid_argument("exact_value: non-finite reward");
  }
  ValueTables out;
  out.v.assign(H + 1, std::vector<double>(S, 0.0));
  out.q.assign(H, std::vector<double>(S * A, 0.0));
  for (int h = H - 1; h >= 0; --h) {
    for (int s = 0; s < S; ++s) {
      double vs = 0.0;
      for (int a = 0; a < A; ++a) {
        double q = reward[h][s * A + a];
        const double* pr = mdp.row(h, s, a);
        for (int s2 = 0; s2 < S; ++s2) q += pr[s2] * out.v[h + 1][s2];
        out.q[h][s * A + a] = q;
        vs += policy.prob(h, s, a) * q;
      }
      out.v[h][s] = vs;
    }
  }
  return out;
}

/// Exact Bellman evaluation with a stationary reward table reward[s*A+a].
inline ValueTables exact_value(const EpisodicMdp& mdp, const StochasticPolicy& policy,
                               const std::vector<double>& reward) {
  return exact_value_per_step(mdp, policy,
                              std::vector<std::vector<double>>(mdp.horizon, reward));
}

/// J(pi, r) = E_{s ~ rho} V_1(s).
inline double expected_return(const EpisodicMdp& mdp, const StochasticPolicy& policy,
                              const std::vector<double>& reward) {
  ValueTables vt = exact_value(mdp, policy, reward);
  double j = 0.0;
  for (int s = 0; s < mdp.num_states; ++s) j += mdp.initial_dist[s] * vt.v[0][s];
  return j;
}

inline double expected_return_per_step(const EpisodicMdp& mdp, const StochasticPolicy& policy,
                                       const std::vector<std::vector<double>>& reward) {
  ValueTables vt = exact_value_per_step(mdp, policy, reward);
  double j = 0.0;
  for (int s = 0; s < mdp.num_states; ++s) j += mdp.initial_dist[s] * vt.v[0][s];
  return j;
}

/// State-action occupancy d_h(s, a) by forward recursion; each d_h sums to 1.
inline std::vector<std::vector<double>> occupancy_measure(const EpisodicMdp& mdp,
                                                          const StochasticPolicy& policy) {
  detail::check_dims(mdp, policy);
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
  std::vector<std::vector<double>> d(H, std::vector<double>(S * A, 0.0));
  std::vector<double> state_dist = mdp.initial_dist;
  for (int h = 0; h < H; ++h) {
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) d[h][s * A + a] = state_dist[s] * policy.prob(h, s, a);
    if (h + 1 < H) {
      std::vector<double> next(S, 0.0);
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
          double mass = d[h][s * A + a];
          if (mass == 0.0) continue;
          const double* pr = mdp.row(h, s, a);
          for (int s2 = 0; s2 < S; ++s2) next[s2] += mass * pr[s2];
        }
      state_dist = std::move(next);
    }
  }
  return d;
}

/// count independent trajectories of the policy; pure function of (inputs, seed).
inline std::vector<Trajectory> rollout(const EpisodicMdp& mdp, const StochasticPolicy& policy,
                                       std::uint64_t rng_seed, int count) {
  detail::check_dims(mdp, policy);
  if (count < 1) throw std::invalid_argument("rollout: count must be >= 1");
  std::vector<Trajectory> out(count);
  for (int i = 0; i < count; ++i) {
    Rng rng = derive_rng(rng_seed, "rollout", static_cast<std::uint64_t>(i));
    Trajectory& tau = out[i];
    tau.steps.resize(mdp.horizon);
    int s = rng.categorical(mdp.initial_dist);
    for (int h = 0; h < mdp.horizon; ++h) {
      int a = rng.categorical(policy.row(h, s), mdp.num_actions);
      int s2 = rng.categorical(mdp.row(h, s, a), mdp.num_states);
      tau.steps[h] = {s, a, s2};
      s = s2;
    }
  }
  return out;
}

/// Expert demonstrations: with probability tremble_prob the executed (and
/// recorded) action is replaced by a uniformly random one; each trajectory
/// keeps only the first ceil(truncation_fraction * H) steps.
inline DemoSet make_demos(const EpisodicMdp& mdp, const StochasticPolicy& expert, int n,
                          double truncation_fraction, double tremble_prob,
                          std::uint64_t rng_seed) {
  detail::check_dims(mdp, expert);
  if (n < 1) throw std::invalid_argument("make_demos: n must be >= 1");
  if (!(truncation_fraction > 0.0 && truncation_fraction <= 1.0))
    throw std::invalid_argument("make_demos: truncation_fraction must be in (0, 1]");
  if (!(tremble_prob >= 0.0 && tremble_prob < 1.0))
    throw std::invalid_argument("make_demos: tremble_prob must be in [0, 1)");
  const int keep = static_cast<int>(std::ceil(truncation_fraction * mdp.horizon));
  DemoSet demos;
  demos.truncation_fraction = truncation_fraction;
  demos.tremble_prob = tremble_prob;
  demos.trajectories.resize(n);
  for (int j = 0; j < n; ++j) {
    Rng rng = derive_rng(rng_seed, "demo", static_cast<std::uint64_t>(j));
    Trajectory& tau = demos.trajectories[j];
    int s = rng.categorical(mdp.initial_dist);
    for (int h = 0; h < mdp.horizon; ++h) {
      int a = rng.categorical(expert.row(h, s), mdp.num_actions);
      if (tremble_prob > 0.0 && rng.uniform() < tremble_prob) a = rng.uniform_int(mdp.num_actions);
      int s2 = rng.categorical(mdp.row(h, s, a), mdp.num_states);
      if (h < keep) tau.steps.push_back({s, a, s2});
      s = s2;
    }
  }
  return demos;
}

/// Greedy deterministic policy from exact dynamic programming on a reward
/// table; ties broken by lowest action index.
inline StochasticPolicy dp_optimal_policy(const EpisodicMdp& mdp,
                                          const std::vector<double>& reward) {
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
  StochasticPolicy pi;
  pi.horizon = H;
  pi.num_states = S;
  pi.num_actions = A;
  pi.probs.assign(H, std::vector<double>(S * A, 0.0));
  std::vector<double> v_next(S, 0.0);
  for (int h = H - 1; h >= 0; --h) {
    std::vector<double> v(S, 0.0);
    for (int s = 0; s < S; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      int best_a = 0;
      for (int a = 0; a < A; ++a) {
        double q = reward[s * A + a];
        const double* pr = mdp.row(h, s, a);
        for (int s2 = 0; s2 < S; ++s2) q += pr[s2] * v_next[s2];
        if (q > best + 1e-15) {
          best = q;
          best_a = a;
        }
      }
      v[s] = best;
      pi.probs[h][s * A + best_a] = 1.0;
    }
    v_next = std::move(v);
  }
  return pi;
}

/// Greedy backward induction with a per-step reward table reward[h][s*A+a];
/// ties resolved toward the lowest action index.
inline StochasticPolicy dp_optimal_policy_per_step(const EpisodicMdp& mdp,
                                                   const std::vector<std::vector<double>>& reward) {
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
  if (static_cast<int>(reward.size()) != H)
    throw std::invalid_argument("dp_optimal_policy_per_step: need one reward table per step");
  StochasticPolicy pi;
  pi.horizon = H;
  pi.num_states = S;
  pi.num_actions = A;
  pi.probs.assign(H, std::vector<double>(S * A, 0.0));
  std::vector<double> v_next(S, 0.0);
  for (int h = H - 1; h >= 0; --h) {
    std::vector<double> v(S, 0.0);
    for (int s = 0; s < S; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      int best_a = 0;
      for (int a = 0; a < A; ++a) {
        double q = reward[h][s * A + a];
        const double* pr = mdp.row(h, s, a);
        for (int s2 = 0; s2 < S; ++s2) q += pr[s2] * v_next[s2];
        if (q > best + 1e-15) {
          best = q;
          best_a = a;
        }
      }
      v[s] = best;
      pi.probs[h][s * A + best_a] = 1.0;
    }
    v_next = std::move(v);
  }
  return pi;
}

/// Mix a policy with the uniform policy: (1 - eps) * pi + eps * uniform.
inline StochasticPolicy epsilon_greedy(const StochasticPolicy& pi, double eps) {
  StochasticPolicy out = pi;
  const double u = eps / pi.num_actions;
  for (auto& table : out.probs)
    for (double& p : table) p = (1.0 - eps) * p + u;
  return out;
}

struct Environment {
  EpisodicMdp mdp;
  StochasticPolicy expert;  // DP optimum softened with epsilon-greedy
};

namespace envs {

inline constexpr double kExpertEpsilon = 0.1;

/// Deterministic grid with a fixed start in the corner. The true reward is
/// -1 for any action taken in the start cell and +1 elsewhere, so every
/// policy that leaves the start immediately and never returns is optimal.
/// Novelty-seeking behavior is therefore value-aligned, while the softened
/// expert keeps trembling back into the penalized cell.
inline Environment gridworld(int rows, int cols, int horizon, std::uint64_t /*rng_seed*/ = 0) {
  if (rows < 2 || cols < 2 || horizon < 1)
    throw std::invalid_argument("gridworld: need at least a 2x2 grid and horizon >= 1");
  const int S = rows * cols, A = 4;  // up, down, left, right
  EpisodicMdp mdp;
  mdp.num_states = S;
  mdp.num_actions = A;
  mdp.horizon = horizon;
  std::vector<double> kernel(S * A * S, 0.0);
  const int dr[4] = {-1, 1, 0, 0};
  const int dc[4] = {0, 0, -1, 1};
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      int s = r * cols + c;
      for (int a = 0; a < A; ++a) {
        int nr = r + dr[a], nc = c + dc[a];
        int s2 = (nr < 0 || nr >= rows || nc < 0 || nc >= cols) ? s : nr * cols + nc;
        kernel[(s * A + a) * S + s2] = 1.0;
      }
    }
  mdp.transitions.assign(horizon, kernel);
  mdp.true_reward.assign(S * A, 1.0);
  for (int a = 0; a < A; ++a) mdp.true_reward[0 * A + a] = -1.0;  // start cell is (0, 0)
  mdp.initial_dist.assign(S, 0.0);
  mdp.initial_dist[0] = 1.0;
  mdp.validate();
  Environment env{mdp, epsilon_greedy(dp_optimal_policy(mdp, mdp.true_reward), kExpertEpsilon)};
  return env;
}

/// Classic river-swim chain: swimming right against the current succeeds
/// with probability 0.6, drifting left is free. Small reward for loitering
/// at the left bank, large reward for holding the right bank.
inline Environment river_swim(int num_states, int horizon, std::uint64_t /*rng_seed*/ = 0) {
  if (num_states < 2 || horizon < 1)
    throw std::invalid_argument("river_swim: need >= 2 states and horizon >= 1");
  const int S = num_states, A = 2;  // 0 = left, 1 = right
  EpisodicMdp mdp;
  mdp.num_states = S;
  mdp.num_actions = A;
  mdp.horizon = horizon;
  std::vector<double> kernel(S * A * S, 0.0);
  auto at = [&](int s, int a, int s2) -> double& { return kernel[(s * A + a) * S + s2]; };
  for (int s = 0; s < S; ++s) {
    at(s, 0, std::max(0, s - 1)) = 1.0;
    if (s == S - 1) {
      at(s, 1, s) = 0.6;
      at(s, 1, s - 1) = 0.4;
    } else if (s == 0) {
      at(s, 1, s + 1) = 0.6;
      at(s, 1, s) = 0.4;
    } else {
      at(s, 1, s + 1) = 0.6;
      at(s, 1, s) = 0.35;
      at(s, 1, s - 1) = 0.05;
    }
  }
  mdp.transitions.assign(horizon, kernel);
  mdp.true_reward.assign(S * A, 0.0);
  mdp.true_reward[0 * A + 0] = 0.05;
  mdp.true_reward[(S - 1) * A + 1] = 1.0;
  mdp.initial_dist.assign(S, 0.0);
  mdp.initial_dist[0] = 1.0;
  mdp.validate();
  return {mdp, epsilon_greedy(dp_optimal_policy(mdp, mdp.true_reward), kExpertEpsilon)};
}

/// Deterministic chain: action 0 stays, action 1 advances (absorbing at the
/// end); reward 1 in the last state.
inline Environment chain(int num_states, int horizon, std::uint64_t /*rng_seed*/ = 0) {
  if (num_states < 2 || horizon < 1)
    throw std::invalid_argument("chain: need >= 2 states and horizon >= 1");
  const int S = num_states, A = 2;
  EpisodicMdp mdp;
  mdp.num_states = S;
  mdp.num_actions = A;
  mdp.horizon = horizon;
  std::vector<double> kernel(S * A * S, 0.0);
  for (int s = 0; s < S; ++s) {
    kernel[(s * A + 0) * S + s] = 1.0;
    kernel[(s * A + 1) * S + std::min(S - 1, s + 1)] = 1.0;
  }
  mdp.transitions.assign(horizon, kernel);
  mdp.true_reward.assign(S * A, 0.0);
  mdp.true_reward[(S - 1) * A + 0] = 1.0;
  mdp.true_reward[(S - 1) * A + 1] = 1.0;
  mdp.initial_dist.assign(S, 0.0);
  mdp.initial_dist[0] = 1.0;
  mdp.validate();
  return {mdp, epsilon_greedy(dp_optimal_policy(mdp, mdp.true_reward), kExpertEpsilon)};
}

}  // namespace envs

/// Dispatch on environment kind; unknown kinds are rejected.
inline Environment build_environment(const std::string& kind, int size_a, int size_b, int horizon,
                                     std::uint64_t rng_seed = 0) {
  if (kind == "gridworld") return envs::gridworld(size_a, size_b, horizon, rng_seed);
  if (kind == "river_swim") return envs::river_swim(size_a, horizon, rng_seed);
  if (kind == "chain") return envs::chain(size_a, horizon, rng_seed);
  throw std::invalid_argument("build_environment: unknown kind '" + kind + "'");
}

// ---- serialization (text key-value schema) ----

inline void write_mdp(KvWriter& w, const EpisodicMdp& mdp) {
  w.put("type", std::string("episodic_mdp"));
  w.put("format_version", 1);
  w.put("num_states", mdp.num_states);
  w.put("num_actions", mdp.num_actions);
  w.put("horizon", mdp.horizon);
  for (int h = 0; h < mdp.horizon; ++h)
    w.put("transitions_h" + std::to_string(h), mdp.transitions[h]);
  w.put("true_reward", mdp.true_reward);
  w.put("initial_dist", mdp.initial_dist);
}

inline EpisodicMdp read_mdp(const KvReader& r) {
  if (r.get_string("type") != "episodic_mdp")
    throw std::runtime_error("read_mdp: wrong record type");
  EpisodicMdp mdp;
  mdp.num_states = static_cast<int>(r.get_int("num_states"));
  mdp.num_actions = static_cast<int>(r.get_int("num_actions"));
  mdp.horizon = static_cast<int>(r.get_int("horizon"));
  mdp.transitions.resize(mdp.horizon);
  for (int h = 0; h < mdp.horizon; ++h)
    mdp.transitions[h] = r.get_vector("transitions_h" + std::to_string(h));
  mdp.true_reward = r.get_vector("true_reward");
  mdp.initial_dist = r.get_vector("initial_dist");
  mdp.validate();
  return mdp;
}

inline void write_demos(KvWriter& w, const DemoSet& demos) {
  w.put("type", std::string("demo_set"));
  w.put("format_version", 1);
  w.put("num_trajectories", static_cast<int>(demos.trajectories.size()));
  w.put("truncation_fraction", demos.truncation_fraction);
  w.put("tremble_prob", demos.tremble_prob);
  for (std::size_t j = 0; j < demos.trajectories.size(); ++j) {
    std::vector<double> flat;
    for (const Step& st : demos.trajectories[j].steps) {
      flat.push_back(st.state);
      flat.push_back(st.action);
      flat.push_back(st.next_state);
    }
    w.put("trajectory_" + std::to_string(j), flat);
  }
}

inline DemoSet read_demos(const KvReader& r) {
  if (r.get_string("type") != "demo_set") throw std::runtime_error("read_demos: wrong record type");
  DemoSet demos;
  demos.truncation_fraction = r.get_double("truncation_fraction");
  demos.tremble_prob = r.get_double("tremble_prob");
  int n = static_cast<int>(r.get_int("num_trajectories"));
  demos.trajectories.resize(n);
  for (int j = 0; j < n; ++j) {
    std::vector<double> flat = r.get_vector("trajectory_" + std::to_string(j));
    if (flat.size() % 3 != 0) throw std::runtime_error("read_demos: malformed trajectory");
    for (std::size_t i = 0; i < flat.size(); i += 3)
      demos.trajectories[j].steps.push_back({static_cast<int>(flat[i]),
                                             static_cast<int>(flat[i + 1]),
                                             static_cast<int>(flat[i + 2])});
  }
  return demos;
}

}  // namespace ilde
