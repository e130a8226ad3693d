#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ilde/curiosity.hpp"
#include "ilde/imitation_reward.hpp"
#include "ilde/mdp.hpp"
#include "ilde/serialization.hpp"

namespace ilde {

/// ell(pi, r) = J(pi^E, r) - J(pi, r) - lambda * Int(pi; tau^E), all terms by
/// exact dynamic programming.
inline double saddle_loss(const EpisodicMdp& mdp, const StochasticPolicy& policy,
                          const StochasticPolicy& expert, const std::vector<double>& reward_table,
                          const TransitionModel& curiosity_model, double lambda) {
  double j_expert = expected_return(mdp, expert, reward_table);
  double j_policy = expected_return(mdp, policy, reward_table);
  double intrinsic = lambda == 0.0 ? 0.0 : expected_intrinsic(mdp, policy, curiosity_model);
  return j_expert - j_policy - lambda * intrinsic;
}

struct RegretLedgerRow {
  int t = 0;
  double ell_increment_at_max_r = 0.0;  // ell(pi^t, r_max) - ell(pi^*, r_max)
  double cumulative_regret = 0.0;       // prefix sum of the increments
};

struct RegretLedger {
  std::vector<RegretLedgerRow> rows;
  Eigen::VectorXd maximizing_theta;  // argmax over the theta-ball for the full sum
  double regret = 0.0;               // Regret(T) at the joint maximizing r
};

/// Regret(T) = max_{||theta|| <= R} sum_t [ell(pi^t, r_theta) - ell(pi^*, r_theta)].
/// For the pre-clip linear class the r-dependent part is <theta, sum_t (u_* - u_t)>,
/// so the max over the ball is R times a Euclidean norm. Valid as long as the
/// reward clip is inactive on the ball (always true for tabular features with
/// R <= 1). The ledger's increments are evaluated at the joint maximizing theta.
inline RegretLedger compute_regret(const EpisodicMdp& mdp,
                                   const std::vector<StochasticPolicy>& policies,
                                   const FeatureMap& feature_map, double theta_radius,
                                   const StochasticPolicy& saddle_policy,
                                   const TransitionModel& curiosity_model, double lambda) {
  if (policies.empty()) throw std::invalid_argument("compute_regret: empty policy sequence");
  if (theta_radius < 0.0) throw std::invalid_argument("compute_regret: negative radius");
  Eigen::VectorXd u_star = occupancy_features(mdp, saddle_policy, feature_map);
  double int_star = lambda == 0.0 ? 0.0 : expected_intrinsic(mdp, saddle_policy, curiosity_model);

  const int T = static_cast<int>(policies.size());
  std::vector<Eigen::VectorXd> u_gap(T);         // u_* - u_t
  std::vector<double> int_gap(T, 0.0);           // Int_t - Int_*
  Eigen::VectorXd u_sum = Eigen::VectorXd::Zero(feature_map.dim);
  for (int t = 0; t < T; ++t) {
    u_gap[t] = u_star - occupancy_features(mdp, policies[t], feature_map);
    u_sum += u_gap[t];
    if (lambda != 0.0)
      int_gap[t] = expected_intrinsic(mdp, policies[t], curiosity_model) - int_star;
  }

  RegretLedger ledger;
  double norm = u_sum.norm();
  ledger.maximizing_theta =
      norm > 0.0 ? Eigen::VectorXd(theta_radius / norm * u_sum) : Eigen::VectorXd::Zero(feature_map.dim);
  double cum = 0.0;
  for (int t = 0; t < T; ++t) {
    RegretLedgerRow row;
    row.t = t + 1;
    row.ell_increment_at_max_r = ledger.maximizing_theta.dot(u_gap[t]) - lambda * int_gap[t];
    cum += row.ell_increment_at_max_r;
    row.cumulative_regret = cum;
    ledger.rows.push_back(row);
  }
  ledger.regret = cum;
  return ledger;
}

/// True Regret(T') for every prefix T' = 1..T (each prefix re-maximizes r);
/// the sublinearity diagnostic. O(T) total after the per-policy terms.
inline std::vector<double> regret_curve(const EpisodicMdp& mdp,
                                        const std::vector<StochasticPolicy>& policies,
                                        const FeatureMap& feature_map, double theta_radius,
                                        const StochasticPolicy& saddle_policy,
                                        const TransitionModel& curiosity_model, double lambda) {
  if (policies.empty()) throw std::invalid_argument("regret_curve: empty policy sequence");
  Eigen::VectorXd u_star = occupancy_features(mdp, saddle_policy, feature_map);
  double int_star = lambda == 0.0 ? 0.0 : expected_intrinsic(mdp, saddle_policy, curiosity_model);
  Eigen::VectorXd u_sum = Eigen::VectorXd::Zero(feature_map.dim);
  double int_sum = 0.0;
  std::vector<double> curve;
  curve.reserve(policies.size());
  for (const StochasticPolicy& pi : policies) {
    u_sum += u_star - occupancy_features(mdp, pi, feature_map);
    if (lambda != 0.0) int_sum += expected_intrinsic(mdp, pi, curiosity_model) - int_star;
    curve.push_back(theta_radius * u_sum.norm() - lambda * int_sum);
  }
  return curve;
}

/// Worst-case loss of a single policy: max_r ell(pi, r) = R ||u_E - u_pi|| -
/// lambda Int(pi). The objective pi^* minimizes.
inline double worst_case_loss(const EpisodicMdp& mdp, const StochasticPolicy& policy,
                              const Eigen::VectorXd& u_expert, const FeatureMap& feature_map,
                              double theta_radius, const TransitionModel& curiosity_model,
                              double lambda) {
  Eigen::VectorXd gap = u_expert - occupancy_features(mdp, policy, feature_map);
  double intr = lambda == 0.0 ? 0.0 : expected_intrinsic(mdp, policy, curiosity_model);
  return theta_radius * gap.norm() - lambda * intr;
}

struct SaddleSolution {
  StochasticPolicy policy;
  double value = 0.0;     // min_pi max_r ell
  double gap = 0.0;       // final conditional-gradient duality gap
  int iterations = 0;
};

/// pi^* = argmin_pi max_r ell(pi, r), solved as a convex program over the
/// occupancy polytope: f(d) = R ||u_E - Phi^T d|| - lambda <d, L> is convex,
/// so damped best response (conditional gradient with exact DP best response
/// to the closed-form maximizing reward, step 2/(t+2)) converges; the damped
/// step doubles as averaging where the norm term is non-smooth, where exact
/// line search is known to stall. Seeded from the expert occupancy; stops when
/// the duality gap drops below tol.
inline SaddleSolution solve_saddle_policy(const EpisodicMdp& mdp, const StochasticPolicy& expert,
                                          const FeatureMap& feature_map, double theta_radius,
                                          const TransitionModel& curiosity_model, double lambda,
                                          double tol = 1e-6, int max_iters = 2000000) {
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;
  Eigen::VectorXd u_expert = occupancy_features(mdp, expert, feature_map);
  std::vector<std::vector<double>> intrinsic(H, std::vector<double>(S * A, 0.0));
  if (lambda != 0.0) intrinsic = intrinsic_reward_tables(curiosity_model, mdp);

  auto features_of = [&](const std::vector<std::vector<double>>& d) {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(feature_map.dim);
    for (int h = 0; h < H; ++h)
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
          if (d[h][s * A + a] != 0.0) u += d[h][s * A + a] * feature_map.features(s, a);
    return u;
  };

  std::vector<std::vector<double>> d = occupancy_measure(mdp, expert);
  SaddleSolution out;
  out.gap = std::numeric_limits<double>::infinity();
  for (int t = 0; t < max_iters; ++t) {
    Eigen::VectorXd u = features_of(d);
    Eigen::VectorXd gap_vec = u_expert - u;
    double norm = gap_vec.norm();
    // linear minimization of <grad f, d'>: DP on the negated gradient
    std::vector<std::vector<double>> br_reward(H, std::vector<double>(S * A, 0.0));
    for (int h = 0; h < H; ++h)
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
          double lin = norm > 0.0
                           ? theta_radius / norm * gap_vec.dot(feature_map.features(s, a))
                           : 0.0;
          br_reward[h][s * A + a] = lin + lambda * intrinsic[h][s * A + a];
        }
    StochasticPolicy br = dp_optimal_policy_per_step(mdp, br_reward);
    std::vector<std::vector<double>> d_br = occupancy_measure(mdp, br);
    double gap = 0.0;  // <grad f, d - d_br> >= f(d) - f(d*)
    for (int h = 0; h < H; ++h)
      for (int i = 0; i < S * A; ++i) gap += br_reward[h][i] * (d_br[h][i] - d[h][i]);
    out.gap = gap;
    out.iterations = t + 1;
    if (gap <= tol) break;
    double step = 2.0 / (t + 2.0);
    for (int h = 0; h < H; ++h)
      for (int i = 0; i < S * A; ++i) d[h][i] = (1.0 - step) * d[h][i] + step * d_br[h][i];
  }

  // recover a policy from the mixed occupancy; unvisited states get uniform rows
  StochasticPolicy pi = StochasticPolicy::uniform(H, S, A);
  for (int h = 0; h < H; ++h)
    for (int s = 0; s < S; ++s) {
      double mass = 0.0;
      for (int a = 0; a < A; ++a) mass += d[h][s * A + a];
      if (mass > kSimplexTol)
        for (int a = 0; a < A; ++a) pi.probs[h][s * A + a] = d[h][s * A + a] / mass;
    }
  out.policy = pi;
  out.value =
      worst_case_loss(mdp, pi, u_expert, feature_map, theta_radius, curiosity_model, lambda);
  return out;
}

/// Smallest evaluation index t with J >= expert_J at every evaluation point in
/// [t, end]; reported as t/total. nullopt means "never".
inline std::optional<double> sample_efficiency(const std::vector<double>& j_values,
                                               const std::vector<int>& eval_steps, double expert_j,
                                               int total_steps) {
  if (j_values.empty() || j_values.size() != eval_steps.size())
    throw std::invalid_argument("sample_efficiency: empty or mismatched trace");
  if (total_steps < 1) throw std::invalid_argument("sample_efficiency: total_steps must be >= 1");
  int first = -1;
  for (int i = static_cast<int>(j_values.size()) - 1; i >= 0; --i) {
    if (j_values[i] >= expert_j)
      first = i;
    else
      break;
  }
  if (first < 0) return std::nullopt;
  return static_cast<double>(eval_steps[first]) / static_cast<double>(total_steps);
}

/// Mean of final_J / expert_J over instances (Table-1 style). Rejects
/// expert_J = 0, where the ratio is undefined.
inline double improvement_vs_expert(const std::vector<double>& final_j_values, double expert_j) {
  if (final_j_values.empty()) throw std::invalid_argument("improvement_vs_expert: empty input");
  if (expert_j == 0.0)
    throw std::invalid_argument(
        "improvement_vs_expert: expert_J = 0 makes the ratio undefined; report the absolute "
        "difference instead");
  double acc = 0.0;
  for (double j : final_j_values) acc += j / expert_j;
  return acc / static_cast<double>(final_j_values.size());
}

/// Ledger CSV: t, ell_increment_at_max_r, cumulative_regret.
inline std::string regret_ledger_csv(const RegretLedger& ledger) {
  std::string out = "t,ell_increment_at_max_r,cumulative_regret\n";
  for (const auto& row : ledger.rows)
    out += std::to_string(row.t) + "," + format_double(row.ell_increment_at_max_r) + "," +
           format_double(row.cumulative_regret) + "\n";
  return out;
}

}  // namespace ilde
