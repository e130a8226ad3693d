#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ilde/function_class.hpp"
#include "ilde/mdp.hpp"

namespace ilde {

/// Linear symmetric reward class: r_theta(s, a) = clip(<theta, phi(s, a)>, -1, 1)
/// with ||theta||_2 <= theta_radius. With theta_radius <= 1 and unit-norm
/// features the clip never activates, which keeps the IPM closed form exact.
struct RewardParams {
  FeatureMap feature_map;
  double theta_radius = 1.0;
  Eigen::VectorXd theta;

  static RewardParams zeros(FeatureMap fm, double radius = 1.0) {
    RewardParams r;
    r.feature_map = std::move(fm);
    r.theta_radius = radius;
    r.theta = Eigen::VectorXd::Zero(r.feature_map.dim);
    return r;
  }

  double reward(int s, int a) const {
    return std::clamp(feature_map.dot(s, a, theta), -1.0, 1.0);
  }

  std::vector<double> reward_table() const {
    std::vector<double> out(feature_map.num_states * feature_map.num_actions);
    for (int s = 0; s < feature_map.num_states; ++s)
      for (int a = 0; a < feature_map.num_actions; ++a)
        out[s * feature_map.num_actions + a] = reward(s, a);
    return out;
  }

  void validate() const {
    if (theta.size() != feature_map.dim)
      throw std::invalid_argument("RewardParams: theta dimension mismatch");
    if (theta.norm() > theta_radius + 1e-9)
      throw std::invalid_argument("RewardParams: ||theta|| exceeds radius");
  }
};

/// theta' = proj_{B(theta_radius)}(theta - step_size * grad), grad being the
/// gradient of -L_hat.
inline RewardParams pgd_reward_step(const RewardParams& reward, const Eigen::VectorXd& grad,
                                    double step_size) {
  if (!(step_size > 0.0)) throw std::invalid_argument("pgd_reward_step: step_size must be > 0");
  if (grad.size() != reward.theta.size() || !grad.allFinite())
    throw std::invalid_argument("pgd_reward_step: bad gradient");
  RewardParams out = reward;
  out.theta = reward.theta - step_size * grad;
  double norm = out.theta.norm();
  if (norm > out.theta_radius && norm > 0.0) out.theta *= out.theta_radius / norm;
  return out;
}

namespace detail {

inline double trajectory_reward_sum(const Trajectory& tau, const RewardParams& reward) {
  double acc = 0.0;
  for (const Step& st : tau.steps) acc += reward.reward(st.state, st.action);
  return acc;
}

inline Eigen::VectorXd trajectory_reward_grad(const Trajectory& tau, const RewardParams& reward) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(reward.feature_map.dim);
  for (const Step& st : tau.steps) {
    // clip(., -1, 1) has zero gradient outside the linear region
    if (std::abs(reward.feature_map.dot(st.state, st.action, reward.theta)) < 1.0)
      g += reward.feature_map.features(st.state, st.action);
  }
  return g;
}

inline double importance_ratio(const Trajectory& tau, const StochasticPolicy& eval_policy,
                               const StochasticPolicy& batch_policy, double ratio_clip) {
  double ratio = 1.0;
  for (std::size_t h = 0; h < tau.steps.size(); ++h) {
    const Step& st = tau.steps[h];
    double denom = batch_policy.prob(static_cast<int>(h), st.state, st.action);
    if (denom <= 0.0)
      throw std::invalid_argument(
          "empirical_loss_hat: batch policy assigns zero probability to an observed action");
    ratio *= eval_policy.prob(static_cast<int>(h), st.state, st.action) / denom;
  }
  return std::clamp(ratio, 0.0, ratio_clip);
}

}  // namespace detail

/// L_hat(pi^k, r): demo average return minus the per-trajectory importance
/// weighted batch average return.
inline double empirical_loss_hat(const DemoSet& demos, const std::vector<Trajectory>& batch,
                                 const StochasticPolicy& batch_policy,
                                 const StochasticPolicy& eval_policy, const RewardParams& reward,
                                 double ratio_clip) {
  if (batch.empty()) throw std::invalid_argument("empirical_loss_hat: empty batch");
  if (!(ratio_clip >= 1.0)) throw std::invalid_argument("empirical_loss_hat: ratio_clip < 1");
  double demo_term = 0.0;
  for (const Trajectory& tau : demos.trajectories) demo_term += detail::trajectory_reward_sum(tau, reward);
  demo_term /= static_cast<double>(demos.trajectories.size());
  double batch_term = 0.0;
  for (const Trajectory& tau : batch)
    batch_term += detail::importance_ratio(tau, eval_policy, batch_policy, ratio_clip) *
                  detail::trajectory_reward_sum(tau, reward);
  batch_term /= static_cast<double>(batch.size());
  return demo_term - batch_term;
}

/// Gradient of L_hat with respect to theta (importance ratios do not depend
/// on theta).
inline Eigen::VectorXd empirical_loss_grad(const DemoSet& demos,
                                           const std::vector<Trajectory>& batch,
                                           const StochasticPolicy& batch_policy,
                                           const StochasticPolicy& eval_policy,
                                           const RewardParams& reward, double ratio_clip) {
  if (batch.empty()) throw std::invalid_argument("empirical_loss_grad: empty batch");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(reward.feature_map.dim);
  for (const Trajectory& tau : demos.trajectories) g += detail::trajectory_reward_grad(tau, reward);
  g /= static_cast<double>(demos.trajectories.size());
  Eigen::VectorXd gb = Eigen::VectorXd::Zero(reward.feature_map.dim);
  for (const Trajectory& tau : batch)
    gb += detail::importance_ratio(tau, eval_policy, batch_policy, ratio_clip) *
          detail::trajectory_reward_grad(tau, reward);
  gb /= static_cast<double>(batch.size());
  return g - gb;
}

/// Logistic discriminator over phi(s, a), with an optional linear-Gaussian
/// variational bottleneck over one-hot state features. With the bottleneck
/// enabled the logistic head reads the encoder mean of the state instead of
/// phi(s, a).
struct Discriminator {
  FeatureMap feature_map;
  bool bottleneck = false;
  int latent_dim = 0;
  double beta = 1.0;  // bottleneck loss weight (Table-8 default)
  double i_c = 0.2;   // information constraint

  std::vector<double> head_weights;  // dim = feature dim (plain) or latent_dim
  double head_bias = 0.0;
  std::vector<double> enc_mean;    // [latent_dim * num_states]
  std::vector<double> enc_logstd;  // [latent_dim * num_states]

  static Discriminator plain(FeatureMap fm) {
    Discriminator d;
    d.feature_map = std::move(fm);
    d.head_weights.assign(d.feature_map.dim, 0.0);
    return d;
  }

  static Discriminator with_bottleneck(FeatureMap fm, int latent_dim, double beta = 1.0,
                                       double i_c = 0.2) {
    Discriminator d;
    d.feature_map = std::move(fm);
    d.bottleneck = true;
    d.latent_dim = latent_dim;
    d.beta = beta;
    d.i_c = i_c;
    d.head_weights.assign(latent_dim, 0.0);
    d.enc_mean.assign(latent_dim * d.feature_map.num_states, 0.0);
    d.enc_logstd.assign(latent_dim * d.feature_map.num_states, 0.0);
    return d;
  }

  double encoder_mean(int j, int s) const { return enc_mean[j * feature_map.num_states + s]; }

  // Logit of D at (s, a); bottleneck mode evaluates at the encoder mean.
  double logit(int s, int a) const {
    double z = head_bias;
    if (bottleneck) {
      for (int j = 0; j < latent_dim; ++j) z += head_weights[j] * encoder_mean(j, s);
    } else {
      for (int j = 0; j < feature_map.dim; ++j)
        z += head_weights[j] * feature_value(s, a, j);
    }
    return z;
  }

  double output(int s, int a) const { return 1.0 / (1.0 + std::exp(-logit(s, a))); }

  // KL(N(mu(s), sigma(s)^2) || N(0, I)) for the encoder at state s.
  double encoder_kl(int s) const {
    double kl = 0.0;
    for (int j = 0; j < latent_dim; ++j) {
      double mu = encoder_mean(j, s);
      double ls = enc_logstd[j * feature_map.num_states + s];
      kl += 0.5 * (mu * mu + std::exp(2.0 * ls) - 1.0 - 2.0 * ls);
    }
    return kl;
  }

  std::vector<double> params() const {
    std::vector<double> p = head_weights;
    p.push_back(head_bias);
    p.insert(p.end(), enc_mean.begin(), enc_mean.end());
    p.insert(p.end(), enc_logstd.begin(), enc_logstd.end());
    return p;
  }

  void set_params(const std::vector<double>& p) {
    std::size_t i = 0;
    for (double& w : head_weights) w = p[i++];
    head_bias = p[i++];
    for (double& v : enc_mean) v = p[i++];
    for (double& v : enc_logstd) v = p[i++];
    if (i != p.size()) throw std::invalid_argument("Discriminator: parameter size mismatch");
  }

 private:
  double feature_value(int s, int a, int j) const {
    if (feature_map.tabular) return (j == s * feature_map.num_actions + a) ? 1.0 : 0.0;
    return feature_map.matrix[(s * feature_map.num_actions + a) * feature_map.dim + j];
  }
};

struct DiscriminatorLoss {
  double value = 0.0;        // adversarial + beta * (mean KL - I_c)
  double adversarial = 0.0;  // E_demo[log D] + E_policy[log(1 - D)]
  double mean_kl = 0.0;      // over policy-batch states (0 without bottleneck)
  std::vector<double> grad;  // gradient of value, layout of Discriminator::params()
};

/// Empirical discriminator loss and its exact gradient.
inline DiscriminatorLoss discriminator_loss(const Discriminator& disc,
                                            const std::vector<std::pair<int, int>>& demo_batch,
                                            const std::vector<std::pair<int, int>>& policy_batch) {
  if (demo_batch.empty() || policy_batch.empty())
    throw std::invalid_argument("discriminator_loss: empty batch");
  const int S = disc.feature_map.num_states;
  const int head_dim = static_cast<int>(disc.head_weights.size());
  DiscriminatorLoss out;
  out.grad.assign(disc.params().size(), 0.0);
  const std::size_t enc_mean_off = head_dim + 1;
  const std::size_t enc_ls_off = enc_mean_off + disc.enc_mean.size();

  auto accumulate = [&](int s, int a, double sign, double scale) {
    // sign +1: log D term; sign -1: log(1 - D) term.
    double d = disc.output(s, a);
    out.adversarial += scale * (sign > 0 ? std::log(std::max(d, 1e-300))
                                         : std::log(std::max(1.0 - d, 1e-300)));
    double dlogit = scale * (sign > 0 ? 1.0 - d : -d);
    if (disc.bottleneck) {
      for (int j = 0; j < head_dim; ++j) {
        out.grad[j] += dlogit * disc.encoder_mean(j, s);
        out.grad[enc_mean_off + j * S + s] += dlogit * disc.head_weights[j];
      }
    } else {
      if (disc.feature_map.tabular) {
        out.grad[s * disc.feature_map.num_actions + a] += dlogit;
      } else {
        for (int j = 0; j < head_dim; ++j)
          out.grad[j] += dlogit *
                         disc.feature_map.matrix[(s * disc.feature_map.num_actions + a) *
                                                     disc.feature_map.dim + j];
      }
    }
    out.grad[head_dim] += dlogit;  // bias
  };

  const double demo_scale = 1.0 / static_cast<double>(demo_batch.size());
  for (const auto& [s, a] : demo_batch) accumulate(s, a, +1.0, demo_scale);
  const double pol_scale = 1.0 / static_cast<double>(policy_batch.size());
  for (const auto& [s, a] : policy_batch) accumulate(s, a, -1.0, pol_scale);

  out.value = out.adversarial;
  if (disc.bottleneck) {
    for (const auto& [s, a] : policy_batch) {
      (void)a;
      out.mean_kl += pol_scale * disc.encoder_kl(s);
      for (int j = 0; j < disc.latent_dim; ++j) {
        double mu = disc.encoder_mean(j, s);
        double ls = disc.enc_logstd[j * S + s];
        out.grad[enc_mean_off + j * S + s] += disc.beta * pol_scale * mu;
        out.grad[enc_ls_off + j * S + s] += disc.beta * pol_scale * (std::exp(2.0 * ls) - 1.0);
      }
    }
    out.value += disc.beta * (out.mean_kl - disc.i_c);
  }
  return out;
}

/// Gradient steps that push D toward 1 on demos and 0 on policy data while
/// keeping the bottleneck KL near its budget (ascent on the adversarial term,
/// descent on the beta-weighted KL).
inline void discriminator_update(Discriminator* disc,
                                 const std::vector<std::pair<int, int>>& demo_batch,
                                 const std::vector<std::pair<int, int>>& policy_batch,
                                 double learning_rate, int steps) {
  const int head_dim = static_cast<int>(disc->head_weights.size());
  const int S = disc->feature_map.num_states;
  const std::size_t enc_mean_off = head_dim + 1;
  for (int it = 0; it < steps; ++it) {
    DiscriminatorLoss l = discriminator_loss(*disc, demo_batch, policy_batch);
    std::vector<double> p = disc->params();
    // value = adversarial + beta (KL - I_c); training objective is
    // adversarial - beta (KL - I_c), so encoder KL contributions flip sign.
    for (std::size_t i = 0; i < p.size(); ++i) {
      double g = l.grad[i];
      p[i] += learning_rate * g;
    }
    if (disc->bottleneck) {
      // undo the KL part twice (it entered value with +beta, we want -beta)
      const double pol_scale = 2.0 * disc->beta / static_cast<double>(policy_batch.size());
      const std::size_t enc_ls_off = enc_mean_off + disc->enc_mean.size();
      for (const auto& [s, a] : policy_batch) {
        (void)a;
        for (int j = 0; j < disc->latent_dim; ++j) {
          double mu = disc->encoder_mean(j, s);
          double ls = disc->enc_logstd[j * S + s];
          p[enc_mean_off + j * S + s] -= learning_rate * pol_scale * mu;
          p[enc_ls_off + j * S + s] -= learning_rate * pol_scale * (std::exp(2.0 * ls) - 1.0);
        }
      }
    }
    disc->set_params(p);
  }
}

/// r(s, a) = -log(1 - D(.)); at the encoder mean when the bottleneck is on.
inline double discriminator_reward(const Discriminator& disc, int s, int a) {
  double d = disc.output(s, a);
  return -std::log(std::max(1.0 - d, 1e-300));
}

/// Closed-form R-distance for the linear symmetric class:
/// theta_radius * || sum_h Phi^T (d_h^a - d_h^b) ||_2.
inline double exact_ipm(const EpisodicMdp& mdp, const StochasticPolicy& policy_a,
                        const StochasticPolicy& policy_b, const FeatureMap& feature_map,
                        double theta_radius) {
  if (theta_radius < 0.0) throw std::invalid_argument("exact_ipm: class not symmetric");
  auto da = occupancy_measure(mdp, policy_a);
  auto db = occupancy_measure(mdp, policy_b);
  Eigen::VectorXd diff = Eigen::VectorXd::Zero(feature_map.dim);
  for (int h = 0; h < mdp.horizon; ++h)
    for (int s = 0; s < mdp.num_states; ++s)
      for (int a = 0; a < mdp.num_actions; ++a) {
        double w = da[h][s * mdp.num_actions + a] - db[h][s * mdp.num_actions + a];
        if (w != 0.0) diff += w * feature_map.features(s, a);
      }
  return theta_radius * diff.norm();
}

/// Occupancy-feature vector u_pi = sum_h Phi^T d_h^pi; J(pi, r_theta) =
/// <theta, u_pi> for the pre-clip linear class.
inline Eigen::VectorXd occupancy_features(const EpisodicMdp& mdp, const StochasticPolicy& policy,
                                          const FeatureMap& feature_map) {
  auto d = occupancy_measure(mdp, policy);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(feature_map.dim);
  for (int h = 0; h < mdp.horizon; ++h)
    for (int s = 0; s < mdp.num_states; ++s)
      for (int a = 0; a < mdp.num_actions; ++a) {
        double w = d[h][s * mdp.num_actions + a];
        if (w != 0.0) u += w * feature_map.features(s, a);
      }
  return u;
}

inline void write_reward_params(KvWriter& w, const RewardParams& r) {
  w.put("type", std::string("reward_params"));
  w.put("format_version", 1);
  w.put("theta_radius", r.theta_radius);
  std::vector<double> theta(r.theta.data(), r.theta.data() + r.theta.size());
  w.put("theta", theta);
  w.put("feature_dim", r.feature_map.dim);
  w.put("feature_tabular", r.feature_map.tabular ? 1 : 0);
}

inline void write_discriminator(KvWriter& w, const Discriminator& d) {
  w.put("type", std::string("discriminator"));
  w.put("format_version", 1);
  w.put("bottleneck", d.bottleneck ? 1 : 0);
  w.put("latent_dim", d.latent_dim);
  w.put("beta", d.beta);
  w.put("i_c", d.i_c);
  w.put("params", d.params());
}

}  // namespace ilde
