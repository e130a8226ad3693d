#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ilde/mdp.hpp"
#include "ilde/rng.hpp"

namespace ilde {

/// Count-based transition model fitted on demonstrations. Step-stationary by
/// default; per-step kernels optional.
struct TransitionModel {
  int num_states = 0;
  int num_actions = 0;
  bool per_step = false;
  double smoothing = 0.0;
  // kernels[k][(s*A+a)*S + s'], k = 0 (stationary) or k = h (per-step)
  std::vector<std::vector<double>> kernels;
  std::vector<std::vector<double>> visit_counts;  // [k][s*A+a]

  const double* row(int h, int s, int a) const {
    const auto& k = kernels[per_step ? h : 0];
    return k.data() + (s * num_actions + a) * num_states;
  }
  double count(int h, int s, int a) const {
    return visit_counts[per_step ? h : 0][s * num_actions + a];
  }
};

/// P_hat(s'|s,a) = (count(s,a,s') + smoothing) / (count(s,a) + smoothing*|S|);
/// unvisited rows fall back to uniform.
inline TransitionModel fit_demo_model(const DemoSet& demos, int num_states, int num_actions,
                                      double smoothing, bool per_step = false, int horizon = 0) {
  if (demos.trajectories.empty()) throw std::invalid_argument("fit_demo_model: no demos");
  if (per_step && horizon < 1)
    throw std::invalid_argument("fit_demo_model: per_step model needs horizon");
  const int S = num_states, A = num_actions;
  const int slots = per_step ? horizon : 1;
  TransitionModel model;
  model.num_states = S;
  model.num_actions = A;
  model.per_step = per_step;
  model.smoothing = smoothing;
  std::vector<std::vector<double>> triple_counts(slots, std::vector<double>(S * A * S, 0.0));
  model.visit_counts.assign(slots, std::vector<double>(S * A, 0.0));
  for (const Trajectory& tau : demos.trajectories)
    for (std::size_t h = 0; h < tau.steps.size(); ++h) {
      const Step& st = tau.steps[h];
      int k = per_step ? static_cast<int>(h) : 0;
      triple_counts[k][(st.state * A + st.action) * S + st.next_state] += 1.0;
      model.visit_counts[k][st.state * A + st.action] += 1.0;
    }
  model.kernels.assign(slots, std::vector<double>(S * A * S, 0.0));
  for (int k = 0; k < slots; ++k)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        double denom = model.visit_counts[k][s * A + a] + smoothing * S;
        for (int s2 = 0; s2 < S; ++s2) {
          double num = triple_counts[k][(s * A + a) * S + s2] + smoothing;
          model.kernels[k][(s * A + a) * S + s2] = denom > 0.0 ? num / denom : 1.0 / S;
        }
      }
  return model;
}

enum class IntrinsicMode { kExact, kSampled };

/// L_{tau^E, h}(s, a): expected squared distance between one-hot encodings of
/// the model's predicted next state and the true next state. Exact mode uses
/// 2 * (1 - <P_hat, P>); sampled mode draws both and returns 0 or 2.
inline double intrinsic_reward(const TransitionModel& model, const EpisodicMdp& mdp, int s, int a,
                               int h, IntrinsicMode mode = IntrinsicMode::kExact,
                               Rng* rng = nullptr) {
  if (s < 0 || s >= mdp.num_states || a < 0 || a >= mdp.num_actions || h < 0 || h >= mdp.horizon)
    throw std::invalid_argument("intrinsic_reward: index out of range");
  const double* model_row = model.row(h, s, a);
  const double* true_row = mdp.row(h, s, a);
  if (mode == IntrinsicMode::kExact) {
    double inner = 0.0;
    for (int s2 = 0; s2 < mdp.num_states; ++s2) inner += model_row[s2] * true_row[s2];
    return 2.0 * (1.0 - inner);
  }
  if (!rng) throw std::invalid_argument("intrinsic_reward: sampled mode needs an rng");
  int predicted = rng->categorical(model_row, mdp.num_states);
  int actual = rng->categorical(true_row, mdp.num_states);
  return predicted == actual ? 0.0 : 2.0;
}

/// Per-step intrinsic reward tables L_{tau^E, h}(s, a).
inline std::vector<std::vector<double>> intrinsic_reward_tables(const TransitionModel& model,
                                                                const EpisodicMdp& mdp) {
  std::vector<std::vector<double>> tables(
      mdp.horizon, std::vector<double>(mdp.num_states * mdp.num_actions, 0.0));
  for (int h = 0; h < mdp.horizon; ++h)
    for (int s = 0; s < mdp.num_states; ++s)
      for (int a = 0; a < mdp.num_actions; ++a)
        tables[h][s * mdp.num_actions + a] = intrinsic_reward(model, mdp, s, a, h);
  return tables;
}

/// Int(pi; tau^E) = sum_h <d_h^pi, L_{tau^E, h}>.
inline double expected_intrinsic(const EpisodicMdp& mdp, const StochasticPolicy& policy,
                                 const TransitionModel& model) {
  auto d = occupancy_measure(mdp, policy);
  auto tables = intrinsic_reward_tables(model, mdp);
  double total = 0.0;
  for (int h = 0; h < mdp.horizon; ++h)
    for (int i = 0; i < mdp.num_states * mdp.num_actions; ++i) total += d[h][i] * tables[h][i];
  return total;
}

/// Tabular conditional-VAE reward model: softmax encoder q(z|s, s') over |A|
/// latent categories and softmax decoder p(s'|z, s), with a uniform latent
/// prior and an alpha-weighted KL to the empirical expert action distribution.
struct GenerativeRewardModel {
  int num_states = 0;
  int num_actions = 0;
  double alpha = 0.0;
  std::vector<double> encoder_logits;  // [(s*S + s') * A + z]
  std::vector<double> decoder_logits;  // [(z*S + s) * S + s']

  std::vector<double> encoder_dist(int s, int s_next) const {
    return softmax(encoder_logits.data() + (s * num_states + s_next) * num_actions, num_actions);
  }
  std::vector<double> decoder_dist(int z, int s) const {
    return softmax(decoder_logits.data() + (z * num_states + s) * num_states, num_states);
  }

  static std::vector<double> softmax(const double* logits, int n) {
    double mx = logits[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    std::vector<double> out(n);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      out[i] = std::exp(logits[i] - mx);
      sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
  }
};

namespace detail {

struct DemoStats {
  std::vector<Step> steps;
  std::vector<double> expert_action_dist;  // [s*A + a], clamped away from zero
};

inline DemoStats collect_demo_stats(const DemoSet& demos, int num_states, int num_actions) {
  DemoStats st;
  st.expert_action_dist.assign(num_states * num_actions, 0.0);
  std::vector<double> state_counts(num_states, 0.0);
  for (const Trajectory& tau : demos.trajectories)
    for (const Step& step : tau.steps) {
      st.steps.push_back(step);
      st.expert_action_dist[step.state * num_actions + step.action] += 1.0;
      state_counts[step.state] += 1.0;
    }
  for (int s = 0; s < num_states; ++s)
    for (int a = 0; a < num_actions; ++a) {
      double& v = st.expert_action_dist[s * num_actions + a];
      v = state_counts[s] > 0.0 ? std::max(v / state_counts[s], 1e-12) : 1.0 / num_actions;
    }
  return st;
}

}  // namespace detail

/// Mean per-step value of the three-term objective on the full demo batch:
/// E_q[log p(s'|z,s)] - KL(q || uniform prior) - alpha * KL(q || pi_E).
inline double generative_objective(const GenerativeRewardModel& m, const detail::DemoStats& st) {
  const int A = m.num_actions;
  double total = 0.0;
  for (const Step& step : st.steps) {
    auto q = m.encoder_dist(step.state, step.next_state);
    double recon = 0.0, kl_prior = 0.0, kl_expert = 0.0;
    for (int z = 0; z < A; ++z) {
      auto p = m.decoder_dist(z, step.state);
      recon += q[z] * std::log(std::max(p[step.next_state], 1e-300));
      kl_prior += q[z] * (std::log(std::max(q[z], 1e-300)) + std::log(static_cast<double>(A)));
      kl_expert += q[z] * (std::log(std::max(q[z], 1e-300)) -
                           std::log(st.expert_action_dist[step.state * A + z]));
    }
    total += recon - kl_prior - m.alpha * kl_expert;
  }
  return total / static_cast<double>(st.steps.size());
}

/// Analytic gradient of generative_objective w.r.t. encoder and decoder
/// logits; layout matches the model's logit vectors.
inline void generative_gradient(const GenerativeRewardModel& m, const detail::DemoStats& st,
                                std::vector<double>* enc_grad, std::vector<double>* dec_grad) {
  const int S = m.num_states, A = m.num_actions;
  enc_grad->assign(m.encoder_logits.size(), 0.0);
  dec_grad->assign(m.decoder_logits.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(st.steps.size());
  for (const Step& step : st.steps) {
    auto q = m.encoder_dist(step.state, step.next_state);
    // Per-category payoff g_z = d(objective)/d q_z before softmax backprop.
    std::vector<double> payoff(A);
    double mean_payoff = 0.0;
    for (int z = 0; z < A; ++z) {
      auto p = m.decoder_dist(z, step.state);
      double log_p = std::log(std::max(p[step.next_state], 1e-300));
      double log_q = std::log(std::max(q[z], 1e-300));
      double log_pe = std::log(st.expert_action_dist[step.state * A + z]);
      // d/dq_z of [q log p - q(log q + log A) - alpha q (log q - log pe)]
      payoff[z] = log_p - (log_q + std::log(static_cast<double>(A)) + 1.0) -
                  m.alpha * (log_q - log_pe + 1.0);
      mean_payoff += q[z] * payoff[z];
      // Decoder: d/d logits of q_z * log p(s'|z, s) = q_z * (onehot - p).
      double* dg = dec_grad->data() + (z * S + step.state) * S;
      for (int s2 = 0; s2 < S; ++s2)
        dg[s2] += inv_n * q[z] * ((s2 == step.next_state ? 1.0 : 0.0) - p[s2]);
    }
    double* eg = enc_grad->data() + (step.state * S + step.next_state) * A;
    for (int z = 0; z < A; ++z) eg[z] += inv_n * q[z] * (payoff[z] - mean_payoff);
  }
}

/// Full-batch gradient ascent on the generative objective. Backtracks to a
/// halved step whenever an epoch fails to improve the full-batch objective,
/// so the trace is non-decreasing.
inline GenerativeRewardModel train_generative_model(const DemoSet& demos, int num_states,
                                                    int num_actions, double alpha,
                                                    int epochs = 2000, double step_size = 0.05,
                                                    std::uint64_t rng_seed = 0) {
  if (demos.trajectories.empty()) throw std::invalid_argument("train_generative_model: no demos");
  if (!(step_size > 0.0)) throw std::invalid_argument("train_generative_model: step_size <= 0");
  auto st = detail::collect_demo_stats(demos, num_states, num_actions);
  if (st.steps.empty()) throw std::invalid_argument("train_generative_model: demos have no steps");
  GenerativeRewardModel m;
  m.num_states = num_states;
  m.num_actions = num_actions;
  m.alpha = alpha;
  Rng rng = derive_rng(rng_seed, "generative_init");
  m.encoder_logits.resize(static_cast<std::size_t>(num_states) * num_states * num_actions);
  m.decoder_logits.resize(static_cast<std::size_t>(num_actions) * num_states * num_states);
  for (double& v : m.encoder_logits) v = 0.01 * (rng.uniform() - 0.5);
  for (double& v : m.decoder_logits) v = 0.01 * (rng.uniform() - 0.5);
  double obj = generative_objective(m, st);
  double step = step_size;
  std::vector<double> eg, dg;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    generative_gradient(m, st, &eg, &dg);
    GenerativeRewardModel trial = m;
    for (std::size_t i = 0; i < eg.size(); ++i) trial.encoder_logits[i] += step * eg[i];
    for (std::size_t i = 0; i < dg.size(); ++i) trial.decoder_logits[i] += step * dg[i];
    double trial_obj = generative_objective(trial, st);
    if (trial_obj >= obj) {
      m = std::move(trial);
      obj = trial_obj;
    } else {
      step *= 0.5;
      if (step < 1e-12) break;
    }
  }
  return m;
}

/// ||decoder-mean one-hot reconstruction - e(s_next)||^2 in [0, 2].
inline double generative_reward(const GenerativeRewardModel& model, int s, int a, int s_next) {
  if (s < 0 || s >= model.num_states || a < 0 || a >= model.num_actions || s_next < 0 ||
      s_next >= model.num_states)
    throw std::invalid_argument("generative_reward: index out of range");
  auto p = model.decoder_dist(a, s);
  double acc = 0.0;
  for (int s2 = 0; s2 < model.num_states; ++s2) {
    double diff = p[s2] - (s2 == s_next ? 1.0 : 0.0);
    acc += diff * diff;
  }
  return acc;
}

inline void write_transition_model(KvWriter& w, const TransitionModel& m) {
  w.put("type", std::string("transition_model"));
  w.put("format_version", 1);
  w.put("num_states", m.num_states);
  w.put("num_actions", m.num_actions);
  w.put("per_step", m.per_step ? 1 : 0);
  w.put("smoothing", m.smoothing);
  for (std::size_t k = 0; k < m.kernels.size(); ++k) {
    w.put("kernel_" + std::to_string(k), m.kernels[k]);
    w.put("visit_counts_" + std::to_string(k), m.visit_counts[k]);
  }
}

inline TransitionModel read_transition_model(const KvReader& r) {
  if (r.get_string("type") != "transition_model")
    throw std::runtime_error("read_transition_model: wrong record type");
  TransitionModel m;
  m.num_states = static_cast<int>(r.get_int("num_states"));
  m.num_actions = static_cast<int>(r.get_int("num_actions"));
  m.per_step = r.get_int("per_step") != 0;
  m.smoothing = r.get_double("smoothing");
  for (int k = 0; r.has("kernel_" + std::to_string(k)); ++k) {
    m.kernels.push_back(r.get_vector("kernel_" + std::to_string(k)));
    m.visit_counts.push_back(r.get_vector("visit_counts_" + std::to_string(k)));
  }
  return m;
}

}  // namespace ilde
