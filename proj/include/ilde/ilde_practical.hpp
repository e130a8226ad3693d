#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "ilde/curiosity.hpp"
#include "ilde/entropy_bonus.hpp"
#include "ilde/imitation_reward.hpp"
#include "ilde/mdp.hpp"

namespace ilde {

/// Differentiable tabular policy: pi_h(a|s) = softmax_a(logits[h][s, .]).
struct SoftmaxPolicyParams {
  int horizon = 0;
  int num_states = 0;
  int num_actions = 0;
  std::vector<std::vector<double>> logits;  // [h][s*A+a]

  static SoftmaxPolicyParams zeros(int horizon, int num_states, int num_actions) {
    SoftmaxPolicyParams p;
    p.horizon = horizon;
    p.num_states = num_states;
    p.num_actions = num_actions;
    p.logits.assign(horizon, std::vector<double>(num_states * num_actions, 0.0));
    return p;
  }

  void row_probs(int h, int s, double* out) const {
    const double* z = logits[h].data() + s * num_actions;
    double mx = z[0];
    for (int a = 1; a < num_actions; ++a) mx = std::max(mx, z[a]);
    double sum = 0.0;
    for (int a = 0; a < num_actions; ++a) {
      out[a] = std::exp(z[a] - mx);
      sum += out[a];
    }
    for (int a = 0; a < num_actions; ++a) out[a] /= sum;
  }

  double log_prob(int h, int s, int a) const {
    std::vector<double> p(num_actions);
    row_probs(h, s, p.data());
    return std::log(std::max(p[a], 1e-300));
  }

  StochasticPolicy policy() const {
    StochasticPolicy pi;
    pi.horizon = horizon;
    pi.num_states = num_states;
    pi.num_actions = num_actions;
    pi.probs.assign(horizon, std::vector<double>(num_states * num_actions, 0.0));
    for (int h = 0; h < horizon; ++h)
      for (int s = 0; s < num_states; ++s) row_probs(h, s, pi.row(h, s));
    return pi;
  }
};

enum class IldeVariant { kFull, kNoBonus, kNoImitation, kNoCuriosity };

inline std::string variant_name(IldeVariant v) {
  switch (v) {
    case IldeVariant::kFull: return "full";
    case IldeVariant::kNoBonus: return "no_bonus";
    case IldeVariant::kNoImitation: return "no_imitation";
    case IldeVariant::kNoCuriosity: return "no_curiosity";
  }
  return "full";
}

inline IldeVariant parse_variant(const std::string& name) {
  if (name == "full") return IldeVariant::kFull;
  if (name == "no_bonus") return IldeVariant::kNoBonus;
  if (name == "no_imitation") return IldeVariant::kNoImitation;
  if (name == "no_curiosity") return IldeVariant::kNoCuriosity;
  throw std::invalid_argument("unknown ILDE variant '" + name + "'");
}

struct PracticalConfig {
  int updates = 200;            // T policy updates
  double lambda = 10.0;         // intrinsic weight (Table-8 default)
  double discount = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.1;
  double entropy_coef = 0.01;
  double critic_coef = 0.5;
  int epochs_per_batch = 4;
  int batch_episodes = 16;
  int minibatch_size = 0;       // 0 = full batch
  int knn_k = 3;
  std::string curiosity_backend = "counts";  // counts | generative
  double demo_model_smoothing = 0.1;
  double gen_alpha = 100.0;
  int gen_epochs = 300;
  double gen_step = 0.05;
  double policy_lr = 0.2;
  double critic_lr = 0.5;
  double disc_lr = 0.5;
  int disc_steps = 5;
  int eval_every = 1;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (updates < 0) throw std::invalid_argument("PracticalConfig: updates must be >= 0");
    if (!(clip_eps > 0.0 && clip_eps < 1.0))
      throw std::invalid_argument("PracticalConfig: clip_eps must be in (0, 1)");
    if (!(discount > 0.0 && discount <= 1.0))
      throw std::invalid_argument("PracticalConfig: discount must be in (0, 1]");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0))
      throw std::invalid_argument("PracticalConfig: gae_lambda must be in [0, 1]");
    if (lambda < 0.0) throw std::invalid_argument("PracticalConfig: lambda must be >= 0");
    if (entropy_coef < 0.0) throw std::invalid_argument("PracticalConfig: entropy_coef < 0");
    if (epochs_per_batch < 1 || batch_episodes < 1 || knn_k < 1)
      throw std::invalid_argument("PracticalConfig: counts must be >= 1");
    if (curiosity_backend != "counts" && curiosity_backend != "generative")
      throw std::invalid_argument("PracticalConfig: unknown curiosity backend");
    if (!(policy_lr > 0.0 && critic_lr > 0.0 && disc_lr > 0.0))
      throw std::invalid_argument("PracticalConfig: learning rates must be > 0");
  }
};

/// Either curiosity backend behind one call.
struct CuriosityBackend {
  const TransitionModel* counts = nullptr;
  const GenerativeRewardModel* generative = nullptr;
  const EpisodicMdp* mdp = nullptr;

  double reward(int s, int a, int s_next, int h) const {
    if (counts) return intrinsic_reward(*counts, *mdp, s, a, h);
    if (generative) return generative_reward(*generative, s, a, s_next);
    throw std::invalid_argument("CuriosityBackend: no model attached");
  }
};

/// Aggregated per-transition reward: discriminator + lambda * curiosity +
/// batch-relative state entropy bonus.
inline double aggregate_reward(const Discriminator& disc, const CuriosityBackend& curiosity,
                               double lambda, const RepresentationBatch& entropy_batch,
                               int batch_index, int s, int a, int s_next, int h) {
  return discriminator_reward(disc, s, a) + lambda * curiosity.reward(s, a, s_next, h) +
         state_entropy_bonus(entropy_batch, batch_index);
}

/// Standard GAE recursion: delta_h = r_h + discount V_{h+1} - V_h,
/// A_h = delta_h + discount * gae_lambda * A_{h+1}.
inline std::vector<double> gae_advantages(const std::vector<double>& rewards,
                                          const std::vector<double>& values, double discount,
                                          double gae_lambda) {
  const int n = static_cast<int>(rewards.size());
  if (static_cast<int>(values.size()) != n + 1)
    throw std::invalid_argument("gae_advantages: need n+1 value estimates (terminal included)");
  std::vector<double> adv(n, 0.0);
  double running = 0.0;
  for (int h = n - 1; h >= 0; --h) {
    double delta = rewards[h] + discount * values[h + 1] - values[h];
    running = delta + discount * gae_lambda * running;
    adv[h] = running;
  }
  return adv;
}

struct PpoSample {
  int h = 0, s = 0, a = 0;
  double advantage = 0.0;
  double old_log_prob = 0.0;
  double return_to_go = 0.0;
};

/// Clipped-surrogate value plus entropy regularization on the batch
/// (the quantity PPO ascends; critic loss excluded).
inline double ppo_surrogate(const SoftmaxPolicyParams& params, const std::vector<PpoSample>& batch,
                            const PracticalConfig& config) {
  if (batch.empty()) throw std::invalid_argument("ppo_surrogate: empty batch");
  const int A = params.num_actions;
  std::vector<double> probs(A);
  double total = 0.0;
  for (const PpoSample& x : batch) {
    params.row_probs(x.h, x.s, probs.data());
    double lp = std::log(std::max(probs[x.a], 1e-300));
    double ratio = std::exp(lp - x.old_log_prob);
    double clipped = std::clamp(ratio, 1.0 - config.clip_eps, 1.0 + config.clip_eps);
    total += std::min(ratio * x.advantage, clipped * x.advantage);
    double entropy = 0.0;
    for (int a = 0; a < A; ++a)
      if (probs[a] > 0.0) entropy -= probs[a] * std::log(probs[a]);
    total += config.entropy_coef * entropy;
  }
  return total / static_cast<double>(batch.size());
}

/// Analytic gradient of ppo_surrogate w.r.t. all logits (same layout).
inline std::vector<std::vector<double>> ppo_surrogate_grad(const SoftmaxPolicyParams& params,
                                                           const std::vector<PpoSample>& batch,
                                                           const PracticalConfig& config) {
  const int A = params.num_actions;
  std::vector<std::vector<double>> grad(params.horizon,
                                        std::vector<double>(params.num_states * A, 0.0));
  std::vector<double> probs(A);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const PpoSample& x : batch) {
    if (!std::isfinite(x.advantage) || !std::isfinite(x.old_log_prob))
      throw std::invalid_argument("ppo_surrogate_grad: non-finite batch entry");
    params.row_probs(x.h, x.s, probs.data());
    double lp = std::log(std::max(probs[x.a], 1e-300));
    double ratio = std::exp(lp - x.old_log_prob);
    bool unclipped_active =
        (ratio >= 1.0 - config.clip_eps && ratio <= 1.0 + config.clip_eps) ||
        (x.advantage > 0.0 && ratio < 1.0 - config.clip_eps) ||
        (x.advantage < 0.0 && ratio > 1.0 + config.clip_eps);
    double* g = grad[x.h].data() + x.s * A;
    if (unclipped_active) {
      double coef = inv_n * ratio * x.advantage;
      for (int a = 0; a < A; ++a) g[a] += coef * ((a == x.a ? 1.0 : 0.0) - probs[a]);
    }
    // entropy: dH/dz_a = -p_a (log p_a + H)
    double entropy = 0.0;
    for (int a = 0; a < A; ++a)
      if (probs[a] > 0.0) entropy -= probs[a] * std::log(probs[a]);
    for (int a = 0; a < A; ++a) {
      double logp = std::log(std::max(probs[a], 1e-300));
      g[a] += inv_n * config.entropy_coef * (-probs[a] * (logp + entropy));
    }
  }
  return grad;
}

/// epochs_per_batch passes of gradient ascent on the clipped surrogate, with
/// the critic table regressed on returns. An epoch that lowers the full-batch
/// surrogate is reverted with a halved step, so the per-epoch surrogate trace
/// is non-decreasing.
inline SoftmaxPolicyParams ppo_update(const SoftmaxPolicyParams& params,
                                      const std::vector<PpoSample>& batch,
                                      const PracticalConfig& config,
                                      std::vector<std::vector<double>>* critic = nullptr,
                                      std::vector<double>* surrogate_trace = nullptr) {
  if (batch.empty()) throw std::invalid_argument("ppo_update: empty batch");
  SoftmaxPolicyParams out = params;
  double lr = config.policy_lr;
  double current = ppo_surrogate(out, batch, config);
  if (surrogate_trace) surrogate_trace->push_back(current);
  const int mb = config.minibatch_size > 0 ? config.minibatch_size
                                           : static_cast<int>(batch.size());
  for (int epoch = 0; epoch < config.epochs_per_batch; ++epoch) {
    SoftmaxPolicyParams trial = out;
    for (std::size_t begin = 0; begin < batch.size(); begin += mb) {
      std::vector<PpoSample> mini(batch.begin() + begin,
                                  batch.begin() + std::min(batch.size(), begin + mb));
      auto grad = ppo_surrogate_grad(trial, mini, config);
      for (int h = 0; h < trial.horizon; ++h)
        for (std::size_t i = 0; i < trial.logits[h].size(); ++i)
          trial.logits[h][i] += lr * grad[h][i];
    }
    double next = ppo_surrogate(trial, batch, config);
    if (next + 1e-12 >= current) {
      out = std::move(trial);
      current = next;
    } else {
      lr *= 0.5;
    }
    if (surrogate_trace) surrogate_trace->push_back(current);
  }
  if (critic) {
    // tabular value head: move each visited (h, s) toward the mean return
    std::vector<std::vector<double>> target_sum(params.horizon,
                                                std::vector<double>(params.num_states, 0.0));
    std::vector<std::vector<double>> target_count(params.horizon,
                                                  std::vector<double>(params.num_states, 0.0));
    for (const PpoSample& x : batch) {
      target_sum[x.h][x.s] += x.return_to_go;
      target_count[x.h][x.s] += 1.0;
    }
    for (int h = 0; h < params.horizon; ++h)
      for (int s = 0; s < params.num_states; ++s)
        if (target_count[h][s] > 0.0) {
          double target = target_sum[h][s] / target_count[h][s];
          (*critic)[h][s] +=
              config.critic_lr * config.critic_coef * (target - (*critic)[h][s]);
        }
  }
  return out;
}

inline std::uint64_t hash_doubles(const std::vector<double>& v, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (double d : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof(bits));
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

struct PracticalRecord {
  int step = 0;
  double j_true = 0.0;
  double mean_disc_reward = 0.0;
  double mean_curiosity = 0.0;
  double mean_bonus = 0.0;
  std::uint64_t disc_hash_reward = 0;  // discriminator used for this batch's rewards
  std::uint64_t disc_hash_updated = 0; // discriminator right after this batch's update
};

struct PracticalTrace {
  std::vector<PracticalRecord> records;
  std::string variant;
};

/// Algorithm "practical ILDE": on-policy batches, discriminator update,
/// aggregated reward r^t + lambda L + b, clipped-surrogate policy update.
inline std::pair<StochasticPolicy, PracticalTrace> run_ilde_practical(const EpisodicMdp& mdp,
                                                                      const DemoSet& demos,
                                                                      const PracticalConfig& config,
                                                                      IldeVariant variant) {
  config.validate();
  if (demos.trajectories.empty()) throw std::invalid_argument("run_ilde_practical: no demos");
  const int S = mdp.num_states, A = mdp.num_actions, H = mdp.horizon;

  // pretrained curiosity module
  TransitionModel count_model;
  GenerativeRewardModel gen_model;
  CuriosityBackend curiosity;
  curiosity.mdp = &mdp;
  if (config.curiosity_backend == "counts") {
    count_model = fit_demo_model(demos, S, A, config.demo_model_smoothing);
    curiosity.counts = &count_model;
  } else {
    gen_model = train_generative_model(demos, S, A, config.gen_alpha, config.gen_epochs,
                                       config.gen_step, config.rng_seed);
    curiosity.generative = &gen_model;
  }

  Discriminator disc = Discriminator::plain(FeatureMap::make_tabular(S, A));
  std::vector<std::pair<int, int>> demo_pairs;
  for (const Trajectory& tau : demos.trajectories)
    for (const Step& st : tau.steps) demo_pairs.emplace_back(st.state, st.action);

  SoftmaxPolicyParams params = SoftmaxPolicyParams::zeros(H, S, A);
  std::vector<std::vector<double>> critic(H + 1, std::vector<double>(S, 0.0));
  PracticalTrace trace;
  trace.variant = variant_name(variant);

  for (int t = 1; t <= config.updates; ++t) {
    StochasticPolicy policy = params.policy();
    std::uint64_t stream = mix_u64(config.rng_seed ^ mix_u64(static_cast<std::uint64_t>(t)));
    std::vector<Trajectory> batch = rollout(mdp, policy, stream, config.batch_episodes);

    std::vector<std::pair<int, int>> policy_pairs;
    for (const Trajectory& tau : batch)
      for (const Step& st : tau.steps) policy_pairs.emplace_back(st.state, st.action);

    // reward model updated on this batch before computing this batch's rewards
    if (variant != IldeVariant::kNoImitation)
      discriminator_update(&disc, demo_pairs, policy_pairs, config.disc_lr, config.disc_steps);
    std::uint64_t disc_hash = hash_doubles(disc.params());

    RepresentationBatch entropy_batch;
    entropy_batch.k = config.knn_k;
    entropy_batch.points.reserve(policy_pairs.size());
    for (const auto& [s, a] : policy_pairs) {
      (void)a;
      std::vector<double> onehot(S, 0.0);
      onehot[s] = 1.0;
      entropy_batch.points.push_back(std::move(onehot));
    }

    double disc_sum = 0.0, cur_sum = 0.0, bonus_sum = 0.0;
    std::vector<PpoSample> samples;
    samples.reserve(policy_pairs.size());
    int flat_index = 0;
    for (const Trajectory& tau : batch) {
      std::vector<double> rewards(H, 0.0);
      std::vector<double> values(H + 1, 0.0);
      for (int h = 0; h < H; ++h) {
        const Step& st = tau.steps[h];
        double r_disc = variant == IldeVariant::kNoImitation
                            ? 0.0
                            : discriminator_reward(disc, st.state, st.action);
        double r_cur = variant == IldeVariant::kNoCuriosity
                           ? 0.0
                           : config.lambda * curiosity.reward(st.state, st.action, st.next_state, h);
        double r_bonus = variant == IldeVariant::kNoBonus
                             ? 0.0
                             : state_entropy_bonus(entropy_batch, flat_index + h);
        rewards[h] = r_disc + r_cur + r_bonus;
        disc_sum += r_disc;
        cur_sum += r_cur;
        bonus_sum += r_bonus;
        values[h] = critic[h][st.state];
      }
      auto adv = gae_advantages(rewards, values, config.discount, config.gae_lambda);
      double ret = 0.0;
      std::vector<double> returns(H, 0.0);
      for (int h = H - 1; h >= 0; --h) {
        ret = rewards[h] + config.discount * ret;
        returns[h] = ret;
      }
      for (int h = 0; h < H; ++h) {
        const Step& st = tau.steps[h];
        PpoSample x;
        x.h = h;
        x.s = st.state;
        x.a = st.action;
        x.advantage = adv[h];
        x.old_log_prob = params.log_prob(h, st.state, st.action);
        x.return_to_go = returns[h];
        samples.push_back(x);
      }
      flat_index += H;
    }
    // batch-normalized advantages
    double mean = 0.0;
    for (const PpoSample& x : samples) mean += x.advantage;
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (const PpoSample& x : samples) var += (x.advantage - mean) * (x.advantage - mean);
    double stdev = std::sqrt(var / static_cast<double>(samples.size()));
    for (PpoSample& x : samples) x.advantage = (x.advantage - mean) / (stdev + 1e-8);

    params = ppo_update(params, samples, config, &critic);

    if (t % config.eval_every == 0 || t == config.updates) {
      PracticalRecord rec;
      rec.step = t;
      rec.j_true = expected_return(mdp, params.policy(), mdp.true_reward);
      rec.mean_disc_reward = disc_sum / static_cast<double>(samples.size());
      rec.mean_curiosity = cur_sum / static_cast<double>(samples.size());
      rec.mean_bonus = bonus_sum / static_cast<double>(samples.size());
      rec.disc_hash_reward = disc_hash;
      rec.disc_hash_updated = hash_doubles(disc.params());
      trace.records.push_back(rec);
    }
  }
  return {params.policy(), std::move(trace)};
}

/// Trace CSV: evaluation_step, J_true, mean_disc_reward, mean_curiosity,
/// mean_bonus, variant.
inline std::string practical_trace_csv(const PracticalTrace& trace) {
  std::string out = "evaluation_step,J_true,mean_disc_reward,mean_curiosity,mean_bonus,variant\n";
  for (const auto& r : trace.records)
    out += std::to_string(r.step) + "," + format_double(r.j_true) + "," +
           format_double(r.mean_disc_reward) + "," + format_double(r.mean_curiosity) + "," +
           format_double(r.mean_bonus) + "," + trace.variant + "\n";
  return out;
}

}  // namespace ilde
