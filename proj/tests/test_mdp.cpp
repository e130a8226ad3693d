#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ilde/mdp.hpp"
#include "test_helpers.hpp"

using namespace ilde;
using namespace ilde::testing;

namespace {

double trajectory_return(const Trajectory& tau, const std::vector<double>& reward, int A) {
  double acc = 0.0;
  for (const Step& st : tau.steps) acc += reward[st.state * A + st.action];
  return acc;
}

}  // namespace

TEST_CASE("exact_value: single-step constant reward") {
  Rng rng(3);
  EpisodicMdp mdp = random_mdp(rng, 4, 2, 1);
  StochasticPolicy pi = random_policy(rng, 1, 4, 2);
  std::vector<double> reward(4 * 2, 0.5);
  ValueTables vt = exact_value(mdp, pi, reward);
  for (int s = 0; s < 4; ++s) CHECK(vt.v[0][s] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("exact_value: zero reward gives zero tables") {
  Rng rng(5);
  EpisodicMdp mdp = random_mdp(rng, 3, 2, 4);
  StochasticPolicy pi = random_policy(rng, 4, 3, 2);
  ValueTables vt = exact_value(mdp, pi, std::vector<double>(6, 0.0));
  for (const auto& vh : vt.v)
    for (double v : vh) CHECK(v == 0.0);
  for (const auto& qh : vt.q)
    for (double q : qh) CHECK(q == 0.0);
}

TEST_CASE("exact_value: dimension mismatch rejected") {
  Rng rng(6);
  EpisodicMdp mdp = random_mdp(rng, 3, 2, 4);
  StochasticPolicy pi = random_policy(rng, 4, 3, 3);  // wrong action count
  CHECK_THROWS_AS(exact_value(mdp, pi, std::vector<double>(6, 0.0)), std::invalid_argument);
}

TEST_CASE("exact_value matches a Monte-Carlo oracle on river_swim") {
  Environment env = envs::river_swim(2, 3);
  StochasticPolicy pi = env.expert;
  double j = expected_return(env.mdp, pi, env.mdp.true_reward);
  const int n = 1000000;
  auto taus = rollout(env.mdp, pi, 777, n);
  double mean = 0.0, m2 = 0.0;
  int count = 0;
  for (const auto& tau : taus) {
    double g = trajectory_return(tau, env.mdp.true_reward, env.mdp.num_actions);
    ++count;
    double delta = g - mean;
    mean += delta / count;
    m2 += delta * (g - mean);
  }
  double se = std::sqrt(m2 / (count - 1) / count);
  CHECK(std::abs(mean - j) < 3 * se + 1e-12);
}

TEST_CASE("expected_return: H=2 deterministic chain with unit reward gives 2") {
  EpisodicMdp mdp;
  mdp.num_states = 2;
  mdp.num_actions = 1;
  mdp.horizon = 2;
  // state 0 -> 1 -> 1 deterministically
  mdp.transitions.assign(2, {0.0, 1.0, 0.0, 1.0});
  mdp.true_reward = {1.0, 1.0};
  mdp.initial_dist = {1.0, 0.0};
  mdp.validate();
  StochasticPolicy pi = StochasticPolicy::uniform(2, 2, 1);
  CHECK(expected_return(mdp, pi, mdp.true_reward) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("occupancy measure: H=1 closed form and deterministic point mass") {
  Rng rng(11);
  EpisodicMdp mdp = random_mdp(rng, 4, 3, 1);
  StochasticPolicy pi = random_policy(rng, 1, 4, 3);
  auto d = occupancy_measure(mdp, pi);
  for (int s = 0; s < 4; ++s)
    for (int a = 0; a < 3; ++a)
      CHECK(d[0][s * 3 + a] == doctest::Approx(mdp.initial_dist[s] * pi.prob(0, s, a)).epsilon(1e-14));

  Environment env = envs::chain(3, 4);
  StochasticPolicy det = dp_optimal_policy(env.mdp, env.mdp.true_reward);
  auto dd = occupancy_measure(env.mdp, det);
  for (int h = 0; h < 4; ++h) {
    int nonzero = 0;
    for (double x : dd[h])
      if (x > 0.0) {
        ++nonzero;
        CHECK(x == doctest::Approx(1.0).epsilon(1e-12));
      }
    CHECK(nonzero == 1);
  }
}

TEST_CASE("occupancy/value duality on 100 random triples") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    int S = 2 + rng.uniform_int(4), A = 2 + rng.uniform_int(3), H = 1 + rng.uniform_int(5);
    EpisodicMdp mdp = random_mdp(rng, S, A, H);
    StochasticPolicy pi = random_policy(rng, H, S, A);
    std::vector<double> reward = random_reward(rng, S, A);
    auto d = occupancy_measure(mdp, pi);
    double via_occ = 0.0;
    for (int h = 0; h < H; ++h) {
      double mass = 0.0;
      for (int i = 0; i < S * A; ++i) {
        via_occ += d[h][i] * reward[i];
        mass += d[h][i];
      }
      CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
    }
    CHECK(via_occ == doctest::Approx(expected_return(mdp, pi, reward)).epsilon(1e-10));
  }
}

TEST_CASE("Bellman consistency of exact_value") {
  Rng rng(31);
  EpisodicMdp mdp = random_mdp(rng, 5, 3, 6);
  StochasticPolicy pi = random_policy(rng, 6, 5, 3);
  std::vector<double> reward = random_reward(rng, 5, 3);
  ValueTables vt = exact_value(mdp, pi, reward);
  for (int h = 0; h < 6; ++h)
    for (int s = 0; s < 5; ++s) {
      double acc = 0.0;
      for (int a = 0; a < 3; ++a) acc += pi.prob(h, s, a) * vt.q[h][s * 3 + a];
      CHECK(acc == doctest::Approx(vt.v[h][s]).epsilon(1e-12));
    }
}

TEST_CASE("rollout: deterministic dynamics are seed-independent, streams reproduce") {
  Environment env = envs::chain(4, 5);
  StochasticPolicy det = dp_optimal_policy(env.mdp, env.mdp.true_reward);
  EpisodicMdp mdp = env.mdp;  // chain transitions are deterministic
  auto t1 = rollout(mdp, det, 1, 5);
  auto t2 = rollout(mdp, det, 999, 5);
  for (int i = 0; i < 5; ++i)
    for (int h = 0; h < 5; ++h) {
      CHECK(t1[i].steps[h].state == t2[i].steps[h].state);
      CHECK(t1[i].steps[h].action == t2[i].steps[h].action);
      CHECK(t1[i].steps[h].next_state == t2[i].steps[h].next_state);
    }

  Rng rng(17);
  EpisodicMdp rmdp = random_mdp(rng, 4, 2, 3);
  StochasticPolicy rpi = random_policy(rng, 3, 4, 2);
  auto a = rollout(rmdp, rpi, 123, 50);
  auto b = rollout(rmdp, rpi, 123, 50);
  for (int i = 0; i < 50; ++i)
    for (int h = 0; h < 3; ++h) {
      CHECK(a[i].steps[h].state == b[i].steps[h].state);
      CHECK(a[i].steps[h].action == b[i].steps[h].action);
      CHECK(a[i].steps[h].next_state == b[i].steps[h].next_state);
    }
}

TEST_CASE("rollout: uniform 2-action policy hits 0.5 frequency at step 1") {
  Rng rng(21);
  EpisodicMdp mdp = random_mdp(rng, 3, 2, 2);
  StochasticPolicy pi = StochasticPolicy::uniform(2, 3, 2);
  const int n = 100000;
  auto taus = rollout(mdp, pi, 55, n);
  int ones = 0;
  for (const auto& tau : taus) ones += tau.steps[0].action;
  double se = std::sqrt(0.25 / n);
  CHECK(std::abs(ones / static_cast<double>(n) - 0.5) < 3 * se);
}

TEST_CASE("Monte-Carlo consistency of expected_return") {
  Rng rng(29);
  EpisodicMdp mdp = random_mdp(rng, 4, 3, 4);
  StochasticPolicy pi = random_policy(rng, 4, 4, 3);
  std::vector<double> reward = random_reward(rng, 4, 3);
  double j = expected_return(mdp, pi, reward);
  const int n = 100000;
  auto taus = rollout(mdp, pi, 404, n);
  double mean = 0.0, m2 = 0.0;
  int count = 0;
  for (const auto& tau : taus) {
    double g = trajectory_return(tau, reward, 3);
    ++count;
    double delta = g - mean;
    mean += delta / count;
    m2 += delta * (g - mean);
  }
  double se = std::sqrt(m2 / (count - 1) / count);
  CHECK(std::abs(mean - j) < 4 * se + 1e-12);
}

TEST_CASE("make_demos: exact expert rollouts without tremble/truncation") {
  Environment env = envs::gridworld(3, 3, 6);
  StochasticPolicy det = dp_optimal_policy(env.mdp, env.mdp.true_reward);
  DemoSet demos = make_demos(env.mdp, det, 20, 1.0, 0.0, 42);
  REQUIRE(demos.trajectories.size() == 20);
  for (const auto& tau : demos.trajectories) {
    REQUIRE(tau.steps.size() == 6);
    for (const Step& st : tau.steps)
      CHECK(det.prob(0, st.state, st.action) >= 0.0);  // indices in range
    for (std::size_t h = 0; h < tau.steps.size(); ++h) {
      // deterministic expert: every recorded action is the argmax action
      int s = tau.steps[h].state;
      double p = det.prob(static_cast<int>(h), s, tau.steps[h].action);
      CHECK(p == 1.0);
    }
  }
}

TEST_CASE("make_demos: truncation keeps ceil(fraction * H) steps") {
  Rng rng(10);
  EpisodicMdp mdp = random_mdp(rng, 3, 2, 20);
  StochasticPolicy pi = random_policy(rng, 20, 3, 2);
  DemoSet demos = make_demos(mdp, pi, 5, 0.1, 0.0, 1);
  for (const auto& tau : demos.trajectories) CHECK(tau.steps.size() == 2);
  CHECK_THROWS_AS(make_demos(mdp, pi, 0, 1.0, 0.0, 1), std::invalid_argument);
}

TEST_CASE("make_demos: tremble mismatch frequency matches the binomial oracle") {
  // deterministic expert: executed-action mismatch rate is p * (A-1) / A
  Environment env = envs::gridworld(3, 3, 10);
  StochasticPolicy det = dp_optimal_policy(env.mdp, env.mdp.true_reward);
  const double p = 0.3;
  const int n_traj = 10000;  // 10^5 steps at H = 10
  DemoSet demos = make_demos(env.mdp, det, n_traj, 1.0, p, 99);
  int mismatches = 0, steps = 0;
  for (const auto& tau : demos.trajectories)
    for (std::size_t h = 0; h < tau.steps.size(); ++h) {
      const Step& st = tau.steps[h];
      if (det.prob(static_cast<int>(h), st.state, st.action) < 1.0) ++mismatches;
      ++steps;
    }
  REQUIRE(steps == 100000);
  const int A = env.mdp.num_actions;
  double rate = p * (A - 1) / A;
  double se = std::sqrt(rate * (1 - rate) / steps);
  CHECK(std::abs(mismatches / static_cast<double>(steps) - rate) < 3 * se);
}

TEST_CASE("build_environment: expert quality orderings") {
  Environment rs = envs::river_swim(5, 5);
  double j_expert = expected_return(rs.mdp, rs.expert, rs.mdp.true_reward);
  double j_uniform = expected_return(rs.mdp, StochasticPolicy::uniform(5, 5, 2), rs.mdp.true_reward);
  CHECK(j_expert > j_uniform);

  Environment gw = envs::gridworld(3, 3, 8);
  StochasticPolicy opt = dp_optimal_policy(gw.mdp, gw.mdp.true_reward);
  CHECK(expected_return(gw.mdp, opt, gw.mdp.true_reward) >=
        expected_return(gw.mdp, gw.expert, gw.mdp.true_reward));
}

TEST_CASE("build_environment: regeneration is deterministic; unknown kind rejected") {
  Environment a = envs::chain(2, 3);
  Environment b = envs::chain(2, 3);
  KvWriter wa, wb;
  write_mdp(wa, a.mdp);
  write_mdp(wb, b.mdp);
  CHECK(wa.str() == wb.str());
  CHECK_THROWS_AS(build_environment("nope", 3, 3, 4, 0), std::invalid_argument);
}

TEST_CASE("mdp and demo serialization round-trips") {
  Environment env = envs::river_swim(4, 6);
  KvWriter w;
  write_mdp(w, env.mdp);
  EpisodicMdp back = read_mdp(KvReader::from_string(w.str()));
  CHECK(back.num_states == env.mdp.num_states);
  CHECK(back.transitions == env.mdp.transitions);
  CHECK(back.true_reward == env.mdp.true_reward);
  CHECK(back.initial_dist == env.mdp.initial_dist);

  DemoSet demos = make_demos(env.mdp, env.expert, 3, 0.5, 0.1, 7);
  KvWriter wd;
  write_demos(wd, demos);
  DemoSet dback = read_demos(KvReader::from_string(wd.str()));
  REQUIRE(dback.trajectories.size() == demos.trajectories.size());
  for (std::size_t i = 0; i < demos.trajectories.size(); ++i) {
    REQUIRE(dback.trajectories[i].steps.size() == demos.trajectories[i].steps.size());
    for (std::size_t h = 0; h < demos.trajectories[i].steps.size(); ++h) {
      CHECK(dback.trajectories[i].steps[h].state == demos.trajectories[i].steps[h].state);
      CHECK(dback.trajectories[i].steps[h].action == demos.trajectories[i].steps[h].action);
      CHECK(dback.trajectories[i].steps[h].next_state == demos.trajectories[i].steps[h].next_state);
    }
  }
  CHECK(dback.truncation_fraction == demos.truncation_fraction);
  CHECK(dback.tremble_prob == demos.tremble_prob);
}

TEST_CASE("validation rejects broken inputs") {
  Rng rng(1);
  EpisodicMdp mdp = random_mdp(rng, 3, 2, 2);
  EpisodicMdp bad = mdp;
  bad.true_reward[0] = 1.5;  // outside [-1, 1]
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = mdp;
  bad.initial_dist[0] += 0.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = mdp;
  bad.transitions[0][0] = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
